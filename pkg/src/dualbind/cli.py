"""Command-line interface.

Subcommands: gen-data, pretrain, train, evaluate, predict, export-curve.
Exit codes: 0 success, 1 validation/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig
from .data import (
    GeneratorParams,
    generate_synthetic,
    pair_records,
    parse_complex_jsonl,
    parse_fasta,
    write_complex_jsonl,
    write_fasta,
)
from .train import (
    Checkpoint,
    EpochLog,
    TrainingDivergedError,
    evaluate,
    export_loss_curve,
    predict,
    pretrain,
    train,
)

COMPLEX_FILE = "complexes.jsonl"
FASTA_FILE = "sequences.fasta"


def _load_dataset(data_dir: str, alphabet: str = "amino"):
    root = Path(data_dir)
    complexes = parse_complex_jsonl((root / COMPLEX_FILE).read_text())
    sequences = parse_fasta((root / FASTA_FILE).read_text(), alphabet)
    paired, unpaired = pair_records(complexes, sequences)
    if unpaired:
        raise ValueError(f"dataset {data_dir}: unpaired ids {unpaired[:5]}{'...' if len(unpaired) > 5 else ''}")
    return paired


def _cmd_gen_data(args) -> int:
    params = GeneratorParams(sigma=args.sigma, gamma=args.gamma)
    samples = generate_synthetic(args.n, args.seed, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / COMPLEX_FILE).write_text(write_complex_jsonl(s.complex for s in samples))
    (out / FASTA_FILE).write_text(write_fasta(s.sequence for s in samples))
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def _cmd_pretrain(args) -> int:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    corpus = Path(args.corpus).read_text().splitlines()
    ckpt, logs = pretrain(config, corpus, out_dir=args.out)
    last = logs[-1]
    print(f"pretraining done: {last.step} steps, loss {last.loss:.4f}, masked accuracy {last.masked_accuracy:.3f}")
    print(f"checkpoint: {Path(args.out) / 'pretrained.json'}")
    return 0


def _cmd_train(args) -> int:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.ablation:
        config.ablation = args.ablation
        config.validate()
    samples = _load_dataset(args.data, config.alphabet)
    pretrained = Checkpoint.load(args.pretrained) if args.pretrained else None
    ckpt, logs = train(config, samples, out_dir=args.out, pretrained=pretrained)
    print(f"trained {len(logs)} epochs; best val loss {ckpt.best_val_loss:.6f} at epoch {ckpt.epoch}")
    print(f"checkpoint: {Path(args.out) / 'checkpoint.json'}")
    return 0


def _cmd_evaluate(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    samples = _load_dataset(args.data, ckpt.config.alphabet)
    metrics, preds, targets = evaluate(ckpt, samples, args.split)
    model_name = ckpt.config.ablation
    print(metrics.to_table(model_name))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(metrics.to_json(model_name) + "\n")
        (out / "metrics.txt").write_text(metrics.to_table(model_name) + "\n")
        from .plots import render_prediction_scatter

        render_prediction_scatter(preds, targets, out / "predictions.png")
    return 0


def _cmd_predict(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    complexes = parse_complex_jsonl(Path(args.complexes).read_text())
    sequences = parse_fasta(Path(args.fasta).read_text(), ckpt.config.alphabet)
    paired, unpaired = pair_records(complexes, sequences)
    rows = predict(ckpt, paired)
    with open(args.out, "w") as fh:
        for sample_id, value in rows:
            fh.write(json.dumps({"id": sample_id, "affinity_pred": value}) + "\n")
    print(f"wrote {len(rows)} predictions to {args.out}")
    if unpaired:
        print(f"unpaired ids skipped: {', '.join(unpaired)}", file=sys.stderr)
        return 1
    return 0


def _cmd_export_curve(args) -> int:
    entries = json.loads(Path(args.log).read_text())
    logs = [EpochLog(**entry) for entry in entries]
    out = Path(args.out)
    export_loss_curve(logs, out)
    from .plots import render_loss_curve

    render_loss_curve(logs, out.with_suffix(".png"))
    print(f"wrote {out} and {out.with_suffix('.png')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualbind", description="Dual-modal binding-affinity model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a seeded synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=0.1, help="label noise deviation")
    p.add_argument("--gamma", type=float, default=0.5, help="interaction-term weight")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("pretrain", help="masked-language-model pretraining")
    p.add_argument("--config")
    p.add_argument("--corpus", required=True, help="plain text, one sequence per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("train", help="supervised training with early stopping")
    p.add_argument("--config")
    p.add_argument("--data", required=True, help=f"directory with {COMPLEX_FILE} and {FASTA_FILE}")
    p.add_argument("--out", required=True)
    p.add_argument("--ablation", choices=["full", "graph_only", "seq_only"])
    p.add_argument("--pretrained", help="warm-start sequence encoder from a pretrain checkpoint")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="metrics over a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--out", help="directory for metrics.json/.txt and the scatter figure")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="predict affinities for paired inputs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--complexes", required=True)
    p.add_argument("--fasta", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("export-curve", help="loss-curve CSV + figure from a training log")
    p.add_argument("--log", required=True, help="training_log.json from a train run")
    p.add_argument("--out", required=True, help="CSV path; the figure lands next to it")
    p.set_defaults(func=_cmd_export_curve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
