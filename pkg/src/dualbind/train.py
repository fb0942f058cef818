"""Training orchestration: supervised runs, MLM pretraining, evaluation, prediction.

Targets are standardized to zero mean / unit variance over the train split
before optimization (a learning rate of 1e-4 moves parameters far too
slowly to chase raw-scale labels), so train/val losses in the epoch log are
in standardized units. The mean and deviation are stored in the checkpoint
and predictions are mapped back to label units everywhere they leave the
model, including all reported metrics.

Checkpoints are versioned JSON with named flat float arrays printed at full
precision, so save -> load -> predict is bit-identical to in-memory predict.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import RunConfig
from .data import PairedSample, SequenceRecord, split as make_split
from .fusion import Metrics, compute_metrics, training_loss
from .graph_encoder import ELEMENT_VOCAB
from .model import AffinityModel, FeaturizedSample
from .optim import AdamState, GradientExplosionError, adam_step
from .rng import XorShiftRng, derive
from .seq_encoder import MlmHead, TransformerEncoder, Vocabulary, pretrain_step, tokenize

CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """NaN/Inf appeared in the loss or gradients; training aborted."""


class CheckpointMismatchError(ValueError):
    pass


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    wall_time: float
    # data-fit component alone (losses above include the geometry term)
    train_mse: float = float("nan")


@dataclass
class PretrainLog:
    step: int
    loss: float
    masked_accuracy: float


@dataclass
class Checkpoint:
    format_version: int
    config_fingerprint: str
    config: RunConfig
    parameters: dict[str, np.ndarray]
    best_val_loss: float
    epoch: int
    feature_dim: int
    label_mean: float
    label_std: float

    def to_json(self) -> str:
        payload = {
            "format_version": self.format_version,
            "config_fingerprint": self.config_fingerprint,
            "config": self.config.to_dict(),
            "feature_dim": self.feature_dim,
            "label_mean": self.label_mean,
            "label_std": self.label_std,
            "best_val_loss": self.best_val_loss,
            "epoch": self.epoch,
            "parameters": {
                name: {"shape": list(arr.shape), "values": arr.reshape(-1).tolist()}
                for name, arr in self.parameters.items()
            },
        }
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "Checkpoint":
        obj = json.loads(text)
        if obj.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointMismatchError(f"unsupported checkpoint version {obj.get('format_version')!r}")
        config = RunConfig.from_dict(obj["config"])
        fingerprint = config.fingerprint()
        if fingerprint != obj["config_fingerprint"]:
            raise CheckpointMismatchError(
                f"config fingerprint mismatch: stored {obj['config_fingerprint']} vs recomputed {fingerprint}"
            )
        params = {
            name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in obj["parameters"].items()
        }
        return Checkpoint(
            format_version=obj["format_version"],
            config_fingerprint=obj["config_fingerprint"],
            config=config,
            parameters=params,
            best_val_loss=float(obj["best_val_loss"]),
            epoch=int(obj["epoch"]),
            feature_dim=int(obj["feature_dim"]),
            label_mean=float(obj["label_mean"]),
            label_std=float(obj["label_std"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path: str | Path) -> "Checkpoint":
        return Checkpoint.from_json(Path(path).read_text())


def snapshot_parameters(model: AffinityModel) -> dict[str, np.ndarray]:
    return {name: t.values.copy() for name, t in model.named_parameters().items()}


def restore_parameters(model: AffinityModel, params: dict[str, np.ndarray], subset_prefix: str | None = None) -> int:
    """Copy stored arrays into the model by name. Returns the count restored.

    With ``subset_prefix`` only matching names load (pretrained-encoder
    warm start); otherwise the stored names must cover the model exactly.
    """
    model_params = model.named_parameters()
    if subset_prefix is None:
        missing = sorted(set(model_params) - set(params))
        extra = sorted(set(params) - set(model_params))
        if missing or extra:
            raise CheckpointMismatchError(f"parameter name mismatch: missing {missing[:4]}, unexpected {extra[:4]}")
        names = model_params
    else:
        names = {n: t for n, t in model_params.items() if n.startswith(subset_prefix)}
        absent = sorted(set(names) - set(params))
        if absent:
            raise CheckpointMismatchError(f"pretrained checkpoint lacks {absent[:4]}")
    count = 0
    for name, t in names.items():
        stored = params[name]
        if stored.shape != t.values.shape:
            raise CheckpointMismatchError(f"parameter {name}: stored shape {stored.shape} vs model shape {t.values.shape}")
        t.values[...] = stored
        count += 1
    return count


def model_from_checkpoint(ckpt: Checkpoint) -> AffinityModel:
    model = AffinityModel(ckpt.config, ckpt.feature_dim)
    restore_parameters(model, ckpt.parameters)
    return model


def dataset_feature_dim(samples: list[PairedSample]) -> int:
    return len(ELEMENT_VOCAB) + len(samples[0].complex.atoms[0].features)


# ---------------------------------------------------------------------------
# supervised training


def _batch_loss(model: AffinityModel, batch: list[FeaturizedSample], label_mean: float, label_std: float):
    preds = []
    geo_terms = []
    for fs in batch:
        pred, geo = model.forward_sample(fs)
        preds.append(pred)
        if geo is not None:
            geo_terms.append(geo)
    targets = np.array([(fs.label - label_mean) / label_std for fs in batch])
    return training_loss(ad.stack_scalars(preds), ad.tensor(targets), geo_terms, model.config.lambda_geo)


def split_loss(model: AffinityModel, featurized: list[FeaturizedSample], indices: list[int], label_mean: float, label_std: float) -> float:
    with ad.no_grad():
        loss = _batch_loss(model, [featurized[i] for i in indices], label_mean, label_std)
    return loss.total_value


def train(
    config: RunConfig,
    samples: list[PairedSample],
    out_dir: str | Path | None = None,
    pretrained: Checkpoint | None = None,
) -> tuple[Checkpoint, list[EpochLog]]:
    """Adam + early stopping; the returned checkpoint holds the best-epoch parameters.

    Stops once validation loss has failed to improve for ``patience``
    consecutive epochs, or at max_epochs. Deterministic for a fixed
    (config, seed, dataset) in single-threaded runs.
    """
    config.validate()
    ds = make_split(len(samples), config.seed, config.fractions)
    if not ds.train or not ds.val:
        raise ValueError(f"train: empty split from {len(samples)} samples")

    feature_dim = dataset_feature_dim(samples)
    model = AffinityModel(config, feature_dim)
    if pretrained is not None:
        restore_parameters(model, pretrained.parameters, subset_prefix="seq.")

    featurized = model.featurize_all(samples)
    train_labels = np.array([featurized[i].label for i in ds.train])
    label_mean = float(train_labels.mean())
    label_std = float(train_labels.std())
    if label_std < 1e-12:
        label_std = 1.0

    trainable = model.trainable_parameters(config.ablation)
    param_list = list(trainable.values())
    opt = AdamState(param_list, lr=config.lr)

    logs: list[EpochLog] = []
    best_val = float("inf")
    best_params: dict[str, np.ndarray] | None = None
    best_epoch = 0
    bad_epochs = 0
    start = time.monotonic()

    for epoch in range(1, config.max_epochs + 1):
        order = list(ds.train)
        XorShiftRng(derive(config.seed, 0xE90C0 + epoch)).shuffle(order)
        batch_losses = []
        for b0 in range(0, len(order), config.batch_size):
            batch = [featurized[i] for i in order[b0 : b0 + config.batch_size]]
            loss = _batch_loss(model, batch, label_mean, label_std)
            if not np.isfinite(loss.total_value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}; batch ids {[fs.sample_id for fs in batch]}"
                )
            ad.backward(loss.total)
            try:
                adam_step(param_list, opt)
            except GradientExplosionError as exc:
                raise TrainingDivergedError(
                    f"{exc}; epoch {epoch}, batch ids {[fs.sample_id for fs in batch]}"
                ) from exc
            batch_losses.append(loss.total_value)
        train_loss = float(np.mean(batch_losses))
        val_loss = split_loss(model, featurized, ds.val, label_mean, label_std)
        logs.append(EpochLog(epoch=epoch, train_loss=train_loss, val_loss=val_loss, wall_time=time.monotonic() - start))

        if val_loss < best_val:
            best_val = val_loss
            best_params = snapshot_parameters(model)
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    assert best_params is not None
    ckpt = Checkpoint(
        format_version=CHECKPOINT_VERSION,
        config_fingerprint=config.fingerprint(),
        config=config,
        parameters=best_params,
        best_val_loss=best_val,
        epoch=best_epoch,
        feature_dim=feature_dim,
        label_mean=label_mean,
        label_std=label_std,
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt.save(out / "checkpoint.json")
        (out / "split.json").write_text(ds.to_json())
        (out / "training_log.json").write_text(json.dumps([log.__dict__ for log in logs]))
        export_loss_curve(logs, out / "loss_curve.csv")
        from .plots import render_loss_curve

        render_loss_curve(logs, out / "loss_curve.png")
    return ckpt, logs


# ---------------------------------------------------------------------------
# evaluation and prediction


def evaluate(ckpt: Checkpoint, samples: list[PairedSample], split_name: str) -> tuple[Metrics, list[float], list[float]]:
    """Frozen forward over the requested split; metrics on the raw label scale."""
    if split_name not in ("train", "val", "test"):
        raise ValueError(f"evaluate: split must be train/val/test, got {split_name!r}")
    expected_dim = dataset_feature_dim(samples)
    if expected_dim != ckpt.feature_dim:
        raise CheckpointMismatchError(
            f"featurization mismatch: checkpoint expects node feature width {ckpt.feature_dim}, dataset has {expected_dim}"
        )
    model = model_from_checkpoint(ckpt)
    ds = make_split(len(samples), ckpt.config.seed, ckpt.config.fractions)
    indices = getattr(ds, split_name)
    featurized = [model.featurize(samples[i]) for i in indices]
    preds = [model.predict_value(fs) * ckpt.label_std + ckpt.label_mean for fs in featurized]
    targets = [fs.label for fs in featurized]
    return compute_metrics(preds, targets), preds, targets


def predict(ckpt: Checkpoint, samples: list[PairedSample]) -> list[tuple[str, float]]:
    """Predictions in input order as (id, affinity) pairs, on the label scale."""
    model = model_from_checkpoint(ckpt)
    out = []
    for s in samples:
        fs = model.featurize(s)
        out.append((s.complex.id, model.predict_value(fs) * ckpt.label_std + ckpt.label_mean))
    return out


# ---------------------------------------------------------------------------
# MLM pretraining


def pretrain(
    config: RunConfig,
    corpus: list[str],
    out_dir: str | Path | None = None,
    max_steps: int | None = None,
    mask_prob: float = 0.15,
    warmup_steps: int = 100,
) -> tuple[Checkpoint, list[PretrainLog]]:
    """MLM pretraining over a corpus of one sequence per line.

    The learning rate ramps linearly over ``warmup_steps`` (post-norm
    blocks diverge into a uniform-attention plateau without it). Emits an
    encoder-plus-head checkpoint whose ``seq.*`` parameters train() can
    load as a warm start for the sequence encoder.
    """
    config.validate()
    lines = [line.strip() for line in corpus if line.strip()]
    if not lines:
        raise ValueError("pretrain: empty corpus")

    rng = np.random.default_rng(config.seed)
    vocab = Vocabulary.named(config.alphabet)
    enc = TransformerEncoder(
        rng, vocab, dim=config.embed_dim, num_layers=config.tx_layers, heads=config.tx_heads, ff_hidden=config.ff_hidden, max_len=config.max_len
    )
    head = MlmHead(np.random.default_rng(derive(config.seed, 0x91E)), config.embed_dim, vocab.size)

    token_arrays = []
    for i, line in enumerate(lines):
        rec = SequenceRecord(id=f"corpus-{i}", residues=line)
        rec.validate(vocab.alphabet)
        token_arrays.append(tokenize(rec, vocab, config.max_len).ids)

    params = dict(enc.named_params("seq"))
    params.update(dict(head.named_params("mlm")))
    param_list = list(params.values())
    opt = AdamState(param_list, lr=config.lr)

    logs: list[PretrainLog] = []
    step = 0
    batches_per_epoch = max(1, (len(lines) + config.batch_size - 1) // config.batch_size)
    total_steps = max_steps if max_steps is not None else config.max_epochs * batches_per_epoch
    epoch = 0
    while step < total_steps:
        order = list(range(len(token_arrays)))
        XorShiftRng(derive(config.seed, 0x3A5C + epoch)).shuffle(order)
        epoch += 1
        for b0 in range(0, len(order), config.batch_size):
            if step >= total_steps:
                break
            batch = [token_arrays[i] for i in order[b0 : b0 + config.batch_size]]
            opt.lr = config.lr * min(1.0, (step + 1) / warmup_steps) if warmup_steps > 0 else config.lr
            loss, acc = pretrain_step(enc, head, batch, param_list, opt, seed=derive(config.seed, 0x11A5E + step), mask_prob=mask_prob)
            step += 1
            logs.append(PretrainLog(step=step, loss=loss, masked_accuracy=acc))

    ckpt = Checkpoint(
        format_version=CHECKPOINT_VERSION,
        config_fingerprint=config.fingerprint(),
        config=config,
        parameters={name: t.values.copy() for name, t in params.items()},
        best_val_loss=logs[-1].loss if logs else float("nan"),
        epoch=epoch,
        feature_dim=0,
        label_mean=0.0,
        label_std=1.0,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt.save(out / "pretrained.json")
        (out / "pretrain_log.json").write_text(json.dumps([log.__dict__ for log in logs]))
    return ckpt, logs


# ---------------------------------------------------------------------------
# loss-curve export


def export_loss_curve(logs: list[EpochLog], path: str | Path) -> None:
    """CSV with one row per epoch, floats at 17 significant digits."""
    if not logs:
        raise ValueError("export_loss_curve: no epochs to export")
    lines = ["epoch,train_loss,val_loss,wall_time"]
    for log in logs:
        lines.append(f"{log.epoch},{log.train_loss:.17g},{log.val_loss:.17g},{log.wall_time:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")
