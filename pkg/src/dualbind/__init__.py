"""Dual-modal protein-ligand binding affinity prediction.

A complex graph encoder (stacked GIN layers with a geometric consistency
regularizer) and a sequence encoder (small transformer pretrained by masked
language modeling, plus a conv/BiLSTM mutation-window branch) feed a fusion
MLP that regresses binding affinity. Everything runs on a from-scratch
reverse-mode autodiff core.
"""

from .autodiff import Tensor, no_grad
from .config import RunConfig
from .data import (
    ComplexRecord,
    DatasetSplit,
    GeneratorParams,
    PairedSample,
    SequenceRecord,
    generate_synthetic,
    parse_complex_jsonl,
    parse_fasta,
    split,
)
from .fusion import Metrics, compute_metrics
from .model import AffinityModel
from .train import Checkpoint, EpochLog, evaluate, predict, pretrain, train

__all__ = [
    "Tensor",
    "no_grad",
    "RunConfig",
    "ComplexRecord",
    "DatasetSplit",
    "GeneratorParams",
    "PairedSample",
    "SequenceRecord",
    "generate_synthetic",
    "parse_complex_jsonl",
    "parse_fasta",
    "split",
    "Metrics",
    "compute_metrics",
    "AffinityModel",
    "Checkpoint",
    "EpochLog",
    "evaluate",
    "predict",
    "pretrain",
    "train",
]
