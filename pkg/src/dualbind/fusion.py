"""Cross-modal fusion head, the training objective, and evaluation metrics."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Linear


class FusionMlp:
    """affine(2d -> d) -> ReLU -> affine(d -> d/2) -> ReLU -> affine(d/2 -> 1)."""

    def __init__(self, rng: np.random.Generator, in_dim: int = 128):
        self.fc1 = Linear(rng, in_dim, in_dim // 2)
        self.fc2 = Linear(rng, in_dim // 2, in_dim // 4)
        self.fc3 = Linear(rng, in_dim // 4, 1)
        # near-zero head: initial predictions sit at the standardized mean
        self.fc3.weight.values *= 0.05
        self.in_dim = in_dim

    def __call__(self, fused: Tensor) -> Tensor:
        return self.fc3(ad.relu(self.fc2(ad.relu(self.fc1(fused)))))

    def named_params(self, prefix: str = "fusion"):
        yield from self.fc1.named_params(prefix + ".fc1")
        yield from self.fc2.named_params(prefix + ".fc2")
        yield from self.fc3.named_params(prefix + ".fc3")


def fuse_predict(mlp: FusionMlp, h_complex: Tensor, h_seq_final: Tensor) -> Tensor:
    """Scalar affinity prediction from the concatenated modality vectors."""
    fused = ad.concat_vec(h_complex, h_seq_final)
    if fused.shape[0] != mlp.in_dim:
        raise ad.ShapeMismatchError(f"fuse_predict: concatenated width {fused.shape[0]} != MLP input width {mlp.in_dim}")
    return ad.reshape(mlp(fused), ())


@dataclass
class LossBreakdown:
    mse: Tensor
    geo_reg: Tensor
    total: Tensor
    lam: float

    @property
    def mse_value(self) -> float:
        return self.mse.item()

    @property
    def geo_value(self) -> float:
        return self.geo_reg.item()

    @property
    def total_value(self) -> float:
        return self.total.item()


def training_loss(preds: Tensor, targets: Tensor, geo_terms: Sequence[Tensor], lam: float) -> LossBreakdown:
    """MSE over the batch plus lambda times the mean per-graph regularizer."""
    if preds.shape[0] == 0:
        raise ValueError("training_loss: empty batch")
    mse_term = ad.mse(preds, targets)
    if geo_terms:
        geo = ad.mean_all(ad.stack_scalars(list(geo_terms)))
    else:
        geo = ad.tensor(np.asarray(0.0))
    total = ad.add(mse_term, ad.scale(geo, lam))
    breakdown = LossBreakdown(mse=mse_term, geo_reg=geo, total=total, lam=lam)
    for name, value in (("mse", breakdown.mse_value), ("geo_reg", breakdown.geo_value), ("total", breakdown.total_value)):
        if not math.isfinite(value) or value < 0.0:
            raise ValueError(f"training_loss: {name} component is {value}")
    return breakdown


@dataclass
class Metrics:
    mae: float
    rmse: float
    r2: float
    n: int

    def to_json(self, model: str) -> str:
        return json.dumps({"model": model, "mae": self.mae, "rmse": self.rmse, "r2": self.r2, "n": self.n})

    def to_table(self, model: str) -> str:
        header = f"{'Model':<16}{'MAE':>10}{'RMSE':>10}{'R^2':>10}{'N':>8}"
        row = f"{model:<16}{self.mae:>10.4f}{self.rmse:>10.4f}{self.r2:>10.4f}{self.n:>8d}"
        return header + "\n" + row


def compute_metrics(preds: Sequence[float], targets: Sequence[float]) -> Metrics:
    """MAE, RMSE and R-squared about the target mean.

    Constant targets make R^2 undefined; it comes back as NaN with a
    warning rather than a silently misleading number.
    """
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"compute_metrics: mismatched inputs {p.shape} vs {t.shape}")
    n = len(p)
    if n < 2:
        raise ValueError(f"compute_metrics: R^2 needs at least 2 samples, got {n}")
    diff = p - t
    mae = float(np.abs(diff).mean())
    rmse = float(np.sqrt((diff * diff).mean()))
    ss_res = float((diff * diff).sum())
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0.0:
        warnings.warn("constant targets: R^2 is undefined, reporting NaN")
        r2 = float("nan")
    else:
        r2 = 1.0 - ss_res / ss_tot
    return Metrics(mae=mae, rmse=rmse, r2=r2, n=n)
