"""Figure rendering for training and evaluation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_loss_curve(logs, path: str | Path) -> None:
    """Train/val loss per epoch with the best-so-far validation envelope."""
    epochs = [log.epoch for log in logs]
    train = [log.train_loss for log in logs]
    val = [log.val_loss for log in logs]
    best = np.minimum.accumulate(val)

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(epochs, train, label="train", color="tab:blue")
    ax.plot(epochs, val, label="validation", color="tab:orange")
    ax.plot(epochs, best, label="best validation", color="tab:orange", linestyle="--", linewidth=1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss (standardized)")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_prediction_scatter(preds, targets, path: str | Path) -> None:
    """Predicted vs measured affinity with the identity line."""
    preds = np.asarray(preds)
    targets = np.asarray(targets)
    fig, ax = plt.subplots(figsize=(4.8, 4.8))
    ax.scatter(targets, preds, s=12, alpha=0.6, color="tab:blue", edgecolors="none")
    lo = min(targets.min(), preds.min())
    hi = max(targets.max(), preds.max())
    ax.plot([lo, hi], [lo, hi], color="gray", linewidth=1, linestyle="--")
    ax.set_xlabel("measured affinity")
    ax.set_ylabel("predicted affinity")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
