"""Shared oracles: central finite differences and naive reference models."""

import numpy as np

from dualbind import autodiff as ad


def numerical_grad(eval_loss, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of eval_loss() wrt x, perturbing x in place."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = eval_loss()
        flat[i] = orig - h
        fm = eval_loss()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Elementwise |a - n| / max(|a|, |n|, 1); the unit floor keeps zero
    gradients comparable without dividing by zero."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((np.abs(analytic - numeric) / denom).max())


def check_gradients(build_loss, params: list[ad.Tensor], h: float = 1e-5) -> float:
    """Worst relative error between backward() and finite differences.

    build_loss() must construct the scalar loss tensor fresh from the
    current parameter values each time it is called.
    """
    for p in params:
        p.zero_grad()
    loss = build_loss()
    ad.backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        n = numerical_grad(lambda: build_loss().item(), p.values, h=h)
        worst = max(worst, max_rel_err(a, n))
    for p in params:
        p.zero_grad()
    return worst


def naive_gin_layer(h_prev: np.ndarray, neighbors: list[list[int]], eps: float, mlp_fn) -> np.ndarray:
    """Eq-by-hand GIN layer: explicit per-node loops, no batching."""
    v = h_prev.shape[0]
    out_rows = []
    for node in range(v):
        agg = (1.0 + eps) * h_prev[node].copy()
        for u in neighbors[node]:
            agg = agg + h_prev[u]
        out_rows.append(mlp_fn(agg))
    return np.stack(out_rows)


def naive_mlp_fn(w1, b1, w2, b2):
    def apply(row: np.ndarray) -> np.ndarray:
        hidden = np.maximum(0.0, row @ w1 + b1)
        return hidden @ w2 + b2

    return apply
