"""Adam optimizer over named parameter lists."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class GradientExplosionError(RuntimeError):
    """A gradient contained NaN or Inf; the step was refused."""


class AdamState:
    """Per-parameter first/second moment buffers plus the step counter.

    Defaults beta1=0.9, beta2=0.999, eps=1e-8 are the canonical ones;
    only the learning rate is typically configured.
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = [np.zeros(p.shape) for p in params]
        self.second_moment = [np.zeros(p.shape) for p in params]
        self._shapes = [p.shape for p in params]


def adam_step(params: list[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update; zeroes gradients afterwards.

    Refuses the whole step (raising GradientExplosionError) if any
    gradient holds NaN/Inf, leaving parameters and moments untouched.
    """
    if [p.shape for p in params] != state._shapes:
        raise ValueError("adam_step: parameter list does not match the state it was built for")
    for i, p in enumerate(params):
        if not np.all(np.isfinite(p.grad)):
            raise GradientExplosionError(f"non-finite gradient in parameter {i} (shape {p.shape})")

    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.values -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.zero_grad()
