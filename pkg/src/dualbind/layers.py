"""Shared parameterized building blocks."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def glorot(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out))


class Linear:
    """y = x W + b with W: (n_in, n_out). Accepts rank-1 or rank-2 input."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int):
        self.weight = ad.parameter(glorot(rng, n_in, n_out))
        self.bias = ad.parameter(np.zeros(n_out))
        self.n_in = n_in
        self.n_out = n_out

    def __call__(self, x: Tensor) -> Tensor:
        if x.values.ndim == 1:
            row = ad.reshape(x, (1, x.shape[0]))
            out = ad.add_bias(ad.matmul(row, self.weight), self.bias)
            return ad.reshape(out, (self.n_out,))
        return ad.add_bias(ad.matmul(x, self.weight), self.bias)

    def named_params(self, prefix: str):
        yield prefix + ".weight", self.weight
        yield prefix + ".bias", self.bias
