"""Mutation-window branch: 1-D conv over the window embedding, BiLSTM, merge.

The window is the 2k+1 tokens centered on the mutation position (sequence
midpoint when none is annotated), padded with PAD ids at the boundaries.
PAD positions embed to the PAD embedding row, not zeros, so the conv input
stays uniform. The local branch output concatenates with the global pooled
vector and projects through affine + ReLU back to the model width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Linear


@dataclass
class MutationWindow:
    center: int
    half_width: int
    token_ids: np.ndarray
    padding_mask: np.ndarray  # True where a position is padding


def extract_window(token_ids: np.ndarray, t: int, k: int, pad_id: int) -> MutationWindow:
    """Window of length exactly 2k+1 centered at t; out-of-range slots get PAD."""
    n = len(token_ids)
    if not 0 <= t < n:
        raise ValueError(f"extract_window: center {t} outside sequence of length {n}")
    if k < 1:
        raise ValueError(f"extract_window: half-width must be >= 1, got {k}")
    ids = np.full(2 * k + 1, pad_id, dtype=np.intp)
    mask = np.ones(2 * k + 1, dtype=bool)
    lo = max(0, t - k)
    hi = min(n, t + k + 1)
    ids[lo - (t - k) : hi - (t - k)] = token_ids[lo:hi]
    mask[lo - (t - k) : hi - (t - k)] = False
    return MutationWindow(center=t, half_width=k, token_ids=ids, padding_mask=mask)


class Conv1dLayer:
    """Same-padded conv + bias + ReLU (the activation lives in forward)."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int = 32, kernel_width: int = 3):
        if kernel_width % 2 == 0:
            raise ValueError(f"kernel width must be odd, got {kernel_width}")
        limit = np.sqrt(6.0 / (c_in * kernel_width + c_out))
        self.kernels = ad.parameter(rng.uniform(-limit, limit, size=(c_out, c_in, kernel_width)))
        self.bias = ad.parameter(np.zeros(c_out))

    def pre_activation(self, x: Tensor) -> Tensor:
        return ad.conv1d_same(x, self.kernels, self.bias)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.relu(self.pre_activation(x))

    def named_params(self, prefix: str):
        yield prefix + ".kernels", self.kernels
        yield prefix + ".bias", self.bias


def conv_forward(layer: Conv1dLayer, window_embedding: Tensor) -> Tensor:
    return layer(window_embedding)


class BiLstm:
    """Forward and backward LSTM cells; output is both final states concatenated."""

    def __init__(self, rng: np.random.Generator, c_in: int, hidden: int = 32):
        self.hidden = hidden

        def cell():
            lim_ih = np.sqrt(6.0 / (c_in + 4 * hidden))
            lim_hh = np.sqrt(6.0 / (hidden + 4 * hidden))
            return (
                ad.parameter(rng.uniform(-lim_ih, lim_ih, size=(c_in, 4 * hidden))),
                ad.parameter(rng.uniform(-lim_hh, lim_hh, size=(hidden, 4 * hidden))),
                ad.parameter(np.zeros(4 * hidden)),
            )

        self.fwd_w_ih, self.fwd_w_hh, self.fwd_bias = cell()
        self.bwd_w_ih, self.bwd_w_hh, self.bwd_bias = cell()

    def forward(self, x: Tensor) -> Tensor:
        h_fwd = ad.lstm_sequence(x, self.fwd_w_ih, self.fwd_w_hh, self.fwd_bias, reverse=False)
        h_bwd = ad.lstm_sequence(x, self.bwd_w_ih, self.bwd_w_hh, self.bwd_bias, reverse=True)
        return ad.concat_vec(h_fwd, h_bwd)

    def named_params(self, prefix: str):
        yield prefix + ".fwd_w_ih", self.fwd_w_ih
        yield prefix + ".fwd_w_hh", self.fwd_w_hh
        yield prefix + ".fwd_bias", self.fwd_bias
        yield prefix + ".bwd_w_ih", self.bwd_w_ih
        yield prefix + ".bwd_w_hh", self.bwd_w_hh
        yield prefix + ".bwd_bias", self.bwd_bias


def bilstm_forward(cells: BiLstm, x: Tensor) -> Tensor:
    return cells.forward(x)


class LocalGlobalMerge:
    """concat(h_local, h_seq) -> affine -> ReLU, back to the model width."""

    def __init__(self, rng: np.random.Generator, local_dim: int, global_dim: int, out_dim: int):
        self.projection = Linear(rng, local_dim + global_dim, out_dim)

    def __call__(self, h_local: Tensor, h_seq: Tensor) -> Tensor:
        return ad.relu(self.projection(ad.concat_vec(h_local, h_seq)))

    def named_params(self, prefix: str):
        yield from self.projection.named_params(prefix + ".projection")


def combine_local_global(merge: LocalGlobalMerge, h_local: Tensor, h_seq: Tensor) -> Tensor:
    return merge(h_local, h_seq)


class MutationWindowEncoder:
    """conv -> BiLSTM over the embedded window, then merge with the global vector."""

    def __init__(self, rng: np.random.Generator, embed_dim: int, half_width: int = 8, conv_channels: int = 32, kernel_width: int = 3, lstm_hidden: int = 32):
        self.half_width = half_width
        self.conv = Conv1dLayer(rng, embed_dim, conv_channels, kernel_width)
        self.bilstm = BiLstm(rng, conv_channels, lstm_hidden)
        self.merge = LocalGlobalMerge(rng, 2 * lstm_hidden, embed_dim, embed_dim)

    def forward(self, window_embedding: Tensor, h_seq: Tensor) -> Tensor:
        h_local = self.bilstm.forward(self.conv(window_embedding))
        return self.merge(h_local, h_seq)

    def named_params(self, prefix: str = "mutwin"):
        yield from self.conv.named_params(prefix + ".conv")
        yield from self.bilstm.named_params(prefix + ".bilstm")
        yield from self.merge.named_params(prefix + ".merge")
