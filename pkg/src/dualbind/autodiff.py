"""Reverse-mode automatic differentiation on dense float64 arrays.

Every tensor op here builds a computation graph; ``backward()`` on a scalar
loss walks it once in reverse topological order and accumulates gradients
into every reachable tensor with ``requires_grad=True``. There is no implicit
broadcasting: shapes must match exactly, and the few mixed-shape operations
(``add_bias``, ``smul``, ``gather_rows``) state their shape contract
explicitly. Everything is float64; construction and backward are
single-threaded, finished tensors are safe to share read-only.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeMismatchError",
    "no_grad",
    "tensor",
    "parameter",
    "matmul",
    "add",
    "mul",
    "add_bias",
    "add_scalar",
    "scale",
    "smul",
    "relu",
    "softmax_rows",
    "reduce",
    "sum_all",
    "mean_all",
    "concat_vec",
    "stack_scalars",
    "concat_cols",
    "slice_cols",
    "gather_rows",
    "transpose",
    "reshape",
    "mse",
    "cross_entropy_rows",
    "conv1d_same",
    "layer_norm_rows",
    "multi_head_attention",
    "lstm_sequence",
    "backward",
]


class ShapeMismatchError(ValueError):
    """Raised when operand shapes violate an op's contract."""


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (frozen inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """Dense float64 array with a gradient buffer and graph linkage.

    ``grad`` is lazily allocated but always reads as a zero array of the
    tensor's shape until backward() deposits something, so unreachable
    leaves report all-zero gradients. Calling backward twice without
    ``zero_grad`` accumulates.
    """

    __slots__ = ("values", "requires_grad", "_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self._grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    def accumulate_grad(self, delta: np.ndarray) -> None:
        if self._grad is None:
            # copy: callers may hand the same array to several parents
            self._grad = np.array(delta, dtype=np.float64)
        else:
            self._grad += delta

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeMismatchError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(()))

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def sum(self, axis: int | None = None) -> "Tensor":
        return sum_all(self) if axis is None else reduce(self, axis, "sum")

    def mean(self, axis: int | None = None) -> "Tensor":
        return mean_all(self) if axis is None else reduce(self, axis, "mean")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


def _make(values: np.ndarray, parents: tuple[Tensor, ...], rule: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(values)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = rule
    return out


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: shapes differ: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# arithmetic


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeMismatchError(f"matmul: rank-2 operands required, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: inner extents differ: {a.shape} @ {b.shape}")

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g @ b.values.T)
        if b.requires_grad:
            b.accumulate_grad(a.values.T @ g)

    return _make(a.values @ b.values, (a, b), rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return _make(a.values + b.values, (a, b), rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * b.values)
        if b.requires_grad:
            b.accumulate_grad(g * a.values)

    return _make(a.values * b.values, (a, b), rule)


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise bias: a[m x n] + b[n], gradient on b sums over rows."""
    if a.values.ndim != 2 or b.values.ndim != 1 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"add_bias: need (m,n)+(n,), got {a.shape} + {b.shape}")

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))

    return _make(a.values + b.values[None, :], (a, b), rule)


def add_scalar(a: Tensor, c: float) -> Tensor:
    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)

    return _make(a.values + c, (a,), rule)


def scale(a: Tensor, c: float) -> Tensor:
    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * c)

    return _make(a.values * c, (a,), rule)


def smul(s: Tensor, a: Tensor) -> Tensor:
    """Learnable-scalar times tensor: s has shape (), a is any shape."""
    if s.values.shape != ():
        raise ShapeMismatchError(f"smul: scalar operand must have shape (), got {s.shape}")

    def rule(g: np.ndarray) -> None:
        if s.requires_grad:
            s.accumulate_grad(np.asarray((g * a.values).sum()))
        if a.requires_grad:
            a.accumulate_grad(g * s.values)

    return _make(a.values * s.values, (s, a), rule)


def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = a.values > 0.0

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * mask)

    return _make(np.where(mask, a.values, 0.0), (a,), rule)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with per-row max subtraction for stability."""
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"softmax_rows: rank-2 input required, got {a.shape}")
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            # dL/dx_i = p_i * (g_i - sum_j g_j p_j), per row
            dot = (g * p).sum(axis=1, keepdims=True)
            a.accumulate_grad(p * (g - dot))

    return _make(p, (a,), rule)


# ---------------------------------------------------------------------------
# reductions and reshaping


def reduce(a: Tensor, axis: int, kind: str) -> Tensor:
    if not 0 <= axis < a.values.ndim:
        raise ShapeMismatchError(f"reduce: axis {axis} invalid for shape {a.shape}")
    if kind not in ("sum", "mean"):
        raise ValueError(f"reduce: kind must be 'sum' or 'mean', got {kind!r}")
    n = a.shape[axis]
    vals = a.values.sum(axis=axis)
    if kind == "mean":
        vals = vals / n

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            expanded = np.broadcast_to(np.expand_dims(g, axis), a.shape)
            a.accumulate_grad(expanded / n if kind == "mean" else expanded.copy())

    return _make(vals, (a,), rule)


def sum_all(a: Tensor) -> Tensor:
    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(np.full(a.shape, float(g)))

    return _make(np.asarray(a.values.sum()), (a,), rule)


def mean_all(a: Tensor) -> Tensor:
    n = a.values.size

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(np.full(a.shape, float(g) / n))

    return _make(np.asarray(a.values.mean()), (a,), rule)


def concat_vec(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 1 or b.values.ndim != 1:
        raise ShapeMismatchError(f"concat_vec: rank-1 operands required, got {a.shape} and {b.shape}")
    p = a.shape[0]

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g[:p])
        if b.requires_grad:
            b.accumulate_grad(g[p:])

    return _make(np.concatenate([a.values, b.values]), (a, b), rule)


def stack_scalars(items: Sequence[Tensor]) -> Tensor:
    """Stack shape-() tensors into one rank-1 tensor."""
    for t in items:
        if t.values.shape != ():
            raise ShapeMismatchError(f"stack_scalars: all items must have shape (), got {t.shape}")
    parents = tuple(items)

    def rule(g: np.ndarray) -> None:
        for i, t in enumerate(parents):
            if t.requires_grad:
                t.accumulate_grad(np.asarray(g[i]))

    return _make(np.array([t.values for t in items], dtype=np.float64), parents, rule)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeMismatchError("concat_cols: need at least one part")
    rows = parts[0].shape[0]
    for t in parts:
        if t.values.ndim != 2 or t.shape[0] != rows:
            raise ShapeMismatchError(f"concat_cols: rank-2 with equal row counts required, got {[p.shape for p in parts]}")
    widths = [t.shape[1] for t in parts]
    offsets = np.cumsum([0] + widths)
    parents = tuple(parts)

    def rule(g: np.ndarray) -> None:
        for i, t in enumerate(parents):
            if t.requires_grad:
                t.accumulate_grad(g[:, offsets[i] : offsets[i + 1]])

    return _make(np.concatenate([t.values for t in parts], axis=1), parents, rule)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"slice_cols: rank-2 input required, got {a.shape}")

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            buf = np.zeros(a.shape)
            buf[:, start:stop] = g
            a.accumulate_grad(buf)

    return _make(a.values[:, start:stop].copy(), (a,), rule)


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows a[indices]; backward scatter-adds (rows may repeat)."""
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"gather_rows: rank-2 input required, got {a.shape}")
    idx = np.asarray(indices, dtype=np.intp)

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            buf = np.zeros(a.shape)
            np.add.at(buf, idx, g)
            a.accumulate_grad(buf)

    return _make(a.values[idx], (a,), rule)


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"transpose: rank-2 input required, got {a.shape}")

    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g.T)

    return _make(a.values.T.copy(), (a,), rule)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def rule(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.shape))

    return _make(a.values.reshape(shape).copy(), (a,), rule)


# ---------------------------------------------------------------------------
# losses


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """(1/N) sum (pred_i - target_i)^2 over rank-1 inputs of equal length."""
    if pred.values.ndim != 1 or target.values.ndim != 1:
        raise ShapeMismatchError(f"mse: rank-1 inputs required, got {pred.shape} and {target.shape}")
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"mse: lengths differ: {pred.shape} vs {target.shape}")
    n = pred.shape[0]
    if n == 0:
        raise ShapeMismatchError("mse: empty inputs")
    diff = pred.values - target.values

    def rule(g: np.ndarray) -> None:
        coeff = 2.0 * float(g) / n
        if pred.requires_grad:
            pred.accumulate_grad(coeff * diff)
        if target.requires_grad:
            target.accumulate_grad(-coeff * diff)

    return _make(np.asarray((diff * diff).mean()), (pred, target), rule)


def cross_entropy_rows(logits: Tensor, target_ids, reduction: str = "mean") -> Tensor:
    """Softmax cross-entropy of each row against its target id.

    Stable log-sum-exp with per-row max shift; backward is
    (softmax - onehot) / m for mean reduction.
    """
    if logits.values.ndim != 2:
        raise ShapeMismatchError(f"cross_entropy_rows: rank-2 logits required, got {logits.shape}")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"cross_entropy_rows: bad reduction {reduction!r}")
    ids = np.asarray(target_ids, dtype=np.intp)
    m = logits.shape[0]
    if ids.shape != (m,):
        raise ShapeMismatchError(f"cross_entropy_rows: need {m} target ids, got shape {ids.shape}")

    z = logits.values
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    sums = e.sum(axis=1)
    logsumexp = np.log(sums) + zmax[:, 0]
    picked = z[np.arange(m), ids]
    losses = logsumexp - picked
    total = losses.sum()
    if reduction == "mean":
        total = total / m

    def rule(g: np.ndarray) -> None:
        if logits.requires_grad:
            p = e / sums[:, None]
            p[np.arange(m), ids] -= 1.0
            coeff = float(g) / m if reduction == "mean" else float(g)
            logits.accumulate_grad(coeff * p)

    return _make(np.asarray(total), (logits,), rule)


# ---------------------------------------------------------------------------
# fused sequence ops (single graph node each, hand-derived backward)


def conv1d_same(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Same-padded 1-D cross-correlation.

    x: (T, C_in), kernels: (C_out, C_in, w) with odd w, bias: (C_out,).
    Output (T, C_out), pre-activation (no ReLU here).
    """
    if x.values.ndim != 2 or kernels.values.ndim != 3 or bias.values.ndim != 1:
        raise ShapeMismatchError(
            f"conv1d_same: need x(T,Cin), kernels(Cout,Cin,w), bias(Cout); got {x.shape}, {kernels.shape}, {bias.shape}"
        )
    t_len, c_in = x.shape
    c_out, k_cin, w = kernels.shape
    if k_cin != c_in or bias.shape[0] != c_out:
        raise ShapeMismatchError(f"conv1d_same: channel mismatch: x {x.shape}, kernels {kernels.shape}, bias {bias.shape}")
    if w % 2 == 0:
        raise ShapeMismatchError(f"conv1d_same: kernel width must be odd, got {w}")
    pad = w // 2

    xpad = np.zeros((t_len + 2 * pad, c_in))
    xpad[pad : pad + t_len] = x.values
    out = np.tile(bias.values, (t_len, 1))
    for tau in range(w):
        out += xpad[tau : tau + t_len] @ kernels.values[:, :, tau].T

    def rule(g: np.ndarray) -> None:
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0))
        if kernels.requires_grad:
            dk = np.empty_like(kernels.values)
            for tau in range(w):
                dk[:, :, tau] = g.T @ xpad[tau : tau + t_len]
            kernels.accumulate_grad(dk)
        if x.requires_grad:
            dxpad = np.zeros_like(xpad)
            for tau in range(w):
                dxpad[tau : tau + t_len] += g @ kernels.values[:, :, tau]
            x.accumulate_grad(dxpad[pad : pad + t_len])

    return _make(out, (x, kernels, bias), rule)


def layer_norm_rows(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row layer normalization: gamma * (x - mean) / sqrt(var + eps) + beta."""
    if x.values.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeMismatchError(f"layer_norm_rows: got x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    mu = x.values.mean(axis=1, keepdims=True)
    var = x.values.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.values - mu) * inv

    def rule(g: np.ndarray) -> None:
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=0))
        if x.requires_grad:
            gy = g * gamma.values
            mean_gy = gy.mean(axis=1, keepdims=True)
            mean_gy_xhat = (gy * xhat).mean(axis=1, keepdims=True)
            x.accumulate_grad(inv * (gy - mean_gy - xhat * mean_gy_xhat))

    return _make(gamma.values * xhat + beta.values, (x, gamma, beta), rule)


def multi_head_attention(
    x: Tensor,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    heads: int,
    attn_sink: list | None = None,
) -> Tensor:
    """Fused multi-head self-attention: projections, per-head scaled-dot
    softmax, head concat, output projection. One graph node; backward is
    hand-derived (softmax Jacobian per head, then standard matmul rules).

    ``attn_sink``, when given, receives each head's (n, n) weight matrix.
    """
    n, d = x.shape
    if d % heads != 0:
        raise ShapeMismatchError(f"multi_head_attention: width {d} not divisible by {heads} heads")
    for name, t, shape in (
        ("wq", wq, (d, d)),
        ("wk", wk, (d, d)),
        ("wv", wv, (d, d)),
        ("wo", wo, (d, d)),
        ("bq", bq, (d,)),
        ("bk", bk, (d,)),
        ("bv", bv, (d,)),
        ("bo", bo, (d,)),
    ):
        if t.shape != shape:
            raise ShapeMismatchError(f"multi_head_attention: {name} has shape {t.shape}, expected {shape}")
    dh = d // heads
    inv_sqrt = 1.0 / np.sqrt(dh)

    xv = x.values
    q = xv @ wq.values + bq.values
    k = xv @ wk.values + bk.values
    v = xv @ wv.values + bv.values
    probs = []
    concat = np.empty((n, d))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = (q[:, sl] @ k[:, sl].T) * inv_sqrt
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        p = e / e.sum(axis=1, keepdims=True)
        probs.append(p)
        concat[:, sl] = p @ v[:, sl]
        if attn_sink is not None:
            attn_sink.append(p)
    out = concat @ wo.values + bo.values

    def rule(g: np.ndarray) -> None:
        if bo.requires_grad:
            bo.accumulate_grad(g.sum(axis=0))
        if wo.requires_grad:
            wo.accumulate_grad(concat.T @ g)
        d_concat = g @ wo.values.T
        dq = np.empty_like(q)
        dk = np.empty_like(k)
        dv = np.empty_like(v)
        for h in range(heads):
            sl = slice(h * dh, (h + 1) * dh)
            p = probs[h]
            d_oh = d_concat[:, sl]
            dp = d_oh @ v[:, sl].T
            ds = p * (dp - (dp * p).sum(axis=1, keepdims=True))
            dq[:, sl] = (ds @ k[:, sl]) * inv_sqrt
            dk[:, sl] = (ds.T @ q[:, sl]) * inv_sqrt
            dv[:, sl] = p.T @ d_oh
        dx = None
        for w, b, dproj in ((wq, bq, dq), (wk, bk, dk), (wv, bv, dv)):
            if w.requires_grad:
                w.accumulate_grad(xv.T @ dproj)
            if b.requires_grad:
                b.accumulate_grad(dproj.sum(axis=0))
            if x.requires_grad:
                dx = dproj @ w.values.T if dx is None else dx + dproj @ w.values.T
        if x.requires_grad:
            x.accumulate_grad(dx)

    return _make(out, (x, wq, bq, wk, bk, wv, bv, wo, bo), rule)


def lstm_sequence(x: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor, reverse: bool = False) -> Tensor:
    """Run one LSTM direction over a sequence, returning the final hidden state.

    Gate equations (gate order i, f, g, o along the 4H axis):

        z_t = x_t W_ih + h_{t-1} W_hh + b
        i_t = sigmoid(z_t[0:H])      f_t = sigmoid(z_t[H:2H])
        g_t = tanh(z_t[2H:3H])       o_t = sigmoid(z_t[3H:4H])
        c_t = f_t * c_{t-1} + i_t * g_t
        h_t = o_t * tanh(c_t)

    Initial h and c are zero. ``reverse=True`` consumes the sequence
    right-to-left. Backward is full BPTT, done in one fused node.
    """
    if x.values.ndim != 2:
        raise ShapeMismatchError(f"lstm_sequence: rank-2 input required, got {x.shape}")
    t_len, c_in = x.shape
    if w_ih.shape[0] != c_in or w_ih.shape[1] % 4 != 0:
        raise ShapeMismatchError(f"lstm_sequence: w_ih {w_ih.shape} incompatible with input {x.shape}")
    hidden = w_ih.shape[1] // 4
    if w_hh.shape != (hidden, 4 * hidden) or bias.shape != (4 * hidden,):
        raise ShapeMismatchError(f"lstm_sequence: w_hh {w_hh.shape} / bias {bias.shape} inconsistent with H={hidden}")

    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    steps = []  # (t, i, f, g, o, c_prev, h_prev, tanh_c)
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    xw = x.values @ w_ih.values  # all time steps at once
    for t in order:
        z = xw[t] + h @ w_hh.values + bias.values
        ig = 1.0 / (1.0 + np.exp(-z[:hidden]))
        fg = 1.0 / (1.0 + np.exp(-z[hidden : 2 * hidden]))
        gg = np.tanh(z[2 * hidden : 3 * hidden])
        og = 1.0 / (1.0 + np.exp(-z[3 * hidden :]))
        c_prev, h_prev = c, h
        c = fg * c_prev + ig * gg
        tanh_c = np.tanh(c)
        h = og * tanh_c
        steps.append((t, ig, fg, gg, og, c_prev, h_prev, tanh_c))

    def rule(g: np.ndarray) -> None:
        dh = g.copy()
        dc = np.zeros(hidden)
        # per-step dz rows collected so weight gradients become two matmuls
        dz_rows = np.empty((t_len, 4 * hidden))
        hprev_rows = np.empty((t_len, hidden))
        time_index = np.empty(t_len, dtype=np.intp)
        for s, (t, ig, fg, gg, og, c_prev, h_prev, tanh_c) in enumerate(reversed(steps)):
            do = dh * tanh_c
            dc = dc + dh * og * (1.0 - tanh_c * tanh_c)
            di = dc * gg
            dg = dc * ig
            df = dc * c_prev
            dz = dz_rows[s]
            dz[:hidden] = di * ig * (1.0 - ig)
            dz[hidden : 2 * hidden] = df * fg * (1.0 - fg)
            dz[2 * hidden : 3 * hidden] = dg * (1.0 - gg * gg)
            dz[3 * hidden :] = do * og * (1.0 - og)
            hprev_rows[s] = h_prev
            time_index[s] = t
            dh = dz @ w_hh.values.T
            dc = dc * fg
        if x.requires_grad:
            dx = np.zeros(x.shape)
            dx[time_index] = dz_rows @ w_ih.values.T
            x.accumulate_grad(dx)
        if w_ih.requires_grad:
            w_ih.accumulate_grad(x.values[time_index].T @ dz_rows)
        if w_hh.requires_grad:
            w_hh.accumulate_grad(hprev_rows.T @ dz_rows)
        if bias.requires_grad:
            bias.accumulate_grad(dz_rows.sum(axis=0))

    return _make(h, (x, w_ih, w_hh, bias), rule)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable requires-grad tensor.

    The root must hold a single element. Each graph node's rule fires
    exactly once, in reverse topological order, so tensors used several
    times accumulate rather than overwrite. Gradients are not cleared
    first: a second call adds another unit seed.
    """
    if loss.values.size != 1:
        raise ShapeMismatchError(f"backward: root must be scalar, got shape {loss.shape}")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p._backward is not None:
                stack.append((p, False))

    # graph-interior nodes get a fresh flow buffer per call so repeated
    # backward() calls each contribute exactly one unit seed; prior grads
    # are merged back at the end. Leaves accumulate in place.
    stash = [node._grad for node in topo]
    for node in topo:
        node._grad = None

    loss.accumulate_grad(np.ones_like(loss.values))
    for node in reversed(topo):
        if node._backward is not None and node._grad is not None:
            node._backward(node._grad)

    for node, old in zip(topo, stash):
        if old is not None:
            if node._grad is None:
                node._grad = old
            else:
                node._grad += old


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
