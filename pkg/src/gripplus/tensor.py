"""Dense float64 tensors with reverse-mode differentiation.

Every op that touches a tensor with ``requires_grad`` records a tape entry
(its parents, a closure computing parent gradients, and a monotonically
increasing sequence number).  :func:`backward` collects the entries reachable
from a scalar loss and replays them in exactly the reverse of the order in
which they were executed.

Only the operations needed by the trajectory model are provided.  Binary
elementwise ops require equal shapes (python scalars are accepted), which
keeps every gradient rule free of implicit broadcasting.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError, UsageError

_seq = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Run ops without recording them on the tape (thread-local)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class TapeEntry:
    __slots__ = ("seq", "parents", "backward")

    def __init__(self, parents, backward):
        self.seq = next(_seq)
        self.parents = parents
        self.backward = backward


class Tensor:
    __array_priority__ = 100
    __slots__ = ("data", "requires_grad", "grad", "_entry", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._entry: TapeEntry | None = None
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._entry is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise DimensionError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self):
        return mean(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._entry = TapeEntry(parents, backward_fn)
    return out


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Repeated calls without zeroing gradients accumulate, as with any tape.
    """
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss is not connected to any tensor that requires grad")
    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return

    entries: list[Tensor] = []
    seen: set[int] = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t._entry is not None:
            entries.append(t)
            stack.extend(p for p in t._entry.parents if p.requires_grad)
    entries.sort(key=lambda t: t._entry.seq, reverse=True)

    pending: dict[int, np.ndarray] = {id(loss): seed}
    for t in entries:
        g = pending.pop(id(t), None)
        if g is None:
            continue
        parents = t._entry.parents
        for p, pg in zip(parents, t._entry.backward(g)):
            if pg is None or not p.requires_grad:
                continue
            if p._entry is None:
                p.grad = pg.copy() if p.grad is None else p.grad + pg
            elif id(p) in pending:
                pending[id(p)] = pending[id(p)] + pg
            else:
                pending[id(p)] = pg


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    if isinstance(b, Tensor):
        _check_same(a, b, "add")
        return _make(a.data + b.data, (a, b), lambda g: (g, g))
    if isinstance(b, np.ndarray) and b.shape != a.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    return _make(a.data + b, (a,), lambda g: (g,))


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _check_same(a, b, "sub")
        return _make(a.data - b.data, (a, b), lambda g: (g, -g))
    return add(a, -np.asarray(b) if isinstance(b, np.ndarray) else -b)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    if isinstance(b, Tensor):
        _check_same(a, b, "mul")
        ad, bd = a.data, b.data
        return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))
    c = np.asarray(b, dtype=np.float64)
    if c.ndim and c.shape != a.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {c.shape} differ")
    return _make(a.data * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    # tanh form is overflow-free and gives exactly 0.5 at 0
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: add | mul | tanh | sigmoid | relu."""
    table = {"add": add, "mul": mul, "tanh": tanh, "sigmoid": sigmoid, "relu": relu}
    if op not in table:
        raise ParameterError(f"unknown elementwise op {op!r}")
    return table[op](*args)


def norm(x: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at exactly zero is taken as 0."""
    n = np.sqrt(np.sum(x.data * x.data, axis=axis))
    xd = x.data

    def bw(g):
        safe = np.where(n > 0, n, 1.0)
        scale = np.where(n > 0, g / safe, 0.0)
        return (np.expand_dims(scale, axis) * xd,)

    return _make(n, (x,), bw)


# ---------------------------------------------------------------------------
# shape ops and reductions
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def getitem(x: Tensor, idx) -> Tensor:
    """Basic (slice/int) indexing."""
    shape = x.shape

    def bw(g):
        full = np.zeros(shape)
        full[idx] += g
        return (full,)

    return _make(x.data[idx], (x,), bw)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), bw)


def mean(x: Tensor) -> Tensor:
    return mul(tsum(x), 1.0 / x.size)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("stack of an empty sequence")
    for t in tensors[1:]:
        _check_same(tensors[0], t, "stack")
    data = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(data, tuple(tensors), bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(data, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def cumsum(x: Tensor, axis: int) -> Tensor:
    def bw(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _make(np.cumsum(x.data, axis=axis), (x,), bw)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T + b`` over the last axis of ``x``; ``w`` is (out, in)."""
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError(f"linear: bias {b.shape} does not match weight {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd.T
    if b is not None:
        out = out + b.data
    lead = x.shape[:-1]

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd
        gw = g2.T @ xd.reshape(-1, xd.shape[-1])
        gb = g2.sum(axis=0) if b is not None else None
        return gx.reshape(lead + (wd.shape[1],)), gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, bw)


def conv_channel_mix(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """1x1 convolution: the same (c_out, c_in) map at every (node, time)."""
    if x.shape[-1] != w.shape[1]:
        raise DimensionError(f"conv_channel_mix: {x.shape[-1]} input channels, weight {w.shape}")
    return linear(x, w, bias)


def conv_temporal(x: Tensor, w: Tensor, bias: Tensor | None = None,
                  stride: int = 1, padding: int = 1) -> Tensor:
    """1-D convolution along axis -2 (time), independently per leading index.

    ``x`` is (..., t, c_in), ``w`` is (c_out, c_in, k).
    """
    c_out, c_in, k = w.shape
    t = x.shape[-2]
    if x.shape[-1] != c_in:
        raise DimensionError(f"conv_temporal: {x.shape[-1]} input channels, weight {w.shape}")
    if stride < 1 or padding < 0:
        raise ParameterError("conv_temporal: stride must be >= 1 and padding >= 0")
    if t + 2 * padding < k:
        raise DimensionError(f"conv_temporal: length {t} with padding {padding} is shorter than kernel {k}")
    t_out = (t + 2 * padding - k) // stride + 1
    pad = [(0, 0)] * x.ndim
    pad[-2] = (padding, padding)
    xp = np.pad(x.data, pad)
    wd = w.data
    span = stride * (t_out - 1) + 1
    out = np.zeros(x.shape[:-2] + (t_out, c_out))
    for q in range(k):
        out += xp[..., q:q + span:stride, :] @ wd[:, :, q].T
    if bias is not None:
        out += bias.data

    def bw(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        g2 = g.reshape(-1, c_out)
        for q in range(k):
            xs = xp[..., q:q + span:stride, :]
            gw[:, :, q] = g2.T @ xs.reshape(-1, c_in)
            gxp[..., q:q + span:stride, :] += g @ wd[:, :, q]
        gx = gxp[..., padding:padding + t, :]
        gb = g2.sum(axis=0) if bias is not None else None
        return gx, gw, gb

    parents = (x, w) if bias is None else (x, w, bias)
    return _make(out, parents, bw)


def graph_mix(f: Tensor, g_fixed: np.ndarray, g_train: Tensor | None = None) -> Tensor:
    """Per-time-slice node mixing.

    ``f`` is (b, n, t, c); ``g_fixed`` is a constant (b, t, n, n) array;
    ``g_train`` is an optional (n, n) tensor added to every slice.
    out[b, i, t] = sum_j (g_fixed[b, t, i, j] + g_train[i, j]) * f[b, j, t]
    """
    b, n, t, _ = f.shape
    if g_fixed.shape != (b, t, n, n):
        raise DimensionError(f"graph_mix: features {f.shape} need graphs {(b, t, n, n)}, got {g_fixed.shape}")
    if g_train is not None and g_train.shape != (n, n):
        raise DimensionError(f"graph_mix: trainable graph {g_train.shape} does not match {n} nodes")
    G = g_fixed if g_train is None else g_fixed + g_train.data
    ft = f.data.transpose(0, 2, 1, 3)
    out = (G @ ft).transpose(0, 2, 1, 3)

    def bw(g):
        gt = g.transpose(0, 2, 1, 3)
        gf = (G.swapaxes(-1, -2) @ gt).transpose(0, 2, 1, 3)
        gg = (gt @ ft.swapaxes(-1, -2)).sum(axis=(0, 1)) if g_train is not None else None
        return (gf, gg) if g_train is not None else (gf,)

    parents = (f,) if g_train is None else (f, g_train)
    return _make(out, parents, bw)


# ---------------------------------------------------------------------------
# normalization and regularization
# ---------------------------------------------------------------------------

class BatchNormStats:
    """Running mean/variance buffers for one batch-norm layer."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.mean = np.zeros(channels)
        self.var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, scale: Tensor, shift: Tensor, stats: BatchNormStats,
               training: bool) -> Tensor:
    """Per-channel normalization over every axis except the last."""
    c = x.shape[-1]
    if scale.shape != (c,) or shift.shape != (c,):
        raise DimensionError(f"batch_norm: {c} channels but scale {scale.shape}, shift {shift.shape}")
    axes = tuple(range(x.ndim - 1))
    xd, sd = x.data, scale.data
    if not training:
        inv = 1.0 / np.sqrt(stats.var + stats.eps)
        xhat = (xd - stats.mean) * inv
        return _make(sd * xhat + shift.data, (x, scale, shift),
                     lambda g: (g * sd * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)))

    m = xd.size // c
    mu = xd.mean(axis=axes)
    var = xd.var(axis=axes)
    inv = 1.0 / np.sqrt(var + stats.eps)
    xhat = (xd - mu) * inv
    unbiased = var * m / (m - 1) if m > 1 else var
    stats.mean = (1 - stats.momentum) * stats.mean + stats.momentum * mu
    stats.var = (1 - stats.momentum) * stats.var + stats.momentum * unbiased

    def bw(g):
        dxhat = g * sd
        gx = inv / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _make(sd * xhat + shift.data, (x, scale, shift), bw)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so eval is the identity."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise UsageError("train-mode dropout needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))
