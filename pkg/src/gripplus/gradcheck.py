"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tensor, backward, no_grad


def rel_error(a, b, floor: float = 1e-6) -> float:
    """Worst elementwise |a - b| / max(|a|, |b|); magnitudes below ``floor``
    are compared in absolute terms, since central differences carry roughly
    1e-11 of rounding noise and an exactly-zero gradient has no scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def analytic_grads(fn: Callable[[], Tensor], tensors: Iterable[Tensor]) -> list[np.ndarray]:
    tensors = list(tensors)
    for t in tensors:
        t.grad = None
    backward(fn())
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5,
                 indices: Iterable[tuple] | None = None) -> np.ndarray:
    """d fn / d t by central differences; entries outside ``indices`` stay NaN."""
    out = np.full(t.shape, np.nan)
    idx_iter = np.ndindex(*t.shape) if indices is None else indices
    with no_grad():
        for idx in idx_iter:
            orig = t.data[idx]
            t.data[idx] = orig + h
            fp = fn().item()
            t.data[idx] = orig - h
            fm = fn().item()
            t.data[idx] = orig
            out[idx] = (fp - fm) / (2 * h)
    return out


def directional_derivative(fn: Callable[[], Tensor], t: Tensor, direction: np.ndarray,
                           h: float = 1e-5) -> float:
    orig = t.data.copy()
    with no_grad():
        t.data[...] = orig + h * direction
        fp = fn().item()
        t.data[...] = orig - h * direction
        fm = fn().item()
    t.data[...] = orig
    return (fp - fm) / (2 * h)


def check_gradients(fn: Callable[[], Tensor], tensors: dict[str, Tensor], h: float = 1e-5,
                    max_entries: int | None = None,
                    rng: np.random.Generator | None = None) -> dict[str, float]:
    """Worst relative error per tensor between backward and central differences.

    ``fn`` must be deterministic (reseed any dropout rng inside it).  With
    ``max_entries`` set, a random subset of entries is compared elementwise
    and the full gradient is additionally compared along one random direction.
    """
    rng = rng or np.random.default_rng(0)
    names = list(tensors)
    grads = analytic_grads(fn, [tensors[k] for k in names])
    report = {}
    for name, g in zip(names, grads):
        t = tensors[name]
        if max_entries is None or t.size <= max_entries:
            num = numeric_grad(fn, t, h)
            report[name] = rel_error(g, num)
            continue
        flat = rng.choice(t.size, size=max_entries, replace=False)
        idx = [np.unravel_index(i, t.shape) for i in flat]
        num = numeric_grad(fn, t, h, idx)
        err = max(rel_error(g[i], num[i]) for i in idx)
        d = rng.standard_normal(t.shape)
        err = max(err, rel_error(float(np.sum(g * d)), directional_derivative(fn, t, d, h)))
        report[name] = err
    return report
