"""Model inputs and per-frame interaction graphs for a scene clip."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .scenes import SceneClip

ALPHA = 0.001


@dataclass
class ModelInput:
    """``values`` is (n, t_h, 2) in the model's input space."""

    values: np.ndarray
    mode: str
    last_positions: np.ndarray
    mask: np.ndarray
    norm_scale: float = 1.0

    @property
    def decoder_seed(self) -> np.ndarray:
        """First decoder input: the input-space vector at the last history step."""
        return self.values[:, -1]


@dataclass
class GraphStack:
    """Fixed graphs of one clip.

    ``a1`` and ``g_fixed`` are per history frame: (t_h, n, n) and
    (t_h, 2, n, n) with index 1 of ``g_fixed`` selecting the self (0) or
    spatial (1) graph.
    """

    a0: np.ndarray
    a1: np.ndarray
    g_fixed: np.ndarray
    d_close: float
    alpha: float = ALPHA


def to_velocity(clip: SceneClip) -> ModelInput:
    """First differences of the history, front-padded with a zero step.

    A difference is zero unless both of its frames are observed.
    """
    hist = clip.history
    hmask = clip.mask[:, : clip.t_h]
    vel = np.zeros_like(hist)
    both = hmask[:, 1:] & hmask[:, :-1]
    vel[:, 1:] = np.where(both[..., None], hist[:, 1:] - hist[:, :-1], 0.0)
    return ModelInput(vel, "velocity", hist[:, -1].copy(), hmask.copy())


def to_normalized_position(clip: SceneClip, max_abs: float) -> ModelInput:
    if max_abs <= 0:
        raise ParameterError(f"max_abs must be positive, got {max_abs}")
    hmask = clip.mask[:, : clip.t_h]
    vals = np.where(hmask[..., None], clip.history / max_abs, 0.0)
    return ModelInput(vals, "normalized_position", clip.history[:, -1].copy(), hmask.copy(), max_abs)


def max_abs_coordinate(clips) -> float:
    """Largest absolute observed coordinate over a clip collection."""
    best = 0.0
    for c in clips:
        if c.mask.any():
            best = max(best, float(np.abs(c.positions[c.mask]).max()))
    return best


def make_input(clip: SceneClip, mode: str, max_abs: float | None = None) -> ModelInput:
    if mode == "velocity":
        return to_velocity(clip)
    if mode == "normalized_position":
        return to_normalized_position(clip, max_abs if max_abs is not None else 0.0)
    raise ParameterError(f"unknown input mode {mode!r}")


def normalize_adjacency(a: np.ndarray, alpha: float = ALPHA) -> np.ndarray:
    """Symmetric degree normalization with ``alpha`` added to every degree."""
    deg = a.sum(axis=-1) + alpha
    inv = 1.0 / np.sqrt(deg)
    return a * inv[..., :, None] * inv[..., None, :]


def build_graphs(clip: SceneClip, d_close: float, alpha: float = ALPHA) -> GraphStack:
    """Per-frame spatial adjacency from the distance rule, plus the self graph.

    Agents are linked at frame t when both are observed and strictly closer
    than ``d_close``.  The spatial graph has a zero diagonal; self links live
    in the identity graph.
    """
    if d_close < 0:
        raise ParameterError(f"d_close must be >= 0, got {d_close}")
    n, t_h = clip.n, clip.t_h
    hist = clip.history.transpose(1, 0, 2)
    hmask = clip.mask[:, :t_h].T
    diff = hist[:, :, None, :] - hist[:, None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    both = hmask[:, :, None] & hmask[:, None, :]
    a1 = ((dist < d_close) & both).astype(np.float64)
    idx = np.arange(n)
    a1[:, idx, idx] = 0.0
    a0 = np.eye(n)
    g = np.empty((t_h, 2, n, n))
    g[:, 0] = normalize_adjacency(a0, alpha)
    g[:, 1] = normalize_adjacency(a1, alpha)
    return GraphStack(a0, a1, g, d_close, alpha)
