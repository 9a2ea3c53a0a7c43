"""Graph convolutional feature extractor.

Features are (batch, n, t_h, C).  Each block runs a graph operation over the
per-frame fixed graphs (optionally plus trainable graphs), a temporal
convolution with a width-3 kernel, batch normalization, ReLU and dropout,
then adds the block input back in.
"""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import BatchNormStats, Tensor


def init_params(channels: int, blocks: int, n_max: int, rng: np.random.Generator,
                in_channels: int = 2, trainable_graph: bool = True,
                train_self_graph: bool = True, batch_norm: bool = True) -> dict[str, Tensor]:
    """Uniform(+-1/sqrt(fan_in)) weights; trainable graphs start at zero."""
    p: dict[str, Tensor] = {}
    bound = 1.0 / math.sqrt(in_channels)
    p["gcn.lift.w"] = Tensor(rng.uniform(-bound, bound, (channels, in_channels)), True)
    p["gcn.lift.b"] = Tensor(rng.uniform(-bound, bound, channels), True)
    bound = 1.0 / math.sqrt(3 * channels)
    for k in range(blocks):
        pre = f"gcn.block{k}"
        if trainable_graph:
            if train_self_graph:
                p[f"{pre}.g_train0"] = Tensor(np.zeros((n_max, n_max)), True)
            p[f"{pre}.g_train1"] = Tensor(np.zeros((n_max, n_max)), True)
        p[f"{pre}.tconv.w"] = Tensor(rng.uniform(-bound, bound, (channels, channels, 3)), True)
        p[f"{pre}.tconv.b"] = Tensor(rng.uniform(-bound, bound, channels), True)
        if batch_norm:
            p[f"{pre}.bn.scale"] = Tensor(np.ones(channels), True)
            p[f"{pre}.bn.shift"] = Tensor(np.zeros(channels), True)
    for name, t in p.items():
        t.name = name
    return p


def channel_lift(x: Tensor, params: dict[str, Tensor]) -> Tensor:
    """(…, 2) -> (…, C) by a 1x1 convolution."""
    return T.conv_channel_mix(x, params["gcn.lift.w"], params["gcn.lift.b"])


def graph_operation(f_conv: Tensor, g_fixed: np.ndarray, g_train: list[Tensor] | None = None,
                    use_trainable: bool = True) -> Tensor:
    """Sum over the self and spatial graphs of (fixed + trainable) @ features, per frame.

    ``f_conv`` is (b, n, t, C) or (n, t, C); ``g_fixed`` is (b, t, 2, n, n)
    or (t, 2, n, n) with axis -3 indexing the two graphs.
    """
    unbatched = f_conv.ndim == 3
    if unbatched:
        f_conv = f_conv.reshape((1,) + f_conv.shape)
        g_fixed = g_fixed[None]
    fixed = g_fixed.sum(axis=-3)
    gt = None
    if use_trainable and g_train:
        gt = g_train[0]
        for extra in g_train[1:]:
            gt = gt + extra
    out = T.graph_mix(f_conv, fixed, gt)
    if unbatched:
        out = out.reshape(out.shape[1:])
    return out


def block_graphs(params: dict[str, Tensor], k: int) -> list[Tensor]:
    return [params[name] for name in (f"gcn.block{k}.g_train0", f"gcn.block{k}.g_train1") if name in params]


def forward(x: Tensor, g_fixed: np.ndarray, params: dict[str, Tensor], bn: list[BatchNormStats],
            blocks: int, training: bool, rng: np.random.Generator | None = None,
            use_trainable: bool = True, use_batch_norm: bool = True, dropout_p: float = 0.5,
            skip: bool = True) -> Tensor:
    """(b, n, t_h, 2) input -> (b, n, t_h, C) graph feature."""
    f = channel_lift(x, params)
    for k in range(blocks):
        pre = f"gcn.block{k}"
        h = graph_operation(f, g_fixed, block_graphs(params, k), use_trainable)
        h = T.conv_temporal(h, params[f"{pre}.tconv.w"], params[f"{pre}.tconv.b"], stride=1, padding=1)
        if use_batch_norm:
            h = T.batch_norm(h, params[f"{pre}.bn.scale"], params[f"{pre}.bn.shift"], bn[k], training)
        h = T.relu(h)
        h = T.dropout(h, dropout_p, training, rng)
        f = h + f if skip else h
    return f
