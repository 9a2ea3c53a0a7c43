"""Encoder-decoder recurrent networks over whole-scene vectors.

At every step the features of all ``n_max`` agent slots are flattened into a
single vector, so one recurrent network predicts every agent at once.  Gate
layouts follow the usual conventions: GRU (reset, update, new) and LSTM
(input, forget, cell, output).
"""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import DimensionError, ParameterError
from .tensor import Tensor

GATES = {"gru": 3, "lstm": 4}


def _gates(cell: str) -> int:
    if cell not in GATES:
        raise ParameterError(f"unknown cell type {cell!r}")
    return GATES[cell]


def init_rnn(prefix: str, cell: str, input_size: int, hidden: int, layers: int,
             rng: np.random.Generator) -> dict[str, Tensor]:
    g = _gates(cell)
    bound = 1.0 / math.sqrt(hidden)
    p = {}
    for layer in range(layers):
        in_size = input_size if layer == 0 else hidden
        pre = f"{prefix}.l{layer}"
        p[f"{pre}.w_ih"] = Tensor(rng.uniform(-bound, bound, (g * hidden, in_size)), True)
        p[f"{pre}.w_hh"] = Tensor(rng.uniform(-bound, bound, (g * hidden, hidden)), True)
        p[f"{pre}.b_ih"] = Tensor(rng.uniform(-bound, bound, g * hidden), True)
        p[f"{pre}.b_hh"] = Tensor(rng.uniform(-bound, bound, g * hidden), True)
    return p


def init_member(prefix: str, cfg, rng: np.random.Generator) -> dict[str, Tensor]:
    """One encoder/decoder/readout parameter set sized for ``cfg.n_max`` slots."""
    hidden = cfg.hidden_size
    out_dim = 2 * cfg.n_max
    p = init_rnn(f"{prefix}.enc", cfg.cell, cfg.n_max * cfg.channels, hidden, cfg.layers, rng)
    p.update(init_rnn(f"{prefix}.dec", cfg.cell, out_dim, hidden, cfg.layers, rng))
    bound = 1.0 / math.sqrt(hidden)
    p[f"{prefix}.out.w"] = Tensor(rng.uniform(-bound, bound, (out_dim, hidden)), True)
    p[f"{prefix}.out.b"] = Tensor(rng.uniform(-bound, bound, out_dim), True)
    for name, t in p.items():
        t.name = name
    return p


def gru_cell(gi: Tensor, h: Tensor, w_hh: Tensor, b_hh: Tensor) -> Tensor:
    """``gi`` is the precomputed input projection (B, 3H)."""
    H = h.shape[-1]
    gh = T.linear(h, w_hh, b_hh)
    r = T.sigmoid(gi[:, :H] + gh[:, :H])
    z = T.sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
    n = T.tanh(gi[:, 2 * H:] + r * gh[:, 2 * H:])
    return n + z * (h - n)


def lstm_cell(gi: Tensor, h: Tensor, c: Tensor, w_hh: Tensor, b_hh: Tensor) -> tuple[Tensor, Tensor]:
    H = h.shape[-1]
    g = gi + T.linear(h, w_hh, b_hh)
    i = T.sigmoid(g[:, :H])
    f = T.sigmoid(g[:, H:2 * H])
    cand = T.tanh(g[:, 2 * H:3 * H])
    o = T.sigmoid(g[:, 3 * H:])
    c = f * c + i * cand
    return o * T.tanh(c), c


class RecurrentState:
    """Per-layer hidden (and, for LSTM, cell) tensors."""

    def __init__(self, h: list[Tensor], c: list[Tensor] | None = None):
        self.h = h
        self.c = c

    @classmethod
    def zeros(cls, cell: str, layers: int, batch: int, hidden: int) -> "RecurrentState":
        h = [Tensor(np.zeros((batch, hidden))) for _ in range(layers)]
        c = [Tensor(np.zeros((batch, hidden))) for _ in range(layers)] if cell == "lstm" else None
        return cls(h, c)

    def stacked(self) -> np.ndarray:
        """(layers, batch, hidden) snapshot of the hidden states."""
        return np.stack([h.data for h in self.h])


def _step(x_proj: Tensor, state: RecurrentState, params, prefix: str, cell: str, layers: int) -> RecurrentState:
    """Advance a stacked RNN one step; ``x_proj`` is layer 0's input projection."""
    hs, cs = [], []
    inp = None
    for layer in range(layers):
        pre = f"{prefix}.l{layer}"
        gi = x_proj if layer == 0 else T.linear(inp, params[f"{pre}.w_ih"], params[f"{pre}.b_ih"])
        if cell == "gru":
            h = gru_cell(gi, state.h[layer], params[f"{pre}.w_hh"], params[f"{pre}.b_hh"])
        else:
            h, c = lstm_cell(gi, state.h[layer], state.c[layer], params[f"{pre}.w_hh"], params[f"{pre}.b_hh"])
            cs.append(c)
        hs.append(h)
        inp = h
    return RecurrentState(hs, cs if cell == "lstm" else None)


def encode(graph_feature: Tensor, params: dict[str, Tensor], prefix: str, cell: str,
           layers: int, hidden: int) -> RecurrentState:
    """Run the encoder over (B, n, t_h, C) features, one time step per cell input."""
    b, n, t_h, c = graph_feature.shape
    w = params[f"{prefix}.enc.l0.w_ih"]
    if w.shape[1] != n * c:
        raise DimensionError(f"encoder expects {w.shape[1]} inputs per step, features give {n}x{c}")
    seq = graph_feature.transpose(0, 2, 1, 3).reshape(b, t_h, n * c)
    proj = T.linear(seq, w, params[f"{prefix}.enc.l0.b_ih"])
    state = RecurrentState.zeros(cell, layers, b, hidden)
    for t in range(t_h):
        state = _step(proj[:, t, :], state, params, f"{prefix}.enc", cell, layers)
    return state


def decode(state: RecurrentState, seed: Tensor, t_f: int, params: dict[str, Tensor], prefix: str,
           cell: str, layers: int, residual: bool = True) -> Tensor:
    """Roll the decoder out for ``t_f`` steps from ``seed`` (B, 2n).

    Each step's output is the readout of the top hidden state, plus the
    step's input when ``residual``; it is fed back as the next input.
    Returns (B, n, t_f, 2).
    """
    if t_f < 1:
        raise ParameterError(f"t_f must be >= 1, got {t_f}")
    w_in, b_in = params[f"{prefix}.dec.l0.w_ih"], params[f"{prefix}.dec.l0.b_ih"]
    w_out, b_out = params[f"{prefix}.out.w"], params[f"{prefix}.out.b"]
    inp = seed
    outs = []
    for _ in range(t_f):
        state = _step(T.linear(inp, w_in, b_in), state, params, f"{prefix}.dec", cell, layers)
        out = T.linear(state.h[-1], w_out, b_out)
        if residual:
            out = out + inp
        outs.append(out)
        inp = out
    b, two_n = seed.shape
    vel = T.stack(outs, axis=1).reshape(b, t_f, two_n // 2, 2)
    return vel.transpose(0, 2, 1, 3)
