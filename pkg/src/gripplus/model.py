"""The full trajectory predictor: graph features feeding an ensemble of
encoder-decoder networks whose velocity outputs are averaged."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import checkpoint
from . import graph_conv
from . import seq2seq
from . import tensor as T
from .errors import CapacityError, DataError, ParameterError
from .preprocess import GraphStack, ModelInput, build_graphs, make_input
from .scenes import AgentType, SceneClip
from .tensor import BatchNormStats, Tensor, no_grad


@dataclass
class ModelConfig:
    input_mode: str = "velocity"
    d_close: float = 25.0
    alpha: float = 0.001
    n_max: int = 120
    t_f: int = 6
    channels: int = 64
    blocks: int = 3
    batch_norm: bool = True
    trainable_graph: bool = True
    train_self_graph: bool = True
    dropout: float = 0.5
    skip: bool = True
    cell: str = "gru"
    layers: int = 2
    r: int = 30
    ensemble: int = 3
    residual: bool = True

    @property
    def hidden_size(self) -> int:
        return self.r * 2 * self.n_max

    def validate(self) -> None:
        if self.input_mode not in ("velocity", "normalized_position"):
            raise ParameterError(f"unknown input_mode {self.input_mode!r}")
        if self.cell not in seq2seq.GATES:
            raise ParameterError(f"unknown cell {self.cell!r}")
        for name in ("n_max", "t_f", "channels", "blocks", "layers", "r", "ensemble"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.d_close < 0 or self.alpha <= 0:
            raise ParameterError("need d_close >= 0 and alpha > 0")
        if not 0 <= self.dropout < 1:
            raise ParameterError("dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown model config keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class Batch:
    """Clips padded to ``n_max`` agent slots and stacked."""

    x: np.ndarray               # (B, n_max, t_h, 2)
    g_fixed: np.ndarray         # (B, t_h, 2, n_max, n_max)
    seed: np.ndarray            # (B, n_max, 2) first decoder input
    last_positions: np.ndarray  # (B, n_max, 2)
    agent_mask: np.ndarray      # (B, n_max) real agent slots
    norm_scale: np.ndarray      # (B,)
    counts: list[int]
    future: np.ndarray | None = None       # (B, n_max, t_f, 2) ground-truth positions
    future_mask: np.ndarray | None = None  # (B, n_max, t_f)
    mode: str = "velocity"

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "Batch":
        idx = np.asarray(idx)
        pick = lambda a: None if a is None else a[idx]
        return Batch(self.x[idx], self.g_fixed[idx], self.seed[idx], self.last_positions[idx],
                     self.agent_mask[idx], self.norm_scale[idx], [self.counts[i] for i in idx],
                     pick(self.future), pick(self.future_mask), self.mode)


def collate(inputs: Sequence[ModelInput], graphs: Sequence[GraphStack], n_max: int,
            futures: Sequence[np.ndarray] | None = None,
            future_masks: Sequence[np.ndarray] | None = None, mode: str = "velocity") -> Batch:
    B = len(inputs)
    if B == 0:
        raise DataError("cannot collate an empty batch")
    t_h = inputs[0].values.shape[1]
    x = np.zeros((B, n_max, t_h, 2))
    g = np.zeros((B, t_h, 2, n_max, n_max))
    seed = np.zeros((B, n_max, 2))
    last = np.zeros((B, n_max, 2))
    amask = np.zeros((B, n_max), dtype=bool)
    scale = np.ones(B)
    counts = []
    fut = fmask = None
    if futures is not None:
        t_f = futures[0].shape[1]
        fut = np.zeros((B, n_max, t_f, 2))
        fmask = np.zeros((B, n_max, t_f), dtype=bool)
    for b, (inp, gs) in enumerate(zip(inputs, graphs)):
        n = inp.values.shape[0]
        if n > n_max:
            raise CapacityError(f"scene has {n} agents but the model holds at most {n_max}")
        if inp.values.shape[1] != t_h:
            raise DataError("all clips in a batch must share t_h")
        x[b, :n] = inp.values
        g[b, :, :, :n, :n] = gs.g_fixed
        seed[b, :n] = inp.decoder_seed
        last[b, :n] = inp.last_positions
        amask[b, :n] = True
        scale[b] = inp.norm_scale
        counts.append(n)
        if fut is not None:
            fut[b, :n] = futures[b]
            fmask[b, :n] = future_masks[b]
    return Batch(x, g, seed, last, amask, scale, counts, fut, fmask, mode)


@dataclass
class PredictionResult:
    velocities: np.ndarray   # (n, t_f, 2)
    positions: np.ndarray    # (n, t_f, 2)
    per_member_velocities: np.ndarray | None = None  # (K, n, t_f, 2)
    scene_id: str = ""
    agent_ids: list[int] = field(default_factory=list)
    agent_types: list[AgentType] = field(default_factory=list)


def reconstruct_positions(vel: Tensor, batch: Batch, mode: str) -> Tensor:
    """Model-space outputs (B, n, t_f, 2) -> world positions, differentiably."""
    shape = vel.shape
    if mode == "velocity":
        last = np.broadcast_to(batch.last_positions[:, :, None, :], shape).copy()
        return T.cumsum(vel, axis=2) + last
    scale = np.broadcast_to(batch.norm_scale[:, None, None, None], shape).copy()
    return vel * scale


class GripModel:
    """Parameters, batch-norm buffers and the forward pass of one predictor."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.seed = seed
        self.max_abs: float | None = None
        rng = np.random.default_rng(seed)
        c = config
        self.params: dict[str, Tensor] = graph_conv.init_params(
            c.channels, c.blocks, c.n_max, rng, trainable_graph=c.trainable_graph,
            train_self_graph=c.train_self_graph, batch_norm=c.batch_norm)
        for k in range(c.ensemble):
            member_rng = np.random.default_rng(rng.integers(2 ** 63))
            self.params.update(seq2seq.init_member(f"m{k}", c, member_rng))
        self.bn = [BatchNormStats(c.channels) for _ in range(c.blocks)]

    # -- state ------------------------------------------------------------
    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {k: p.data for k, p in self.params.items()}
        for k, s in enumerate(self.bn):
            arrays[f"gcn.block{k}.bn.running_mean"] = s.mean
            arrays[f"gcn.block{k}.bn.running_var"] = s.var
        return arrays

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            if k not in arrays:
                raise DataError(f"checkpoint lacks parameter {k}")
            if arrays[k].shape != p.shape:
                raise DataError(f"checkpoint parameter {k} has shape {arrays[k].shape}, expected {p.shape}")
            p.data = np.array(arrays[k], dtype=np.float64)
        for k, s in enumerate(self.bn):
            s.mean = np.array(arrays[f"gcn.block{k}.bn.running_mean"], dtype=np.float64)
            s.var = np.array(arrays[f"gcn.block{k}.bn.running_var"], dtype=np.float64)

    def metadata(self) -> dict:
        return {"model": asdict(self.config), "seed": self.seed, "max_abs": self.max_abs}

    def save(self, path, extra: dict | None = None) -> None:
        meta = self.metadata()
        if extra:
            meta.update(extra)
        checkpoint.save(path, self.state_arrays(), meta)

    @classmethod
    def load(cls, path) -> "GripModel":
        arrays, meta = checkpoint.load(path)
        if meta is None:
            raise DataError(f"{path}: missing configuration sidecar")
        model = cls(ModelConfig.from_dict(meta["model"]), seed=meta.get("seed", 0))
        model.max_abs = meta.get("max_abs")
        model.load_arrays(arrays)
        return model

    def zero_output_projection(self) -> None:
        for k in range(self.config.ensemble):
            self.params[f"m{k}.out.w"].data[...] = 0.0
            self.params[f"m{k}.out.b"].data[...] = 0.0

    # -- data -------------------------------------------------------------
    def prepare(self, clips: Sequence[SceneClip], with_future: bool = False) -> Batch:
        c = self.config
        if c.input_mode == "normalized_position" and not self.max_abs:
            raise ParameterError("normalized_position input needs max_abs fitted from training data")
        inputs = [make_input(clip, c.input_mode, self.max_abs) for clip in clips]
        graphs = [build_graphs(clip, c.d_close, c.alpha) for clip in clips]
        if with_future:
            return collate(inputs, graphs, c.n_max, [cl.future for cl in clips],
                           [cl.future_mask for cl in clips], mode=c.input_mode)
        return collate(inputs, graphs, c.n_max, mode=c.input_mode)

    # -- forward ----------------------------------------------------------
    def graph_feature(self, batch: Batch, training: bool, rng: np.random.Generator | None = None) -> Tensor:
        c = self.config
        return graph_conv.forward(
            Tensor(batch.x), batch.g_fixed, self.params, self.bn, c.blocks, training, rng,
            use_trainable=c.trainable_graph, use_batch_norm=c.batch_norm, dropout_p=c.dropout,
            skip=c.skip)

    def member_outputs(self, batch: Batch, training: bool = False,
                       rng: np.random.Generator | None = None, t_f: int | None = None) -> list[Tensor]:
        """Per-member model-space outputs, each (B, n_max, t_f, 2)."""
        c = self.config
        t_f = t_f or c.t_f
        feat = self.graph_feature(batch, training, rng)
        seed = Tensor(batch.seed.reshape(len(batch), -1))
        outs = []
        for k in range(c.ensemble):
            state = seq2seq.encode(feat, self.params, f"m{k}", c.cell, c.layers, c.hidden_size)
            outs.append(seq2seq.decode(state, seed, t_f, self.params, f"m{k}", c.cell, c.layers, c.residual))
        return outs

    def predict_arrays(self, batch: Batch, t_f: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Eval-mode (velocities, positions, per-member velocities) for a batch."""
        with no_grad():
            outs = self.member_outputs(batch, training=False, t_f=t_f)
        members = np.stack([o.data for o in outs])
        avg = members.mean(axis=0)
        if self.config.input_mode == "velocity":
            pos = batch.last_positions[:, :, None, :] + np.cumsum(avg, axis=2)
            vel = avg
            member_vel = members
        else:
            scale = batch.norm_scale[:, None, None, None]
            pos = avg * scale
            vel = np.diff(np.concatenate([batch.last_positions[:, :, None, :], pos], axis=2), axis=2)
            mpos = members * scale
            member_vel = np.diff(np.concatenate(
                [np.broadcast_to(batch.last_positions[None, :, :, None, :], mpos.shape[:3] + (1, 2)), mpos],
                axis=3), axis=3)
        return vel, pos, member_vel

    def predict(self, clips: Sequence[SceneClip], t_f: int | None = None,
                batch_size: int = 128) -> list[PredictionResult]:
        results = []
        for start in range(0, len(clips), batch_size):
            chunk = clips[start:start + batch_size]
            vel, pos, members = self.predict_arrays(self.prepare(chunk), t_f)
            for b, clip in enumerate(chunk):
                n = clip.n
                results.append(PredictionResult(
                    velocities=vel[b, :n], positions=pos[b, :n], per_member_velocities=members[:, b, :n],
                    scene_id=clip.scene_id, agent_ids=list(clip.agent_ids), agent_types=list(clip.agent_types)))
        return results
