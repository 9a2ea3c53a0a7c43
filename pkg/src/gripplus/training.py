"""Loss, mini-batch training, rotation augmentation, evaluation and the
constant-velocity baseline."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import DataError, DimensionError, DivergenceError, ParameterError
from .metrics import MetricsReport, metrics
from .model import Batch, GripModel, PredictionResult, reconstruct_positions
from .optim import Adam
from .preprocess import max_abs_coordinate, to_velocity
from .scenes import SceneClip
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class LossReport:
    total: float
    per_step: np.ndarray
    masked_agent_count: int
    tensor: Tensor | None = None


def loss(pred_positions, gt_positions: np.ndarray, mask: np.ndarray) -> LossReport:
    """Mean over future steps of the mean Euclidean error over observed agents.

    Works on (…, n, t_f, 2) arrays or tensors.  Steps with no observed agent
    contribute nothing and are left out of the mean.  For tensor input the
    differentiable total is in ``.tensor``.
    """
    is_tensor = isinstance(pred_positions, Tensor)
    pdata = pred_positions.data if is_tensor else np.asarray(pred_positions, dtype=np.float64)
    gt = np.asarray(gt_positions, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pdata.shape != gt.shape or mask.shape != pdata.shape[:-1]:
        raise DimensionError(f"loss: pred {pdata.shape}, gt {gt.shape}, mask {mask.shape}")
    t_f = pdata.shape[-2]
    flat_mask = mask.reshape(-1, t_f)
    counts = flat_mask.sum(axis=0)
    valid = counts > 0
    n_valid = int(valid.sum())
    weights = np.where(valid, 1.0 / np.maximum(counts, 1), 0.0)
    if n_valid:
        weights = weights / n_valid
    w = np.broadcast_to(weights, flat_mask.shape) * flat_mask
    w = w.reshape(mask.shape)

    dist = np.sqrt(((pdata - gt) ** 2).sum(-1))
    per_step = np.where(valid, (dist * mask).reshape(-1, t_f).sum(axis=0) / np.maximum(counts, 1), 0.0)
    total = float(per_step[valid].mean()) if n_valid else 0.0
    agents = int(mask.reshape(-1, t_f).any(axis=1).sum())
    tensor = None
    if is_tensor:
        tensor = T.tsum(T.mul(T.norm(pred_positions - gt, axis=-1), w))
    return LossReport(total, per_step, agents, tensor)


def augment_rotate(batch: Batch, rng: np.random.Generator, angles: np.ndarray | None = None) -> Batch:
    """Rotate every clip's velocities and future displacements by its own angle."""
    if batch.mode != "velocity":
        raise ParameterError("rotation augmentation needs velocity-mode input")
    B = len(batch)
    theta = rng.uniform(0.0, 2 * math.pi, size=B) if angles is None else np.asarray(angles, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)  # (B, 2, 2)

    def apply(v):
        return np.einsum("bij,b...j->b...i", rot, v)

    fut = None
    if batch.future is not None:
        disp = batch.future - batch.last_positions[:, :, None, :]
        fut = np.where(batch.future_mask[..., None], batch.last_positions[:, :, None, :] + apply(disp), 0.0)
    return Batch(apply(batch.x), batch.g_fixed, apply(batch.seed), batch.last_positions.copy(),
                 batch.agent_mask, batch.norm_scale, list(batch.counts), fut,
                 None if batch.future_mask is None else batch.future_mask.copy(), batch.mode)


def cv_baseline(clip: SceneClip, k: int = 1) -> PredictionResult:
    """Extrapolate every agent with its mean velocity over the last ``k``
    observed steps (``k == 1``: the last step only)."""
    if clip.t_h < 2:
        raise ParameterError("constant-velocity extrapolation needs t_h >= 2")
    if k < 1:
        raise ParameterError("k must be >= 1")
    inp = to_velocity(clip)
    if k == 1:
        v = inp.values[:, -1]
    else:
        hm = clip.mask[:, : clip.t_h]
        ok = (hm[:, 1:] & hm[:, :-1])[:, -k:]
        recent = inp.values[:, 1:][:, -k:]
        cnt = ok.sum(axis=1, keepdims=True)
        v = np.where(cnt > 0, (recent * ok[..., None]).sum(axis=1) / np.maximum(cnt, 1), 0.0)
    t_f = clip.t_f
    vel = np.repeat(v[:, None, :], t_f, axis=1)
    pos = inp.last_positions[:, None, :] + np.cumsum(vel, axis=1)
    return PredictionResult(vel, pos, None, clip.scene_id, list(clip.agent_ids), list(clip.agent_types))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    rotate: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.batch_size < 1 or self.epochs < 0 or self.lr < 0:
            raise ParameterError("need batch_size >= 1, epochs >= 0, lr >= 0")


@dataclass
class TrainHistory:
    rows: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_loss: float | None = None
    steps: int = 0


def batch_loss(model: GripModel, batch: Batch, training: bool, rng) -> Tensor:
    """Mean over ensemble members of each member's own position loss."""
    outs = model.member_outputs(batch, training=training, rng=rng)
    total = None
    for out in outs:
        rep = loss(reconstruct_positions(out, batch, model.config.input_mode), batch.future, batch.future_mask)
        total = rep.tensor if total is None else total + rep.tensor
    return total * (1.0 / len(outs))


def evaluate(model: GripModel, clips: Sequence[SceneClip], batch_size: int = 128,
             warn: bool = False) -> tuple[MetricsReport, LossReport, list[PredictionResult]]:
    preds = model.predict(clips, t_f=clips[0].t_f, batch_size=batch_size)
    rep = metrics([p.positions for p in preds], [c.future for c in clips],
                  [c.agent_types for c in clips], [c.future_mask for c in clips],
                  clips[0].frame_rate, warn=warn)
    lr = loss(np.concatenate([p.positions for p in preds]), np.concatenate([c.future for c in clips]),
              np.concatenate([c.future_mask for c in clips]))
    return rep, lr, preds


def train(model: GripModel, clips: Sequence[SceneClip], config: TrainConfig,
          rng: np.random.Generator | None = None, val_clips: Sequence[SceneClip] | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainHistory:
    """Mini-batch Adam training; restores the best-validation parameters at the end."""
    config.validate()
    if not clips:
        raise DataError("training set is empty")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if model.config.input_mode == "normalized_position" and not model.max_abs:
        model.max_abs = max_abs_coordinate(clips)
    t_f = clips[0].t_f
    if any(c.t_f != t_f for c in clips) or model.config.t_f != t_f:
        raise DataError(f"clips and model must agree on t_f (model {model.config.t_f})")
    full = model.prepare(clips, with_future=True)
    opt = Adam(model.params, lr=config.lr)
    hist = TrainHistory()
    best_state = None
    start = time.perf_counter()
    N = len(clips)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(N)
        losses, sizes = [], []
        for bi, s in enumerate(range(0, N, config.batch_size)):
            idx = order[s:s + config.batch_size]
            batch = full.subset(idx)
            if config.rotate:
                batch = augment_rotate(batch, rng)
            total = batch_loss(model, batch, True, rng)
            value = total.item()
            if not math.isfinite(value):
                ids = [clips[i].scene_id for i in idx[:5]]
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {bi} (clips {ids}...)")
            opt.zero_grad()
            total.backward()
            opt.step()
            hist.steps += 1
            losses.append(value)
            sizes.append(len(idx))
        row = {"epoch": epoch, "train_loss": float(np.average(losses, weights=sizes)),
               "val_loss": float("nan"), "val_WSADE": float("nan"), "val_ADE": float("nan")}
        if val_clips:
            rep, lrep, _ = evaluate(model, val_clips)
            row.update(val_loss=lrep.total, val_WSADE=rep.wsade, val_ADE=rep.ade["all"])
            if hist.best_val_loss is None or lrep.total < hist.best_val_loss:
                hist.best_val_loss, hist.best_epoch = lrep.total, epoch
                best_state = {k: v.copy() for k, v in model.state_arrays().items()}
        row["wall_seconds"] = time.perf_counter() - start
        hist.rows.append(row)
        log.debug("epoch %d train %.4f val %.4f", epoch, row["train_loss"], row["val_loss"])
        if on_epoch is not None:
            on_epoch(row)
    if best_state is not None:
        model.load_arrays(best_state)
    return hist
