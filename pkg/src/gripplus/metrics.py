"""Displacement-error metrics: RMSE per horizon, per-class ADE/FDE and their
class-weighted sums."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError
from .scenes import AgentType

CLASS_WEIGHTS = {"vehicle": 0.20, "pedestrian": 0.58, "bicycle": 0.22}

CLASS_OF = {
    AgentType.SMALL_VEHICLE: "vehicle",
    AgentType.BIG_VEHICLE: "vehicle",
    AgentType.PEDESTRIAN: "pedestrian",
    AgentType.MOTORCYCLIST_BICYCLIST: "bicycle",
    AgentType.OTHER: None,
}


@dataclass
class MetricsReport:
    rmse_per_horizon: dict[float, float]
    rmse_per_step: list[float]
    ade: dict[str, float | None]
    fde: dict[str, float | None]
    wsade: float
    wsfde: float
    weights: dict[str, float] = field(default_factory=lambda: dict(CLASS_WEIGHTS))
    missing_classes: list[str] = field(default_factory=list)
    agent_count: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rmse_per_horizon"] = {f"{k:g}": v for k, v in self.rmse_per_horizon.items()}
        return d


def weighted_sum(per_class: dict[str, float | None], weights: dict[str, float] = CLASS_WEIGHTS) -> float:
    """Sum of weight * value over the classes that are present (not None)."""
    return float(sum(w * per_class[c] for c, w in weights.items() if per_class.get(c) is not None))


def _flatten(pred, gt, agent_types, mask):
    if isinstance(pred, np.ndarray) and pred.ndim == 3:
        pred, gt, agent_types, mask = [pred], [gt], [agent_types], [mask]
    pred = np.concatenate([np.asarray(p, dtype=np.float64) for p in pred]) if len(pred) else np.zeros((0, 1, 2))
    gt = np.concatenate([np.asarray(g, dtype=np.float64) for g in gt]) if len(gt) else np.zeros((0, 1, 2))
    types = [AgentType.parse(t) for ts in agent_types for t in ts]
    mask = np.concatenate([np.asarray(m, dtype=bool) for m in mask]) if len(mask) else np.zeros((0, 1), bool)
    return pred, gt, types, mask


def horizon_steps(t_f: int, frame_rate: float) -> dict[float, int]:
    """Step index for every whole second of the horizon; the final step when
    the horizon is shorter than one second."""
    out = {}
    s = 1
    while True:
        k = int(round(s * frame_rate)) - 1
        if k >= t_f:
            break
        out[float(s)] = k
        s += 1
    if not out and t_f > 0:
        out[t_f / frame_rate] = t_f - 1
    return out


def metrics(pred, gt, agent_types, mask, frame_rate: float, warn: bool = True) -> MetricsReport:
    """``pred``/``gt`` are (n, t_f, 2) arrays, or sequences of them with
    matching sequences of agent types and (n, t_f) masks."""
    pred, gt, types, mask = _flatten(pred, gt, agent_types, mask)
    if pred.shape != gt.shape or mask.shape != pred.shape[:2] or len(types) != pred.shape[0]:
        raise DimensionError(f"metrics: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}, {len(types)} types")
    t_f = pred.shape[1]
    dist = np.sqrt(((pred - gt) ** 2).sum(-1))
    sq = dist ** 2

    rmse_step = []
    for t in range(t_f):
        m = mask[:, t]
        rmse_step.append(float(np.sqrt(sq[m, t].mean())) if m.any() else float("nan"))
    rmse_h = {s: rmse_step[k] for s, k in horizon_steps(t_f, frame_rate).items()}

    cls = np.array([CLASS_OF[t] or "other" for t in types], dtype=object)
    ade: dict[str, float | None] = {}
    fde: dict[str, float | None] = {}
    groups = {c: cls == c for c in CLASS_WEIGHTS}
    groups["all"] = np.ones(len(types), dtype=bool)
    for name, sel in groups.items():
        m = mask & sel[:, None]
        ade[name] = float(dist[m].mean()) if m.any() else None
        mf = m[:, -1] if t_f else np.zeros(0, bool)
        fde[name] = float(dist[mf, -1].mean()) if mf.any() else None

    missing = [c for c in CLASS_WEIGHTS if ade[c] is None]
    if missing and warn:
        warnings.warn(f"classes absent from evaluation, excluded from weighted sums: {missing}", stacklevel=2)
    return MetricsReport(
        rmse_per_horizon=rmse_h, rmse_per_step=rmse_step, ade=ade, fde=fde,
        wsade=weighted_sum(ade), wsfde=weighted_sum(fde), missing_classes=missing,
        agent_count=len(types),
    )
