"""Ablation harness: one-setting-at-a-time model variants, the D_close sweep
and the per-location error breakdown, all emitted as flat CSV rows."""
from __future__ import annotations

import csv
import logging
import time
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GripError, ParameterError
from .metrics import metrics
from .model import GripModel, ModelConfig, PredictionResult
from .scenes import SceneClip
from .training import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

# Each row changes one setting relative to the row before it.
ABLATION_ROWS: dict[str, dict] = {
    "B1": dict(batch_norm=False, input_mode="normalized_position", cell="lstm", blocks=10, residual=False,
               trainable_graph=False, ensemble=1, r=2, rotate=False),
    "B2": dict(batch_norm=True),
    "B3": dict(input_mode="velocity"),
    "B4": dict(cell="gru"),
    "B5": dict(blocks=3),
    "B6": dict(residual=True),
    "B7": dict(trainable_graph=True),
    "B8": dict(ensemble=3),
    "B9": dict(r=4),
    "B10": dict(r=10),
    "B11": dict(r=40),
    "B12": dict(r=30),
    "B13": dict(rotate=True),
}

ABLATION_COLUMNS = ["BatchNorm", "Input", "RNN Type", "GCN#", "RNN In+Out", "GCN Graph",
                  "RNN#", "RNN Size (r)", "Data Aug."]


@dataclass
class AblationSpec:
    name: str
    model: ModelConfig
    train: TrainConfig
    seed: int = 0


def row_settings(name: str) -> dict:
    """Cumulative settings of a ablation row (B1 is the starting point)."""
    keys = list(ABLATION_ROWS)
    if name not in ABLATION_ROWS:
        raise ParameterError(f"unknown ablation row {name!r}; known: {keys}")
    out: dict = {}
    for key in keys[: keys.index(name) + 1]:
        out.update(ABLATION_ROWS[key])
    return out


def make_spec(name: str, base_model: ModelConfig, base_train: TrainConfig, settings: dict,
              seed: int = 0) -> AblationSpec:
    settings = dict(settings)
    rotate = settings.pop("rotate", base_train.rotate)
    model = replace(base_model, **settings)
    model.validate()
    return AblationSpec(name, model, replace(base_train, rotate=rotate, seed=seed), seed)


def row_grid(base_model: ModelConfig, base_train: TrainConfig, rows: Iterable[str] | None = None,
                seeds: Sequence[int] = (0,), r_scale: float = 1.0) -> list[AblationSpec]:
    """Specs for the named rows on top of ``base_model`` (which fixes the
    desk-scale sizes such as channels and n_max).  ``r_scale`` shrinks the
    recurrent size multiplier for small machines."""
    grid = []
    for name in rows if rows is not None else ABLATION_ROWS:
        settings = row_settings(name)
        settings["r"] = max(1, int(round(settings["r"] * r_scale)))
        for s in seeds:
            grid.append(make_spec(name, base_model, base_train, settings, s))
    return grid


def dclose_grid(base_model: ModelConfig, base_train: TrainConfig, values: Sequence[float] = (0.0, 25.0, 50.0),
                seeds: Sequence[int] = (0,)) -> list[AblationSpec]:
    return [make_spec(f"dclose={v:g}", base_model, base_train, {"d_close": float(v)}, s)
            for v in values for s in seeds]


def describe(spec: AblationSpec) -> dict:
    m = spec.model
    return {
        "BatchNorm": "Y" if m.batch_norm else "N",
        "Input": "Velocity" if m.input_mode == "velocity" else "Norm",
        "RNN Type": m.cell.upper(),
        "GCN#": m.blocks,
        "RNN In+Out": "Y" if m.residual else "N",
        "GCN Graph": "Fixed + Train" if m.trainable_graph else "Fixed Only",
        "RNN#": m.ensemble,
        "RNN Size (r)": m.r,
        "Data Aug.": "Y" if spec.train.rotate else "N",
    }


@dataclass
class AblationResult:
    rows: list[dict] = field(default_factory=list)
    location_rows: list[dict] = field(default_factory=list)


def run_one(spec: AblationSpec, train_clips: Sequence[SceneClip], val_clips: Sequence[SceneClip],
            location_edges: Sequence[float] | None = None) -> tuple[dict, list[dict]]:
    row = {"name": spec.name, "seed": spec.seed, **describe(spec), "d_close": spec.model.d_close}
    loc: list[dict] = []
    t0 = time.perf_counter()
    try:
        model = GripModel(spec.model, seed=spec.seed)
        hist = train(model, train_clips, spec.train, np.random.default_rng(spec.train.seed), val_clips)
        rep, lrep, preds = evaluate(model, val_clips)
        row.update(status="ok", val_loss=lrep.total, ADE=rep.ade["all"], FDE=rep.fde["all"],
                   WSADE=rep.wsade, WSFDE=rep.wsfde, best_epoch=hist.best_epoch, error="")
        for h, v in rep.rmse_per_horizon.items():
            row[f"RMSE@{h:g}s"] = v
        loc = [{"name": spec.name, "seed": spec.seed, **r}
               for r in per_location_error(val_clips, preds, location_edges)]
    except (GripError, FloatingPointError, MemoryError) as exc:
        log.warning("ablation run %s (seed %d) failed: %s", spec.name, spec.seed, exc)
        log.debug("%s", traceback.format_exc())
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    row["wall_seconds"] = time.perf_counter() - t0
    return row, loc


def ablation_run(grid: Sequence[AblationSpec], train_clips: Sequence[SceneClip],
                 val_clips: Sequence[SceneClip],
                 location_edges: Sequence[float] | None = None) -> AblationResult:
    """Train and evaluate every spec in turn; a failing run is recorded and
    the rest of the grid still runs."""
    out = AblationResult()
    for spec in grid:
        row, loc = run_one(spec, train_clips, val_clips, location_edges)
        out.rows.append(row)
        out.location_rows.extend(loc)
    return out


def summarize(rows: Sequence[dict], key: str = "name", value: str = "ADE") -> dict[str, float]:
    """Mean of ``value`` over successful rows sharing ``key`` (e.g. over seeds)."""
    acc: dict[str, list[float]] = {}
    for r in rows:
        if r.get("status") == "ok" and r.get(value) is not None:
            acc.setdefault(str(r[key]), []).append(float(r[value]))
    return {k: float(np.mean(v)) for k, v in acc.items()}


def sweep_table(rows: Sequence[dict], key: str = "d_close") -> list[dict]:
    """Per-``key`` means over seeds, for plotting the sweep."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    out = []
    for k in sorted(groups):
        ok = [r for r in groups[k] if r.get("status") == "ok"]
        out.append({key: k, "runs": len(groups[k]), "ok": len(ok),
                    **{f"{m}_mean": float(np.mean([r[m] for r in ok])) if ok else float("nan")
                       for m in ("ADE", "FDE", "WSADE")}})
    return out


def travel_direction(clip: SceneClip) -> np.ndarray:
    """Unit mean displacement of the clip's agents over the history; +x if they are static."""
    hist = clip.history
    hm = clip.mask[:, : clip.t_h]
    d = np.zeros(2)
    for i in range(clip.n):
        idx = np.flatnonzero(hm[i])
        if len(idx) >= 2:
            d += hist[i, idx[-1]] - hist[i, idx[0]]
    norm = np.linalg.norm(d)
    return d / norm if norm > 1e-12 else np.array([1.0, 0.0])


def per_location_error(clips: Sequence[SceneClip], predictions: Sequence[PredictionResult],
                       edges: Sequence[float] | None = None) -> list[dict]:
    """Mean displacement error binned by each agent's longitudinal offset from
    the scene centroid at the last history step, measured along the scene's
    direction of travel."""
    edges = np.arange(-90.0, 90.0 + 1e-9, 15.0) if edges is None else np.asarray(edges, dtype=np.float64)
    nb = len(edges) - 1
    sums = np.zeros(nb)
    fsums = np.zeros(nb)
    counts = np.zeros(nb, dtype=int)
    fcounts = np.zeros(nb, dtype=int)
    for clip, pred in zip(clips, predictions):
        last = clip.history[:, -1]
        centre = last.mean(axis=0)
        u = travel_direction(clip)
        coord = (last - centre) @ u
        dist = np.sqrt(((pred.positions - clip.future) ** 2).sum(-1))
        fm = clip.future_mask
        bins = np.digitize(coord, edges) - 1
        for i, b in enumerate(bins):
            if 0 <= b < nb and fm[i].any():
                sums[b] += dist[i][fm[i]].sum()
                counts[b] += int(fm[i].sum())
                if fm[i, -1]:
                    fsums[b] += dist[i, -1]
                    fcounts[b] += 1
    rows = []
    for b in range(nb):
        rows.append({"lo": float(edges[b]), "hi": float(edges[b + 1]), "points": int(counts[b]),
                     "ADE": sums[b] / counts[b] if counts[b] else float("nan"),
                     "FDE": fsums[b] / fcounts[b] if fcounts[b] else float("nan")})
    return rows


def baseline_row(clips: Sequence[SceneClip], predictions: Sequence[PredictionResult], name: str) -> dict:
    rep = metrics([p.positions for p in predictions], [c.future for c in clips],
                  [c.agent_types for c in clips], [c.future_mask for c in clips],
                  clips[0].frame_rate, warn=False)
    return {"name": name, "status": "ok", "ADE": rep.ade["all"], "FDE": rep.fde["all"],
            "WSADE": rep.wsade, "WSFDE": rep.wsfde}


def write_csv(rows: Sequence[dict], path, columns: Sequence[str] | None = None) -> Path:
    path = Path(path)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    return path
