"""Command-line front end: ``gripplus {synth,train,predict,eval,ablate}``.

Every run is driven by one TOML document (defaults < ``--config`` file <
``--set`` overrides < dedicated flags) whose effective form is echoed to
``config.toml`` in the output directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import ablation
from .errors import DataError, DivergenceError, GripError, ParameterError, UsageError
from .metrics import metrics
from .model import GripModel, ModelConfig, PredictionResult
from .scenes import (APOLLO_CODES, AgentType, ParseIssue, SceneClip, SynthSpec, downsample,
                     parse_apolloscape, parse_csv, read_clips, segment_clips, split_train_val,
                     synth_scenes, write_clips)
from .training import TrainConfig, train

log = logging.getLogger("gripplus")

OUT_ENV = "GRIPPLUS_OUT"
DEFAULT_OUT = "gripplus-out"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class DataSection:
    format: str = "synth"           # synth | apolloscape | csv | clips
    path: str = ""
    val_path: str = ""
    t_history: int = 6
    t_future: int = 6
    frame_rate: float = 2.0
    downsample: int = 1
    window_feet: float = 90.0
    stride: int = 1
    val_fraction: float = 0.2
    strict: bool = False


@dataclass
class SynthSection:
    scenes: int = 50
    agents_min: int = 10
    agents_max: int = 10
    families: list = field(default_factory=lambda: ["cv"])
    noise_sigma: float = 0.0
    speed_range: list = field(default_factory=lambda: [3.0, 10.0])
    accel_range: list = field(default_factory=lambda: [-1.0, 1.0])
    radius_range: list = field(default_factory=lambda: [15.0, 40.0])
    lane_amplitude_range: list = field(default_factory=lambda: [1.0, 2.5])
    lane_period_range: list = field(default_factory=lambda: [3.0, 6.0])
    follow_delay: int = 3
    follow_gain: float = 1.0
    convoy_max: int = 2
    heading_spread: float = 3.141592653589793
    spawn_half_width: float = 50.0
    agent_types: list = field(default_factory=lambda: ["small_vehicle"])


def _desk_model() -> ModelConfig:
    # full-scale sizes (n_max 120, r 30) need tens of GB; these run on a laptop
    return ModelConfig(n_max=10, channels=16, r=4, ensemble=3)


@dataclass
class RunConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    synth: SynthSection = field(default_factory=SynthSection)
    model: ModelConfig = field(default_factory=_desk_model)
    training: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20))

    SECTIONS = ("data", "synth", "model", "training")

    def to_dict(self) -> dict:
        return {"seed": self.seed, **{s: asdict(getattr(self, s)) for s in self.SECTIONS}}

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        for key, value in d.items():
            if key == "seed":
                cfg.seed = _coerce("seed", value, 0)
            elif key in cls.SECTIONS:
                if not isinstance(value, dict):
                    raise ParameterError(f"{key}: expected a table")
                for k, v in value.items():
                    set_key(cfg, f"{key}.{k}", v)
            else:
                raise ParameterError(f"{key}: unknown config key")
        return cfg

    def synth_spec(self, num_scenes: int | None = None) -> SynthSpec:
        s, d = self.synth, self.data
        return SynthSpec(
            num_scenes=s.scenes if num_scenes is None else num_scenes,
            agents_min=s.agents_min, agents_max=s.agents_max, families=tuple(s.families),
            t_h=d.t_history, t_f=d.t_future, frame_rate=d.frame_rate, noise_sigma=s.noise_sigma,
            speed_range=tuple(s.speed_range), accel_range=tuple(s.accel_range),
            radius_range=tuple(s.radius_range), lane_amplitude_range=tuple(s.lane_amplitude_range),
            lane_period_range=tuple(s.lane_period_range), follow_delay=s.follow_delay,
            follow_gain=s.follow_gain, convoy_max=s.convoy_max, heading_spread=s.heading_spread,
            spawn_half_width=s.spawn_half_width,
            window_half_width=d.window_feet, agent_types=tuple(s.agent_types))

    def validate(self) -> None:
        d = self.data
        if d.format not in ("synth", "apolloscape", "csv", "clips"):
            raise ParameterError(f"data.format: unknown format {d.format!r}")
        if d.t_history < 2 or d.t_future < 1 or d.downsample < 1 or d.stride < 1:
            raise ParameterError("data: need t_history >= 2, t_future >= 1, downsample >= 1, stride >= 1")
        if not 0 < d.val_fraction < 1:
            raise ParameterError("data.val_fraction must lie in (0, 1)")
        self.model.t_f = d.t_future
        self.model.validate()
        self.training.validate()
        self.synth_spec().validate()


def _coerce(path: str, value: Any, default: Any) -> Any:
    """Check ``value`` against the type of the field default."""
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    elif isinstance(default, (list, tuple)):
        if isinstance(value, (list, tuple)):
            return list(value)
        if isinstance(value, str):
            return [value]
    else:
        return value
    raise ParameterError(f"{path}: expected {type(default).__name__}, got {value!r}")


def set_key(cfg: RunConfig, path: str, value: Any) -> None:
    parts = path.split(".")
    if parts == ["seed"]:
        cfg.seed = _coerce(path, value, 0)
        return
    if len(parts) != 2 or parts[0] not in RunConfig.SECTIONS:
        raise ParameterError(f"{path}: unknown config key (use section.name, sections {RunConfig.SECTIONS})")
    section = getattr(cfg, parts[0])
    names = {f.name for f in fields(section)}
    if parts[1] not in names:
        raise ParameterError(f"{path}: unknown config key; {parts[0]} has {sorted(names)}")
    setattr(section, parts[1], _coerce(path, value, getattr(section, parts[1])))


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ParameterError(f"--set expects KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | None, overrides: Sequence[str] = ()) -> RunConfig:
    base: dict = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file {path} not found")
        try:
            base = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ParameterError(f"{path}: {exc}") from None
    cfg = RunConfig.from_dict(base)
    for text in overrides:
        set_key(cfg, *parse_override(text))
    return cfg


# ---------------------------------------------------------------------------
# data helpers
# ---------------------------------------------------------------------------

def _records(path: str, fmt: str, strict: bool):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"data file {path} not found")
    issues: list[ParseIssue] = []
    with p.open() as fh:
        recs = parse_apolloscape(fh, strict, issues) if fmt == "apolloscape" else parse_csv(fh, strict, issues)
    for issue in issues[:10]:
        log.warning("%s:%d: %s", path, issue.line, issue.message)
    if len(issues) > 10:
        log.warning("%s: %d more malformed lines skipped", path, len(issues) - 10)
    return recs


def load_clips(cfg: RunConfig, path: str, fmt: str | None = None) -> list[SceneClip]:
    d = cfg.data
    fmt = fmt or d.format
    if fmt == "clips":
        if not Path(path).is_file():
            raise DataError(f"clip file {path} not found")
        return read_clips(path)
    if fmt not in ("apolloscape", "csv"):
        raise ParameterError(f"data.format: cannot read files of format {fmt!r}")
    recs = downsample(_records(path, fmt, d.strict), d.downsample)
    return segment_clips(recs, d.t_history, d.t_future, d.stride, d.window_feet,
                         frame_rate=d.frame_rate / d.downsample, sequence_id=Path(path).stem)


def dataset(cfg: RunConfig) -> tuple[list[SceneClip], list[SceneClip]]:
    """Training and validation clips as configured."""
    d = cfg.data
    rng = np.random.default_rng(cfg.seed)
    if d.format == "synth" and not d.path:
        clips = synth_scenes(cfg.synth_spec(), rng)
    else:
        if not d.path:
            raise ParameterError("data.path is required unless data.format is synth")
        clips = load_clips(cfg, d.path, "clips" if d.format == "synth" else None)
    if d.val_path:
        return clips, load_clips(cfg, d.val_path)
    if len({c.sequence_id for c in clips}) < 2:
        return clips, []
    return split_train_val(clips, d.val_fraction, rng)


def out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def echo_config(cfg: RunConfig, out: Path) -> Path:
    p = out / "config.toml"
    p.write_text(cfg.to_toml())
    return p


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg: RunConfig) -> int:
    if args.scenes is not None:
        cfg.synth.scenes = args.scenes
    if args.agents is not None:
        cfg.synth.agents_min = cfg.synth.agents_max = args.agents
    if args.family:
        cfg.synth.families = list(args.family)
    if args.radius is not None:
        cfg.synth.radius_range = [args.radius, args.radius]
    if args.noise is not None:
        cfg.synth.noise_sigma = args.noise
    cfg.validate()
    out = out_dir(args)
    clips = synth_scenes(cfg.synth_spec(), np.random.default_rng(cfg.seed))
    path = out / (args.output or "clips.jsonl")
    write_clips(path, clips)
    echo_config(cfg, out)
    log.info("wrote %d clips to %s", len(clips), path)
    return EXIT_OK


def write_train_log(path: Path, rows: Sequence[dict]) -> None:
    cols = ["epoch", "train_loss", "val_loss", "val_WSADE", "val_ADE", "wall_seconds"]
    _write_rows(path, cols, ([r[c] for c in cols] for r in rows))


def cmd_train(args, cfg: RunConfig) -> int:
    cfg.validate()
    out = out_dir(args)
    echo_config(cfg, out)
    train_clips, val_clips = dataset(cfg)
    if not train_clips:
        raise DataError("no training clips (data too short for t_history + t_future?)")
    model = GripModel(cfg.model, seed=cfg.seed)
    hist = train(model, train_clips, cfg.training, np.random.default_rng(cfg.training.seed),
                 val_clips or None,
                 on_epoch=lambda r: log.info("epoch %d train %.4f val %.4f", r["epoch"], r["train_loss"],
                                             r["val_loss"]))
    model.save(out / "checkpoint.bin", {"training": asdict(cfg.training), "run_seed": cfg.seed})
    write_train_log(out / "train_log.csv", hist.rows)
    log.info("trained %d steps; checkpoint in %s", hist.steps, out)
    return EXIT_OK


def timing_rows(model: GripModel, clips: Sequence[SceneClip], runs: int = 20) -> list[list]:
    """Median wall-clock seconds per forward pass at batch sizes 1 and 128."""
    machine = f"{platform.machine()} {platform.processor() or platform.system()} py{platform.python_version()}"
    rows = []
    for bs in (1, 128):
        chunk = [clips[i % len(clips)] for i in range(bs)]
        batch = model.prepare(chunk)
        model.predict_arrays(batch)  # warm-up
        times = []
        for _ in range(runs):
            t0 = time.perf_counter()
            model.predict_arrays(batch)
            times.append(time.perf_counter() - t0)
        med = statistics.median(times)
        rows.append([bs, runs, med, med / bs, machine])
    return rows


def write_predictions(out: Path, clips: Sequence[SceneClip], preds: Sequence[PredictionResult]) -> None:
    with (out / "predictions.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "agent_id", "agent_type", "step", "pred_x", "pred_y"])
        for p in preds:
            for i, aid in enumerate(p.agent_ids):
                for k in range(p.positions.shape[1]):
                    x, y = p.positions[i, k]
                    w.writerow([p.scene_id, aid, AgentType(p.agent_types[i]).value, k + 1, repr(float(x)),
                                repr(float(y))])
    with (out / "submission.txt").open("w") as fh:
        for clip, p in zip(clips, preds):
            for k in range(p.positions.shape[1]):
                frame = clip.origin_frame + clip.t_h + k
                for i, aid in enumerate(p.agent_ids):
                    x, y = p.positions[i, k]
                    fh.write(f"{frame} {aid} {APOLLO_CODES[AgentType(p.agent_types[i])]} {x:.6f} {y:.6f}\n")


def cmd_predict(args, cfg: RunConfig) -> int:
    if not args.checkpoint:
        raise UsageError("predict needs --checkpoint")
    if not Path(args.checkpoint).is_file():
        raise DataError(f"checkpoint {args.checkpoint} not found")
    model = GripModel.load(args.checkpoint)
    cfg.model = model.config
    cfg.data.t_future = model.config.t_f
    cfg.validate()
    out = out_dir(args)
    echo_config(cfg, out)
    path = args.data or cfg.data.path
    if not path:
        raise UsageError("predict needs --data or data.path")
    fmt = args.format or ("clips" if cfg.data.format == "synth" else cfg.data.format)
    clips = load_clips(cfg, path, fmt)
    preds = model.predict(clips) if clips else []
    write_predictions(out, clips, preds)
    header = ["batch_size", "runs", "median_seconds", "seconds_per_scene", "machine"]
    rows = timing_rows(model, clips, args.timing_runs) if clips and args.timing_runs > 0 else []
    _write_rows(out / "timing.csv", header, rows)
    log.info("predicted %d clips into %s", len(clips), out)
    return EXIT_OK


def _read_csv_table(path: str, xcol: str, ycol: str) -> dict:
    """(scene_id, agent_id) -> {"type": AgentType, "steps": {step: (x, y)}}."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{path} not found")
    table: dict = {}
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"scene_id", "agent_id", "agent_type", "step", xcol, ycol}
        if reader.fieldnames is None or need - set(reader.fieldnames):
            raise DataError(f"{path}: header must contain {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                atype = AgentType.parse(row["agent_type"])
            except DataError:
                raise DataError(f"{path}:{lineno}: unknown agent_type {row['agent_type']!r}") from None
            try:
                key = (row["scene_id"], int(row["agent_id"]))
                step = int(row["step"])
                xy = (float(row[xcol]), float(row[ycol]))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            entry = table.setdefault(key, {"type": atype, "steps": {}})
            entry["steps"][step] = xy
    return table


def _gt_table(path: str) -> dict:
    if path.endswith(".jsonl") or path.endswith(".json"):
        if not Path(path).is_file():
            raise DataError(f"{path} not found")
        table = {}
        for clip in read_clips(path):
            fm = clip.future_mask
            for i, aid in enumerate(clip.agent_ids):
                table[(clip.scene_id, int(aid))] = {
                    "type": AgentType(clip.agent_types[i]),
                    "steps": {k + 1: tuple(clip.future[i, k]) for k in range(clip.t_f) if fm[i, k]},
                    "frame_rate": clip.frame_rate}
        return table
    return _read_csv_table(path, "x", "y")


def eval_tables(pred: dict, gt: dict, frame_rate: float, warn: bool = True):
    missing = sorted(set(gt) - set(pred))
    extra = sorted(set(pred) - set(gt))
    if missing or extra:
        raise DataError(f"prediction/ground-truth id mismatch: missing {missing[:20]}, extra {extra[:20]}"
                        + (" (lists truncated)" if len(missing) > 20 or len(extra) > 20 else ""))
    keys = sorted(gt)
    if not keys:
        raise DataError("ground truth is empty")
    t_f = max(max(v["steps"]) for v in gt.values() if v["steps"])
    n = len(keys)
    P = np.zeros((n, t_f, 2))
    G = np.zeros((n, t_f, 2))
    M = np.zeros((n, t_f), dtype=bool)
    for i, key in enumerate(keys):
        for step, xy in gt[key]["steps"].items():
            if step not in pred[key]["steps"]:
                raise DataError(f"prediction for {key} lacks step {step}")
            G[i, step - 1] = xy
            P[i, step - 1] = pred[key]["steps"][step]
            M[i, step - 1] = True
    return metrics(P, G, [gt[k]["type"] for k in keys], M, frame_rate, warn=warn)


def write_metrics(out: Path, rep) -> None:
    (out / "metrics.json").write_text(json.dumps(rep.to_dict(), indent=2, default=str))
    horizons = list(rep.rmse_per_horizon)
    header = ["metric"] + [f"{h:g}s" for h in horizons] + ["vehicle", "pedestrian", "bicycle", "all",
                                                          "weighted"]
    rows = [["RMSE"] + [rep.rmse_per_horizon[h] for h in horizons] + [""] * 5]
    for name, per, ws in (("ADE", rep.ade, rep.wsade), ("FDE", rep.fde, rep.wsfde)):
        rows.append([name] + [""] * len(horizons) + [per[c] if per[c] is not None else "" for c in
                                                     ("vehicle", "pedestrian", "bicycle", "all")] + [ws])
    _write_rows(out / "metrics.csv", header, rows)


def cmd_eval(args, cfg: RunConfig) -> int:
    if not args.predictions or not args.ground_truth:
        raise UsageError("eval needs --predictions and --ground-truth")
    out = out_dir(args)
    echo_config(cfg, out)
    pred = _read_csv_table(args.predictions, "pred_x", "pred_y")
    gt = _gt_table(args.ground_truth)
    rates = {v.get("frame_rate") for v in gt.values()} - {None}
    frame_rate = rates.pop() if len(rates) == 1 else cfg.data.frame_rate
    rep = eval_tables(pred, gt, frame_rate, warn=not args.quiet)
    write_metrics(out, rep)
    log.info("WSADE %.4f WSFDE %.4f", rep.wsade, rep.wsfde)
    return EXIT_OK


def load_grid(path: str, cfg: RunConfig) -> tuple[list[ablation.AblationSpec], list[ablation.AblationSpec]]:
    """Grid file (TOML): ``[[run]]`` tables with ``name``, optional ``preset``
    (B1..B13), ``seeds`` and ``model``/``training`` override tables; an
    optional top-level ``dclose`` list with ``dclose_seeds`` adds the sweep."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"grid file {path} not found")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ParameterError(f"{path}: {exc}") from None
    unknown = set(doc) - {"run", "dclose", "dclose_seeds"}
    if unknown:
        raise ParameterError(f"{path}: unknown keys {sorted(unknown)}")
    runs = []
    for i, entry in enumerate(doc.get("run", [])):
        where = f"{path}: run[{i}]"
        bad = set(entry) - {"name", "preset", "seeds", "model", "training"}
        if bad:
            raise ParameterError(f"{where}: unknown keys {sorted(bad)}")
        local = RunConfig.from_dict({"model": asdict(cfg.model), "training": asdict(cfg.training)})
        if "preset" in entry:
            for k, v in ablation.row_settings(entry["preset"]).items():
                set_key(local, f"training.{k}" if k == "rotate" else f"model.{k}", v)
        for section in ("model", "training"):
            for k, v in entry.get(section, {}).items():
                set_key(local, f"{section}.{k}", v)
        name = entry.get("name", entry.get("preset", f"run{i}"))
        for s in entry.get("seeds", [cfg.seed]):
            runs.append(ablation.make_spec(name, local.model, local.training, {}, int(s)))
    sweep = ablation.dclose_grid(cfg.model, cfg.training, doc.get("dclose", []),
                                 doc.get("dclose_seeds", [cfg.seed]))
    return runs, sweep


def cmd_ablate(args, cfg: RunConfig) -> int:
    if not args.grid:
        raise UsageError("ablate needs --grid")
    cfg.validate()
    runs, sweep = load_grid(args.grid, cfg)
    out = out_dir(args)
    echo_config(cfg, out)
    train_clips, val_clips = dataset(cfg)
    if not train_clips or not val_clips:
        raise DataError("ablation needs non-empty training and validation clips")
    res = ablation.ablation_run(runs, train_clips, val_clips)
    cols = ["name", "seed"] + ablation.ABLATION_COLUMNS + ["d_close", "status", "ADE", "FDE", "WSADE",
                                                          "WSFDE", "val_loss", "best_epoch",
                                                          "wall_seconds", "error"]
    extra = sorted({k for r in res.rows for k in r if k.startswith("RMSE@")})
    ablation.write_csv(res.rows, out / "ablation.csv", cols[:-1] + extra + cols[-1:])
    sw = ablation.ablation_run(sweep, train_clips, val_clips)
    ablation.write_csv(sw.rows, out / "dclose_runs.csv", cols[:-1] + extra + cols[-1:])
    ablation.write_csv(ablation.sweep_table(sw.rows), out / "dclose_sweep.csv",
                       ["d_close", "runs", "ok", "ADE_mean", "FDE_mean", "WSADE_mean"])
    ablation.write_csv(res.location_rows + sw.location_rows, out / "location_error.csv",
                       ["name", "seed", "lo", "hi", "points", "ADE", "FDE"])
    failed = sum(r["status"] != "ok" for r in res.rows + sw.rows)
    log.info("ablation: %d runs, %d failed; tables in %s", len(res.rows) + len(sw.rows), failed, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags; their copies must not reset values
    # given before the subcommand name, hence SUPPRESS defaults there
    common = argparse.ArgumentParser(add_help=False)
    d = {"default": argparse.SUPPRESS} if suppress else {}
    common.add_argument("--config", help="TOML run configuration", **d)
    common.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="override one config key, e.g. model.channels=32 (repeatable)", **d)
    common.add_argument("--seed", type=int, help="run seed (overrides config)", **d)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})", **d)
    common.add_argument("--quiet", action="store_true", help="only report errors", **d)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags(suppress=True)

    ingest = argparse.ArgumentParser(add_help=False)
    ingest.add_argument("--data", help="input file (clips JSONL, ApolloScape text or CSV)")
    ingest.add_argument("--format", choices=["apolloscape", "csv", "synth", "clips"])
    ingest.add_argument("--t-history", type=int)
    ingest.add_argument("--t-future", type=int)
    ingest.add_argument("--downsample", type=int)
    ingest.add_argument("--window-feet", type=float)

    ap = argparse.ArgumentParser(prog="gripplus", parents=[_common_flags(suppress=False)],
                                 description="Graph-based multi-agent trajectory prediction.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common, ingest], help="generate synthetic clips")
    s.add_argument("--scenes", type=int)
    s.add_argument("--agents", type=int, help="agents per scene")
    s.add_argument("--family", action="append", help="motion family (repeatable)")
    s.add_argument("--radius", type=float, help="fixed turn radius")
    s.add_argument("--noise", type=float, help="history noise sigma")
    s.add_argument("--output", help="file name inside the output directory (default clips.jsonl)")

    sub.add_parser("train", parents=[common, ingest], help="train a model")

    p = sub.add_parser("predict", parents=[common, ingest], help="predict with a trained checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--timing-runs", type=int, default=20)

    e = sub.add_parser("eval", parents=[common], help="score a predictions CSV")
    e.add_argument("--predictions")
    e.add_argument("--ground-truth", help="clips JSONL or CSV with scene_id,agent_id,agent_type,step,x,y")

    a = sub.add_parser("ablate", parents=[common, ingest], help="run an ablation grid")
    a.add_argument("--grid")
    return ap


def _apply_flags(args, cfg: RunConfig) -> None:
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.training.seed = args.seed
    d = cfg.data
    if getattr(args, "data", None) and args.command in ("train", "ablate"):
        d.path = args.data
        if d.format == "synth":
            d.format = "clips"
    if getattr(args, "format", None) and args.command != "predict":
        d.format = args.format
    for flag, key in (("t_history", "t_history"), ("t_future", "t_future"), ("downsample", "downsample"),
                      ("window_feet", "window_feet")):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(d, key, v)


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "predict": cmd_predict, "eval": cmd_eval,
            "ablate": cmd_ablate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", force=True)
    try:
        cfg = load_config(args.config, args.overrides or [])
        _apply_flags(args, cfg)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ParameterError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except DataError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except (DivergenceError, GripError, OSError, RuntimeError, MemoryError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
