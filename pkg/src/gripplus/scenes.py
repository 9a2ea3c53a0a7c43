"""Trajectory records, fixed-length scene clips, and synthetic scene generation."""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParameterError

CLIP_SCHEMA = "gripplus.clip/1"


class AgentType(str, enum.Enum):
    SMALL_VEHICLE = "small_vehicle"
    BIG_VEHICLE = "big_vehicle"
    PEDESTRIAN = "pedestrian"
    MOTORCYCLIST_BICYCLIST = "motorcyclist_bicyclist"
    OTHER = "other"

    @classmethod
    def parse(cls, value) -> "AgentType":
        """Accept an enum name/value or an ApolloScape integer code."""
        if isinstance(value, AgentType):
            return value
        text = str(value).strip()
        try:
            return APOLLO_TYPES[int(float(text))]
        except (ValueError, KeyError):
            pass
        try:
            return cls(text.lower())
        except ValueError:
            raise DataError(f"unknown agent type {value!r}") from None


APOLLO_TYPES = {
    1: AgentType.SMALL_VEHICLE,
    2: AgentType.BIG_VEHICLE,
    3: AgentType.PEDESTRIAN,
    4: AgentType.MOTORCYCLIST_BICYCLIST,
    5: AgentType.OTHER,
}
APOLLO_CODES = {v: k for k, v in APOLLO_TYPES.items()}


@dataclass(frozen=True)
class AgentRecord:
    frame_id: int
    agent_id: int
    agent_type: AgentType
    x: float
    y: float
    z: float | None = None
    length: float | None = None
    width: float | None = None
    height: float | None = None
    heading: float | None = None


@dataclass
class SceneClip:
    """One sample: ``positions`` is (n, t_h + t_f, 2), ``mask`` is (n, t_h + t_f)."""

    agent_ids: list[int]
    agent_types: list[AgentType]
    positions: np.ndarray
    mask: np.ndarray
    t_h: int
    frame_rate: float = 2.0
    origin_frame: int = 0
    scene_id: str = ""
    sequence_id: str = ""
    unit: str = "m"

    @property
    def n(self) -> int:
        return len(self.agent_ids)

    @property
    def t_f(self) -> int:
        return self.positions.shape[1] - self.t_h

    @property
    def history(self) -> np.ndarray:
        return self.positions[:, : self.t_h]

    @property
    def future(self) -> np.ndarray:
        return self.positions[:, self.t_h:]

    @property
    def future_mask(self) -> np.ndarray:
        return self.mask[:, self.t_h:]

    def validate(self, window_half_width: float | None = None, center=None) -> None:
        n = self.n
        if n < 1:
            raise DataError(f"clip {self.scene_id}: no agents")
        if self.t_h < 2:
            raise DataError(f"clip {self.scene_id}: t_h must be >= 2")
        if self.positions.shape != (n, self.positions.shape[1], 2) or self.mask.shape != self.positions.shape[:2]:
            raise DataError(f"clip {self.scene_id}: inconsistent array shapes")
        if len(self.agent_types) != n:
            raise DataError(f"clip {self.scene_id}: {len(self.agent_types)} types for {n} agents")
        if not self.mask[:, self.t_h - 1].all():
            raise DataError(f"clip {self.scene_id}: every agent must be observed at the last history frame")
        if not np.isfinite(self.positions[self.mask]).all():
            raise DataError(f"clip {self.scene_id}: non-finite positions")
        if window_half_width is not None:
            c = np.zeros(2) if center is None else np.asarray(center)
            off = np.abs(self.positions[self.mask] - c)
            if (off > window_half_width + 1e-9).any():
                raise DataError(f"clip {self.scene_id}: positions outside the scene window")

    def select(self, agents: Sequence[int]) -> "SceneClip":
        """Sub-clip with the given agent rows, in the given order."""
        agents = list(agents)
        return SceneClip(
            agent_ids=[self.agent_ids[i] for i in agents],
            agent_types=[self.agent_types[i] for i in agents],
            positions=self.positions[agents].copy(),
            mask=self.mask[agents].copy(),
            t_h=self.t_h, frame_rate=self.frame_rate, origin_frame=self.origin_frame,
            scene_id=self.scene_id, sequence_id=self.sequence_id, unit=self.unit,
        )


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

@dataclass
class ParseIssue:
    line: int
    message: str


def parse_apolloscape(lines: Iterable[str], strict: bool = False,
                      errors: list[ParseIssue] | None = None) -> list[AgentRecord]:
    """Parse whitespace-separated ApolloScape trajectory lines.

    Columns: frame_id object_id object_type x y z length width height heading.
    Malformed lines are appended to ``errors`` (when given) and skipped, or
    raise :class:`DataError` in strict mode.
    """
    records = []
    for lineno, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields:
            continue
        try:
            if len(fields) < 5:
                raise DataError(f"expected at least 5 fields, found {len(fields)}")
            vals = [float(f) for f in fields]
            if not all(math.isfinite(v) for v in vals):
                raise DataError("non-finite value")
            extra = vals[5:10] + [None] * (10 - len(vals))
            records.append(AgentRecord(int(vals[0]), int(vals[1]), AgentType.parse(int(vals[2])),
                                       vals[3], vals[4], *extra[:5]))
        except (ValueError, DataError) as exc:
            if strict:
                raise DataError(f"line {lineno}: {exc}") from None
            if errors is not None:
                errors.append(ParseIssue(lineno, str(exc)))
    return records


def parse_csv(text: str | Iterable[str], strict: bool = False,
              errors: list[ParseIssue] | None = None) -> list[AgentRecord]:
    """Parse a CSV with a header naming frame_id, agent_id, agent_type, x, y."""
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.DictReader(stream)
    need = {"frame_id", "agent_id", "agent_type", "x", "y"}
    if reader.fieldnames is None:
        return []
    missing = need - set(reader.fieldnames)
    if missing:
        raise DataError(f"CSV header lacks columns {sorted(missing)}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        try:
            x, y = float(row["x"]), float(row["y"])
            if not (math.isfinite(x) and math.isfinite(y)):
                raise DataError("non-finite coordinate")
            records.append(AgentRecord(int(float(row["frame_id"])), int(float(row["agent_id"])),
                                       AgentType.parse(row["agent_type"]), x, y))
        except (ValueError, TypeError, DataError) as exc:
            if strict:
                raise DataError(f"line {lineno}: {exc}") from None
            if errors is not None:
                errors.append(ParseIssue(lineno, str(exc)))
    return records


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------

def downsample(records: Sequence[AgentRecord], factor: int) -> list[AgentRecord]:
    """Keep every ``factor``-th frame counted from the first one and renumber
    the kept frames consecutively from that first frame id."""
    if factor < 1:
        raise ParameterError(f"downsample factor must be >= 1, got {factor}")
    if not records:
        return []
    f0 = min(r.frame_id for r in records)
    out = []
    for r in records:
        off = r.frame_id - f0
        if off % factor == 0:
            out.append(AgentRecord(f0 + off // factor, r.agent_id, r.agent_type, r.x, r.y,
                                   r.z, r.length, r.width, r.height, r.heading))
    return out


def segment_clips(records: Sequence[AgentRecord], t_h: int, t_f: int, stride: int = 1,
                  window_half_width: float = 90.0, reference_agent: int | None = None,
                  frame_rate: float = 2.0, sequence_id: str = "", unit: str = "m") -> list[SceneClip]:
    """Cut a record sequence into sliding clips of ``t_h + t_f`` consecutive frames.

    Agents absent at the last history frame are dropped.  The scene window is
    a square of half-width ``window_half_width`` centred on the reference point
    at the last history frame: the centroid of the agents present there, or
    ``reference_agent`` when given (windows where it is absent are skipped).
    Positions outside the window, and missing frames, are mask-false.
    """
    if t_h < 2 or t_f < 1 or stride < 1:
        raise ParameterError("segment_clips needs t_h >= 2, t_f >= 1, stride >= 1")
    if not records:
        return []
    frames: dict[int, dict[int, AgentRecord]] = {}
    for r in records:
        slot = frames.setdefault(r.frame_id, {})
        if r.agent_id in slot:
            raise DataError(f"duplicate record for agent {r.agent_id} in frame {r.frame_id}")
        slot[r.agent_id] = r
    f_min, f_max = min(frames), max(frames)
    total = t_h + t_f
    clips = []
    for f0 in range(f_min, f_max - total + 2, stride):
        last = frames.get(f0 + t_h - 1, {})
        if not last:
            continue
        if reference_agent is not None:
            if reference_agent not in last:
                continue
            ref = np.array([last[reference_agent].x, last[reference_agent].y])
        else:
            ref = np.mean([[r.x, r.y] for r in last.values()], axis=0)
        ids = sorted(a for a, r in last.items()
                     if abs(r.x - ref[0]) <= window_half_width and abs(r.y - ref[1]) <= window_half_width)
        if not ids:
            continue
        pos = np.zeros((len(ids), total, 2))
        mask = np.zeros((len(ids), total), dtype=bool)
        for k in range(total):
            slot = frames.get(f0 + k, {})
            for i, a in enumerate(ids):
                r = slot.get(a)
                if r is None:
                    continue
                if abs(r.x - ref[0]) <= window_half_width and abs(r.y - ref[1]) <= window_half_width:
                    pos[i, k] = (r.x, r.y)
                    mask[i, k] = True
        clips.append(SceneClip(
            agent_ids=ids, agent_types=[last[a].agent_type for a in ids], positions=pos, mask=mask,
            t_h=t_h, frame_rate=frame_rate, origin_frame=f0,
            scene_id=f"{sequence_id}:{f0}", sequence_id=sequence_id, unit=unit,
        ))
    return clips


def split_train_val(clips: Sequence[SceneClip], fraction: float,
                    rng: np.random.Generator) -> tuple[list[SceneClip], list[SceneClip]]:
    """Partition at sequence granularity; ``fraction`` of the sequences go to validation."""
    if not 0.0 < fraction < 1.0:
        raise ParameterError(f"validation fraction must lie in (0, 1), got {fraction}")
    seqs = sorted({c.sequence_id for c in clips})
    if not seqs:
        return [], []
    n_val = int(round(fraction * len(seqs)))
    if len(seqs) >= 2:
        n_val = min(max(n_val, 1), len(seqs) - 1)
    order = rng.permutation(len(seqs))
    val_ids = {seqs[i] for i in order[:n_val]}
    train = [c for c in clips if c.sequence_id not in val_ids]
    val = [c for c in clips if c.sequence_id in val_ids]
    return train, val


# ---------------------------------------------------------------------------
# canonical clip files (JSON lines)
# ---------------------------------------------------------------------------

def clip_to_dict(clip: SceneClip) -> dict:
    return {
        "schema": CLIP_SCHEMA,
        "scene_id": clip.scene_id,
        "sequence_id": clip.sequence_id,
        "agent_ids": [int(a) for a in clip.agent_ids],
        "agent_types": [AgentType(t).value for t in clip.agent_types],
        "t_h": clip.t_h,
        "frame_rate": clip.frame_rate,
        "origin_frame": clip.origin_frame,
        "unit": clip.unit,
        "positions": clip.positions.tolist(),
        "mask": clip.mask.astype(int).tolist(),
    }


def clip_from_dict(d: dict) -> SceneClip:
    if d.get("schema") != CLIP_SCHEMA:
        raise DataError(f"unsupported clip schema {d.get('schema')!r}")
    n = len(d["agent_ids"])
    pos = np.asarray(d["positions"], dtype=np.float64).reshape(n, -1, 2)
    mask = np.asarray(d["mask"], dtype=bool).reshape(n, -1)
    return SceneClip(
        agent_ids=[int(a) for a in d["agent_ids"]],
        agent_types=[AgentType.parse(t) for t in d["agent_types"]],
        positions=pos, mask=mask, t_h=int(d["t_h"]), frame_rate=float(d["frame_rate"]),
        origin_frame=int(d["origin_frame"]), scene_id=d["scene_id"],
        sequence_id=d["sequence_id"], unit=d.get("unit", "m"),
    )


def write_clips(path, clips: Iterable[SceneClip]) -> None:
    with open(path, "w") as fh:
        for c in clips:
            fh.write(json.dumps(clip_to_dict(c), separators=(",", ":")) + "\n")


def read_clips(path) -> list[SceneClip]:
    clips = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                clips.append(clip_from_dict(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return clips


# ---------------------------------------------------------------------------
# synthetic scenes
# ---------------------------------------------------------------------------

FAMILIES = ("cv", "ca", "turn", "lane_change", "interaction")


@dataclass
class SynthSpec:
    """Generator configuration.  Distances are scene units, times seconds.

    ``interaction`` agents come in convoys: a leader that starts turning late
    in the history and followers that track the vehicle ahead with a delay of
    ``follow_delay`` steps, so a follower's future depends on its neighbour.
    Headings lie within ``heading_spread`` of a per-scene road direction.
    """

    num_scenes: int = 50
    agents_min: int = 10
    agents_max: int = 10
    families: tuple[str, ...] = ("cv",)
    t_h: int = 6
    t_f: int = 6
    frame_rate: float = 2.0
    noise_sigma: float = 0.0
    speed_range: tuple[float, float] = (3.0, 10.0)
    accel_range: tuple[float, float] = (-1.0, 1.0)
    radius_range: tuple[float, float] = (15.0, 40.0)
    lane_amplitude_range: tuple[float, float] = (1.0, 2.5)
    lane_period_range: tuple[float, float] = (3.0, 6.0)
    follow_delay: int = 3
    follow_gain: float = 1.0
    convoy_max: int = 2
    spawn_half_width: float = 50.0
    window_half_width: float = 90.0
    agent_types: tuple[str, ...] = ("small_vehicle",)
    unit: str = "m"
    heading_spread: float = math.pi

    def validate(self) -> None:
        if self.num_scenes < 0:
            raise ParameterError("num_scenes must be >= 0")
        if not 1 <= self.agents_min <= self.agents_max:
            raise ParameterError("need 1 <= agents_min <= agents_max")
        if self.t_h < 2 or self.t_f < 1 or self.frame_rate <= 0:
            raise ParameterError("need t_h >= 2, t_f >= 1, frame_rate > 0")
        if not self.families or any(f not in FAMILIES for f in self.families):
            raise ParameterError(f"families must be a non-empty subset of {FAMILIES}")
        if not 0 <= self.heading_spread <= math.pi:
            raise ParameterError("heading_spread must lie in [0, pi]")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be >= 0")
        for name in ("speed_range", "accel_range", "radius_range", "lane_amplitude_range", "lane_period_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ParameterError(f"{name}: lower bound exceeds upper bound")
        if self.speed_range[0] < 0 or self.radius_range[0] <= 0 or self.lane_period_range[0] <= 0:
            raise ParameterError("speeds must be >= 0, radii and periods > 0")
        if not 0 <= self.spawn_half_width <= self.window_half_width:
            raise ParameterError("spawn area must lie inside the scene window")
        if not 0 < self.follow_gain <= 1:
            raise ParameterError("follow_gain must lie in (0, 1]")
        if self.follow_delay < 1 or self.convoy_max < 2:
            raise ParameterError("need follow_delay >= 1 and convoy_max >= 2")
        for t in self.agent_types:
            AgentType.parse(t)


def _unit(theta):
    return np.array([math.cos(theta), math.sin(theta)])


def _normal(theta):
    return np.array([-math.sin(theta), math.cos(theta)])


def _single_track(family: str, spec: SynthSpec, rng: np.random.Generator, tau: np.ndarray,
                  base: float = 0.0) -> np.ndarray:
    """Trajectory relative to its position at tau == 0."""
    theta = base + rng.uniform(-spec.heading_spread, spec.heading_spread)
    v = rng.uniform(*spec.speed_range)
    u, nrm = _unit(theta), _normal(theta)
    if family == "cv":
        return np.outer(v * tau, u)
    if family == "ca":
        a = rng.uniform(*spec.accel_range)
        return np.outer(v * tau + 0.5 * a * tau ** 2, u)
    if family == "turn":
        radius = rng.uniform(*spec.radius_range)
        side = rng.choice([-1.0, 1.0])
        omega = side * v / radius
        # centre sits on the turning side; start angle points back at tau == 0
        phi = theta - side * math.pi / 2 + omega * tau
        rel = radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return rel - radius * _unit(theta - side * math.pi / 2)
    if family == "lane_change":
        amp = rng.uniform(*spec.lane_amplitude_range)
        period = rng.uniform(*spec.lane_period_range)
        phase = rng.uniform(0, 2 * math.pi)
        lateral = amp * (np.sin(2 * math.pi * tau / period + phase) - math.sin(phase))
        return np.outer(v * tau, u) + np.outer(lateral, nrm)
    raise ParameterError(f"unknown family {family!r}")


def _convoy(size: int, spec: SynthSpec, rng: np.random.Generator, total: int, k_ref: int,
            base: float = 0.0) -> list[np.ndarray]:
    """A turning leader and car-following vehicles behind it.

    Each follower starts ``follow_delay`` steps of travel behind the vehicle
    ahead and every step moves its velocity a fraction ``follow_gain`` of the
    way towards that vehicle's velocity ``follow_delay`` steps earlier.  With
    a gain of 1 the follower retraces the path ahead exactly.  The leader's
    turn starts inside the history so that it is observable.
    """
    dt = 1.0 / spec.frame_rate
    theta = base + rng.uniform(-spec.heading_spread, spec.heading_spread)
    v = rng.uniform(*spec.speed_range)
    radius = rng.uniform(*spec.radius_range)
    omega = rng.choice([-1.0, 1.0]) * v / radius
    onset = int(rng.integers(max(k_ref - 4, 0), max(k_ref - 1, 1)))
    heading = theta + omega * dt * np.clip(np.arange(total) - onset, 0, None)
    vel = np.zeros((size, total, 2))
    vel[0] = v * dt * np.stack([np.cos(heading), np.sin(heading)], axis=1)
    vel[1:, 0] = vel[0, 0]
    for k in range(1, total):
        ahead = vel[:-1, max(k - spec.follow_delay, 0)]
        vel[1:, k] = vel[1:, k - 1] + spec.follow_gain * (ahead - vel[1:, k - 1])
    start = -np.arange(size)[:, None] * spec.follow_delay * vel[0, 0]
    pos = start[:, None, :] + np.concatenate([np.zeros((size, 1, 2)), np.cumsum(vel[:, :-1], axis=1)], axis=1)
    return list(pos - pos[0, k_ref])


def synth_scenes(spec: SynthSpec, rng: np.random.Generator) -> list[SceneClip]:
    """Generate kinematically consistent clips; history positions get
    Gaussian noise of ``noise_sigma``, futures stay exact."""
    spec.validate()
    total = spec.t_h + spec.t_f
    k_ref = spec.t_h - 1
    tau = (np.arange(total) - k_ref) / spec.frame_rate
    types = [AgentType.parse(t) for t in spec.agent_types]
    clips = []
    for s in range(spec.num_scenes):
        n = int(rng.integers(spec.agents_min, spec.agents_max + 1))
        base = rng.uniform(0, 2 * math.pi)  # scene road direction
        tracks: list[np.ndarray] = []
        while len(tracks) < n:
            family = spec.families[int(rng.integers(len(spec.families)))]
            spawn = rng.uniform(-spec.spawn_half_width, spec.spawn_half_width, size=2)
            if family == "interaction":
                room = n - len(tracks)
                if room < 2:
                    family = "cv"
                else:
                    size = int(rng.integers(2, min(spec.convoy_max, room) + 1))
                    tracks.extend(t + spawn for t in _convoy(size, spec, rng, total, k_ref, base))
                    continue
            tracks.append(_single_track(family, spec, rng, tau, base) + spawn)
        # slot order carries no meaning, as in recorded data
        pos = np.stack(tracks)[rng.permutation(n)]
        if spec.noise_sigma > 0:
            pos[:, : spec.t_h] += rng.normal(0.0, spec.noise_sigma, size=pos[:, : spec.t_h].shape)
        mask = (np.abs(pos) <= spec.window_half_width).all(axis=2)
        mask[:, k_ref] = True
        pos[~mask] = 0.0
        sid = f"synth-{s:05d}"
        clips.append(SceneClip(
            agent_ids=list(range(n)),
            agent_types=[types[int(rng.integers(len(types)))] for _ in range(n)],
            positions=pos, mask=mask, t_h=spec.t_h, frame_rate=spec.frame_rate,
            origin_frame=0, scene_id=sid, sequence_id=sid, unit=spec.unit,
        ))
    return clips
