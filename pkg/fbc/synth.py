"""Deterministic synthetic scenes with ground-truth flow.

Objects are axis-aligned rectangles brighter (or darker) than the
background. Every time one of their edges passes a pixel center an event
fires there, stamped with the crossing time.
"""

import dataclasses
import logging
import math
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from . import log_msgs
from .flow_interface import FlowEstimate
from .model import (
    COORD_LIMIT,
    EVENT_DTYPE,
    TIMESTAMP_LIMIT,
    US_PER_MS,
    US_PER_S,
    Event,
    EventStream,
    FBCError,
    FlowEvent,
    Polarity,
)
from .receiver import FlowBatch

LOGGER = logging.getLogger("fbc.synth")

SHAPES = ("bar", "square")


class SceneSpecError(FBCError, ValueError):
    """Raised when a scene description is degenerate or unparsable."""

    def __init__(self, msg: str, line: Optional[int] = None) -> None:
        super().__init__(f"{msg} (line {line})" if line is not None else msg)
        self.line = line


# -----------------------------
# motion
# -----------------------------


class PiecewiseVelocity(NamedTuple):
    """Constant velocities held for given durations; the last one holds forever."""

    segments: Tuple[Tuple[int, float, float], ...]  # (duration µs, vx px/s, vy px/s)

    @classmethod
    def constant(cls, vx: float, vy: float) -> "PiecewiseVelocity":
        """A single velocity."""
        return cls(((US_PER_S, float(vx), float(vy)),))

    def _locate(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        durations = np.array([s[0] for s in self.segments], dtype=np.int64)
        ends = np.cumsum(durations)
        k = np.minimum(np.searchsorted(ends, t, side="right"), len(durations) - 1)
        return k, ends - durations

    def displacement(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Offset (px) from the starting position at times `t` (µs)."""
        t = np.asarray(t, dtype=np.int64)
        vx = np.array([s[1] for s in self.segments])
        vy = np.array([s[2] for s in self.segments])
        durations = np.array([s[0] for s in self.segments], dtype=np.float64)
        start_x = np.concatenate([[0.0], np.cumsum(vx * durations / US_PER_S)[:-1]])
        start_y = np.concatenate([[0.0], np.cumsum(vy * durations / US_PER_S)[:-1]])
        k, starts = self._locate(t)
        elapsed = (t - starts[k]) / US_PER_S
        return start_x[k] + vx[k] * elapsed, start_y[k] + vy[k] * elapsed

    def velocity(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Velocity (px/s) at times `t` (µs)."""
        k, _ = self._locate(np.asarray(t, dtype=np.int64))
        vx = np.array([s[1] for s in self.segments])
        vy = np.array([s[2] for s in self.segments])
        return vx[k], vy[k]


class Oscillation(NamedTuple):
    """Sinusoidal motion: position offset A*(sin(wt + phase) - sin(phase))."""

    amplitude_x: float  # px
    amplitude_y: float  # px
    frequency_hz: float
    phase: float = 0.0  # rad

    def _angle(self, t: np.ndarray) -> np.ndarray:
        return 2 * math.pi * self.frequency_hz * (np.asarray(t, dtype=np.float64) / US_PER_S) + self.phase

    def displacement(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Offset (px) from the starting position at times `t` (µs)."""
        s = np.sin(self._angle(t)) - math.sin(self.phase)
        return self.amplitude_x * s, self.amplitude_y * s

    def velocity(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Velocity (px/s) at times `t` (µs)."""
        c = np.cos(self._angle(t)) * 2 * math.pi * self.frequency_hz
        return self.amplitude_x * c, self.amplitude_y * c


Motion = Union[PiecewiseVelocity, Oscillation]


@dataclasses.dataclass(frozen=True)
class SceneObject:
    """A rectangle centered at (x, y) at t=0."""

    shape: str  # "bar" or "square"
    width: float
    height: float
    x: float
    y: float
    motion: Motion
    bright: bool = True  # brighter than the background: covering a pixel is ON


@dataclasses.dataclass(frozen=True)
class SceneSpec:
    """Everything needed to regenerate a scene bit for bit."""

    width: int
    height: int
    objects: Tuple[SceneObject, ...]
    duration_us: int
    noise_rate: float = 0.0  # events/s over the whole frame
    seed: int = 0
    sample_us: int = 10  # motion sampling step


def validate_scene(spec: SceneSpec, v_max: float = 2047.0) -> None:
    """Raise `SceneSpecError` if `spec` cannot be generated."""
    if not (0 < spec.width <= COORD_LIMIT and 0 < spec.height <= COORD_LIMIT):
        raise SceneSpecError(f"sensor {spec.width}x{spec.height} out of range")
    if not 0 < spec.duration_us < TIMESTAMP_LIMIT:
        raise SceneSpecError(f"duration {spec.duration_us} µs out of range")
    if spec.noise_rate < 0:
        raise SceneSpecError(f"noise rate must be >= 0 ({spec.noise_rate})")
    if spec.sample_us <= 0:
        raise SceneSpecError(f"sample step must be positive ({spec.sample_us})")
    for i, obj in enumerate(spec.objects):
        if obj.shape not in SHAPES:
            raise SceneSpecError(f"object #{i}: unknown shape {obj.shape!r}")
        if not (obj.width > 0 and obj.height > 0):
            raise SceneSpecError(f"object #{i}: zero-size {obj.shape} ({obj.width}x{obj.height})")
        if obj.shape == "square" and obj.width != obj.height:
            raise SceneSpecError(f"object #{i}: square with sides {obj.width} and {obj.height}")
        if isinstance(obj.motion, PiecewiseVelocity):
            if not obj.motion.segments:
                raise SceneSpecError(f"object #{i}: piecewise motion without segments")
            if any(seg[0] <= 0 for seg in obj.motion.segments):
                raise SceneSpecError(f"object #{i}: segment durations must be positive")
            speeds = [max(abs(seg[1]), abs(seg[2])) for seg in obj.motion.segments]
        else:
            if obj.motion.frequency_hz < 0:
                raise SceneSpecError(f"object #{i}: negative frequency")
            w = 2 * math.pi * obj.motion.frequency_hz
            speeds = [w * max(abs(obj.motion.amplitude_x), abs(obj.motion.amplitude_y))]
        if max(speeds) > v_max:
            raise SceneSpecError(f"object #{i}: speed {max(speeds):.1f} px/s exceeds {v_max}")


# -----------------------------
# ground truth
# -----------------------------


class GroundTruth:
    """Velocity of every generated event; noise maps to None."""

    def __init__(self, spec: SceneSpec) -> None:
        self.spec = spec
        self._table: Dict[Tuple[int, int, int, int], Optional[Tuple[float, float]]] = {}

    def add(self, e: Event, velocity: Optional[Tuple[float, float]]) -> None:
        """Record `e`; an event already recorded keeps its first velocity."""
        self._table.setdefault((e.x, e.y, e.t, int(e.p)), velocity)

    def velocity_of(self, e: Event) -> Optional[Tuple[float, float]]:
        """Velocity of `e`, or None for noise and unknown events."""
        return self._table.get((e.x, e.y, e.t, int(e.p)))

    def is_noise(self, e: Event) -> bool:
        """True if `e` is recorded as noise."""
        key = (e.x, e.y, e.t, int(e.p))
        return key in self._table and self._table[key] is None

    def __contains__(self, e: object) -> bool:
        if not isinstance(e, tuple) or len(e) != 4:
            return False
        return (e[0], e[1], e[2], int(e[3])) in self._table

    def __len__(self) -> int:
        return len(self._table)


# -----------------------------
# generation
# -----------------------------


class _EdgeEvents(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    vx: np.ndarray
    vy: np.ndarray


def _crossings(
    ts: np.ndarray, pos: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer positions crossed between samples: (sample index, integer, crossing time)."""
    fl = np.floor(pos).astype(np.int64)
    change = np.flatnonzero(np.diff(fl))
    counts = np.abs(fl[change + 1] - fl[change])
    idx = np.repeat(change, counts)
    j = np.arange(int(counts.sum())) - np.repeat(np.cumsum(counts) - counts, counts)
    rising = fl[idx + 1] > fl[idx]
    k = np.where(rising, fl[idx] + 1 + j, fl[idx] - j)
    frac = (k - pos[idx]) / (pos[idx + 1] - pos[idx])
    tc = ts[idx] + frac * (ts[idx + 1] - ts[idx])
    return idx, k, tc


def _edge_events(
    spec: SceneSpec,
    obj: SceneObject,
    ts: np.ndarray,
    along: np.ndarray,
    across: np.ndarray,
    half_along: float,
    half_across: float,
    high: bool,
    vertical_edge: bool,
) -> _EdgeEvents:
    """Events of one edge.

    `along` is the object's center on the axis the edge moves along,
    `across` its center on the axis the edge spans.
    """
    pos = along + (half_along if high else -half_along)
    idx, k, tc = _crossings(ts, pos)

    # the edge spans pixel centers strictly inside the object
    frac = (tc - ts[idx]) / (ts[idx + 1] - ts[idx])
    c = across[idx] + frac * (across[idx + 1] - across[idx])
    limit = spec.width if not vertical_edge else spec.height
    lo = np.maximum(np.floor(c - half_across).astype(np.int64) + 1, 0)
    hi = np.minimum(np.ceil(c + half_across).astype(np.int64) - 1, limit - 1)
    size = spec.width if vertical_edge else spec.height
    in_frame = (k >= 0) & (k < size)
    n_px = np.where(in_frame, np.maximum(hi - lo + 1, 0), 0)

    moving_up = pos[idx + 1] > pos[idx]
    covers = moving_up == high
    on = covers == obj.bright

    cross = np.repeat(np.arange(len(idx)), n_px)
    span = np.arange(int(n_px.sum())) - np.repeat(np.cumsum(n_px) - n_px, n_px)
    fixed = k[cross]
    varying = lo[cross] + span
    t_us = np.floor(tc[cross] + 0.5).astype(np.int64)
    vx, vy = obj.motion.velocity(t_us)
    return _EdgeEvents(
        fixed if vertical_edge else varying,
        varying if vertical_edge else fixed,
        t_us,
        np.where(on[cross], int(Polarity.ON), int(Polarity.OFF)).astype(np.uint8),
        np.asarray(vx, dtype=np.float64),
        np.asarray(vy, dtype=np.float64),
    )


def _object_events(spec: SceneSpec, obj: SceneObject) -> Iterator[_EdgeEvents]:
    n = spec.duration_us // spec.sample_us
    ts = np.arange(n + 1, dtype=np.int64) * spec.sample_us
    if ts[-1] < spec.duration_us:
        ts = np.append(ts, spec.duration_us)
    dx, dy = obj.motion.displacement(ts)
    cx = obj.x + dx
    cy = obj.y + dy
    tsf = ts.astype(np.float64)
    for high in (False, True):  # left, right
        yield _edge_events(spec, obj, tsf, cx, cy, obj.width / 2, obj.height / 2, high, True)
    for high in (False, True):  # top, bottom
        yield _edge_events(spec, obj, tsf, cy, cx, obj.height / 2, obj.width / 2, high, False)


def generate(spec: SceneSpec, v_max: float = 2047.0) -> Tuple[EventStream, GroundTruth]:
    """Render `spec` into a time-sorted stream and its ground-truth flow."""
    validate_scene(spec, v_max)
    parts: List[_EdgeEvents] = []
    for i, obj in enumerate(spec.objects):
        edges = list(_object_events(spec, obj))
        LOGGER.debug(f"{log_msgs.SYNTH_OBJECT} (#{i} {obj.shape}: {sum(len(e.t) for e in edges)} events)")
        parts.extend(edges)

    rng = np.random.default_rng(spec.seed)
    n_noise = int(rng.poisson(spec.noise_rate * spec.duration_us / US_PER_S))
    noise = _EdgeEvents(
        rng.integers(0, spec.width, n_noise),
        rng.integers(0, spec.height, n_noise),
        rng.integers(0, spec.duration_us + 1, n_noise),
        rng.integers(0, 2, n_noise).astype(np.uint8),
        np.full(n_noise, np.nan),
        np.full(n_noise, np.nan),
    )
    parts.append(noise)

    records = np.empty(sum(len(p.t) for p in parts), dtype=EVENT_DTYPE)
    vel = np.empty((len(records), 2))
    pos = 0
    for part in parts:
        end = pos + len(part.t)
        records["x"][pos:end] = part.x
        records["y"][pos:end] = part.y
        records["t"][pos:end] = part.t
        records["p"][pos:end] = part.p
        vel[pos:end, 0] = part.vx
        vel[pos:end, 1] = part.vy
        pos = end

    order = np.argsort(records["t"], kind="stable")
    records = records[order]
    vel = vel[order]

    truth = GroundTruth(spec)
    for (x, y, t, p), (vx, vy) in zip(records.tolist(), vel.tolist()):
        truth.add(Event(x, y, t, Polarity(p)), None if math.isnan(vx) else (vx, vy))

    stream = EventStream(records, spec.width, spec.height)
    LOGGER.info(f"{log_msgs.SYNTH_DONE} ({stream}, noise={n_noise})")
    return stream, truth


def oracle_flows(stream: EventStream, truth: GroundTruth, v_min: float = 1.0) -> List[FlowEstimate]:
    """Ground-truth flow of every event of `stream`, in order."""
    from .flow_providers.oracle import oracle_flow  # pylint:disable=import-outside-toplevel

    return [oracle_flow(truth, e, v_min) for e in stream]


# -----------------------------
# random flow events
# -----------------------------


def random_flow_batch(
    n: int,
    vel_range: Tuple[float, float] = (-1000.0, 1000.0),
    sensor: Tuple[int, int] = (640, 480),
    seed: int = 0,
    v_min: float = 1.0,
    t_us: int = 0,
) -> FlowBatch:
    """`n` flow events uniform in position and velocity, all at `t_us`.

    Velocities slower than `v_min` are redrawn.
    """
    if n < 0:
        raise SceneSpecError(f"n must be >= 0 ({n})")
    rng = np.random.default_rng(seed)
    x = rng.integers(0, sensor[0], n)
    y = rng.integers(0, sensor[1], n)
    p = rng.integers(0, 2, n).astype(np.uint8)
    vx = rng.uniform(vel_range[0], vel_range[1], n)
    vy = rng.uniform(vel_range[0], vel_range[1], n)
    slow = np.flatnonzero(np.hypot(vx, vy) < v_min)
    while len(slow):
        vx[slow] = rng.uniform(vel_range[0], vel_range[1], len(slow))
        vy[slow] = rng.uniform(vel_range[0], vel_range[1], len(slow))
        slow = slow[np.hypot(vx[slow], vy[slow]) < v_min]
    return FlowBatch(
        x.astype(np.int64), y.astype(np.int64), np.full(n, t_us, dtype=np.int64), p, vx, vy
    )


def generate_random_events(
    n: int,
    vel_range: Tuple[float, float] = (-1000.0, 1000.0),
    sensor: Tuple[int, int] = (640, 480),
    seed: int = 0,
    v_min: float = 1.0,
    t_us: int = 0,
) -> List[FlowEvent]:
    """Same as `random_flow_batch()`, as `FlowEvent` tuples."""
    b = random_flow_batch(n, vel_range, sensor, seed, v_min, t_us)
    return [
        FlowEvent(Event(x, y, t, Polarity(p)), vx, vy)
        for x, y, t, p, vx, vy in zip(
            b.x.tolist(), b.y.tolist(), b.t.tolist(), b.p.tolist(), b.vx.tolist(), b.vy.tolist()
        )
    ]


# -----------------------------
# presets
# -----------------------------


def _bar_and_square(
    motion: Motion, square_motion: Optional[Motion] = None, square_y: float = 90.05
) -> Tuple[SceneObject, ...]:
    # edge offsets .05/.55 (bar) and .8/.3 (square) interleave the row crossings
    return (
        SceneObject("bar", 80.0, 12.5, 70.5, 90.3, motion),
        SceneObject("square", 40.5, 40.5, 170.5, square_y, square_motion or motion),
    )


PRESETS: Dict[str, SceneSpec] = {
    # bar and square oscillating vertically a quarter period apart, so one of them
    # is at full speed while the other reverses; plus a sparse noise floor
    "bar-square": SceneSpec(
        width=240,
        height=180,
        objects=_bar_and_square(
            Oscillation(0.0, 60.0, 0.5),
            square_motion=Oscillation(0.0, 60.0, 0.5, phase=math.pi / 2),
            square_y=150.05,
        ),
        duration_us=2 * US_PER_S,
        noise_rate=2000.0,
    ),
    # bar and square shuttling vertically at a constant 100 px/s
    "shuttle": SceneSpec(
        width=240,
        height=180,
        objects=_bar_and_square(
            PiecewiseVelocity(
                (
                    (250 * US_PER_MS, 0.0, 100.0),
                    (500 * US_PER_MS, 0.0, -100.0),
                    (500 * US_PER_MS, 0.0, 100.0),
                    (500 * US_PER_MS, 0.0, -100.0),
                    (250 * US_PER_MS, 0.0, 100.0),
                )
            )
        ),
        duration_us=2 * US_PER_S,
    ),
    # one tall bar translating right at 150 px/s
    "constant": SceneSpec(
        width=240,
        height=180,
        objects=(SceneObject("bar", 10.0, 60.0, 15.3, 90.5, PiecewiseVelocity.constant(150.0, 0.0)),),
        duration_us=1_400 * US_PER_MS,
    ),
}


def preset(name: str, duration_us: Optional[int] = None, seed: Optional[int] = None) -> SceneSpec:
    """Return a named scene, optionally with another duration or seed."""
    try:
        spec = PRESETS[name]
    except KeyError:
        raise SceneSpecError(f"Unknown preset: {name} (choose from {sorted(PRESETS)})")
    changes: Dict[str, int] = {}
    if duration_us is not None:
        changes["duration_us"] = duration_us
    if seed is not None:
        changes["seed"] = seed
    return dataclasses.replace(spec, **changes)


# -----------------------------
# scene text format
# -----------------------------


def _parse_number(key: str, raw: str, line: int) -> float:
    try:
        val = float(raw)
    except ValueError:
        raise SceneSpecError(f"{key}={raw!r} is not a number", line)
    if not math.isfinite(val):
        raise SceneSpecError(f"{key}={raw!r} is not finite", line)
    return val


def _parse_object(text: str, line: int) -> SceneObject:
    tokens = text.split()
    if not tokens:
        raise SceneSpecError("object without a shape", line)
    shape, fields = tokens[0], {}
    for tok in tokens[1:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise SceneSpecError(f"expected key=value, got {tok!r}", line)
        fields[key] = val

    def num(key: str, default: Optional[float] = None) -> float:
        if key not in fields:
            if default is None:
                raise SceneSpecError(f"object is missing {key}=", line)
            return default
        return _parse_number(key, fields[key], line)

    kind = fields.get("motion", "constant")
    motion: Motion
    if kind == "constant":
        motion = PiecewiseVelocity.constant(num("vx", 0.0), num("vy", 0.0))
    elif kind == "oscillate":
        motion = Oscillation(num("ax", 0.0), num("ay", 0.0), num("freq"), num("phase", 0.0))
    elif kind == "piecewise":
        segments = []
        for seg in fields.get("segments", "").split(";"):
            parts = seg.split(":")
            if len(parts) != 3:
                raise SceneSpecError(f"segment {seg!r} is not dur_ms:vx:vy", line)
            dur_ms, vx, vy = (_parse_number("segments", v, line) for v in parts)
            segments.append((round(dur_ms * US_PER_MS), vx, vy))
        motion = PiecewiseVelocity(tuple(segments))
    else:
        raise SceneSpecError(f"unknown motion {kind!r}", line)

    polarity = fields.get("polarity", "bright")
    if polarity not in ("bright", "dark"):
        raise SceneSpecError(f"polarity must be bright or dark ({polarity!r})", line)
    return SceneObject(
        shape, num("width"), num("height"), num("x"), num("y"), motion, polarity == "bright"
    )


def parse_scene(text: str) -> SceneSpec:
    """Parse the key=value scene format (see docs/formats.md)."""
    header: Dict[str, float] = {}
    objects: List[SceneObject] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise SceneSpecError(f"expected key = value, got {line!r}", line_no)
        if key == "object":
            objects.append(_parse_object(val, line_no))
        elif key in ("width", "height", "duration_ms", "noise_rate", "seed", "sample_us"):
            header[key] = _parse_number(key, val, line_no)
        else:
            raise SceneSpecError(f"unknown key {key!r}", line_no)

    for key in ("width", "height", "duration_ms"):
        if key not in header:
            raise SceneSpecError(f"scene is missing {key}")
    spec = SceneSpec(
        width=int(header["width"]),
        height=int(header["height"]),
        objects=tuple(objects),
        duration_us=round(header["duration_ms"] * US_PER_MS),
        noise_rate=header.get("noise_rate", 0.0),
        seed=int(header.get("seed", 0)),
        sample_us=int(header.get("sample_us", 10)),
    )
    validate_scene(spec)
    return spec


def format_scene(spec: SceneSpec) -> str:
    """Render `spec` in the format `parse_scene()` reads."""
    lines = [
        f"width = {spec.width}",
        f"height = {spec.height}",
        f"duration_ms = {spec.duration_us / US_PER_MS:g}",
        f"noise_rate = {spec.noise_rate:g}",
        f"seed = {spec.seed}",
        f"sample_us = {spec.sample_us}",
    ]
    for obj in spec.objects:
        head = f"object = {obj.shape} width={obj.width!r} height={obj.height!r} x={obj.x!r} y={obj.y!r}"
        m = obj.motion
        if isinstance(m, Oscillation):
            tail = f"motion=oscillate ax={m.amplitude_x!r} ay={m.amplitude_y!r} freq={m.frequency_hz!r} phase={m.phase!r}"
        elif len(m.segments) == 1:
            tail = f"motion=constant vx={m.segments[0][1]!r} vy={m.segments[0][2]!r}"
        else:
            segs = ";".join(f"{d / US_PER_MS!r}:{vx!r}:{vy!r}" for d, vx, vy in m.segments)
            tail = f"motion=piecewise segments={segs}"
        if not obj.bright:
            tail += " polarity=dark"
        lines.append(f"{head} {tail}")
    return "\n".join(lines) + "\n"


def read_scene(path: Union[str, Path]) -> SceneSpec:
    """Read a scene file."""
    return parse_scene(Path(path).read_text())


def scene_names() -> Sequence[str]:
    """Preset names."""
    return sorted(PRESETS)
