"""Event data model and codec configuration shared by every module."""

import dataclasses
import enum
import math
from typing import Any, Iterable, Iterator, List, NamedTuple, Tuple

import numpy as np

US_PER_MS = 1_000
US_PER_S = 1_000_000

COORD_LIMIT = 1 << 14  # x and y each get 14 bits on the wire
TIMESTAMP_LIMIT = 1 << 32
PT_MS_LIMIT = (1 << 14) - 1  # SendEnd carries PT in ms in a 14-bit field

# numpy record layout used for bulk event storage
EVENT_DTYPE = np.dtype([("x", "<i4"), ("y", "<i4"), ("t", "<i8"), ("p", "u1")])

CANDIDATE_MODES = ("scan", "bresenham")


class FBCError(Exception):
    """Base class for every error raised by fbc."""


class ConfigError(FBCError, ValueError):
    """Raised when a configuration value is out of its legal range."""


class Polarity(enum.IntEnum):
    """Sign of the log-intensity change reported by a pixel."""

    OFF = 0
    ON = 1


class Event(NamedTuple):
    """One sensor spike."""

    x: int
    y: int
    t: int  # microseconds
    p: Polarity


class FlowEvent(NamedTuple):
    """An event carrying a velocity estimate in pixels/second."""

    event: Event
    vx: float
    vy: float

    @property
    def x(self) -> int:
        """Pixel column of the underlying event."""
        return self.event.x

    @property
    def y(self) -> int:
        """Pixel row of the underlying event."""
        return self.event.y

    @property
    def t(self) -> int:
        """Timestamp (µs) of the underlying event."""
        return self.event.t

    @property
    def p(self) -> Polarity:
        """Polarity of the underlying event."""
        return self.event.p


def flow_magnitude(fe: FlowEvent) -> float:
    """Return the speed of `fe` in pixels/second."""
    return math.hypot(fe.vx, fe.vy)


@dataclasses.dataclass(frozen=True)
class CodecConfig:
    """Parameters shared by the transmitter and the receiver.

    Args:
        predict_time_us: PT, length of every predicting phase
        pixel_slack: ξ, max distance (px) between a trajectory and a predicted pixel center
        calibration_count: C, flow samples per send-time calibration
        initial_send_time_us: ST used until the first calibration
        sensor_width: pixels
        sensor_height: pixels
        v_min: slower flow is treated as no flow (px/s)
        v_max: largest velocity component representable on the wire (px/s)
        min_calibration_count: fewest samples a phase needs to recalibrate at its end
        time_tolerance_us: how far an input timestamp may step backwards
        parallelism: receiver worker threads
        sort_interval_us: receiver micro-batch sort interval (0 sorts once per window)
        candidate_mode: receiver pixel rasterizer, "scan" or "bresenham"
    """

    predict_time_us: int = 30 * US_PER_MS
    pixel_slack: float = 0.4
    calibration_count: int = 500
    initial_send_time_us: int = 10 * US_PER_MS
    sensor_width: int = 640
    sensor_height: int = 480
    v_min: float = 1.0
    v_max: float = 2047.0
    min_calibration_count: int = 50
    time_tolerance_us: int = 0
    parallelism: int = 1
    sort_interval_us: int = 0
    candidate_mode: str = "scan"

    def __post_init__(self) -> None:
        if self.predict_time_us <= 0:
            raise ConfigError(f"predict_time_us must be positive ({self.predict_time_us})")
        if self.predict_time_us % US_PER_MS:
            raise ConfigError(
                f"predict_time_us must be a whole number of milliseconds ({self.predict_time_us})"
            )
        if self.predict_time_us // US_PER_MS > PT_MS_LIMIT:
            raise ConfigError(f"predict_time_us exceeds {PT_MS_LIMIT} ms ({self.predict_time_us})")
        if not self.pixel_slack > 0:
            raise ConfigError(f"pixel_slack must be positive ({self.pixel_slack})")
        if self.calibration_count <= 0:
            raise ConfigError(f"calibration_count must be positive ({self.calibration_count})")
        if self.min_calibration_count <= 0:
            raise ConfigError(
                f"min_calibration_count must be positive ({self.min_calibration_count})"
            )
        if self.initial_send_time_us <= 0:
            raise ConfigError(
                f"initial_send_time_us must be positive ({self.initial_send_time_us})"
            )
        for name in ("sensor_width", "sensor_height"):
            val = getattr(self, name)
            if not 0 < val <= COORD_LIMIT:
                raise ConfigError(f"{name} must be in (0, {COORD_LIMIT}] ({val})")
        if not 0 <= self.v_min <= self.v_max:
            raise ConfigError(f"need 0 <= v_min <= v_max ({self.v_min}, {self.v_max})")
        if self.time_tolerance_us < 0:
            raise ConfigError(f"time_tolerance_us must be >= 0 ({self.time_tolerance_us})")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1 ({self.parallelism})")
        if self.sort_interval_us < 0:
            raise ConfigError(f"sort_interval_us must be >= 0 ({self.sort_interval_us})")
        if self.candidate_mode not in CANDIDATE_MODES:
            raise ConfigError(
                f"candidate_mode must be one of {CANDIDATE_MODES} ({self.candidate_mode!r})"
            )

    @property
    def predict_time_ms(self) -> int:
        """PT in whole milliseconds, as carried by SendEnd."""
        return self.predict_time_us // US_PER_MS

    def replace(self, **changes: Any) -> "CodecConfig":
        """Return a copy with `changes` applied (and re-validated)."""
        return dataclasses.replace(self, **changes)


class EventStream:
    """Time-ordered events of one sensor.

    Events are held in a read-only numpy record array (`EVENT_DTYPE`).
    Iterating yields `Event` tuples.
    """

    def __init__(self, events: Any, sensor_width: int, sensor_height: int) -> None:
        arr = np.array(events, dtype=EVENT_DTYPE, copy=True).reshape(-1)
        arr.flags.writeable = False
        self.events = arr
        self.sensor_width = int(sensor_width)
        self.sensor_height = int(sensor_height)

    @classmethod
    def from_events(
        cls, events: Iterable[Event], sensor_width: int, sensor_height: int
    ) -> "EventStream":
        """Build a stream from `Event` tuples (kept in the given order)."""
        records = [(e.x, e.y, e.t, int(e.p)) for e in events]
        return cls(np.array(records, dtype=EVENT_DTYPE), sensor_width, sensor_height)

    @classmethod
    def empty(cls, sensor_width: int, sensor_height: int) -> "EventStream":
        """Return a stream without events."""
        return cls(np.empty(0, dtype=EVENT_DTYPE), sensor_width, sensor_height)

    @property
    def x(self) -> np.ndarray:
        return self.events["x"]

    @property
    def y(self) -> np.ndarray:
        return self.events["y"]

    @property
    def t(self) -> np.ndarray:
        return self.events["t"]

    @property
    def p(self) -> np.ndarray:
        return self.events["p"]

    @property
    def geometry(self) -> Tuple[int, int]:
        """(sensor_width, sensor_height)."""
        return self.sensor_width, self.sensor_height

    def sorted(self) -> "EventStream":
        """Return a copy ordered by timestamp (ties keep their order)."""
        order = np.argsort(self.events["t"], kind="stable")
        return EventStream(self.events[order], self.sensor_width, self.sensor_height)

    def is_sorted(self) -> bool:
        """Return True if timestamps are non-decreasing."""
        return bool(np.all(np.diff(self.events["t"]) >= 0))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in self.events.tolist():
            yield Event(x, y, t, Polarity(p))

    def __getitem__(self, index: int) -> Event:
        x, y, t, p = self.events[index].tolist()
        return Event(x, y, t, Polarity(p))

    def __eq__(self, other: object) -> bool:
        """Return True if geometry and every event match, in order."""
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and len(self) == len(other)
            and bool(np.array_equal(self.events, other.events))
        )

    def __repr__(self) -> str:
        """Return string of basic properties/attributes."""
        span = f"t=[{self.t[0]}, {self.t[-1]}]" if len(self) else "empty"
        return (
            f"EventStream(n={len(self)}, sensor={self.sensor_width}x{self.sensor_height}, {span})"
        )


class StreamViolation(NamedTuple):
    """One broken rule found by `validate_stream()`."""

    index: int
    rule: str  # "bounds", "timestamp", "polarity", or "ordering"
    detail: str


def validate_stream(stream: EventStream) -> List[StreamViolation]:
    """Check every event invariant and the temporal ordering of `stream`.

    Violations are returned ordered by index; an empty list means the
    stream is valid.
    """
    x = stream.x.astype(np.int64)
    y = stream.y.astype(np.int64)
    t = stream.t
    p = stream.p
    found: List[StreamViolation] = []

    bad_xy = (x < 0) | (x >= stream.sensor_width) | (y < 0) | (y >= stream.sensor_height)
    for i in np.flatnonzero(bad_xy).tolist():
        found.append(
            StreamViolation(
                i,
                "bounds",
                f"({x[i]}, {y[i]}) outside {stream.sensor_width}x{stream.sensor_height}",
            )
        )
    for i in np.flatnonzero((t < 0) | (t >= TIMESTAMP_LIMIT)).tolist():
        found.append(StreamViolation(i, "timestamp", f"t={t[i]} does not fit in 32 bits"))
    for i in np.flatnonzero(p > 1).tolist():
        found.append(StreamViolation(i, "polarity", f"p={p[i]} is not ON/OFF"))
    if len(t) > 1:
        for i in (np.flatnonzero(np.diff(t) < 0) + 1).tolist():
            found.append(StreamViolation(i, "ordering", f"t={t[i]} < previous t={t[i - 1]}"))

    found.sort(key=lambda v: v.index)
    return found


def as_event(obj: Any) -> Event:
    """Coerce an (x, y, t, p) record or tuple into an `Event`."""
    x, y, t, p = (int(v) for v in obj)
    return Event(x, y, t, Polarity(p))
