"""Decompressor: predicts events along received flow and rebuilds the stream."""

import dataclasses
import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from . import log_msgs
from .model import (
    CANDIDATE_MODES,
    EVENT_DTYPE,
    US_PER_S,
    CodecConfig,
    ConfigError,
    Event,
    EventStream,
    FBCError,
    FlowEvent,
)
from .wire import FlowEventPkt, Packet, PlainEvent, SendEnd, SendStart

LOGGER = logging.getLogger("fbc.receiver")

CHUNK_SIZE = 4096  # flow events per prediction task


class ProtocolError(FBCError, ValueError):
    """Raised when the packet sequence breaks phase alternation."""

    def __init__(self, msg: str, index: int) -> None:
        super().__init__(f"{msg} (packet #{index})")
        self.index = index


class ZeroVelocityError(FBCError, ValueError):
    """Raised when a trajectory has no direction."""


class PredictionWindow(NamedTuple):
    """The predicting phase following a SendEnd."""

    send_end: int  # µs
    predict_time: int  # PT, µs


# -----------------------------
# geometry
# -----------------------------


def modified_bresenham(x0: int, y0: int, x1: int, y1: int) -> List[Tuple[int, int]]:
    """Return the thickened line from (x0, y0) to (x1, y1).

    Each step adds the pixel reached and its diagonal partner on the
    other side of the line. The start pixel is excluded and duplicates
    are dropped (first occurrence wins).
    """
    x_dist = abs(x1 - x0)
    y_dist = -abs(y1 - y0)
    x_step = 1 if x0 < x1 else -1
    y_step = 1 if y0 < y1 else -1
    error = x_dist + y_dist

    start = (x0, y0)
    seen = {start}
    line: List[Tuple[int, int]] = []

    def add(px: Tuple[int, int]) -> None:
        if px not in seen:
            seen.add(px)
            line.append(px)

    while (x0, y0) != (x1, y1):
        if 2 * error - y_dist > x_dist - 2 * error:
            error += y_dist
            x0 += x_step
            add((x0, y0))
            add((x0 - x_step, y0 + y_step))
        else:
            error += x_dist
            y0 += y_step
            add((x0, y0))
            add((x0 + x_step, y0 - y_step))
    return line


def t_min(vx: float, vy: float, xp: float, yp: float) -> float:
    """Time (s) at which the trajectory from the origin passes closest to (xp, yp)."""
    denom = 2 * vx * vx + 2 * vy * vy
    if denom == 0:
        raise ZeroVelocityError("trajectory with zero velocity has no closest time")
    return (2 * vy * yp + 2 * vx * xp) / denom


def min_dist_sq(vx: float, vy: float, xp: float, yp: float, t: float) -> float:
    """Squared distance (px²) between (xp, yp) and the trajectory at time `t` (s)."""
    return (vx * t - xp) ** 2 + (vy * t - yp) ** 2


# -----------------------------
# batched prediction
# -----------------------------


@dataclasses.dataclass(frozen=True)
class FlowBatch:
    """Flow events as parallel arrays."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    vx: np.ndarray
    vy: np.ndarray

    @classmethod
    def from_flow_events(cls, flow_events: Sequence[FlowEvent]) -> "FlowBatch":
        """Pack `FlowEvent` tuples."""
        n = len(flow_events)
        return cls(
            np.fromiter((fe.x for fe in flow_events), dtype=np.int64, count=n),
            np.fromiter((fe.y for fe in flow_events), dtype=np.int64, count=n),
            np.fromiter((fe.t for fe in flow_events), dtype=np.int64, count=n),
            np.fromiter((int(fe.p) for fe in flow_events), dtype=np.uint8, count=n),
            np.fromiter((fe.vx for fe in flow_events), dtype=np.float64, count=n),
            np.fromiter((fe.vy for fe in flow_events), dtype=np.float64, count=n),
        )

    def __len__(self) -> int:
        return len(self.x)

    def take(self, index: Union[slice, np.ndarray]) -> "FlowBatch":
        """Return the flow events at `index`."""
        return FlowBatch(
            *(getattr(self, f.name)[index] for f in dataclasses.fields(self))
        )


def _scan_candidates(
    batch: FlowBatch, win: PredictionWindow, xi: float, sensor_width: int, sensor_height: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (flow index, xp, yp) for every candidate pixel of every flow event.

    Walks the dominant axis of the real trajectory one column at a time
    and takes every minor-axis pixel within xi*sqrt(2) of it, which holds
    every pixel center closer than xi to the trajectory. Columns whose
    candidates all lie off the sensor are not generated.
    """
    n = len(batch)
    major_is_x = np.abs(batch.vx) >= np.abs(batch.vy)
    v_major = np.where(major_is_x, batch.vx, batch.vy)
    v_minor = np.where(major_is_x, batch.vy, batch.vx)
    step = np.where(v_major < 0, -1, 1)
    slope = v_minor / v_major

    duration = (win.send_end + win.predict_time - batch.t).astype(np.float64)
    reach = np.abs(v_major) * (duration + 0.5) / US_PER_S
    w = xi * math.sqrt(2)
    fw = math.floor(w)

    # major axis: the column itself must be on the sensor
    o_major = np.where(major_is_x, batch.x, batch.y)
    o_minor = np.where(major_is_x, batch.y, batch.x)
    size_major = np.where(major_is_x, sensor_width, sensor_height)
    size_minor = np.where(major_is_x, sensor_height, sensor_width)
    lo = np.maximum(-math.floor(xi), np.where(step > 0, -o_major, o_major - size_major + 1))
    hi = np.minimum(np.floor(reach + xi), np.where(step > 0, size_major - 1 - o_major, o_major))

    # minor axis: the column's center drifts by k px per column, one column of margin
    k = step * slope
    below = (-o_minor - fw - 1).astype(np.float64)
    above = (size_minor - o_minor + fw).astype(np.float64)
    with np.errstate(divide="ignore", over="ignore"):
        first = np.where(k > 0, below / k, above / k)
        last = np.where(k > 0, above / k, below / k)
    drifts = k != 0
    lo = np.where(drifts, np.maximum(lo, np.floor(first) - 1), lo)
    hi = np.where(drifts, np.minimum(hi, np.ceil(last) + 1), hi)
    a_lo = lo.astype(np.int64)
    n_cols = np.maximum(hi.astype(np.int64) - a_lo + 1, 0)

    total = int(n_cols.sum())
    flow_idx = np.repeat(np.arange(n), n_cols)
    starts = np.cumsum(n_cols) - n_cols
    col = np.arange(total, dtype=np.int64) - np.repeat(starts - a_lo, n_cols)
    major = col * step[flow_idx]
    center = np.floor(major * slope[flow_idx]).astype(np.int64)

    offsets = np.arange(-fw, fw + 2, dtype=np.int64)
    flow_idx = np.repeat(flow_idx, len(offsets))
    major = np.repeat(major, len(offsets))
    minor = (center[:, np.newaxis] + offsets[np.newaxis, :]).reshape(-1)

    on_x = major_is_x[flow_idx]
    xp = np.where(on_x, major, minor)
    yp = np.where(on_x, minor, major)
    not_origin = (xp != 0) | (yp != 0)
    return flow_idx[not_origin], xp[not_origin], yp[not_origin]


def _bresenham_candidates(
    batch: FlowBatch, win: PredictionWindow
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (flow index, xp, yp) from `modified_bresenham` to the ceil'd endpoint."""
    idx: List[int] = []
    xps: List[int] = []
    yps: List[int] = []
    for i in range(len(batch)):
        duration_s = (win.send_end + win.predict_time - int(batch.t[i])) / US_PER_S
        end_x = math.ceil(float(batch.vx[i]) * duration_s)
        end_y = math.ceil(float(batch.vy[i]) * duration_s)
        for xp, yp in modified_bresenham(0, 0, end_x, end_y):
            idx.append(i)
            xps.append(xp)
            yps.append(yp)
    return (
        np.array(idx, dtype=np.int64),
        np.array(xps, dtype=np.int64),
        np.array(yps, dtype=np.int64),
    )


def _predict_chunk(
    batch: FlowBatch,
    win: PredictionWindow,
    xi: float,
    sensor_width: int,
    sensor_height: int,
    mode: str,
) -> np.ndarray:
    if mode == "scan":
        flow_idx, xp_i, yp_i = _scan_candidates(batch, win, xi, sensor_width, sensor_height)
    else:
        flow_idx, xp_i, yp_i = _bresenham_candidates(batch, win)

    vx = batch.vx[flow_idx]
    vy = batch.vy[flow_idx]
    xp = xp_i.astype(np.float64)
    yp = yp_i.astype(np.float64)

    # closest approach along the trajectory, then the distance at that time
    tmin = (vy * yp + vx * xp) / (vx * vx + vy * vy)
    dx = vx * tmin - xp
    dy = vy * tmin - yp
    d2 = dx * dx + dy * dy
    t_pred = np.floor(batch.t[flow_idx] + tmin * US_PER_S + 0.5).astype(np.int64)

    x = batch.x[flow_idx] + xp_i
    y = batch.y[flow_idx] + yp_i
    keep = (
        (d2 < xi * xi)
        & (t_pred > win.send_end)
        & (t_pred <= win.send_end + win.predict_time)
        & (x >= 0)
        & (x < sensor_width)
        & (y >= 0)
        & (y < sensor_height)
    )

    out = np.empty(int(np.count_nonzero(keep)), dtype=EVENT_DTYPE)
    out["x"] = x[keep]
    out["y"] = y[keep]
    out["t"] = t_pred[keep]
    out["p"] = batch.p[flow_idx][keep]
    return out


def _as_batch(flow_events: Union[FlowBatch, Sequence[FlowEvent]]) -> FlowBatch:
    if isinstance(flow_events, FlowBatch):
        return flow_events
    return FlowBatch.from_flow_events(flow_events)


def predict_unsorted(
    flow_events: Union[FlowBatch, Sequence[FlowEvent]],
    win: PredictionWindow,
    xi: float,
    sensor_width: int,
    sensor_height: int,
    parallelism: int = 1,
    v_min: float = 1.0,
    mode: str = "scan",
) -> np.ndarray:
    """Predict every flow event, concatenated in input order (`EVENT_DTYPE` records).

    Flow events slower than `v_min` (or standing still) predict nothing.
    """
    if mode not in CANDIDATE_MODES:
        raise ConfigError(f"candidate mode must be one of {CANDIDATE_MODES} ({mode!r})")
    batch = _as_batch(flow_events)
    speed = np.hypot(batch.vx, batch.vy)
    moving = (speed >= v_min) & (speed > 0)
    if not np.all(moving):
        LOGGER.debug(f"{log_msgs.RX_SLOW_FLOW_SKIPPED} ({int(np.count_nonzero(~moving))})")
        batch = batch.take(moving)
    if not len(batch):
        return np.empty(0, dtype=EVENT_DTYPE)

    chunks = [batch.take(slice(i, i + CHUNK_SIZE)) for i in range(0, len(batch), CHUNK_SIZE)]

    def work(chunk: FlowBatch) -> np.ndarray:
        return _predict_chunk(chunk, win, xi, sensor_width, sensor_height, mode)

    if parallelism > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return np.concatenate(parts)


def _stable_order(key: np.ndarray) -> np.ndarray:
    """Stable argsort of non-negative keys below 2**32.

    Two 16-bit passes, low half first, each a stable (radix) argsort.
    """
    order = np.argsort((key & 0xFFFF).astype(np.uint16), kind="stable")
    high = (key >> 16).astype(np.uint16)
    if high.any():
        order = order[np.argsort(high[order], kind="stable")]
    return order


def sort_predictions(
    predicted: np.ndarray, win: PredictionWindow, sort_interval_us: int = 0
) -> np.ndarray:
    """Order predictions by time; ties keep generation order.

    The sort key is the offset from the start of the predicting phase. With
    `sort_interval_us` > 0 the window is cut into fixed intervals that are
    sorted one after the other, as a streaming receiver would. The result is
    the same either way.
    """
    if not len(predicted):
        return predicted
    key = predicted["t"] - (win.send_end + 1)
    if key.min() < 0 or key.max() >= 1 << 32:
        return predicted[np.argsort(predicted["t"], kind="stable")]
    if sort_interval_us <= 0:
        return predicted[_stable_order(key)]

    bucket = key // sort_interval_us
    order = _stable_order(bucket)
    key = key[order]
    bounds = np.flatnonzero(np.diff(bucket[order])) + 1
    parts = [
        order[idx][_stable_order(key[idx])]
        for idx in np.split(np.arange(len(order)), bounds)
    ]
    return predicted[np.concatenate(parts)]


def rx_predict_batch(
    flow_events: Union[FlowBatch, Sequence[FlowEvent]],
    win: PredictionWindow,
    xi: float,
    sensor_width: int,
    sensor_height: int,
    parallelism: int = 1,
    v_min: float = 1.0,
    mode: str = "scan",
    sort_interval_us: int = 0,
) -> EventStream:
    """Predict a whole window and sort it.

    The output does not depend on `parallelism` or `sort_interval_us`.
    """
    LOGGER.debug(f"{log_msgs.RX_BATCH_START} ({len(flow_events)} flow events, {win})")
    predicted = predict_unsorted(
        flow_events, win, xi, sensor_width, sensor_height, parallelism, v_min, mode
    )
    predicted = sort_predictions(predicted, win, sort_interval_us)
    LOGGER.debug(f"{log_msgs.RX_BATCH_DONE} ({len(predicted)} events)")
    return EventStream(predicted, sensor_width, sensor_height)


def predict_events(
    fe: FlowEvent,
    win: PredictionWindow,
    xi: float,
    sensor_width: int,
    sensor_height: int,
    v_min: float = 1.0,
    mode: str = "scan",
) -> List[Event]:
    """Predict the events one flow event causes during `win`, in time order."""
    stream = rx_predict_batch([fe], win, xi, sensor_width, sensor_height, v_min=v_min, mode=mode)
    return list(stream)


# -----------------------------
# stream reconstruction
# -----------------------------


class _Phase(enum.Enum):
    IDLE = enum.auto()  # before the first SendStart
    SENDING = enum.auto()
    PREDICTING = enum.auto()


def _records(events: List[Event]) -> np.ndarray:
    return np.array([(e.x, e.y, e.t, int(e.p)) for e in events], dtype=EVENT_DTYPE)


class Receiver:
    """Consumes packets one at a time and accumulates the reconstructed stream.

    Args:
        cfg: codec parameters shared with the transmitter (PT is taken
             from each SendEnd instead)
    """

    def __init__(self, cfg: CodecConfig) -> None:
        self.cfg = cfg
        self._phase = _Phase.IDLE
        self._send_start_t = 0
        self._last_marker_t: Optional[int] = None
        self._sent: List[Event] = []
        self._flows: List[FlowEvent] = []
        self._plain_while_predicting: List[Event] = []
        self._predicted = np.empty(0, dtype=EVENT_DTYPE)
        self._cycles: List[np.ndarray] = []

        self.n_predicted = 0
        self.n_cycles = 0

    def _check_marker_time(self, t: int, index: int) -> None:
        if self._last_marker_t is not None and t < self._last_marker_t:
            raise ProtocolError(
                f"marker time {t} precedes previous marker time {self._last_marker_t}", index
            )
        self._last_marker_t = t

    def _flush(self) -> None:
        merged = np.concatenate(
            [_records(self._sent), _records(self._plain_while_predicting), self._predicted]
        )
        self._cycles.append(merged[np.argsort(merged["t"], kind="stable")])
        LOGGER.debug(f"{log_msgs.RX_CYCLE_FLUSHED} (#{self.n_cycles}, {len(merged)} events)")
        self._sent = []
        self._flows = []
        self._plain_while_predicting = []
        self._predicted = np.empty(0, dtype=EVENT_DTYPE)

    def feed(self, pkt: Packet, index: int) -> None:
        """Consume packet number `index`."""
        if isinstance(pkt, SendStart):
            if self._phase is _Phase.SENDING:
                raise ProtocolError("SendStart inside a sending phase", index)
            self._check_marker_time(pkt.t, index)
            if self._phase is _Phase.PREDICTING:
                self._flush()
            self._phase = _Phase.SENDING
            self._send_start_t = pkt.t
            self.n_cycles += 1

        elif isinstance(pkt, SendEnd):
            if self._phase is not _Phase.SENDING:
                raise ProtocolError("SendEnd outside a sending phase", index)
            if pkt.t <= self._send_start_t:
                raise ProtocolError(
                    f"SendEnd at {pkt.t} does not follow SendStart at {self._send_start_t}", index
                )
            self._check_marker_time(pkt.t, index)
            win = PredictionWindow(pkt.t, pkt.predict_time_us)
            predicted = predict_unsorted(
                self._flows,
                win,
                self.cfg.pixel_slack,
                self.cfg.sensor_width,
                self.cfg.sensor_height,
                self.cfg.parallelism,
                self.cfg.v_min,
                self.cfg.candidate_mode,
            )
            self._predicted = sort_predictions(predicted, win, self.cfg.sort_interval_us)
            self.n_predicted += len(self._predicted)
            LOGGER.debug(
                f"{log_msgs.RX_WINDOW_PREDICTED} ({len(self._flows)} flow events -> "
                f"{len(self._predicted)} predictions, {win})"
            )
            self._phase = _Phase.PREDICTING

        elif isinstance(pkt, PlainEvent):
            if self._phase is _Phase.IDLE:
                raise ProtocolError("event before the first SendStart", index)
            if self._phase is _Phase.SENDING:
                self._sent.append(pkt.event)
            else:
                self._plain_while_predicting.append(pkt.event)

        elif isinstance(pkt, FlowEventPkt):
            if self._phase is _Phase.IDLE:
                raise ProtocolError("event before the first SendStart", index)
            if self._phase is _Phase.PREDICTING:
                raise ProtocolError("flow event inside a predicting phase", index)
            self._sent.append(pkt.event)
            self._flows.append(pkt.flow)

        else:
            raise TypeError(f"not a packet: {pkt!r}")

    def finish(self) -> EventStream:
        """Flush the last cycle and return everything reconstructed."""
        if self._phase is _Phase.SENDING and self._flows:
            LOGGER.debug(f"{log_msgs.RX_TRAILING_SENDING_PHASE} ({len(self._flows)} flow events)")
        if self._phase is not _Phase.IDLE:
            self._flush()
        self._phase = _Phase.IDLE

        out = EventStream(
            np.concatenate(self._cycles) if self._cycles else np.empty(0, dtype=EVENT_DTYPE),
            self.cfg.sensor_width,
            self.cfg.sensor_height,
        )
        self._cycles = []
        if not out.is_sorted():
            out = out.sorted()
        LOGGER.debug(f"{log_msgs.RX_DONE} ({len(out)} events, {self.n_predicted} predicted)")
        return out


def reconstruct(packets: Iterable[Packet], cfg: CodecConfig) -> EventStream:
    """Rebuild the event stream from a packet sequence."""
    rx = Receiver(cfg)
    for index, pkt in enumerate(packets):
        rx.feed(pkt, index)
    return rx.finish()
