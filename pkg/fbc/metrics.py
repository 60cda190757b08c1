"""Evaluation measures: event reduction, compression ratio, stream distance, timing error."""

import csv
import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import ClassVar, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from . import log_msgs
from . import telemetry as wtt
from .model import ConfigError, EventStream, FBCError
from .wire import Packet, payload_byte_count, wire_size

LOGGER = logging.getLogger("fbc.metrics")

PLAIN_BYTES = 8
FLOW_BYTES = 11

_BLOCK_ELEMS = 1 << 22  # kernel matrix entries evaluated at once


class MetricsError(FBCError, ValueError):
    """Raised when a measure is undefined for its inputs."""


@dataclasses.dataclass(frozen=True)
class MetricParams:
    """Kernel widths, cube partitioning, and the timing-error window.

    `cube_w`/`cube_h` of None mean the whole sensor.
    """

    sigma_x: float = 5.0  # px
    sigma_y: float = 5.0  # px
    sigma_t: float = 5000.0  # µs
    cube_w: Optional[int] = None
    cube_h: Optional[int] = None
    cube_len: int = 5000  # µs
    te_window: int = 1  # px radius
    parallelism: int = 1

    def __post_init__(self) -> None:
        for name in ("sigma_x", "sigma_y", "sigma_t"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive ({getattr(self, name)})")
        for name in ("cube_w", "cube_h"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ConfigError(f"{name} must be positive ({val})")
        if self.cube_len <= 0:
            raise ConfigError(f"cube_len must be positive ({self.cube_len})")
        if self.te_window < 0:
            raise ConfigError(f"te_window must be >= 0 ({self.te_window})")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1 ({self.parallelism})")


# -----------------------------
# counting measures
# -----------------------------


def event_reduction(n_s: int, n_tx: int) -> float:
    """Fraction of source events that were not transmitted."""
    if n_s <= 0:
        raise MetricsError(f"event reduction needs source events (N_s={n_s})")
    if not 0 <= n_tx <= n_s:
        raise MetricsError(f"need 0 <= N_tx <= N_s (N_tx={n_tx}, N_s={n_s})")
    return (n_s - n_tx) / n_s


def compression_ratio(n_s: int, n_tx: int, n_nf: int) -> float:
    """Source bytes over transmitted event bytes (8 per plain, 11 per flow event)."""
    if n_tx <= 0:
        raise MetricsError(f"compression ratio is undefined without transmitted events (N_tx={n_tx})")
    if not 0 <= n_nf <= n_tx <= n_s:
        raise MetricsError(f"need 0 <= N_nf <= N_tx <= N_s ({n_nf}, {n_tx}, {n_s})")
    return (n_s * PLAIN_BYTES) / ((n_tx - n_nf) * FLOW_BYTES + n_nf * PLAIN_BYTES)


# -----------------------------
# spatiotemporal distance
# -----------------------------


class CubeDistance(NamedTuple):
    """Distance between two streams inside one event cube."""

    index: int
    t_start_us: int
    x0: int
    y0: int
    raw: float
    distance: float  # raw / max(1, original events in the cube)


def _scaled(events: np.ndarray, params: MetricParams, t0: int) -> Tuple[np.ndarray, ...]:
    # coordinates divided by sqrt(2)*sigma, so the kernel is exp(-squared distance)
    return (
        events["x"] / (math.sqrt(2) * params.sigma_x),
        events["y"] / (math.sqrt(2) * params.sigma_y),
        (events["t"] - t0) / (math.sqrt(2) * params.sigma_t),
    )


def _kernel_sum(a: np.ndarray, b: np.ndarray, params: MetricParams, t0: int) -> float:
    """Sum of the kernel over all same-polarity pairs of `a` x `b`."""
    total = 0.0
    for pol in (0, 1):
        ea = a[a["p"] == pol]
        eb = b[b["p"] == pol]
        if not len(ea) or not len(eb):
            continue
        ax, ay, at = _scaled(ea, params, t0)
        bx, by, bt = _scaled(eb, params, t0)
        block = max(1, _BLOCK_ELEMS // len(eb))
        for i in range(0, len(ea), block):
            sl = slice(i, i + block)
            sq = (
                (ax[sl, np.newaxis] - bx) ** 2
                + (ay[sl, np.newaxis] - by) ** 2
                + (at[sl, np.newaxis] - bt) ** 2
            )
            total += float(np.exp(-sq).sum())
    return total


def _cube_raw_distance(a: np.ndarray, b: np.ndarray, params: MetricParams, t0: int) -> float:
    aa = _kernel_sum(a, a, params, t0)
    bb = _kernel_sum(b, b, params, t0)
    ab = _kernel_sum(a, b, params, t0)
    return math.sqrt(max(0.0, aa + bb - 2 * ab))


def _cube_ids(
    stream: EventStream, params: MetricParams, nx: int, ny: int
) -> np.ndarray:
    cw = params.cube_w or stream.sensor_width
    ch = params.cube_h or stream.sensor_height
    t_bin = stream.t // params.cube_len
    return (t_bin * ny + stream.y.astype(np.int64) // ch) * nx + stream.x.astype(np.int64) // cw


def _group(events: np.ndarray, ids: np.ndarray) -> Iterator[Tuple[int, np.ndarray]]:
    order = np.argsort(ids, kind="stable")
    ids = ids[order]
    events = events[order]
    bounds = np.flatnonzero(np.diff(ids)) + 1
    for part_ids, part in zip(np.split(ids, bounds), np.split(events, bounds)):
        if len(part):
            yield int(part_ids[0]), part


def _check_geometry(orig: EventStream, recon: EventStream) -> None:
    if orig.geometry != recon.geometry:
        raise MetricsError(f"sensor geometry differs: {orig.geometry} vs {recon.geometry}")


def astsm_distance(
    orig: EventStream, recon: EventStream, params: MetricParams = MetricParams()
) -> List[CubeDistance]:
    """Kernel distance between two streams, one value per non-empty event cube.

    Cubes are ordered by index (time-major); a cube empty in both streams
    is skipped.
    """
    _check_geometry(orig, recon)
    width, height = orig.geometry
    cw = params.cube_w or width
    ch = params.cube_h or height
    nx = -(-width // cw)
    ny = -(-height // ch)

    cubes_a = dict(_group(orig.events, _cube_ids(orig, params, nx, ny)))
    cubes_b = dict(_group(recon.events, _cube_ids(recon, params, nx, ny)))
    indices = sorted(set(cubes_a) | set(cubes_b))
    LOGGER.debug(f"{log_msgs.METRICS_CUBES} ({len(indices)} cubes)")

    empty = orig.events[:0]

    def one(index: int) -> CubeDistance:
        a = cubes_a.get(index, empty)
        b = cubes_b.get(index, empty)
        t_start = (index // (nx * ny)) * params.cube_len
        raw = _cube_raw_distance(a, b, params, t_start)
        return CubeDistance(
            index,
            t_start,
            (index % nx) * cw,
            ((index // nx) % ny) * ch,
            raw,
            raw / max(1, len(a)),
        )

    if params.parallelism > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=params.parallelism) as pool:
            return list(pool.map(one, indices))
    return [one(i) for i in indices]


# -----------------------------
# temporal error
# -----------------------------


class TemporalError(NamedTuple):
    """Timing error of reconstructed events against the original stream."""

    mean: float  # µs, NaN when nothing matched
    median: float  # µs, NaN when nothing matched
    unmatched: int
    matched: int


def temporal_error(orig: EventStream, recon: EventStream, te_window: int = 1) -> TemporalError:
    """Match every reconstructed event to the closest-in-time original event nearby.

    "Nearby" is the (2*te_window+1)^2 pixel window, any polarity.
    """
    _check_geometry(orig, recon)
    width, height = orig.geometry
    if not len(recon):
        return TemporalError(math.nan, math.nan, 0, 0)

    keys = np.sort((orig.y.astype(np.int64) * width + orig.x) << np.int64(32) | orig.t)
    pix_of_key = keys >> np.int64(32)

    rx = recon.x.astype(np.int64)
    ry = recon.y.astype(np.int64)
    rt = recon.t
    best = np.full(len(recon), np.iinfo(np.int64).max, dtype=np.int64)

    if len(keys):
        for dy in range(-te_window, te_window + 1):
            for dx in range(-te_window, te_window + 1):
                nx_ = rx + dx
                ny_ = ry + dy
                inside = (nx_ >= 0) & (nx_ < width) & (ny_ >= 0) & (ny_ < height)
                pix = ny_ * width + nx_
                pos = np.searchsorted(keys, (pix << np.int64(32)) | rt)
                for cand in (pos - 1, pos):
                    ok = inside & (cand >= 0) & (cand < len(keys))
                    safe = np.clip(cand, 0, len(keys) - 1)
                    ok &= pix_of_key[safe] == pix
                    gap = np.abs((keys[safe] & np.int64(0xFFFFFFFF)) - rt)
                    best = np.where(ok, np.minimum(best, gap), best)

    matched = best != np.iinfo(np.int64).max
    n_matched = int(np.count_nonzero(matched))
    if not n_matched:
        return TemporalError(math.nan, math.nan, len(recon), 0)
    errors = best[matched].astype(np.float64)
    return TemporalError(
        float(np.mean(errors)), float(np.median(errors)), len(recon) - n_matched, n_matched
    )


# -----------------------------
# baseline
# -----------------------------


def random_reduce(stream: EventStream, target_er: float, seed: int = 0) -> EventStream:
    """Drop round(target_er * N) events uniformly at random; order is kept."""
    if not 0 <= target_er <= 1:
        raise MetricsError(f"target event reduction must be in [0, 1] ({target_er})")
    n = len(stream)
    n_remove = min(n, math.floor(target_er * n + 0.5))
    rng = np.random.default_rng(seed)
    keep = np.ones(n, dtype=bool)
    keep[rng.choice(n, size=n_remove, replace=False)] = False
    return EventStream(stream.events[keep], stream.sensor_width, stream.sensor_height)


# -----------------------------
# report
# -----------------------------


@dataclasses.dataclass
class FidelityReport:
    """How close a reconstruction stays to its source, without packet counts."""

    per_cube_distance: List[CubeDistance]
    mean_distance: float
    mean_te: float
    median_te: float
    unmatched: int
    n_s: int
    n_recon: int
    n_clipped: int  # reconstructed events past the source's end, left out of the measures

    SUMMARY_FIELDS: ClassVar[Tuple[str, ...]] = (
        "mean_distance",
        "mean_te",
        "median_te",
        "unmatched",
        "n_s",
        "n_recon",
        "n_clipped",
    )

    def to_text(self) -> str:
        """Render as `key: value` lines."""
        lines = []
        for name in self.SUMMARY_FIELDS:
            val = getattr(self, name)
            lines.append(f"{name}: {val:.6f}" if isinstance(val, float) else f"{name}: {val}")
        lines.append(f"cubes: {len(self.per_cube_distance)}")
        return "\n".join(lines) + "\n"

    def write_cube_csv(self, path: Union[str, Path]) -> None:
        """Write `cube_index,t_start_us,distance` rows."""
        write_cube_csv(self.per_cube_distance, path)


@dataclasses.dataclass
class MetricsReport(FidelityReport):
    """Everything measured for one reconstruction and the packets that carried it."""

    er: float
    cr: float
    wire_cr: float
    n_tx: int
    n_nf: int
    container_overhead_bytes: int  # control-marker bytes

    SUMMARY_FIELDS: ClassVar[Tuple[str, ...]] = (
        "er",
        "cr",
        "wire_cr",
        "mean_distance",
        "mean_te",
        "median_te",
        "unmatched",
        "n_s",
        "n_tx",
        "n_nf",
        "n_recon",
        "n_clipped",
        "container_overhead_bytes",
    )


def write_cube_csv(cubes: Sequence[CubeDistance], path: Union[str, Path]) -> None:
    """Write per-cube distances as CSV."""
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["cube_index", "t_start_us", "distance"])
        writer.writeheader()
        for c in cubes:
            writer.writerow(
                {"cube_index": c.index, "t_start_us": c.t_start_us, "distance": f"{c.distance:.9g}"}
            )


def mean_cube_distance(cubes: Sequence[CubeDistance]) -> float:
    """Mean of the normalized per-cube distances (0 without cubes)."""
    if not cubes:
        return 0.0
    return float(np.mean([c.distance for c in cubes]))


def measure_fidelity(
    orig: EventStream,
    recon: EventStream,
    params: MetricParams = MetricParams(),
    clip_to_source: bool = True,
) -> FidelityReport:
    """Stream distance and timing error of `recon` against `orig`.

    With `clip_to_source`, reconstructed events later than the last source
    event are left out of the distance and timing measures (they have no
    ground truth to be compared with) and counted in `n_clipped`.
    """
    compared = recon
    if clip_to_source and len(recon):
        t_end = int(orig.t[-1]) if len(orig) else -1
        compared = EventStream(
            recon.events[recon.t <= t_end], recon.sensor_width, recon.sensor_height
        )

    cubes = astsm_distance(orig, compared, params)
    te = temporal_error(orig, compared, params.te_window)
    n_clipped = len(recon) - len(compared)
    if n_clipped:
        LOGGER.debug(f"{log_msgs.METRICS_CLIPPED} ({n_clipped} events)")
    return FidelityReport(
        per_cube_distance=cubes,
        mean_distance=mean_cube_distance(cubes),
        mean_te=te.mean,
        median_te=te.median,
        unmatched=te.unmatched,
        n_s=len(orig),
        n_recon=len(recon),
        n_clipped=n_clipped,
    )


@wtt.spanned()
def evaluate(
    orig: EventStream,
    recon: EventStream,
    packets: Sequence[Packet],
    params: MetricParams = MetricParams(),
    clip_to_source: bool = True,
) -> MetricsReport:
    """Measure a reconstruction against its source and the packets that carried it.

    `clip_to_source` is passed on to `measure_fidelity()`.
    """
    payload = payload_byte_count(packets)
    n_s = len(orig)
    er = event_reduction(n_s, payload.n_tx)
    cr = compression_ratio(n_s, payload.n_tx, payload.n_nf)
    total_bytes = wire_size(packets)

    fidelity = measure_fidelity(orig, recon, params, clip_to_source)
    report = MetricsReport(
        **{f.name: getattr(fidelity, f.name) for f in dataclasses.fields(fidelity)},
        er=er,
        cr=cr,
        wire_cr=(n_s * PLAIN_BYTES) / total_bytes,
        n_tx=payload.n_tx,
        n_nf=payload.n_nf,
        container_overhead_bytes=total_bytes - payload.n_bytes_total,
    )
    wtt.set_current_span_attribute("fbc.cr", cr)
    LOGGER.debug(f"{log_msgs.METRICS_DONE} (cr={cr:.3f}, er={er:.3f})")
    return report
