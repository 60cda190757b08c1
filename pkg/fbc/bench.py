"""Receiver latency harness: prediction and sort time against PT and batch size."""

import csv
import dataclasses
import logging
import math
import time
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from . import log_msgs
from .metrics import MetricsError
from .model import US_PER_MS, EventStream
from .receiver import PredictionWindow, predict_unsorted, sort_predictions
from .synth import random_flow_batch

LOGGER = logging.getLogger("fbc.bench")

DEFAULT_PT_SWEEP_MS = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
DEFAULT_COUNT_SWEEP = (2_500, 5_000, 10_000, 25_000, 50_000, 100_000, 250_000)
DEFAULT_N = 25_000
DEFAULT_PT_MS = 60


@dataclasses.dataclass(frozen=True)
class BenchPoint:
    """Timing of one receiver window."""

    sweep: str  # "pt" or "count"
    n_events: int
    pt_ms: int
    predict_ms: float
    sort_ms: float
    total_ms: float
    realtime: bool  # total latency below PT
    n_predicted: int

    FIELDS = ("sweep", "n_events", "pt_ms", "predict_ms", "sort_ms", "total_ms", "realtime", "n_predicted")


def time_window(
    n_events: int,
    pt_ms: int,
    xi: float = 0.4,
    sensor: Tuple[int, int] = (640, 480),
    vel_range: Tuple[float, float] = (-1000.0, 1000.0),
    parallelism: int = 1,
    seed: int = 0,
    repeats: int = 3,
    sweep: str = "pt",
) -> BenchPoint:
    """Predict and sort one window of `n_events` random flow events; keep the fastest run."""
    batch = random_flow_batch(n_events, vel_range, sensor, seed)
    win = PredictionWindow(send_end=0, predict_time=pt_ms * US_PER_MS)
    best: Tuple[float, float] = (math.inf, math.inf)
    n_predicted = 0
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        predicted = predict_unsorted(batch, win, xi, sensor[0], sensor[1], parallelism)
        t1 = time.perf_counter()
        predicted = sort_predictions(predicted, win)
        t2 = time.perf_counter()
        if (t2 - t0) < sum(best):
            best = (t1 - t0, t2 - t1)
        n_predicted = len(predicted)
    predict_ms, sort_ms = best[0] * 1e3, best[1] * 1e3
    point = BenchPoint(
        sweep,
        n_events,
        pt_ms,
        predict_ms,
        sort_ms,
        predict_ms + sort_ms,
        predict_ms + sort_ms < pt_ms,
        n_predicted,
    )
    LOGGER.info(f"{log_msgs.BENCH_POINT} ({point})")
    return point


def growth_exponent(points: Sequence[BenchPoint]) -> float:
    """Slope of log(total latency) against log(event count)."""
    if len(points) < 2:
        raise MetricsError(f"need at least 2 points to fit a slope ({len(points)})")
    n = np.log([p.n_events for p in points])
    lat = np.log([max(p.total_ms, 1e-6) for p in points])
    slope, _ = np.polyfit(n, lat, 1)
    return float(slope)


@dataclasses.dataclass
class BenchResult:
    """Both sweeps."""

    pt_sweep: List[BenchPoint]
    count_sweep: List[BenchPoint]

    @property
    def exponent(self) -> float:
        """Latency growth exponent of the count sweep."""
        return growth_exponent(self.count_sweep)

    @property
    def points(self) -> List[BenchPoint]:
        """All points, PT sweep first."""
        return self.pt_sweep + self.count_sweep


def run_bench(
    pt_values_ms: Sequence[int] = DEFAULT_PT_SWEEP_MS,
    counts: Sequence[int] = DEFAULT_COUNT_SWEEP,
    n_events: int = DEFAULT_N,
    pt_ms: int = DEFAULT_PT_MS,
    parallelism: int = 1,
    seed: int = 0,
    repeats: int = 3,
) -> BenchResult:
    """Sweep PT at a fixed event count, then the event count at a fixed PT."""
    return BenchResult(
        [
            time_window(n_events, pt, parallelism=parallelism, seed=seed, repeats=repeats, sweep="pt")
            for pt in pt_values_ms
        ],
        [
            time_window(n, pt_ms, parallelism=parallelism, seed=seed, repeats=repeats, sweep="count")
            for n in counts
        ],
    )


def predict_window(
    n_events: int, pt_ms: int, parallelism: int = 1, seed: int = 0
) -> EventStream:
    """The sorted predictions a bench window produces (for output comparisons)."""
    batch = random_flow_batch(n_events, seed=seed)
    win = PredictionWindow(send_end=0, predict_time=pt_ms * US_PER_MS)
    predicted = sort_predictions(predict_unsorted(batch, win, 0.4, 640, 480, parallelism), win)
    return EventStream(predicted, 640, 480)


def write_bench_csv(points: Sequence[BenchPoint], path: Union[str, Path]) -> None:
    """Write one row per point."""
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(BenchPoint.FIELDS))
        writer.writeheader()
        for p in points:
            row = dataclasses.asdict(p)
            for key in ("predict_ms", "sort_ms", "total_ms"):
                row[key] = f"{row[key]:.3f}"
            writer.writerow(row)
