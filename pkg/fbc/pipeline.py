"""Codec class tying flow, transmitter, wire, and receiver together; simulations and sweeps."""

import dataclasses
import logging
from typing import Any, List, NamedTuple, Optional, Sequence

from . import flow_provider_manager, log_msgs
from . import telemetry as wtt
from .flow_interface import FlowEstimate, FlowProvider, estimate_flows
from .metrics import (
    CubeDistance,
    MetricParams,
    MetricsReport,
    astsm_distance,
    evaluate,
    mean_cube_distance,
    random_reduce,
    temporal_error,
)
from .model import US_PER_MS, CodecConfig, ConfigError, EventStream
from .receiver import reconstruct
from .transmitter import Transmitter, TxStats
from .wire import Packet, decode_packets, encode_packets

LOGGER = logging.getLogger("fbc.pipeline")


def make_provider(
    name: str, cfg: CodecConfig, truth: Optional[Any] = None, **kwargs: Any
) -> FlowProvider:
    """Build a flow provider by name; the oracle needs a scene's ground truth."""
    if name == "oracle":
        if truth is None:
            raise ConfigError("--flow oracle needs a synthetic scene (its ground truth)")
        kwargs["truth"] = truth
    return flow_provider_manager.get_flow_provider(name, cfg, **kwargs)


class Codec:
    """User-facing compressor/decompressor pair.

    Args:
        cfg: parameters shared by both ends
        provider: flow provider used by `compress()`
    """

    def __init__(self, cfg: CodecConfig, provider: Optional[FlowProvider] = None) -> None:
        self.cfg = cfg
        self.provider = provider
        self.last_tx_stats: Optional[TxStats] = None

    def flows(self, stream: EventStream) -> List[FlowEstimate]:
        """Flow of every event of `stream`."""
        if self.provider is None:
            raise ConfigError("compressing needs a flow provider")
        return estimate_flows(stream, self.provider)

    @wtt.spanned()
    def compress(
        self, stream: EventStream, flows: Optional[Sequence[FlowEstimate]] = None
    ) -> List[Packet]:
        """Run the transmitter over `stream` (estimating flow unless `flows` is given)."""
        if stream.geometry != (self.cfg.sensor_width, self.cfg.sensor_height):
            raise ConfigError(
                f"stream is {stream.geometry[0]}x{stream.geometry[1]}, codec expects "
                f"{self.cfg.sensor_width}x{self.cfg.sensor_height}"
            )
        if flows is None:
            flows = self.flows(stream)
        tx = Transmitter(self.cfg)
        packets = tx.run(stream, flows)
        self.last_tx_stats = tx.stats
        wtt.set_current_span_attribute("fbc.n_tx", tx.stats.n_tx)
        return packets

    @wtt.spanned()
    def decompress(self, packets: Sequence[Packet]) -> EventStream:
        """Rebuild the stream from `packets`."""
        return reconstruct(packets, self.cfg)

    def compress_bytes(
        self, stream: EventStream, flows: Optional[Sequence[FlowEstimate]] = None
    ) -> bytes:
        """`compress()` straight to wire bytes."""
        return encode_packets(self.compress(stream, flows))

    def decompress_bytes(self, data: bytes) -> EventStream:
        """`decompress()` from wire bytes."""
        return self.decompress(decode_packets(data))

    def __repr__(self) -> str:
        """Return string of basic properties/attributes."""
        provider = self.provider.NAME if self.provider else None
        return f"Codec(provider={provider}, {self.cfg})"


# -----------------------------
# simulation
# -----------------------------


class BaselineReport(NamedTuple):
    """Random event removal at the same event reduction as FBC."""

    er: float
    per_cube_distance: List[CubeDistance]
    mean_distance: float
    mean_te: float
    median_te: float


class SimulationResult(NamedTuple):
    """Everything one simulation produced."""

    report: MetricsReport
    packets: List[Packet]
    reconstructed: EventStream
    baseline: Optional[BaselineReport] = None


def random_baseline(
    stream: EventStream, er: float, params: MetricParams = MetricParams(), seed: int = 0
) -> BaselineReport:
    """Measure random removal of a fraction `er` of the events."""
    reduced = random_reduce(stream, er, seed)
    cubes = astsm_distance(stream, reduced, params)
    te = temporal_error(stream, reduced, params.te_window)
    return BaselineReport(er, cubes, mean_cube_distance(cubes), te.mean, te.median)


@wtt.spanned()
def simulate(
    stream: EventStream,
    cfg: CodecConfig,
    flows: Sequence[FlowEstimate],
    params: MetricParams = MetricParams(),
    baseline: bool = False,
    seed: int = 0,
) -> SimulationResult:
    """Transmit `stream`, send the packets through the wire codec, reconstruct, and measure."""
    LOGGER.debug(f"{log_msgs.PIPELINE_SIMULATING} ({stream}, PT={cfg.predict_time_ms} ms)")
    codec = Codec(cfg)
    packets = codec.compress(stream, flows)
    received = decode_packets(encode_packets(packets))
    recon = codec.decompress(received)
    report = evaluate(stream, recon, received, params)

    base = random_baseline(stream, report.er, params, seed) if baseline else None
    LOGGER.info(
        f"{log_msgs.PIPELINE_SIMULATED} (cr={report.cr:.3f}, er={report.er:.3f}, "
        f"distance={report.mean_distance:.4f}"
        + (f", random distance={base.mean_distance:.4f})" if base else ")")
    )
    return SimulationResult(report, packets, recon, base)


# -----------------------------
# PT sweeps
# -----------------------------


@dataclasses.dataclass(frozen=True)
class SweepRow:
    """One PT of a sweep."""

    pt_ms: int
    cr: float
    er: float
    mean_distance: float
    mean_te_us: float
    median_te_us: float

    FIELDS = ("pt_ms", "cr", "er", "mean_distance", "mean_te_us", "median_te_us")


def parse_sweep(text: str) -> List[int]:
    """Parse "a:b:step" (inclusive, milliseconds) into a PT list."""
    parts = text.split(":")
    try:
        if len(parts) == 2:
            start, stop, step = int(parts[0]), int(parts[1]), 1
        elif len(parts) == 3:
            start, stop, step = (int(p) for p in parts)
        else:
            raise ValueError()
    except ValueError:
        raise ConfigError(f"sweep must look like a:b:step ({text!r})")
    if start <= 0 or stop < start or step <= 0:
        raise ConfigError(f"sweep needs 0 < a <= b and step > 0 ({text!r})")
    return list(range(start, stop + 1, step))


def sweep_pt(
    stream: EventStream,
    cfg: CodecConfig,
    flows: Sequence[FlowEstimate],
    pt_values_ms: Sequence[int],
    params: MetricParams = MetricParams(),
) -> List[SweepRow]:
    """Simulate once per PT; the flow is estimated once by the caller."""
    rows = []
    for pt_ms in pt_values_ms:
        result = simulate(stream, cfg.replace(predict_time_us=pt_ms * US_PER_MS), flows, params)
        r = result.report
        rows.append(SweepRow(pt_ms, r.cr, r.er, r.mean_distance, r.mean_te, r.median_te))
        LOGGER.info(f"{log_msgs.PIPELINE_SWEEP_POINT} ({rows[-1]})")
    return rows
