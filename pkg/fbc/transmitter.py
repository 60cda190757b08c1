"""Edge-side compressor: the sending/predicting state machine."""

import dataclasses
import enum
import logging
import math
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from . import log_msgs
from .flow_interface import FlowEstimate
from .model import US_PER_S, CodecConfig, Event, EventStream, FBCError
from .wire import FlowEventPkt, Packet, PlainEvent, SendEnd, SendStart, is_clamped, quantize_velocity

LOGGER = logging.getLogger("fbc.transmitter")


class TimeRegressionError(FBCError, ValueError):
    """Raised when an event is older than the tolerance allows."""


class CalibrationError(FBCError, ValueError):
    """Raised when a send time cannot be computed from the given samples."""


class FlowMismatchError(FBCError, ValueError):
    """Raised when a stream and its flow estimates do not line up."""


class Phase(enum.Enum):
    """Transmitter phase."""

    SENDING = enum.auto()
    PREDICTING = enum.auto()


@dataclasses.dataclass
class TxState:
    """Everything the transmitter carries from one event to the next."""

    current_st: int  # µs
    phase: Phase = Phase.SENDING
    phase_start_t: int = 0
    phase_end_t: int = 0
    calib_samples: List[float] = dataclasses.field(default_factory=list)
    calibrated: bool = False  # already recalibrated in this sending phase
    started: bool = False
    last_t: int = 0

    n_s: int = 0
    n_tx: int = 0
    n_nf: int = 0
    n_cycles: int = 0
    n_suppressed: int = 0
    n_clamped: int = 0

    @classmethod
    def initial(cls, cfg: CodecConfig) -> "TxState":
        """State before the first event."""
        return cls(current_st=cfg.initial_send_time_us)


class TxStats(NamedTuple):
    """Running counters of a transmitter."""

    n_s: int  # events seen
    n_tx: int  # events transmitted
    n_nf: int  # events transmitted without flow
    n_cycles: int  # sending phases started


def compute_send_time(magnitudes: Sequence[float]) -> int:
    """Return the time (µs) to travel one pixel at the mean of `magnitudes` (px/s)."""
    if not len(magnitudes):
        raise CalibrationError("no flow samples to calibrate from")
    mean = float(np.mean(magnitudes))
    if not mean > 0:
        raise CalibrationError(f"mean flow magnitude must be positive ({mean})")
    return max(1, math.floor(US_PER_S / mean + 0.5))


def _close_phases(state: TxState, t: int, cfg: CodecConfig, out: List[Packet]) -> None:
    # every boundary at or before `t` is closed, including empty phases in a gap
    while t >= state.phase_end_t:
        boundary = state.phase_end_t
        if state.phase is Phase.SENDING:
            if not state.calibrated:
                if len(state.calib_samples) >= cfg.min_calibration_count:
                    state.current_st = compute_send_time(state.calib_samples)
                    LOGGER.debug(
                        f"{log_msgs.TX_CALIBRATED_AT_PHASE_END} "
                        f"(ST={state.current_st} µs, samples={len(state.calib_samples)})"
                    )
                elif state.calib_samples:
                    LOGGER.debug(
                        f"{log_msgs.TX_CALIBRATION_SKIPPED} (samples={len(state.calib_samples)})"
                    )
            out.append(SendEnd(boundary, cfg.predict_time_ms))
            state.phase = Phase.PREDICTING
            state.phase_end_t = boundary + cfg.predict_time_us
            LOGGER.debug(f"{log_msgs.TX_PHASE_PREDICTING} (t={boundary})")
        else:
            out.append(SendStart(boundary))
            state.phase = Phase.SENDING
            state.phase_end_t = boundary + state.current_st
            state.calib_samples.clear()
            state.calibrated = False
            state.n_cycles += 1
            LOGGER.debug(f"{log_msgs.TX_PHASE_SENDING} (t={boundary})")
        state.phase_start_t = boundary


def tx_process_event(
    state: TxState, e: Event, flow: FlowEstimate, cfg: CodecConfig
) -> Tuple[TxState, List[Packet]]:
    """Feed one event (and its flow) through the state machine.

    `state` is updated in place and returned along with the packets to
    put on the wire, markers first.
    """
    out: List[Packet] = []

    if not state.started:
        state.started = True
        state.phase = Phase.SENDING
        state.phase_start_t = e.t
        state.phase_end_t = e.t + state.current_st
        state.n_cycles = 1
        state.last_t = e.t
        out.append(SendStart(e.t))
        LOGGER.debug(f"{log_msgs.TX_PHASE_SENDING} (t={e.t})")
    else:
        if e.t < state.last_t - cfg.time_tolerance_us:
            raise TimeRegressionError(
                f"event at t={e.t} is older than t={state.last_t} "
                f"(tolerance {cfg.time_tolerance_us} µs)"
            )
        state.last_t = max(state.last_t, e.t)
        _close_phases(state, e.t, cfg, out)

    state.n_s += 1
    has_flow = flow.valid and flow.magnitude >= cfg.v_min

    if state.phase is Phase.PREDICTING:
        if has_flow:
            state.n_suppressed += 1
        else:
            out.append(PlainEvent(e))
            state.n_tx += 1
            state.n_nf += 1
        return state, out

    state.n_tx += 1
    if not has_flow:
        out.append(PlainEvent(e))
        state.n_nf += 1
        return state, out

    if is_clamped(flow.vx) or is_clamped(flow.vy):
        state.n_clamped += 1
    out.append(FlowEventPkt(e, quantize_velocity(flow.vx), quantize_velocity(flow.vy)))

    if len(state.calib_samples) < cfg.calibration_count:
        state.calib_samples.append(flow.magnitude)
        if len(state.calib_samples) == cfg.calibration_count and not state.calibrated:
            state.current_st = compute_send_time(state.calib_samples)
            # the phase must still hold every event already sent in it
            state.phase_end_t = max(state.phase_start_t + state.current_st, e.t + 1)
            state.calibrated = True
            LOGGER.debug(
                f"{log_msgs.TX_CALIBRATED} (ST={state.current_st} µs, phase end={state.phase_end_t})"
            )
    return state, out


def tx_stats(state: TxState) -> TxStats:
    """Return the running counters of `state`."""
    return TxStats(state.n_s, state.n_tx, state.n_nf, state.n_cycles)


class Transmitter:
    """Runs one stream through the state machine.

    Args:
        cfg: codec parameters shared with the receiver
    """

    def __init__(self, cfg: CodecConfig) -> None:
        self.cfg = cfg
        self.state = TxState.initial(cfg)

    def process(self, e: Event, flow: FlowEstimate) -> List[Packet]:
        """Process one event; return its packets."""
        _, out = tx_process_event(self.state, e, flow, self.cfg)
        return out

    def run(self, stream: EventStream, flows: Sequence[FlowEstimate]) -> List[Packet]:
        """Process a whole stream, `flows[i]` being the flow of event `i`."""
        if len(flows) != len(stream):
            raise FlowMismatchError(f"got {len(flows)} flow estimates for {len(stream)} events")
        packets: List[Packet] = []
        for e, flow in zip(stream, flows):
            packets.extend(self.process(e, flow))
        LOGGER.info(
            f"{log_msgs.TX_RUN_DONE} ({self.stats}, suppressed={self.state.n_suppressed}, "
            f"clamped={self.state.n_clamped}, ST={self.state.current_st} µs)"
        )
        return packets

    @property
    def stats(self) -> TxStats:
        """Running counters."""
        return tx_stats(self.state)
