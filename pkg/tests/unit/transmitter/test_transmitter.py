"""Unit test the transmitter state machine."""

import re
from typing import List, Sequence, Tuple

import pytest
from fbc.flow_interface import NO_FLOW, FlowEstimate
from fbc.metrics import compression_ratio
from fbc.model import CodecConfig, Event, EventStream, Polarity
from fbc.synth import generate, oracle_flows, preset
from fbc.transmitter import (
    CalibrationError,
    FlowMismatchError,
    Phase,
    TimeRegressionError,
    Transmitter,
    TxState,
    compute_send_time,
    tx_process_event,
    tx_stats,
)
from fbc.wire import FlowEventPkt, Packet, PlainEvent, SendEnd, SendStart, payload_byte_count

CFG = CodecConfig(initial_send_time_us=10_000, predict_time_us=30_000, sensor_width=64, sensor_height=64)


def _ev(t: int, x: int = 1, y: int = 1) -> Event:
    return Event(x, y, t, Polarity.ON)


def _flow(vx: float = 100.0, vy: float = 0.0) -> FlowEstimate:
    return FlowEstimate(vx, vy, True)


def _run(cfg: CodecConfig, items: Sequence[Tuple[Event, FlowEstimate]]) -> Tuple[TxState, List[Packet]]:
    state = TxState.initial(cfg)
    out: List[Packet] = []
    for e, f in items:
        state, pkts = tx_process_event(state, e, f, cfg)
        out.extend(pkts)
    return state, out


def test_first_event_opens_sending_phase() -> None:
    """The stream starts with SendStart at the first event."""
    state, out = _run(CFG, [(_ev(123), _flow(3, 4))])
    assert out == [SendStart(123), FlowEventPkt(_ev(123), 3, 4)]
    assert state.phase is Phase.SENDING
    assert state.phase_end_t == 123 + 10_000
    assert tx_stats(state) == (1, 1, 0, 1)


def test_phase_boundaries() -> None:
    """Boundaries fall at scheduled times; an event on a boundary belongs to the next phase."""
    state, out = _run(
        CFG,
        [
            (_ev(0), _flow()),
            (_ev(5_000), NO_FLOW),
            (_ev(10_000), _flow()),  # first event of the predicting phase: suppressed
            (_ev(20_000), NO_FLOW),  # no flow: still sent
            (_ev(40_000), _flow()),
        ],
    )
    assert out == [
        SendStart(0),
        FlowEventPkt(_ev(0), 100, 0),
        PlainEvent(_ev(5_000)),
        SendEnd(10_000, 30),
        PlainEvent(_ev(20_000)),
        SendStart(40_000),
        FlowEventPkt(_ev(40_000), 100, 0),
    ]
    assert state.n_suppressed == 1
    assert tx_stats(state) == (5, 4, 2, 2)


def test_gap_emits_empty_cycles() -> None:
    """A long silence closes every phase it spans."""
    state, out = _run(CFG, [(_ev(0), NO_FLOW), (_ev(100_000), NO_FLOW)])
    assert out == [
        SendStart(0),
        PlainEvent(_ev(0)),
        SendEnd(10_000, 30),
        SendStart(40_000),
        SendEnd(50_000, 30),
        SendStart(80_000),
        SendEnd(90_000, 30),
        PlainEvent(_ev(100_000)),
    ]
    assert state.n_cycles == 3


def test_calibration_moves_phase_end() -> None:
    """Reaching C samples sets ST and reschedules the running phase."""
    cfg = CFG.replace(calibration_count=2)
    state, out = _run(
        cfg,
        [(_ev(0), _flow(200)), (_ev(1_000), _flow(0, 200)), (_ev(5_000), NO_FLOW), (_ev(35_000), NO_FLOW)],
    )
    assert state.current_st == 5_000
    assert out[3] == SendEnd(5_000, 30)
    assert out[5] == SendStart(35_000)
    assert state.phase_end_t == 40_000


def test_calibration_never_ends_phase_in_the_past() -> None:
    """A new ST shorter than the elapsed phase ends it right after the calibrating event."""
    cfg = CFG.replace(calibration_count=2, initial_send_time_us=50_000)
    state, out = _run(
        cfg, [(_ev(0), _flow(1000)), (_ev(20_000), _flow(1000)), (_ev(20_001), NO_FLOW)]
    )
    assert state.current_st == 1_000
    assert out[3] == SendEnd(20_001, 30)
    assert out[4] == PlainEvent(_ev(20_001))


def test_calibration_at_phase_end() -> None:
    """A phase holding at least min_calibration_count samples recalibrates when it closes."""
    cfg = CFG.replace(min_calibration_count=2)
    state, _ = _run(
        cfg, [(_ev(0), _flow(400)), (_ev(100), _flow(600)), (_ev(10_000), NO_FLOW)]
    )
    assert state.current_st == 2_000
    assert state.phase is Phase.PREDICTING


def test_too_few_samples_keep_send_time() -> None:
    """Below min_calibration_count the previous ST survives."""
    state, _ = _run(CFG, [(_ev(0), _flow(400)), (_ev(10_000), NO_FLOW)])
    assert state.current_st == 10_000


def test_slow_flow_is_no_flow() -> None:
    """Flow below v_min goes out as a plain event and is not a calibration sample."""
    cfg = CFG.replace(v_min=5.0)
    state, out = _run(cfg, [(_ev(0), _flow(3, 0))])
    assert out[1] == PlainEvent(_ev(0))
    assert state.calib_samples == []
    assert tx_stats(state).n_nf == 1


def test_invalid_flow_is_no_flow() -> None:
    """An invalid estimate is never sent as flow."""
    _, out = _run(CFG, [(_ev(0), FlowEstimate(100.0, 0.0, False))])
    assert out[1] == PlainEvent(_ev(0))


def test_velocity_clamp_is_counted() -> None:
    """Velocities past the 12-bit range are clamped and counted."""
    state, out = _run(CFG.replace(v_max=5000.0), [(_ev(0), _flow(3000, -3000))])
    assert out[1] == FlowEventPkt(_ev(0), 2047, -2048)
    assert state.n_clamped == 1


def test_time_regression() -> None:
    """Older events fail unless within the tolerance."""
    with pytest.raises(TimeRegressionError, match=re.escape("t=5 is older than t=10")):
        _run(CFG, [(_ev(10), NO_FLOW), (_ev(5), NO_FLOW)])
    state, out = _run(CFG.replace(time_tolerance_us=10), [(_ev(10), NO_FLOW), (_ev(5), NO_FLOW)])
    assert len(out) == 3
    assert state.last_t == 10


def test_no_prediction_full_flow_cr() -> None:
    """Without a predicting phase and with flow on every event, CR is 8/11."""
    n = 1_000
    cfg = CFG.replace(
        initial_send_time_us=10**9, calibration_count=n + 1, min_calibration_count=n + 1
    )
    _, out = _run(cfg, [(_ev(t), _flow()) for t in range(n)])
    count = payload_byte_count(out)
    assert count.n_tx == n
    assert abs(compression_ratio(n, count.n_tx, count.n_nf) - 8 / 11) < 1e-9


def test_no_flow_cr_is_one() -> None:
    """With no flow at all every event is sent plain."""
    n = 1_000
    _, out = _run(CFG, [(_ev(t * 100), NO_FLOW) for t in range(n)])
    count = payload_byte_count(out)
    assert compression_ratio(n, count.n_tx, count.n_nf) == 1.0


def test_compute_send_time() -> None:
    """ST is the one-pixel travel time at the mean speed."""
    assert compute_send_time([100.0, 300.0]) == 5_000
    assert compute_send_time([3.0]) == 333_333
    assert compute_send_time([1e9]) == 1
    with pytest.raises(CalibrationError):
        compute_send_time([])
    with pytest.raises(CalibrationError):
        compute_send_time([0.0])


class TestTransmitter:
    """The stream-level wrapper."""

    @staticmethod
    def _stream() -> EventStream:
        return EventStream.from_events([_ev(t) for t in (0, 5_000, 12_000, 45_000)], 64, 64)

    def test_run(self) -> None:
        """run() matches event-by-event processing."""
        flows = [_flow(), NO_FLOW, _flow(), _flow()]
        tx = Transmitter(CFG)
        packets = tx.run(self._stream(), flows)
        _, expected = _run(CFG, list(zip(self._stream(), flows)))
        assert packets == expected
        assert tx.stats == (4, 3, 1, 2)

    def test_length_mismatch(self) -> None:
        """Each event needs exactly one flow estimate."""
        with pytest.raises(FlowMismatchError, match="got 1 flow estimates for 4 events"):
            Transmitter(CFG).run(self._stream(), [NO_FLOW])


# -----------------------------
# whole scenes
# -----------------------------


class TestSceneRun:
    """Properties of a full run over a generated scene with ground-truth flow."""

    @staticmethod
    @pytest.fixture(scope="class")
    def run() -> Tuple[EventStream, Transmitter, List[Packet]]:
        """The constant-velocity preset through a default transmitter."""
        stream, truth = generate(preset("constant", duration_us=500_000))
        cfg = CodecConfig(sensor_width=stream.sensor_width, sensor_height=stream.sensor_height)
        tx = Transmitter(cfg)
        return stream, tx, tx.run(stream, oracle_flows(stream, truth))

    def test_phases_alternate(self, run: Tuple[EventStream, Transmitter, List[Packet]]) -> None:
        """Markers alternate, and no flow packet goes out while predicting."""
        _, _, packets = run
        sending = False
        last_marker_t = -1
        for pkt in packets:
            if isinstance(pkt, FlowEventPkt):
                assert sending
            elif isinstance(pkt, (SendStart, SendEnd)):
                assert sending is isinstance(pkt, SendEnd)
                assert pkt.t >= last_marker_t
                sending, last_marker_t = isinstance(pkt, SendStart), pkt.t
        assert isinstance(packets[0], SendStart)

    def test_events_are_conserved(self, run: Tuple[EventStream, Transmitter, List[Packet]]) -> None:
        """Every event is either transmitted or suppressed, never both."""
        stream, tx, packets = run
        payload = [p for p in packets if isinstance(p, (PlainEvent, FlowEventPkt))]
        assert tx.stats.n_s == len(stream)
        assert tx.stats.n_tx == len(payload)
        assert tx.stats.n_s == tx.stats.n_tx + tx.state.n_suppressed
        assert tx.state.n_suppressed > 0

    def test_send_time_settles(self, run: Tuple[EventStream, Transmitter, List[Packet]]) -> None:
        """After the first calibration every sending phase lasts one pixel at 150 px/s."""
        _, tx, packets = run
        assert tx.state.current_st == 6_667
        starts = [p.t for p in packets if isinstance(p, SendStart)]
        ends = [p.t for p in packets if isinstance(p, SendEnd)]
        assert ends[0] - starts[0] == CodecConfig().initial_send_time_us
        assert len(ends) > 3
        assert {end - start for start, end in zip(starts[1:], ends[1:])} == {6_667}


def test_send_time_after_one_batch() -> None:
    """C samples at a constant 250 px/s set ST to 4 ms on the spot."""
    cfg = CFG.replace(calibration_count=500)
    state, _ = _run(cfg, [(_ev(i * 10), _flow(150, 200)) for i in range(500)])
    assert state.calibrated
    assert state.current_st == 4_000
