"""Unit test the packet format."""

import random
import re
from pathlib import Path
from typing import List

import pytest
from fbc.model import Event, Polarity
from fbc.wire import (
    FLOW_SIZE,
    PLAIN_SIZE,
    QV_MAX,
    QV_MIN,
    FieldOverflowError,
    FlowEventPkt,
    Packet,
    PlainEvent,
    SendEnd,
    SendStart,
    TruncatedPacketError,
    UnknownTagError,
    WireFormatError,
    decode_packets,
    encode_packet,
    encode_packets,
    is_clamped,
    iter_packets,
    payload_byte_count,
    quantize_velocity,
    wire_size,
)
from hypothesis import given
from hypothesis import strategies as st

GOLDEN = Path(__file__).parents[3] / "testdata" / "wire"


def _parse_sidecar_line(line: str) -> Packet:
    kind, *fields = line.split()
    kv = {k: int(v) for k, v in (f.split("=") for f in fields)}
    if kind == "plain":
        return PlainEvent(Event(kv["x"], kv["y"], kv["t"], Polarity(kv["p"])))
    if kind == "flow":
        return FlowEventPkt(
            Event(kv["x"], kv["y"], kv["t"], Polarity(kv["p"])), kv["qvx"], kv["qvy"]
        )
    if kind == "send_start":
        return SendStart(kv["t"])
    return SendEnd(kv["t"], kv["pt_ms"])


# -----------------------------
# golden vectors
# -----------------------------


@pytest.mark.parametrize("name", ["plain", "flow", "send_start", "send_end", "sequence"])
def test_golden(name: str) -> None:
    """Golden files decode to their sidecars and re-encode byte for byte."""
    data = (GOLDEN / f"{name}.bin").read_bytes()
    expected = [
        _parse_sidecar_line(line)
        for line in (GOLDEN / f"{name}.txt").read_text().splitlines()
        if line.strip()
    ]
    assert decode_packets(data) == expected
    assert encode_packets(expected) == data


def test_plain_bytes() -> None:
    """The plain-event layout, spelled out."""
    pkt = PlainEvent(Event(3, 1, 1, Polarity.ON))
    assert encode_packet(pkt) == bytes([0x01, 0, 0, 0, 0x03, 0x40, 0x00, 0x10])


def test_flow_bytes() -> None:
    """Negative velocities are 12-bit two's complement."""
    pkt = FlowEventPkt(Event(10, 20, 1000, Polarity.OFF), -1, 100)
    data = encode_packet(pkt)
    assert len(data) == FLOW_SIZE
    assert data[8:] == bytes([0xFF, 0x4F, 0x06])


def test_send_end_bytes() -> None:
    """SendEnd carries PT in ms in the x field."""
    assert encode_packet(SendEnd(13000, 30)) == bytes([0xC8, 0x32, 0, 0, 0x1E, 0, 0, 0xE0])
    assert SendEnd(13000, 30).predict_time_us == 30_000


# -----------------------------
# round trips
# -----------------------------

_events = st.builds(
    Event,
    st.integers(0, (1 << 14) - 1),
    st.integers(0, (1 << 14) - 1),
    st.integers(0, (1 << 32) - 1),
    st.sampled_from(list(Polarity)),
)
_packets = st.one_of(
    st.builds(PlainEvent, _events),
    st.builds(FlowEventPkt, _events, st.integers(QV_MIN, QV_MAX), st.integers(QV_MIN, QV_MAX)),
    st.builds(SendStart, st.integers(0, (1 << 32) - 1)),
    st.builds(SendEnd, st.integers(0, (1 << 32) - 1), st.integers(1, (1 << 14) - 1)),
)


@given(st.lists(_packets, max_size=50))
def test_round_trip(packets: List[Packet]) -> None:
    """decode(encode(p)) == p and encode(decode(b)) == b."""
    data = encode_packets(packets)
    assert decode_packets(data) == packets
    assert encode_packets(decode_packets(data)) == data
    assert len(data) == wire_size(packets)


def test_random_round_trips() -> None:
    """A large seeded batch round-trips byte for byte."""
    rng = random.Random(1234)
    packets: List[Packet] = []
    for _ in range(100_000):
        e = Event(
            rng.randrange(1 << 14),
            rng.randrange(1 << 14),
            rng.randrange(1 << 32),
            Polarity(rng.randrange(2)),
        )
        kind = rng.randrange(4)
        if kind == 0:
            packets.append(PlainEvent(e))
        elif kind == 1:
            packets.append(FlowEventPkt(e, rng.randint(QV_MIN, QV_MAX), rng.randint(QV_MIN, QV_MAX)))
        elif kind == 2:
            packets.append(SendStart(e.t))
        else:
            packets.append(SendEnd(e.t, rng.randint(1, (1 << 14) - 1)))
    data = encode_packets(packets)
    assert decode_packets(data) == packets
    assert encode_packets(decode_packets(data)) == data


# -----------------------------
# quantization
# -----------------------------


@pytest.mark.parametrize(
    "v,q",
    [
        (0.0, 0),
        (0.5, 1),
        (-0.5, 0),
        (-1.5, -1),
        (123.4, 123),
        (2047.4, 2047),
        (5000.0, QV_MAX),
        (-5000.0, QV_MIN),
        (float("inf"), QV_MAX),
        (float("-inf"), QV_MIN),
        (float("nan"), 0),
    ],
)
def test_quantize_velocity(v: float, q: int) -> None:
    """Round half up, clamp to 12 bits."""
    assert quantize_velocity(v) == q


def test_is_clamped() -> None:
    """Only values past the rounding range count as clamped."""
    assert not is_clamped(2047.4)
    assert is_clamped(2048.0)
    assert not is_clamped(-2048.4)
    assert is_clamped(-2049.0)


# -----------------------------
# errors
# -----------------------------


def test_field_overflow() -> None:
    """Fields that do not fit their bits are refused."""
    with pytest.raises(FieldOverflowError, match="14 bits"):
        encode_packet(PlainEvent(Event(1 << 14, 0, 0, Polarity.ON)))
    with pytest.raises(FieldOverflowError, match="32 bits"):
        encode_packet(PlainEvent(Event(0, 0, 1 << 32, Polarity.ON)))
    with pytest.raises(FieldOverflowError, match="12 bits"):
        encode_packet(FlowEventPkt(Event(0, 0, 0, Polarity.ON), 2048, 0))
    with pytest.raises(FieldOverflowError, match="PT"):
        encode_packet(SendEnd(0, 0))


def test_truncated() -> None:
    """A cut record raises with its offset and the decoded prefix."""
    data = encode_packets([SendStart(1), PlainEvent(Event(1, 1, 2, Polarity.ON))])
    with pytest.raises(TruncatedPacketError, match=re.escape("(at byte offset 8)")) as info:
        decode_packets(data[:-1])
    assert info.value.offset == 8
    assert info.value.packets == [SendStart(1)]


def test_truncated_flow() -> None:
    """A flow record missing its velocity bytes is truncated."""
    data = encode_packet(FlowEventPkt(Event(1, 1, 2, Polarity.ON), 1, 1))
    with pytest.raises(TruncatedPacketError):
        decode_packets(data[:PLAIN_SIZE])


def test_unknown_tag() -> None:
    """Reserved tags are rejected."""
    word = (3 << 61).to_bytes(8, "little")
    data = encode_packet(SendStart(0)) + word
    with pytest.raises(UnknownTagError, match="unknown tag 3") as info:
        decode_packets(data)
    assert info.value.offset == 8
    assert isinstance(info.value, WireFormatError)


def test_reserved_marker_bits() -> None:
    """Markers with reserved bits set are malformed."""
    bad_start = ((6 << 61) | (1 << 40)).to_bytes(8, "little")
    with pytest.raises(WireFormatError, match="reserved"):
        decode_packets(bad_start)
    bad_end = ((7 << 61) | (1 << 50) | (30 << 32)).to_bytes(8, "little")
    with pytest.raises(WireFormatError, match="reserved"):
        decode_packets(bad_end)
    zero_pt = (7 << 61).to_bytes(8, "little")
    with pytest.raises(WireFormatError, match="zero PT"):
        decode_packets(zero_pt)


def test_iter_packets_yields_prefix() -> None:
    """The iterator hands out valid packets before failing."""
    data = encode_packet(SendStart(5)) + b"\x00"
    it = iter_packets(data)
    assert next(it) == SendStart(5)
    with pytest.raises(TruncatedPacketError):
        next(it)


# -----------------------------
# accounting
# -----------------------------


def test_payload_byte_count() -> None:
    """Markers are excluded from the payload count, not from wire_size."""
    e = Event(0, 0, 0, Polarity.ON)
    packets: List[Packet] = [
        SendStart(0),
        PlainEvent(e),
        FlowEventPkt(e, 1, 2),
        FlowEventPkt(e, 3, 4),
        SendEnd(10, 30),
    ]
    count = payload_byte_count(packets)
    assert count.n_tx == 3
    assert count.n_nf == 1
    assert count.n_bytes_total == 8 + 11 + 11
    assert wire_size(packets) == count.n_bytes_total + 16
