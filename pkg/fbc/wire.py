"""Bit-exact transmitter -> receiver packet format.

Every record starts with one little-endian 64-bit word:

    bits  0-31  t (µs)
    bits 32-45  x            (SendEnd: PT in ms)
    bits 46-59  y
    bit  60     p
    bits 61-63  tag          0 plain, 1 flow, 6 SendStart, 7 SendEnd

A flow record is followed by 3 bytes holding a little-endian 24-bit field:
qvx in bits 0-11 and qvy in bits 12-23, both 12-bit two's complement.
"""

import math
import struct
from typing import Iterable, Iterator, List, NamedTuple, Optional, Sequence, Union

from .model import (
    COORD_LIMIT,
    PT_MS_LIMIT,
    TIMESTAMP_LIMIT,
    US_PER_MS,
    Event,
    FBCError,
    FlowEvent,
    Polarity,
)

TAG_PLAIN = 0
TAG_FLOW = 1
TAG_SEND_START = 6
TAG_SEND_END = 7

PLAIN_SIZE = 8
FLOW_SIZE = 11
MARKER_SIZE = 8

QV_MIN = -(1 << 11)
QV_MAX = (1 << 11) - 1

_WORD = struct.Struct("<Q")
_T_MASK = (1 << 32) - 1
_COORD_MASK = (1 << 14) - 1
_QV_MASK = (1 << 12) - 1
_MARKER_RESERVED_MASK = ((1 << 61) - 1) & ~_T_MASK  # bits 32-60
_SEND_END_RESERVED_MASK = ((1 << 61) - 1) & ~((1 << 46) - 1)  # bits 46-60


class WireFormatError(FBCError, ValueError):
    """Raised when a byte stream cannot be decoded.

    `offset` is the byte position of the offending record; `packets`
    holds everything decoded before it.
    """

    def __init__(self, msg: str, offset: int, packets: Optional[List["Packet"]] = None):
        super().__init__(f"{msg} (at byte offset {offset})")
        self.offset = offset
        self.packets: List[Packet] = packets if packets is not None else []


class TruncatedPacketError(WireFormatError):
    """Raised when the byte stream ends inside a record."""


class UnknownTagError(WireFormatError):
    """Raised when a record carries a tag outside the defined namespace."""


class FieldOverflowError(FBCError, ValueError):
    """Raised when a packet field does not fit its bit range."""


# -----------------------------
# packet variants
# -----------------------------


class PlainEvent(NamedTuple):
    """An event sent without flow."""

    event: Event


class FlowEventPkt(NamedTuple):
    """An event sent with its quantized velocity (px/s)."""

    event: Event
    qvx: int
    qvy: int

    @property
    def flow(self) -> FlowEvent:
        """The velocity-carrying event the receiver predicts from."""
        return FlowEvent(self.event, float(self.qvx), float(self.qvy))


class SendStart(NamedTuple):
    """Marks the start of a sending phase."""

    t: int


class SendEnd(NamedTuple):
    """Marks the end of a sending phase and the PT that follows it."""

    t: int
    predict_time_ms: int

    @property
    def predict_time_us(self) -> int:
        """PT in microseconds."""
        return self.predict_time_ms * US_PER_MS


Packet = Union[PlainEvent, FlowEventPkt, SendStart, SendEnd]


class PayloadCount(NamedTuple):
    """Byte accounting of the event-carrying packets."""

    n_bytes_total: int
    n_tx: int
    n_nf: int


# -----------------------------
# quantization
# -----------------------------


def quantize_velocity(v: float) -> int:
    """Round `v` (px/s) to the nearest integer, clamped to the 12-bit range."""
    if math.isnan(v):
        return 0
    if math.isinf(v):
        return QV_MAX if v > 0 else QV_MIN
    return max(QV_MIN, min(QV_MAX, math.floor(v + 0.5)))


def is_clamped(v: float) -> bool:
    """Return True if `quantize_velocity(v)` loses more than rounding."""
    return v > QV_MAX + 0.5 or v < QV_MIN - 0.5


# -----------------------------
# encoding
# -----------------------------


def _check_event(e: Event) -> None:
    if not 0 <= e.x < COORD_LIMIT or not 0 <= e.y < COORD_LIMIT:
        raise FieldOverflowError(f"pixel ({e.x}, {e.y}) does not fit in 14 bits")
    if not 0 <= e.t < TIMESTAMP_LIMIT:
        raise FieldOverflowError(f"timestamp {e.t} does not fit in 32 bits")


def _event_word(e: Event, tag: int) -> int:
    _check_event(e)
    return e.t | (e.x << 32) | (e.y << 46) | (int(e.p) << 60) | (tag << 61)


def _marker_word(t: int, tag: int, payload: int = 0) -> int:
    if not 0 <= t < TIMESTAMP_LIMIT:
        raise FieldOverflowError(f"timestamp {t} does not fit in 32 bits")
    return t | (payload << 32) | (tag << 61)


def encode_packet(pkt: Packet) -> bytes:
    """Serialize one packet (8 bytes, or 11 for a flow event)."""
    if isinstance(pkt, PlainEvent):
        return _WORD.pack(_event_word(pkt.event, TAG_PLAIN))
    if isinstance(pkt, FlowEventPkt):
        for q in (pkt.qvx, pkt.qvy):
            if not QV_MIN <= q <= QV_MAX:
                raise FieldOverflowError(f"velocity {q} does not fit in 12 bits")
        field = (pkt.qvx & _QV_MASK) | ((pkt.qvy & _QV_MASK) << 12)
        return _WORD.pack(_event_word(pkt.event, TAG_FLOW)) + field.to_bytes(3, "little")
    if isinstance(pkt, SendStart):
        return _WORD.pack(_marker_word(pkt.t, TAG_SEND_START))
    if isinstance(pkt, SendEnd):
        if not 0 < pkt.predict_time_ms <= PT_MS_LIMIT:
            raise FieldOverflowError(f"PT {pkt.predict_time_ms} ms does not fit in 14 bits")
        return _WORD.pack(_marker_word(pkt.t, TAG_SEND_END, pkt.predict_time_ms))
    raise TypeError(f"not a packet: {pkt!r}")


def encode_packets(packets: Iterable[Packet]) -> bytes:
    """Serialize a packet sequence back to back."""
    return b"".join(encode_packet(p) for p in packets)


# -----------------------------
# decoding
# -----------------------------


def _signed12(v: int) -> int:
    return v - (1 << 12) if v & (1 << 11) else v


def _event_from_word(word: int) -> Event:
    return Event(
        (word >> 32) & _COORD_MASK,
        (word >> 46) & _COORD_MASK,
        word & _T_MASK,
        Polarity((word >> 60) & 1),
    )


def iter_packets(data: bytes) -> Iterator[Packet]:
    """Yield the packets of `data` in order.

    Raises `WireFormatError` (after yielding the valid prefix) at the
    first truncated or malformed record.
    """
    view = memoryview(data)
    offset = 0
    size = len(view)
    while offset < size:
        if size - offset < 8:
            raise TruncatedPacketError(f"{size - offset} trailing bytes", offset)
        (word,) = _WORD.unpack_from(view, offset)
        tag = word >> 61
        if tag == TAG_PLAIN:
            yield PlainEvent(_event_from_word(word))
            offset += PLAIN_SIZE
        elif tag == TAG_FLOW:
            if size - offset < FLOW_SIZE:
                raise TruncatedPacketError("flow record cut short", offset)
            field = int.from_bytes(view[offset + 8 : offset + FLOW_SIZE], "little")
            yield FlowEventPkt(
                _event_from_word(word),
                _signed12(field & _QV_MASK),
                _signed12((field >> 12) & _QV_MASK),
            )
            offset += FLOW_SIZE
        elif tag == TAG_SEND_START:
            if word & _MARKER_RESERVED_MASK:
                raise WireFormatError("SendStart with reserved bits set", offset)
            yield SendStart(word & _T_MASK)
            offset += MARKER_SIZE
        elif tag == TAG_SEND_END:
            if word & _SEND_END_RESERVED_MASK:
                raise WireFormatError("SendEnd with reserved bits set", offset)
            pt_ms = (word >> 32) & _COORD_MASK
            if pt_ms == 0:
                raise WireFormatError("SendEnd with zero PT", offset)
            yield SendEnd(word & _T_MASK, pt_ms)
            offset += MARKER_SIZE
        else:
            raise UnknownTagError(f"unknown tag {tag}", offset)


def decode_packets(data: bytes) -> List[Packet]:
    """Decode a whole byte stream.

    On failure the raised `WireFormatError` carries the decoded prefix
    in `.packets`.
    """
    packets: List[Packet] = []
    try:
        for pkt in iter_packets(data):
            packets.append(pkt)
    except WireFormatError as e:
        e.packets = packets
        raise
    return packets


# -----------------------------
# accounting
# -----------------------------


def packet_size(pkt: Packet) -> int:
    """Return the encoded size of `pkt` in bytes."""
    return FLOW_SIZE if isinstance(pkt, FlowEventPkt) else PLAIN_SIZE


def payload_byte_count(packets: Iterable[Packet]) -> PayloadCount:
    """Count event-carrying packets and their bytes; markers are excluded."""
    n_tx = 0
    n_nf = 0
    for pkt in packets:
        if isinstance(pkt, PlainEvent):
            n_tx += 1
            n_nf += 1
        elif isinstance(pkt, FlowEventPkt):
            n_tx += 1
    return PayloadCount(PLAIN_SIZE * n_nf + FLOW_SIZE * (n_tx - n_nf), n_tx, n_nf)


def wire_size(packets: Sequence[Packet]) -> int:
    """Return the encoded size of `packets` including control markers."""
    return sum(packet_size(p) for p in packets)

