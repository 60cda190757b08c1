"""Event files, packet captures, and text-export ingestion.

Formats (see docs/formats.md):

    .aer8   16-byte header ("AER8", width, height, reserved) + one 8-byte
            plain-event word per event, as on the wire
    .csv    "# width=W height=H", then "x,y,t,p" rows
    .fbc    16-byte header ("FBC1", width, height, reserved) + wire bytes
    .fbcz   a .fbc capture wrapped by the cascade stage
"""

import logging
import math
import re
import struct
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from . import cascade, log_msgs
from .model import (
    COORD_LIMIT,
    EVENT_DTYPE,
    TIMESTAMP_LIMIT,
    US_PER_S,
    EventStream,
    FBCError,
    validate_stream,
)
from .wire import Packet, WireFormatError, decode_packets, encode_packets

LOGGER = logging.getLogger("fbc.io")

PathLike = Union[str, Path]

FORMATS = ("aer8", "csv")

AER8_MAGIC = b"AER8"
CAPTURE_MAGIC = b"FBC1"
FILE_HEADER = struct.Struct("<4sIII")  # magic, width, height, reserved
FILE_HEADER_SIZE = FILE_HEADER.size  # 16
RECORD_SIZE = 8

_GEOMETRY_RE = re.compile(r"#\s*width\s*=\s*(\d+)\s+height\s*=\s*(\d+)\s*$")


class EventFileError(FBCError, ValueError):
    """Raised when a file cannot be read; points at the line or byte that failed."""

    def __init__(
        self,
        msg: str,
        path: PathLike,
        line: Optional[int] = None,
        offset: Optional[int] = None,
    ) -> None:
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (at byte offset {offset})"
        super().__init__(f"{path}: {msg}{where}")
        self.path = Path(path)
        self.line = line
        self.offset = offset


class OrderingError(EventFileError):
    """Raised when a file promised to be sorted is not."""


def detect_format(path: PathLike) -> str:
    """Event-file format from the file suffix."""
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix not in FORMATS:
        raise EventFileError(f"cannot tell the format from suffix {suffix!r} (use {FORMATS})", path)
    return suffix


# -----------------------------
# aer8
# -----------------------------


def _words(stream: EventStream) -> np.ndarray:
    return (
        stream.t.astype(np.uint64)
        | (stream.x.astype(np.uint64) << np.uint64(32))
        | (stream.y.astype(np.uint64) << np.uint64(46))
        | (stream.p.astype(np.uint64) << np.uint64(60))
    ).astype("<u8")


def aer8_bytes(stream: EventStream) -> bytes:
    """Serialize `stream` as an .aer8 file image."""
    header = FILE_HEADER.pack(AER8_MAGIC, stream.sensor_width, stream.sensor_height, 0)
    return header + _words(stream).tobytes()


def parse_aer8(
    data: bytes,
    path: PathLike = "<bytes>",
    width: Optional[int] = None,
    height: Optional[int] = None,
) -> Tuple[np.ndarray, int, int, int]:
    """Decode an .aer8 image to (records, width, height, header size).

    Geometry comes from the header; a headerless image needs `width`
    and `height`.
    """
    base = 0
    if data[:4] == AER8_MAGIC:
        if len(data) < FILE_HEADER_SIZE:
            raise EventFileError("truncated header", path, offset=len(data))
        _, width, height, _ = FILE_HEADER.unpack_from(data)
        base = FILE_HEADER_SIZE
    elif width is None or height is None:
        raise EventFileError("no AER8 header and no sensor geometry given", path, offset=0)
    if (len(data) - base) % RECORD_SIZE:
        end = len(data) - (len(data) - base) % RECORD_SIZE
        raise EventFileError(f"{len(data) - end} trailing bytes", path, offset=end)

    words = np.frombuffer(data, dtype="<u8", offset=base)
    tags = words >> np.uint64(61)
    bad = np.flatnonzero(tags != 0)
    if len(bad):
        i = int(bad[0])
        raise EventFileError(
            f"record with tag {int(tags[i])} is not a plain event", path, offset=base + RECORD_SIZE * i
        )
    records = np.empty(len(words), dtype=EVENT_DTYPE)
    records["t"] = words & np.uint64(0xFFFFFFFF)
    records["x"] = (words >> np.uint64(32)) & np.uint64(COORD_LIMIT - 1)
    records["y"] = (words >> np.uint64(46)) & np.uint64(COORD_LIMIT - 1)
    records["p"] = (words >> np.uint64(60)) & np.uint64(1)
    return records, int(width), int(height), base


# -----------------------------
# csv
# -----------------------------


def csv_text(stream: EventStream) -> str:
    """Serialize `stream` as CSV text."""
    lines = [f"# width={stream.sensor_width} height={stream.sensor_height}", "x,y,t,p"]
    lines.extend(f"{x},{y},{t},{p}" for x, y, t, p in stream.events.tolist())
    return "\n".join(lines) + "\n"


def parse_csv(
    text: str,
    path: PathLike = "<text>",
    width: Optional[int] = None,
    height: Optional[int] = None,
) -> Tuple[np.ndarray, int, int, List[int]]:
    """Decode CSV text to (records, width, height, line number of every record)."""
    rows: List[Tuple[int, int, int, int]] = []
    line_nos: List[int] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _GEOMETRY_RE.match(line)
            if m:
                width, height = int(m.group(1)), int(m.group(2))
            continue
        if line.replace(" ", "") == "x,y,t,p":
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise EventFileError(f"expected 4 columns, got {len(fields)}", path, line=line_no)
        try:
            x, y, t, p = (int(f) for f in fields)
        except ValueError:
            raise EventFileError(f"non-integer field in {line!r}", path, line=line_no)
        if p not in (0, 1):
            raise EventFileError(f"polarity must be 0 or 1 ({p})", path, line=line_no)
        if not (0 <= x < COORD_LIMIT and 0 <= y < COORD_LIMIT and 0 <= t < TIMESTAMP_LIMIT):
            raise EventFileError(f"field out of range in {line!r}", path, line=line_no)
        rows.append((x, y, t, p))
        line_nos.append(line_no)
    if width is None or height is None:
        raise EventFileError("sensor geometry missing (no '# width=W height=H' line)", path)
    return np.array(rows, dtype=EVENT_DTYPE).reshape(-1), width, height, line_nos


# -----------------------------
# event files
# -----------------------------


class _Position:
    """Maps a record index to where it sits in the file."""

    def __init__(self, base: int = 0, line_nos: Optional[Sequence[int]] = None) -> None:
        self.base = base
        self.line_nos = line_nos

    def __call__(self, index: int) -> Dict[str, int]:
        if self.line_nos is not None:
            return {"line": self.line_nos[index]}
        return {"offset": self.base + RECORD_SIZE * index}


def _check_stream(
    stream: EventStream, path: PathLike, assume_sorted: bool, position: _Position
) -> EventStream:
    for v in validate_stream(stream):
        if v.rule == "ordering":
            if assume_sorted:
                raise OrderingError(v.detail, path, **position(v.index))
            continue
        raise EventFileError(v.detail, path, **position(v.index))
    if not stream.is_sorted():
        LOGGER.info(f"{log_msgs.IO_SORTED_ON_LOAD} ({path})")
        stream = stream.sorted()
    return stream


def read_events(
    path: PathLike,
    fmt: Optional[str] = None,
    width: Optional[int] = None,
    height: Optional[int] = None,
    assume_sorted: bool = False,
) -> EventStream:
    """Read an event file.

    An unsorted file is sorted on load (stable) unless `assume_sorted`
    is set, in which case it raises `OrderingError`.
    """
    fmt = fmt or detect_format(path)
    if fmt == "aer8":
        records, w, h, base = parse_aer8(Path(path).read_bytes(), path, width, height)
        position = _Position(base=base)
    elif fmt == "csv":
        records, w, h, line_nos = parse_csv(Path(path).read_text(), path, width, height)
        position = _Position(line_nos=line_nos)
    else:
        raise EventFileError(f"unknown format {fmt!r} (use {FORMATS})", path)
    if not (0 < w <= COORD_LIMIT and 0 < h <= COORD_LIMIT):
        raise EventFileError(f"sensor {w}x{h} out of range", path)
    stream = _check_stream(EventStream(records, w, h), path, assume_sorted, position)
    LOGGER.debug(f"{log_msgs.IO_READ} ({path}: {stream})")
    return stream


def write_events(stream: EventStream, path: PathLike, fmt: Optional[str] = None) -> None:
    """Write `stream` to `path`."""
    fmt = fmt or detect_format(path)
    if fmt == "aer8":
        Path(path).write_bytes(aer8_bytes(stream))
    elif fmt == "csv":
        with open(path, "w", newline="\n") as f:
            f.write(csv_text(stream))
    else:
        raise EventFileError(f"unknown format {fmt!r} (use {FORMATS})", path)
    LOGGER.debug(f"{log_msgs.IO_WROTE} ({path}: {stream})")


# -----------------------------
# packet captures
# -----------------------------


class Capture(NamedTuple):
    """A packet sequence with the geometry of the sensor that produced it."""

    width: int
    height: int
    packets: List[Packet]


def capture_bytes(capture: Capture) -> bytes:
    """Serialize a capture (.fbc image)."""
    return FILE_HEADER.pack(CAPTURE_MAGIC, capture.width, capture.height, 0) + encode_packets(
        capture.packets
    )


def parse_capture(data: bytes, path: PathLike = "<bytes>") -> Capture:
    """Decode an .fbc image."""
    if len(data) < FILE_HEADER_SIZE:
        raise EventFileError("truncated capture header", path, offset=len(data))
    magic, width, height, _ = FILE_HEADER.unpack_from(data)
    if magic != CAPTURE_MAGIC:
        raise EventFileError(f"bad capture magic {magic!r}", path, offset=0)
    try:
        packets = decode_packets(data[FILE_HEADER_SIZE:])
    except WireFormatError as e:
        raise EventFileError(str(e), path, offset=FILE_HEADER_SIZE + e.offset) from e
    return Capture(width, height, packets)


def write_packets(
    path: PathLike,
    capture: Capture,
    backend: Optional[str] = None,
    lzma_preset: Optional[int] = None,
) -> int:
    """Write a capture, through the cascade stage if `backend` is given.

    Returns the number of bytes written.
    """
    data = capture_bytes(capture)
    if backend is not None:
        data = cascade.cascade_compress(data, backend, lzma_preset)
    Path(path).write_bytes(data)
    LOGGER.debug(f"{log_msgs.IO_WROTE} ({path}: {len(capture.packets)} packets, {len(data)} bytes)")
    return len(data)


def read_packets(path: PathLike) -> Capture:
    """Read an .fbc capture, or an archive wrapping one."""
    data = Path(path).read_bytes()
    if data[:4] == cascade.MAGIC:
        try:
            data = cascade.cascade_decompress(data)
        except cascade.CascadeError as e:
            raise EventFileError(str(e), path, offset=e.offset) from e
    capture = parse_capture(data, path)
    LOGGER.debug(f"{log_msgs.IO_READ} ({path}: {len(capture.packets)} packets)")
    return capture


# -----------------------------
# ingestion of text exports
# -----------------------------

TIME_UNITS = ("auto", "s", "us")
SECONDS_MAX = 1e5  # fractional timestamps below this are read as seconds


def _guess_time_unit(raw_t: Sequence[str], values: np.ndarray) -> str:
    fractional = any(("." in s or "e" in s.lower()) for s in raw_t)
    if fractional and len(values) and float(np.max(np.abs(values))) < SECONDS_MAX:
        return "s"
    return "us"


def ingest_text(
    path: PathLike,
    width: int,
    height: int,
    time_unit: str = "auto",
    columns: str = "xytp",
    rebase: bool = False,
) -> EventStream:
    """Read a whitespace- or comma-separated text export of an event recording.

    Args:
        path: the text file
        width: sensor width
        height: sensor height
        time_unit: "s", "us", or "auto" (fractional values under 1e5 mean seconds)
        columns: order of the x, y, t, p columns, e.g. "txyp"
        rebase: shift timestamps so the first event is at t=0

    Polarity values <= 0 (0 or -1) are OFF, anything positive is ON.
    """
    if sorted(columns) != sorted("xytp"):
        raise EventFileError(f"columns must be a permutation of 'xytp' ({columns!r})", path)
    if time_unit not in TIME_UNITS:
        raise EventFileError(f"time unit must be one of {TIME_UNITS} ({time_unit!r})", path)
    col = {c: i for i, c in enumerate(columns)}

    xs: List[int] = []
    ys: List[int] = []
    raw_t: List[str] = []
    ps: List[int] = []
    line_nos: List[int] = []
    with open(path) as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith(("#", "%")):
                continue
            fields = line.replace(",", " ").split()
            if len(fields) < 4:
                raise EventFileError(f"expected 4 columns, got {len(fields)}", path, line=line_no)
            try:
                x, y, t_val, p = (float(fields[col[c]]) for c in "xytp")
            except ValueError:
                if not line_nos:
                    continue  # column-name header
                raise EventFileError(f"non-numeric field in {line!r}", path, line=line_no)
            if not (math.isfinite(t_val) and 0 <= x < COORD_LIMIT and 0 <= y < COORD_LIMIT):
                raise EventFileError(f"field out of range in {line!r}", path, line=line_no)
            xs.append(int(x))
            ys.append(int(y))
            raw_t.append(fields[col["t"]])
            ps.append(1 if p > 0 else 0)
            line_nos.append(line_no)

    values = np.array([float(s) for s in raw_t], dtype=np.float64)
    unit = _guess_time_unit(raw_t, values) if time_unit == "auto" else time_unit
    scale = US_PER_S if unit == "s" else 1
    scaled = np.floor(values * scale + 0.5)
    if len(scaled) and float(np.max(np.abs(scaled))) >= 2.0**62:
        i = int(np.argmax(np.abs(scaled)))
        raise EventFileError(f"timestamp {raw_t[i]} is too large", path, line=line_nos[i])
    t = scaled.astype(np.int64)
    if rebase and len(t):
        t = t - t.min()
    LOGGER.info(f"{log_msgs.IO_READ} ({path}: {len(t)} events, time unit {unit})")

    records = np.empty(len(t), dtype=EVENT_DTYPE)
    records["x"] = xs
    records["y"] = ys
    records["t"] = t
    records["p"] = ps
    if len(t) and not (t.min() >= 0 and t.max() < TIMESTAMP_LIMIT):
        i = int(np.flatnonzero((t < 0) | (t >= TIMESTAMP_LIMIT))[0])
        raise EventFileError(
            f"timestamp {t[i]} µs does not fit in 32 bits (try rebase)", path, line=line_nos[i]
        )
    return _check_stream(
        EventStream(records, width, height), path, False, _Position(line_nos=line_nos)
    )
