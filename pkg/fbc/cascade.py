"""Lossless second stage: packet bytes through a dictionary compressor.

Archive layout (little-endian):

    4 bytes  magic b"FBCZ"
    1 byte   backend id
    8 bytes  length of the original byte stream
    ...      compressed payload
"""

import bz2
import enum
import logging
import lzma
import struct
import zlib
from typing import Dict, List, NamedTuple, Optional

from . import log_msgs
from .metrics import MetricsError
from .model import FBCError

LOGGER = logging.getLogger("fbc.cascade")

MAGIC = b"FBCZ"
HEADER = struct.Struct("<4sBQ")
HEADER_SIZE = HEADER.size  # 13

DEFAULT_BACKEND = "lzma"
LZMA_PRESET = 9


class CascadeError(FBCError, ValueError):
    """Raised when an archive cannot be built or read; `offset` points at the problem."""

    def __init__(self, msg: str, offset: int) -> None:
        super().__init__(f"{msg} (at byte offset {offset})")
        self.offset = offset


class BackendId(enum.IntEnum):
    """Backend ids as stored in the archive header."""

    NONE = 0
    LZMA = 1
    ZLIB = 2
    BZ2 = 3


# -----------------------------
# backends
# -----------------------------


class Backend:
    """A lossless byte compressor."""

    NAME = "abstract-backend"
    ID = -1

    def compress(self, data: bytes) -> bytes:
        """Compress `data`."""
        raise NotImplementedError()

    def decompress(self, data: bytes) -> bytes:
        """Undo `compress()`."""
        raise NotImplementedError()


class NoneBackend(Backend):
    """Stores the bytes as they are."""

    NAME = "none"
    ID = BackendId.NONE

    def compress(self, data: bytes) -> bytes:
        return bytes(data)

    def decompress(self, data: bytes) -> bytes:
        return bytes(data)


class LzmaBackend(Backend):
    """xz container, extreme preset."""

    NAME = "lzma"
    ID = BackendId.LZMA

    def __init__(self, preset: int = LZMA_PRESET) -> None:
        self.preset = preset

    def compress(self, data: bytes) -> bytes:
        return lzma.compress(data, format=lzma.FORMAT_XZ, preset=self.preset | lzma.PRESET_EXTREME)

    def decompress(self, data: bytes) -> bytes:
        return lzma.decompress(data, format=lzma.FORMAT_XZ)


class ZlibBackend(Backend):
    """zlib stream, level 9."""

    NAME = "zlib"
    ID = BackendId.ZLIB

    def compress(self, data: bytes) -> bytes:
        return zlib.compress(data, 9)

    def decompress(self, data: bytes) -> bytes:
        return zlib.decompress(data)


class Bz2Backend(Backend):
    """bzip2, level 9."""

    NAME = "bz2"
    ID = BackendId.BZ2

    def compress(self, data: bytes) -> bytes:
        return bz2.compress(data, 9)

    def decompress(self, data: bytes) -> bytes:
        return bz2.decompress(data)


_BACKENDS: Dict[str, type] = {
    b.NAME: b for b in (NoneBackend, LzmaBackend, ZlibBackend, Bz2Backend)
}
_BY_ID = {b.ID: b.NAME for b in (NoneBackend, LzmaBackend, ZlibBackend, Bz2Backend)}


def available_backends() -> List[str]:
    """Names accepted by `get_backend()`."""
    return sorted(_BACKENDS)


def get_backend(name: str, lzma_preset: Optional[int] = None) -> Backend:
    """Get a `Backend` instance per the given name."""
    try:
        cls = _BACKENDS[name]
    except KeyError:
        raise CascadeError(f"Unknown cascade backend: {name}", 0)
    if cls is LzmaBackend and lzma_preset is not None:
        return LzmaBackend(lzma_preset)
    backend: Backend = cls()
    return backend


# -----------------------------
# archives
# -----------------------------


class ArchiveInfo(NamedTuple):
    """Header fields of an archive."""

    backend: str
    original_size: int
    archive_size: int


def cascade_compress(
    packet_bytes: bytes, backend: str = DEFAULT_BACKEND, lzma_preset: Optional[int] = None
) -> bytes:
    """Wrap `packet_bytes` into an archive."""
    impl = get_backend(backend, lzma_preset)
    try:
        payload = impl.compress(packet_bytes)
    except (lzma.LZMAError, zlib.error, OSError, ValueError) as e:
        raise CascadeError(f"{impl.NAME} compression failed: {e}", HEADER_SIZE) from e
    archive = HEADER.pack(MAGIC, impl.ID, len(packet_bytes)) + payload
    LOGGER.debug(
        f"{log_msgs.CASCADE_COMPRESSED} ({impl.NAME}, {len(packet_bytes)} -> {len(archive)} bytes)"
    )
    return archive


def read_header(archive: bytes) -> ArchiveInfo:
    """Check and decode the header of `archive`."""
    if len(archive) < HEADER_SIZE:
        raise CascadeError(f"archive header needs {HEADER_SIZE} bytes", len(archive))
    magic, backend_id, original_size = HEADER.unpack_from(archive)
    if magic != MAGIC:
        raise CascadeError(f"bad magic {magic!r}", 0)
    if backend_id not in _BY_ID:
        raise CascadeError(f"unknown backend id {backend_id}", 4)
    return ArchiveInfo(_BY_ID[backend_id], original_size, len(archive))


def cascade_decompress(archive: bytes) -> bytes:
    """Return the exact byte stream an archive was built from."""
    info = read_header(archive)
    impl = get_backend(info.backend)
    try:
        data = impl.decompress(bytes(archive[HEADER_SIZE:]))
    except (lzma.LZMAError, zlib.error, OSError, ValueError, EOFError) as e:
        raise CascadeError(f"corrupt {impl.NAME} payload: {e}", HEADER_SIZE) from e
    if len(data) != info.original_size:
        raise CascadeError(
            f"payload holds {len(data)} bytes, header says {info.original_size}", HEADER_SIZE
        )
    LOGGER.debug(f"{log_msgs.CASCADE_DECOMPRESSED} ({info.backend}, {len(data)} bytes)")
    return data


def cascaded_cr(n_s: int, archive_size_bytes: int) -> float:
    """Compression ratio of an archive against 8 bytes per source event."""
    if archive_size_bytes <= 0:
        raise MetricsError(f"archive size must be positive ({archive_size_bytes})")
    return (n_s * 8) / archive_size_bytes
