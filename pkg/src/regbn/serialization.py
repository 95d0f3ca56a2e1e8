"""Shared binary container discipline.

Every persistent artifact (layer snapshots, dataset splits, model
checkpoints) uses the same little-endian layout: a 4-byte magic string,
a u16 format version, followed by declared-order fields. Floats are raw
64-bit little-endian, so round-trips are bit-exact. Readers validate the
magic, the version, and that the payload is consumed exactly.
"""

from __future__ import annotations

import struct

import numpy as np


class PayloadError(ValueError):
    """Corrupt, truncated, or version-mismatched payload."""


class Writer:
    def __init__(self, magic: bytes, version: int):
        if len(magic) != 4:
            raise ValueError("magic must be exactly 4 bytes")
        self._parts = [magic, struct.pack("<H", version)]

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<B", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<Q", v))
        return self

    def f64(self, v: float) -> "Writer":
        self._parts.append(struct.pack("<d", v))
        return self

    def f64_array(self, a: np.ndarray) -> "Writer":
        """Array payload prefixed with its u64 element count."""
        a = np.ascontiguousarray(a, dtype="<f8")
        self._parts.append(struct.pack("<Q", a.size))
        self._parts.append(a.tobytes())
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes, magic: bytes, version: int):
        self._data = data
        self._pos = 0
        got_magic = self._take(4)
        if got_magic != magic:
            raise PayloadError(f"bad magic: expected {magic!r}, got {got_magic!r}")
        got_version = self.u16()
        if got_version != version:
            raise PayloadError(f"unsupported format version {got_version}")

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise PayloadError("payload truncated")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def f64_array(self) -> np.ndarray:
        n = self.u64()
        return np.frombuffer(self._take(8 * n), dtype="<f8").astype(np.float64)

    def done(self) -> None:
        if self._pos != len(self._data):
            raise PayloadError(f"{len(self._data) - self._pos} trailing bytes in payload")
