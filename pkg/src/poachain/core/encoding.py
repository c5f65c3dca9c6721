"""Canonical binary encoding primitives.

Integers are unsigned big-endian with fixed width; byte strings carry a
4-byte big-endian length prefix. Fixed-size fields (digests, addresses)
are written raw.
"""

from __future__ import annotations

import struct

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

MAX_U64 = (1 << 64) - 1
MAX_U256 = (1 << 256) - 1


class DecodeError(ValueError):
    pass


class Writer:
    __slots__ = ("_parts",)

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, value: int) -> Writer:
        if not 0 <= value <= 0xFF:
            raise ValueError(f"u8 out of range: {value}")
        self._parts.append(bytes((value,)))
        return self

    def u32(self, value: int) -> Writer:
        self._parts.append(_U32.pack(value))
        return self

    def u64(self, value: int) -> Writer:
        if not 0 <= value <= MAX_U64:
            raise ValueError(f"u64 out of range: {value}")
        self._parts.append(_U64.pack(value))
        return self

    def u256(self, value: int) -> Writer:
        if not 0 <= value <= MAX_U256:
            raise ValueError(f"u256 out of range: {value}")
        self._parts.append(value.to_bytes(32, "big"))
        return self

    def raw(self, data: bytes, size: int) -> Writer:
        if len(data) != size:
            raise ValueError(f"expected {size} bytes, got {len(data)}")
        self._parts.append(data)
        return self

    def blob(self, data: bytes) -> Writer:
        self._parts.append(_U32.pack(len(data)))
        self._parts.append(data)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    __slots__ = ("_data", "_pos")

    def __init__(self, data: bytes) -> None:
        self._data = memoryview(data)
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise DecodeError("truncated input")
        out = self._data[self._pos:end].tobytes()
        self._pos = end
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def u256(self) -> int:
        return int.from_bytes(self._take(32), "big")

    def raw(self, size: int) -> bytes:
        return self._take(size)

    def blob(self) -> bytes:
        return self._take(self.u32())

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def done(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError(f"{len(self._data) - self._pos} trailing bytes")


def frame(payload: bytes) -> bytes:
    """Length-prefix one record for streams (chain export, gossip)."""
    return _U32.pack(len(payload)) + payload


def iter_frames(data: bytes):
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise DecodeError("truncated frame header")
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + n > len(data):
            raise DecodeError("truncated frame body")
        yield data[pos:pos + n]
        pos += n
