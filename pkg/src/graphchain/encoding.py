"""Canonical byte encoding: fixed field order, big-endian integers,
u32 length-prefixed byte strings."""
from __future__ import annotations

import struct

_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class DecodeError(ValueError):
    pass


class Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, value: int) -> "Writer":
        self._parts.append(_U8.pack(value))
        return self

    def u64(self, value: int) -> "Writer":
        if value < 0:
            raise ValueError(f"cannot encode negative integer {value}")
        self._parts.append(_U64.pack(value))
        return self

    def blob(self, value: bytes | None) -> "Writer":
        value = value or b""
        self._parts.append(_U32.pack(len(value)))
        self._parts.append(bytes(value))
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes) -> None:
        self._data = memoryview(data)
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise DecodeError("truncated record")
        chunk = bytes(self._data[self._pos:self._pos + n])
        self._pos += n
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def blob(self) -> bytes:
        (n,) = _U32.unpack(self._take(4))
        return self._take(n)

    def done(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError(f"{len(self._data) - self._pos} trailing bytes")


def u64(value: int) -> bytes:
    return _U64.pack(value)
