"""Minimal CBOR codec covering the WebAuthn wire subset.

Handles definite-length integers, byte strings, text strings, arrays, maps
and the simple values false/true/null — everything attestation objects and
COSE keys need, nothing more. Indefinite lengths, tags and floats are
rejected. Decoding reports how many bytes it consumed, which is what lets
authenticator-data parsing find the end of an embedded COSE key.
"""

from __future__ import annotations

import struct
from typing import Any


class CborError(ValueError):
    """Raised on any malformed or unsupported CBOR input."""


_MT_UNSIGNED = 0
_MT_NEGATIVE = 1
_MT_BYTES = 2
_MT_TEXT = 3
_MT_ARRAY = 4
_MT_MAP = 5
_MT_SIMPLE = 7

_SIMPLE_FALSE = 20
_SIMPLE_TRUE = 21
_SIMPLE_NULL = 22


def _encode_head(major: int, value: int) -> bytes:
    if value < 24:
        return bytes([(major << 5) | value])
    if value <= 0xFF:
        return bytes([(major << 5) | 24, value])
    if value <= 0xFFFF:
        return bytes([(major << 5) | 25]) + struct.pack(">H", value)
    if value <= 0xFFFFFFFF:
        return bytes([(major << 5) | 26]) + struct.pack(">I", value)
    return bytes([(major << 5) | 27]) + struct.pack(">Q", value)


def _encode_item(obj: Any, out: bytearray) -> None:
    # bool before int: bool is an int subclass
    if obj is True:
        out.append((_MT_SIMPLE << 5) | _SIMPLE_TRUE)
    elif obj is False:
        out.append((_MT_SIMPLE << 5) | _SIMPLE_FALSE)
    elif obj is None:
        out.append((_MT_SIMPLE << 5) | _SIMPLE_NULL)
    elif isinstance(obj, int):
        if obj >= 0:
            out += _encode_head(_MT_UNSIGNED, obj)
        else:
            out += _encode_head(_MT_NEGATIVE, -1 - obj)
    elif isinstance(obj, (bytes, bytearray, memoryview)):
        data = bytes(obj)
        out += _encode_head(_MT_BYTES, len(data))
        out += data
    elif isinstance(obj, str):
        data = obj.encode("utf-8")
        out += _encode_head(_MT_TEXT, len(data))
        out += data
    elif isinstance(obj, (list, tuple)):
        out += _encode_head(_MT_ARRAY, len(obj))
        for item in obj:
            _encode_item(item, out)
    elif isinstance(obj, dict):
        # Keys are written in insertion order; callers that need a canonical
        # layout (COSE keys) construct their maps in that order.
        out += _encode_head(_MT_MAP, len(obj))
        for key, value in obj.items():
            _encode_item(key, out)
            _encode_item(value, out)
    else:
        raise CborError(f"cannot encode {type(obj).__name__} as CBOR")


def dumps(obj: Any) -> bytes:
    out = bytearray()
    _encode_item(obj, out)
    return bytes(out)


def _decode_head(data: bytes, offset: int) -> tuple[int, int, int]:
    if offset >= len(data):
        raise CborError("truncated CBOR: missing initial byte")
    initial = data[offset]
    major = initial >> 5
    info = initial & 0x1F
    offset += 1
    if info < 24:
        return major, info, offset
    if info == 24:
        width, fmt = 1, ">B"
    elif info == 25:
        width, fmt = 2, ">H"
    elif info == 26:
        width, fmt = 4, ">I"
    elif info == 27:
        width, fmt = 8, ">Q"
    else:
        raise CborError(f"unsupported CBOR additional info {info}")
    if offset + width > len(data):
        raise CborError("truncated CBOR: short length field")
    (value,) = struct.unpack(fmt, data[offset : offset + width])
    return major, value, offset + width


def _decode_item(data: bytes, offset: int, depth: int) -> tuple[Any, int]:
    if depth > 32:
        raise CborError("CBOR nesting too deep")
    major, value, offset = _decode_head(data, offset)
    if major == _MT_UNSIGNED:
        return value, offset
    if major == _MT_NEGATIVE:
        return -1 - value, offset
    if major in (_MT_BYTES, _MT_TEXT):
        end = offset + value
        if end > len(data):
            raise CborError("truncated CBOR: short string body")
        raw = data[offset:end]
        if major == _MT_TEXT:
            try:
                return raw.decode("utf-8"), end
            except UnicodeDecodeError as exc:
                raise CborError("invalid UTF-8 in CBOR text string") from exc
        return raw, end
    if major == _MT_ARRAY:
        items = []
        for _ in range(value):
            item, offset = _decode_item(data, offset, depth + 1)
            items.append(item)
        return items, offset
    if major == _MT_MAP:
        result: dict[Any, Any] = {}
        for _ in range(value):
            key, offset = _decode_item(data, offset, depth + 1)
            if isinstance(key, (bytes, dict, list)):
                raise CborError("unsupported CBOR map key type")
            if key in result:
                raise CborError("duplicate CBOR map key")
            val, offset = _decode_item(data, offset, depth + 1)
            result[key] = val
        return result, offset
    if major == _MT_SIMPLE:
        if value == _SIMPLE_FALSE:
            return False, offset
        if value == _SIMPLE_TRUE:
            return True, offset
        if value == _SIMPLE_NULL:
            return None, offset
        raise CborError(f"unsupported CBOR simple value {value}")
    raise CborError(f"unsupported CBOR major type {major}")


def loads_prefix(data: bytes, offset: int = 0) -> tuple[Any, int]:
    """Decode one item starting at `offset`; return (item, next_offset)."""
    return _decode_item(bytes(data), offset, 0)


def loads(data: bytes) -> Any:
    obj, end = loads_prefix(data, 0)
    if end != len(data):
        raise CborError(f"{len(data) - end} trailing bytes after CBOR item")
    return obj
