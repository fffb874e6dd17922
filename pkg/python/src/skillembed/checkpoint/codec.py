"""Type-tagged binary codec for checkpoint payloads.

A stream starts with two version bytes, then one tag byte per value.
Integers use a compact packing: a single byte for -123..122, up to four
little-endian bytes below 2**30 in magnitude, and a sign-and-magnitude
"bignum" beyond that (the 128-bit generator states need it). Arrays carry
their dtype, shape and raw little-endian contents.
"""

import struct
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from ..errors import CheckpointError

VERSION = (1, 0)
_IMMEDIATE_LIMIT = 123
_PACKED_LIMIT = 1 << 30
_WORD_LIMIT = 1 << 32
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8"), "b1": np.dtype("bool")}


class Tag(Enum):
    """Type tags, one byte each."""

    NIL = 48        # 0
    TRUE = 84       # T
    FALSE = 70      # F
    INT = 105       # i
    BIGNUM = 108    # l
    FLOAT = 102     # f
    STRING = 34     # "
    ARRAY = 91      # [
    TUPLE = 40      # (
    HASH = 123      # {
    NDARRAY = 78    # N

    @classmethod
    def from_byte(cls, byte_val: int) -> Optional["Tag"]:
        try:
            return cls(byte_val)
        except ValueError:
            return None


def _dtype_code(array: np.ndarray) -> str:
    if array.dtype.kind == "f":
        return "f8"
    if array.dtype.kind in "iu":
        return "i8"
    if array.dtype.kind == "b":
        return "b1"
    raise CheckpointError(f"cannot encode arrays of dtype {array.dtype}")


class CheckpointWriter:
    """Encodes a tree of plain values and numpy arrays."""

    def __init__(self) -> None:
        self._out = bytearray()

    @classmethod
    def dump(cls, obj: Any) -> bytes:
        """Encode a value tree to bytes.

        Args:
            obj: ``None``, bools, ints of any size, floats, strings, numpy arrays,
                and lists, tuples or dicts of these.

        Returns:
            The version header followed by the tagged encoding.

        Raises:
            CheckpointError: If a value has no encoding.
        """
        writer = cls()
        writer._out.extend(VERSION)
        writer._write(obj)
        return bytes(writer._out)

    def _tag(self, tag: Tag) -> None:
        self._out.append(tag.value)

    def _write(self, obj: Any) -> None:
        if obj is None:
            self._tag(Tag.NIL)
        elif isinstance(obj, (bool, np.bool_)):
            self._tag(Tag.TRUE if obj else Tag.FALSE)
        elif isinstance(obj, (int, np.integer)):
            self._write_integer(int(obj))
        elif isinstance(obj, (float, np.floating)):
            self._tag(Tag.FLOAT)
            self._out.extend(struct.pack("<d", float(obj)))
        elif isinstance(obj, str):
            self._tag(Tag.STRING)
            self._write_bytes(obj.encode("utf-8"))
        elif isinstance(obj, np.ndarray):
            self._write_ndarray(obj)
        elif isinstance(obj, (list, tuple)):
            self._tag(Tag.TUPLE if isinstance(obj, tuple) else Tag.ARRAY)
            self._write_int(len(obj))
            for item in obj:
                self._write(item)
        elif isinstance(obj, dict):
            self._tag(Tag.HASH)
            self._write_int(len(obj))
            for key, value in obj.items():
                self._write(key)
                self._write(value)
        else:
            raise CheckpointError(f"cannot encode values of type {type(obj).__name__}")

    def _write_integer(self, value: int) -> None:
        if -_PACKED_LIMIT < value < _PACKED_LIMIT:
            self._tag(Tag.INT)
            self._write_int(value)
            return
        self._tag(Tag.BIGNUM)
        magnitude = abs(value)
        size = (magnitude.bit_length() + 15) // 16
        self._out.append(ord("-") if value < 0 else ord("+"))
        self._write_int(size)
        self._out.extend(magnitude.to_bytes(2 * size, "little"))

    def _write_int(self, value: int) -> None:
        if not -_WORD_LIMIT <= value < _WORD_LIMIT:
            raise CheckpointError(f"length or count {value} does not fit in four bytes")
        if value == 0:
            self._out.append(0)
        elif 0 < value < _IMMEDIATE_LIMIT:
            self._out.append(value + 5)
        elif -_IMMEDIATE_LIMIT <= value < 0:
            self._out.append((value - 5) & 0xFF)
        elif value > 0:
            body = value.to_bytes((value.bit_length() + 7) // 8, "little")
            self._out.append(len(body))
            self._out.extend(body)
        else:
            size = 1
            while value < -(1 << (8 * size)):
                size += 1
            self._out.append((-size) & 0xFF)
            self._out.extend((value & ((1 << (8 * size)) - 1)).to_bytes(size, "little"))

    def _write_bytes(self, data: bytes) -> None:
        self._write_int(len(data))
        self._out.extend(data)

    def _write_ndarray(self, array: np.ndarray) -> None:
        code = _dtype_code(array)
        data = np.array(array, dtype=_DTYPES[code], order="C")
        self._tag(Tag.NDARRAY)
        self._write_bytes(code.encode("ascii"))
        self._write_int(data.ndim)
        for dim in data.shape:
            self._write_int(dim)
        self._write_bytes(data.tobytes())


class CheckpointReader:
    """Decodes what ``CheckpointWriter`` produced."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._position = 0

    @classmethod
    def load(cls, data: bytes) -> Any:
        """Decode bytes produced by ``CheckpointWriter.dump``.

        Args:
            data: The encoded checkpoint payload.

        Returns:
            The decoded value tree.

        Raises:
            CheckpointError: On a version mismatch, truncation, an unknown tag or trailing bytes.
        """
        reader = cls(data)
        version = (reader._read_byte(), reader._read_byte())
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version[0]}.{version[1]}")
        obj = reader._read()
        if reader._position != len(data):
            raise CheckpointError(f"{len(data) - reader._position} trailing bytes after checkpoint payload")
        return obj

    def _read_byte(self) -> int:
        if self._position >= len(self._data):
            raise CheckpointError(f"unexpected end of data at position {self._position}")
        byte_val = self._data[self._position]
        self._position += 1
        return byte_val

    def _read_signed_byte(self) -> int:
        byte_val = self._read_byte()
        return byte_val if byte_val < 128 else byte_val - 256

    def _read_bytes(self, count: int) -> bytes:
        if count < 0 or self._position + count > len(self._data):
            raise CheckpointError(f"not enough data: need {count} bytes, have {len(self._data) - self._position}")
        result = self._data[self._position:self._position + count]
        self._position += count
        return bytes(result)

    def _read(self) -> Any:
        type_byte = self._read_byte()
        tag = Tag.from_byte(type_byte)
        if tag is None:
            raise CheckpointError(f"unknown tag {type_byte} at position {self._position - 1}")
        if tag is Tag.NIL:
            return None
        if tag is Tag.TRUE:
            return True
        if tag is Tag.FALSE:
            return False
        if tag is Tag.INT:
            return self._read_int()
        if tag is Tag.BIGNUM:
            return self._read_bignum()
        if tag is Tag.FLOAT:
            return struct.unpack("<d", self._read_bytes(8))[0]
        if tag is Tag.STRING:
            return self._read_string()
        if tag is Tag.ARRAY:
            return self._read_array()
        if tag is Tag.TUPLE:
            return tuple(self._read_array())
        if tag is Tag.HASH:
            return self._read_hash()
        return self._read_ndarray()

    def _read_int(self) -> int:
        c = self._read_signed_byte()
        if c == 0:
            return 0
        if c > 4:
            return c - 5
        if c < -4:
            return c + 5
        if c > 0:
            return int.from_bytes(self._read_bytes(c), "little")
        body = int.from_bytes(self._read_bytes(-c), "little")
        return body - (1 << (8 * -c))

    def _read_bignum(self) -> int:
        sign = self._read_byte()
        if sign not in (ord("+"), ord("-")):
            raise CheckpointError(f"bad bignum sign byte {sign}")
        magnitude = int.from_bytes(self._read_bytes(2 * self._read_int()), "little")
        return -magnitude if sign == ord("-") else magnitude

    def _read_string(self) -> str:
        raw = self._read_bytes(self._read_int())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"string is not valid UTF-8: {e}") from e

    def _read_array(self) -> List[Any]:
        return [self._read() for _ in range(self._read_int())]

    def _read_hash(self) -> Dict[Any, Any]:
        result = {}
        for _ in range(self._read_int()):
            key = self._read()
            try:
                result[key] = self._read()
            except TypeError as e:
                raise CheckpointError(f"unhashable dictionary key {key!r}") from e
        return result

    def _read_ndarray(self) -> np.ndarray:
        code = self._read_string()
        if code not in _DTYPES:
            raise CheckpointError(f"unknown array dtype {code!r}")
        dtype = _DTYPES[code]
        shape = tuple(self._read_int() for _ in range(self._read_int()))
        raw = self._read_bytes(self._read_int())
        if len(raw) != dtype.itemsize * int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"array of shape {shape} cannot hold {len(raw)} bytes")
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def dump(obj: Any) -> bytes:
    return CheckpointWriter.dump(obj)


def load(data: bytes) -> Any:
    return CheckpointReader.load(data)
