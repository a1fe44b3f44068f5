"""Binary container helpers shared by the checkpoint and dataset formats.

Both formats are little-endian throughout: a 4-byte magic, a u32 version,
then format-specific sections.  Corruption is reported through distinct
exception types so callers (and the CLI exit-code table) can tell a wrong
file apart from a damaged one.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np


class FormatError(Exception):
    """Base class for binary container problems."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedError(FormatError):
    """File ended before a declared section was complete."""


class ArchMismatchError(FormatError):
    """Container is well-formed but describes an unsupported layout."""


def read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedError(f"truncated while reading {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def check_magic(f: BinaryIO, magic: bytes) -> None:
    got = f.read(len(magic))
    if got != magic:
        raise BadMagicError(f"bad magic: expected {magic!r}, got {got!r}")


def write_u32(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<I", value))


def read_u32(f: BinaryIO, what: str) -> int:
    return struct.unpack("<I", read_exact(f, 4, what))[0]


def write_u64(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<Q", value))


def read_u64(f: BinaryIO, what: str) -> int:
    return struct.unpack("<Q", read_exact(f, 8, what))[0]


def write_f64_array(f: BinaryIO, arr: np.ndarray) -> None:
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_f64_array(f: BinaryIO, shape: tuple[int, ...], what: str) -> np.ndarray:
    count = int(np.prod(shape)) if shape else 1
    buf = read_exact(f, count * 8, what)
    return np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)


def write_u64_array(f: BinaryIO, arr: np.ndarray) -> None:
    f.write(np.ascontiguousarray(arr, dtype="<u8").tobytes())


def read_u64_array(f: BinaryIO, n: int, what: str) -> np.ndarray:
    buf = read_exact(f, n * 8, what)
    return np.frombuffer(buf, dtype="<u8").astype(np.int64)
