"""Binary framing for integer matrices over Z_q.

Layout of one frame (all little-endian)::

    magic    4 bytes   b"HECT" (ciphertext) or b"HESK" (key file)
    version  u16
    base     u8
    d        u16       number of radix digits, q = base**d
    N        u32       secret-key dimension
    rows     u32
    body     rows * (N+1) signed 128-bit two's-complement integers, row-major

Ciphertexts and GSW rows both have ``N+1`` columns, so the column count is
implied by ``N``.  A GSW matrix is wrapped in a ``b"HEGM"`` header carrying
its entry shape ``(m, n)``, followed by ``m*n`` ciphertext frames.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

VERSION = 1

CIPHERTEXT_MAGIC = b"HECT"
KEY_MAGIC = b"HESK"
GSW_MATRIX_MAGIC = b"HEGM"

_HEADER = struct.Struct("<4sHBHII")
_GSW_HEADER = struct.Struct("<4sHII")
_INT_BYTES = 16
_INT_MIN = -(1 << 127)
_INT_MAX = (1 << 127) - 1


class FrameError(ValueError):
    """Malformed or unexpected binary frame."""


@dataclass(frozen=True)
class FrameHeader:
    magic: bytes
    version: int
    base: int
    d: int
    N: int
    rows: int

    @property
    def q(self) -> int:
        return self.base**self.d


def pack_matrix(magic: bytes, body, base: int, d: int, N: int) -> bytes:
    body = np.asarray(body, dtype=object)
    if body.ndim != 2 or body.shape[1] != N + 1:
        raise FrameError(f"body shape {body.shape} does not have N+1={N + 1} columns")
    if not 2 <= base <= 0xFF:
        raise FrameError(f"base {base} does not fit in u8")
    out = bytearray(_HEADER.pack(magic, VERSION, base, d, N, body.shape[0]))
    for v in body.flat:
        v = int(v)
        if not _INT_MIN <= v <= _INT_MAX:
            raise FrameError(f"residue {v} does not fit in 128 bits")
        out += v.to_bytes(_INT_BYTES, "little", signed=True)
    return bytes(out)


def unpack_matrix(data: bytes, offset: int = 0, expect_magic: bytes | None = None):
    """Parse one frame starting at ``offset``.

    Returns ``(header, body, next_offset)``.
    """
    if len(data) - offset < _HEADER.size:
        raise FrameError("truncated frame header")
    magic, version, base, d, N, rows = _HEADER.unpack_from(data, offset)
    if magic not in (CIPHERTEXT_MAGIC, KEY_MAGIC):
        raise FrameError(f"unknown frame magic {magic!r}")
    if expect_magic is not None and magic != expect_magic:
        raise FrameError(f"expected {expect_magic!r} frame, got {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported frame version {version}")
    if base < 2:
        raise FrameError(f"invalid base {base}")
    offset += _HEADER.size
    count = rows * (N + 1)
    end = offset + count * _INT_BYTES
    if len(data) < end:
        raise FrameError("truncated frame body")
    body = np.empty(count, dtype=object)
    for i in range(count):
        start = offset + i * _INT_BYTES
        body[i] = int.from_bytes(data[start : start + _INT_BYTES], "little", signed=True)
    header = FrameHeader(magic, version, base, d, N, rows)
    return header, body.reshape(rows, N + 1), end


def pack_gsw_header(m: int, n: int) -> bytes:
    return _GSW_HEADER.pack(GSW_MATRIX_MAGIC, VERSION, m, n)


def unpack_gsw_header(data: bytes, offset: int = 0):
    if len(data) - offset < _GSW_HEADER.size:
        raise FrameError("truncated GSW matrix header")
    magic, version, m, n = _GSW_HEADER.unpack_from(data, offset)
    if magic != GSW_MATRIX_MAGIC:
        raise FrameError(f"expected GSW matrix frame, got {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported frame version {version}")
    return m, n, offset + _GSW_HEADER.size
