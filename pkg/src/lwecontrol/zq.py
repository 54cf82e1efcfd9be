"""Signed modular arithmetic over Z_q.

Residues are always kept in the signed representative set
``[q] = {i : -q/2 <= i < q/2}``.  Matrices are numpy arrays of dtype
``object`` holding Python ints, so every intermediate is exact no matter
how large ``q`` gets.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from numbers import Rational

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def smod(x, q: int):
    """Reduce ``x`` into ``[q]``.

    Works on Python ints and on integer/object numpy arrays (elementwise).

    >>> smod(17, 10)
    -3
    """
    if q < 2:
        raise ValueError(f"modulus must be >= 2, got {q}")
    half = q // 2
    if isinstance(x, np.ndarray) and x.dtype != object:
        x = as_int_array(x)
    return (x + half) % q - half


def in_signed_range(v, q: int) -> bool:
    """``v`` lies in ``[q] = {-q/2 <= i < q/2}``."""
    v = int(v)
    return -(q // 2) <= v < q - q // 2


def exact(x) -> Fraction:
    """Convert a number to an exact rational.

    Floats are read through their shortest decimal repr, so ``0.1`` becomes
    ``1/10`` rather than its binary expansion.  Strings accept decimal and
    scientific notation (``"1e-3"``) as well as ``"a/b"``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not np.isfinite(x):
            raise ValueError(f"cannot represent {x!r} exactly")
        return Fraction(repr(float(x)))
    if isinstance(x, (str, Decimal)):
        return Fraction(x.strip() if isinstance(x, str) else x)
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    raise TypeError(f"cannot convert {type(x).__name__} to an exact rational")


def _round_scalar(x) -> int:
    v = exact(x)
    mag = abs(v) + Fraction(1, 2)
    r = mag.numerator // mag.denominator
    return -r if v < 0 else r


def round_half_away(x):
    """Round to the nearest integer, ties away from zero.

    ``round_half_away(-2.5) == -3`` and ``round_half_away(-2.4) == -2``.
    Arrays and sequences are rounded componentwise into an object array.
    """
    if isinstance(x, (np.ndarray, list, tuple)):
        arr = np.asarray(x, dtype=object)
        out = np.empty(arr.shape, dtype=object)
        for idx, v in np.ndenumerate(arr):
            out[idx] = _round_scalar(v)
        return out
    return _round_scalar(x)


def as_int_array(a) -> np.ndarray:
    """Return ``a`` as an object array of Python ints (copying)."""
    arr = np.asarray(a)
    if arr.dtype == object:
        out = np.empty(arr.shape, dtype=object)
        for idx, v in np.ndenumerate(arr):
            if isinstance(v, (int, np.integer)) and not isinstance(v, (bool, np.bool_)):
                out[idx] = int(v)
            elif isinstance(v, Fraction) and v.denominator == 1:
                out[idx] = v.numerator
            else:
                raise TypeError(f"non-integer entry {v!r}")
        return out
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError(f"expected integer entries, got dtype {arr.dtype}")
    return arr.astype(object)


def is_power_of(value: int, base: int) -> bool:
    if value < 1 or base < 2:
        return False
    while value % base == 0:
        value //= base
    return value == 1


def int_log(value: int, base: int) -> int:
    """Exact ``log_base(value)``; raises unless ``value`` is a power of ``base``."""
    if not is_power_of(value, base):
        raise ValueError(f"{value} is not a power of {base}")
    k = 0
    while value > 1:
        value //= base
        k += 1
    return k


@dataclass(frozen=True)
class ModRing:
    """The ring Z_q with ``q = base**d`` and signed representatives."""

    q: int
    base: int = 10

    def __post_init__(self):
        if self.base < 2:
            raise ValueError("base must be >= 2")
        if self.q < 4:
            raise ValueError("q must be >= 4")
        if not is_power_of(self.q, self.base):
            raise ValueError(f"q={self.q} is not a power of base {self.base}")

    @property
    def d(self) -> int:
        return int_log(self.q, self.base)

    def reduce(self, a):
        return smod(a, self.q)

    def contains(self, a) -> bool:
        arr = as_int_array(np.atleast_1d(a))
        lo, hi = -(self.q // 2), self.q - self.q // 2
        return bool(np.all((arr >= lo) & (arr < hi)))

    def add(self, a, b) -> np.ndarray:
        a, b = as_int_array(a), as_int_array(b)
        if a.shape != b.shape:
            raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")
        return smod(a + b, self.q)

    def sub(self, a, b) -> np.ndarray:
        a, b = as_int_array(a), as_int_array(b)
        if a.shape != b.shape:
            raise ShapeError(f"cannot subtract shapes {a.shape} and {b.shape}")
        return smod(a - b, self.q)

    def neg(self, a) -> np.ndarray:
        return smod(-as_int_array(a), self.q)

    def matmul(self, a, b) -> np.ndarray:
        a, b = as_int_array(a), as_int_array(b)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
        return smod(a.dot(b), self.q)

    def scale(self, a, k: int) -> np.ndarray:
        return smod(as_int_array(a) * int(k), self.q)


# Module-level helpers mirroring the ring methods, for one-off use.
def mat_smod(a, q: int) -> np.ndarray:
    return smod(as_int_array(a), q)


def mat_add(a, b, q: int) -> np.ndarray:
    a, b = as_int_array(a), as_int_array(b)
    if a.shape != b.shape:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")
    return smod(a + b, q)


def mat_mul(a, b, q: int) -> np.ndarray:
    a, b = as_int_array(a), as_int_array(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return smod(a.dot(b), q)
