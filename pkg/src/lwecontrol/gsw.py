"""GSW-style multiplier encryption and ciphertext products.

A multiplier ``m2`` is encrypted as ``m2*R + O`` where ``R`` is the gadget
matrix ``[1, nu, nu^2, ...]^T (x) I_{N+1}`` and every row of ``O`` is a
fresh encryption of zero.  Multiplying an ordinary ciphertext row ``c`` by
it is ``D(c) . M2`` with ``D`` the radix-``nu`` digit decomposition, so the
error grows by ``m2*e1 + D(c).e_O`` only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import framing
from .lwe import Ciphertext, Params, PlaintextRangeError, SecretKey, encrypt, read_ciphertext
from .zq import ShapeError, as_int_array, in_signed_range, int_log, smod


def gadget(params: Params) -> np.ndarray:
    """The gadget matrix ``R`` of shape ``d(N+1) x (N+1)``."""
    width = params.N + 1
    powers = np.array([params.base**k for k in range(params.d)], dtype=object).reshape(-1, 1)
    return np.kron(powers, np.eye(width, dtype=np.int64).astype(object))


def decompose(c, q: int, base: int = 10) -> np.ndarray:
    """Radix-``base`` digits of the non-negative representative of ``c``.

    For a row of ``w`` residues, returns ``d*w`` digits laid out as
    ``[c_0, c_1, ..., c_{d-1}]`` (least significant block first), each block
    holding one digit per entry.  A 2-D input is decomposed row by row.
    """
    d = int_log(q, base)
    arr = as_int_array(c)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr) % q
    blocks = []
    for _ in range(d):
        blocks.append(arr % base)
        arr = arr // base
    out = np.concatenate(blocks, axis=1)
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class GswCiphertext:
    """Encryption of one scalar multiplier, ``d(N+1) x (N+1)`` over Z_q."""

    body: np.ndarray
    q: int
    noise_budget: Optional[Fraction] = field(default=None)

    def __post_init__(self):
        arr = as_int_array(self.body)
        if arr.ndim != 2 or arr.shape[0] % arr.shape[1] != 0:
            raise ShapeError(f"GSW body must be d(N+1) x (N+1), got {arr.shape}")
        arr = smod(arr, self.q)
        arr.setflags(write=False)
        object.__setattr__(self, "body", arr)

    def __eq__(self, other):
        return (
            isinstance(other, GswCiphertext)
            and self.q == other.q
            and self.body.shape == other.body.shape
            and bool(np.all(self.body == other.body))
        )


def encrypt_gsw(
    m2: int,
    sk: SecretKey,
    params: Params,
    rng: Optional[np.random.Generator] = None,
    *,
    e=None,
    A=None,
) -> GswCiphertext:
    """``m2*R + Enc(0)``; ``e``/``A`` force the zero-encryption's randomness."""
    m2 = int(m2)
    if not in_signed_range(m2, params.p):
        raise PlaintextRangeError(f"multiplier {m2} outside [p] for p={params.p}")
    rows = params.d * (params.N + 1)
    zero = encrypt(np.zeros(rows, dtype=object), sk, params, rng, A=A, e=e)
    return GswCiphertext(m2 * gadget(params) + zero.body, params.q, zero.noise_budget)


def mul(
    multiplier: GswCiphertext,
    multiplicand: Ciphertext,
    params: Params,
    multiplier_bound: Optional[int] = None,
) -> Ciphertext:
    """``D(c1) . M2``: homomorphic product of a scalar ciphertext row.

    ``multiplier_bound`` (an upper bound on ``|m2|``) is only used to carry
    the worst-case noise budget forward; the controller never knows it.
    """
    if multiplicand.rows != 1:
        raise ShapeError("multiplicand must be a single ciphertext row")
    width = multiplicand.shape[1]
    if multiplier.body.shape != (params.d * width, width):
        raise ShapeError(f"multiplier shape {multiplier.body.shape} does not match row width {width}")
    digits = decompose(multiplicand.body[0], params.q, params.base)
    body = digits.dot(multiplier.body).reshape(1, -1)
    budget = None
    if multiplier_bound is not None and multiplicand.noise_budget is not None and multiplier.noise_budget is not None:
        budget = abs(int(multiplier_bound)) * multiplicand.noise_budget + _mul_noise(multiplier, params)
    return Ciphertext(body, params.q, budget)


def _mul_noise(multiplier: GswCiphertext, params: Params) -> Fraction:
    # digits are at most base-1, and there are d(N+1) error entries
    return (params.base - 1) * params.d * (params.N + 1) * multiplier.noise_budget


@dataclass(frozen=True, eq=False)
class GswMatrix:
    """Entrywise GSW encryption of an integer matrix; immutable."""

    entries: tuple

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.entries)
        if rows and len({len(r) for r in rows}) != 1:
            raise ShapeError("ragged GSW matrix")
        object.__setattr__(self, "entries", rows)

    @property
    def shape(self):
        return (len(self.entries), len(self.entries[0]) if self.entries else 0)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def __eq__(self, other):
        return isinstance(other, GswMatrix) and self.entries == other.entries

    def to_bytes(self, params: Params) -> bytes:
        m, n = self.shape
        out = bytearray(framing.pack_gsw_header(m, n))
        for row in self.entries:
            for g in row:
                out += framing.pack_matrix(framing.CIPHERTEXT_MAGIC, g.body, params.base, params.d, params.N)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes, params: Optional[Params] = None) -> "GswMatrix":
        mat, end = read_gsw_matrix(data, 0, params)
        if end != len(data):
            raise framing.FrameError("trailing bytes after GSW matrix")
        return mat


def read_gsw_matrix(data: bytes, offset: int = 0, params: Optional[Params] = None):
    m, n, offset = framing.unpack_gsw_header(data, offset)
    rows = []
    for _ in range(m):
        row = []
        for _ in range(n):
            c, offset = read_ciphertext(data, offset, params)
            row.append(GswCiphertext(c.body, c.q))
        rows.append(row)
    return GswMatrix(tuple(rows)), offset


def encrypt_gsw_matrix(F, sk: SecretKey, params: Params, rng: Optional[np.random.Generator] = None) -> GswMatrix:
    F = np.atleast_2d(as_int_array(F))
    bad = [int(v) for v in F.flat if not in_signed_range(v, params.p)]
    if bad:
        raise PlaintextRangeError(f"matrix entries {bad[:5]} outside [p] for p={params.p}")
    if rng is None:
        rng = np.random.default_rng()
    return GswMatrix(tuple(tuple(encrypt_gsw(v, sk, params, rng) for v in row) for row in F))


def mat_mul_ct(
    F_enc: GswMatrix,
    x_enc: Ciphertext,
    params: Params,
    plain_bounds=None,
) -> Ciphertext:
    """Encrypted matrix times encrypted vector.

    Row ``i`` of the result is ``sum_j D(x_j) . F_enc[i][j]``.  Pass
    ``plain_bounds`` (entrywise bounds on ``|F|``) to track the noise budget.
    """
    m, n = F_enc.shape
    if n != x_enc.rows:
        raise ShapeError(f"GSW matrix has {n} columns but ciphertext has {x_enc.rows} rows")
    digits = decompose(x_enc.body, params.q, params.base)
    width = x_enc.shape[1]
    out = np.zeros((m, width), dtype=object)
    for i in range(m):
        acc = np.zeros(width, dtype=object)
        for j in range(n):
            g = F_enc[i, j]
            if g.body.shape != (digits.shape[1], width):
                raise ShapeError("GSW entry does not match ciphertext width")
            acc = acc + digits[j].dot(g.body)
        out[i] = acc
    budget = None
    if plain_bounds is not None and x_enc.noise_budget is not None and m and n:
        bounds = np.atleast_2d(np.asarray(plain_bounds, dtype=object))
        per_row = []
        for i in range(m):
            total = Fraction(0)
            for j in range(n):
                g = F_enc[i, j]
                if g.noise_budget is None:
                    return Ciphertext(out, params.q)
                total += abs(int(bounds[i, j])) * x_enc.noise_budget + _mul_noise(g, params)
            per_row.append(total)
        budget = max(per_row)
    return Ciphertext(out, params.q, budget)


def _columns(F) -> int:
    shape = np.shape(F)
    if len(shape) == 0:
        return 1
    if len(shape) == 1:
        return shape[0]
    return shape[1]


def delta_bound(F, params: Params) -> Fraction:
    """Bound on ``||Delta(F, x)/L||_inf`` in the closed-form used for analysis:
    ``(nu-1) * n * r * d / (2L)`` with ``n`` the column count of ``F``.

    This form counts ``d`` digits per multiplied row.  A decomposed row
    actually has ``d(N+1)`` digits; see :func:`delta_bound_worst_case` for the
    bound that holds for every ciphertext.
    """
    n = _columns(F)
    return Fraction((params.base - 1) * n * params.r * params.d, 2 * params.L)


def delta_bound_worst_case(F, params: Params) -> Fraction:
    """Guaranteed bound ``(nu-1) * n * (N+1) * r * d / (2L)``."""
    return delta_bound(F, params) * (params.N + 1)


def multiplication_error(
    x_enc: Ciphertext, F_enc_errors: Sequence[Sequence[np.ndarray]], params: Params
) -> np.ndarray:
    """``Delta(F, x)`` computed from known GSW error vectors (instrumentation).

    ``F_enc_errors[i][j]`` is the error vector inside ``F_enc[i][j]``.
    """
    digits = decompose(x_enc.body, params.q, params.base)
    m = len(F_enc_errors)
    out = np.zeros(m, dtype=object)
    for i in range(m):
        out[i] = sum(digits[j].dot(as_int_array(F_enc_errors[i][j])) for j in range(x_enc.rows))
    return out
