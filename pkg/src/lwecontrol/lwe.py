"""Symmetric LWE encryption of integer vectors.

A message ``m`` in ``[p]^n`` is hidden as ``[b, A]`` with
``b = -A.sk + L*m + e (mod q)`` and ``q = L*p``.  Decryption computes
``round((c.s mod q) / L)`` with ``s = [1, sk]``.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import framing
from .zq import ModRing, ShapeError, as_int_array, in_signed_range, int_log, is_power_of, round_half_away, smod


class PlaintextRangeError(ValueError):
    """A message does not fit in the plaintext space [p]."""


@dataclass(frozen=True)
class Params:
    """Public parameters of the cryptosystem.

    ``p`` and ``L`` must be powers of ``base``; ``q = L*p``.  ``r`` is the
    width of the error interval ``[r]``; ``r = 0`` switches error injection
    off entirely, which is only meant for testing.
    """

    p: int
    L: int
    r: int
    N: int
    base: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("p", "L", "r", "N", "base", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.base < 2:
            raise ValueError("base must be >= 2")
        if not is_power_of(self.p, self.base):
            raise ValueError(f"p={self.p} is not a power of base {self.base}")
        if not is_power_of(self.L, self.base):
            raise ValueError(f"L={self.L} is not a power of base {self.base}")
        if not 0 <= self.r < self.L:
            raise ValueError(f"need 0 <= r < L, got r={self.r}, L={self.L}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.q < 4:
            raise ValueError("q = L*p must be >= 4")

    @property
    def q(self) -> int:
        return self.L * self.p

    @property
    def d(self) -> int:
        return int_log(self.q, self.base)

    @property
    def ring(self) -> ModRing:
        return ModRing(self.q, self.base)

    @property
    def fresh_noise_bound(self) -> Fraction:
        """Worst-case magnitude of a freshly sampled error entry."""
        return Fraction(self.r, 2)

    def replace(self, **changes) -> "Params":
        kw = {k: getattr(self, k) for k in ("p", "L", "r", "N", "base", "seed")}
        kw.update(changes)
        return Params(**kw)


def sample_signed(rng: np.random.Generator, modulus: int, size) -> np.ndarray:
    """Uniform samples from ``[modulus]`` as an object array of ints."""
    if modulus <= 0:
        return np.zeros(size, dtype=object)
    lo = -(modulus // 2)
    if modulus <= 1 << 62:
        return rng.integers(lo, lo + modulus, size=size, dtype=np.int64).astype(object)
    # too wide for int64 sampling: seed an exact big-int sampler from rng
    py = random.Random(int(rng.integers(0, 1 << 63)))
    count = int(np.prod(size))
    vals = [lo + py.randrange(modulus) for _ in range(count)]
    return np.array(vals, dtype=object).reshape(size)


@dataclass(frozen=True, eq=False)
class SecretKey:
    sk: np.ndarray

    def __post_init__(self):
        arr = as_int_array(self.sk).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "sk", arr)

    @property
    def N(self) -> int:
        return self.sk.shape[0]

    @property
    def s(self) -> np.ndarray:
        return np.concatenate([np.array([1], dtype=object), self.sk])

    def __eq__(self, other):
        return isinstance(other, SecretKey) and list(self.sk) == list(other.sk)

    def __repr__(self):
        return f"SecretKey(N={self.N})"

    def to_bytes(self, params: Params) -> bytes:
        """Key file contents: one ``HESK`` frame holding the row ``s``."""
        if self.N != params.N:
            raise ShapeError("key dimension does not match params")
        return framing.pack_matrix(framing.KEY_MAGIC, self.s.reshape(1, -1), params.base, params.d, params.N)

    @classmethod
    def from_bytes(cls, data: bytes, params: Optional[Params] = None) -> "SecretKey":
        header, body, end = framing.unpack_matrix(data, expect_magic=framing.KEY_MAGIC)
        if end != len(data):
            raise framing.FrameError("trailing bytes after key frame")
        if header.rows != 1 or body[0, 0] != 1:
            raise framing.FrameError("key frame must hold a single row starting with 1")
        if params is not None and (header.N, header.base, header.d) != (params.N, params.base, params.d):
            raise framing.FrameError("key file does not match the given parameters")
        return cls(body[0, 1:])


@dataclass(frozen=True, eq=False)
class Ciphertext:
    """``n`` stacked LWE rows ``[b, A]`` over Z_q.

    ``noise_budget`` is optional bookkeeping: a worst-case bound on the
    magnitude of every error entry.  No crypto operation reads it.
    """

    body: np.ndarray
    q: int
    noise_budget: Optional[Fraction] = field(default=None)

    def __post_init__(self):
        arr = as_int_array(self.body)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[1] < 2:
            raise ShapeError(f"ciphertext body must be n x (N+1), got {arr.shape}")
        arr = smod(arr, self.q)
        arr.setflags(write=False)
        object.__setattr__(self, "body", arr)

    @property
    def rows(self) -> int:
        return self.body.shape[0]

    @property
    def shape(self):
        return self.body.shape

    def row(self, i: int) -> "Ciphertext":
        return Ciphertext(self.body[i : i + 1], self.q, self.noise_budget)

    def __eq__(self, other):
        return (
            isinstance(other, Ciphertext)
            and self.q == other.q
            and self.body.shape == other.body.shape
            and bool(np.all(self.body == other.body))
        )

    def __add__(self, other):
        return add(self, other)

    def __repr__(self):
        return f"Ciphertext(rows={self.rows}, N={self.body.shape[1] - 1}, noise_budget={self.noise_budget})"

    def to_bytes(self, params: Params) -> bytes:
        if self.body.shape[1] != params.N + 1 or self.q != params.q:
            raise ShapeError("ciphertext does not match params")
        return framing.pack_matrix(framing.CIPHERTEXT_MAGIC, self.body, params.base, params.d, params.N)

    @classmethod
    def from_bytes(cls, data: bytes, params: Optional[Params] = None) -> "Ciphertext":
        c, end = read_ciphertext(data, 0, params)
        if end != len(data):
            raise framing.FrameError("trailing bytes after ciphertext frame")
        return c


def stack(*cts: Ciphertext) -> Ciphertext:
    """Concatenate ciphertext rows (e.g. ``[x; y]``).  Budgets combine by max."""
    q = cts[0].q
    if any(c.q != q for c in cts):
        raise ShapeError("cannot stack ciphertexts over different moduli")
    budgets = [c.noise_budget for c in cts]
    budget = None if any(b is None for b in budgets) else max(budgets)
    return Ciphertext(np.concatenate([c.body for c in cts], axis=0), q, budget)


def read_ciphertext(data: bytes, offset: int = 0, params: Optional[Params] = None):
    """Parse one ciphertext frame; returns ``(ciphertext, next_offset)``."""
    header, body, end = framing.unpack_matrix(data, offset, expect_magic=framing.CIPHERTEXT_MAGIC)
    if params is not None and (header.N, header.base, header.d) != (params.N, params.base, params.d):
        raise framing.FrameError("ciphertext frame does not match the given parameters")
    if header.rows == 0:
        raise framing.FrameError("empty ciphertext")
    half = header.q // 2
    if any(not -half <= v < header.q - half for v in body.flat):
        raise framing.FrameError("residue outside [q]")
    return Ciphertext(body, header.q), end


def keygen(params: Params, rng: Optional[np.random.Generator] = None) -> SecretKey:
    """Sample ``sk`` uniformly from ``[q*L]^N`` (seeded by ``params.seed``)."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    return SecretKey(sample_signed(rng, params.q * params.L, params.N))


def _check_plaintext(m, params: Params) -> np.ndarray:
    arr = as_int_array(np.atleast_1d(np.asarray(m, dtype=object))).reshape(-1)
    bad = [int(v) for v in arr if not in_signed_range(v, params.p)]
    if bad:
        raise PlaintextRangeError(f"message entries {bad[:5]} outside [p] for p={params.p}")
    return arr


def encrypt(
    m,
    sk: SecretKey,
    params: Params,
    rng: Optional[np.random.Generator] = None,
    *,
    A=None,
    e=None,
) -> Ciphertext:
    """Encrypt an integer or integer vector.

    ``A`` and ``e`` may be forced (test hook); otherwise they are drawn from
    ``rng``, uniformly from ``[q]^{n x N}`` and ``[r]^n``.
    """
    m = _check_plaintext(m, params)
    n, N, q = m.shape[0], params.N, params.q
    if sk.N != N:
        raise ShapeError("secret key dimension does not match params")
    if rng is None and (A is None or e is None):
        rng = np.random.default_rng()
    A = sample_signed(rng, q, (n, N)) if A is None else smod(as_int_array(A).reshape(n, N), q)
    e = sample_signed(rng, params.r, n) if e is None else as_int_array(e).reshape(n)
    b = smod(-A.dot(sk.sk) + params.L * m + e, q)
    body = np.concatenate([b.reshape(n, 1), A], axis=1)
    return Ciphertext(body, q, params.fresh_noise_bound)


def phase(c: Ciphertext, sk: SecretKey, params: Params) -> np.ndarray:
    """``smod(c.s, q)``: the scaled message plus error, before rounding."""
    if c.body.shape[1] != sk.N + 1:
        raise ShapeError("ciphertext width does not match key")
    return smod(c.body.dot(sk.s), params.q)


def decrypt(c: Ciphertext, sk: SecretKey, params: Params) -> np.ndarray:
    """``round(phase / L)`` reduced into ``[p]``.

    The reduction only matters at ``-p/2``, where a negative error makes the
    phase wrap to just below ``q/2``.
    """
    ph = phase(c, sk, params)
    return smod(round_half_away([Fraction(int(v), params.L) for v in ph]), params.p)


def add(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    if c1.shape != c2.shape or c1.q != c2.q:
        raise ShapeError(f"cannot add ciphertexts of shapes {c1.shape} and {c2.shape}")
    budget = None
    if c1.noise_budget is not None and c2.noise_budget is not None:
        budget = c1.noise_budget + c2.noise_budget
    return Ciphertext(c1.body + c2.body, c1.q, budget)


def scalar_mul_plain(c: Ciphertext, k: int) -> Ciphertext:
    """Multiply by a plaintext integer (repeated addition)."""
    k = int(k)
    budget = None if c.noise_budget is None else abs(k) * c.noise_budget
    return Ciphertext(c.body * k, c.q, budget)


def noise_actual(c: Ciphertext, m_true, sk: SecretKey, params: Params) -> np.ndarray:
    """The error vector inside ``c``, given the message it should hold."""
    m = as_int_array(np.atleast_1d(np.asarray(m_true, dtype=object))).reshape(-1)
    return phase(c, sk, params) - params.L * m


def security_indicator(params: Params) -> float:
    """``N / (log q - log r)``, the rough proportionality indicator for the
    security level (log base 2).  Not a security estimate."""
    if params.r < 1:
        return math.inf
    return params.N / (math.log2(params.q) - math.log2(params.r))
