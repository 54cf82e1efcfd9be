"""Controller quantization, integer realizations and the encrypted controller.

A real controller ``x+ = F x + G y, u = H x + J y`` with integer ``F`` is
turned into an integer one by the scale factors ``R_y`` (sensor
resolution), ``S_G``, ``S_HJ`` and ``R_u`` (actuator resolution).  All scale
arithmetic is done with exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .gsw import GswMatrix, encrypt_gsw_matrix, mat_mul_ct
from .lwe import Ciphertext, Params, PlaintextRangeError, SecretKey, add, encrypt
from .zq import ShapeError, exact, in_signed_range, round_half_away


class NonIntegerF(ValueError):
    """The controller state matrix has a non-integer entry."""

    explanation = (
        "The state matrix F must be integer-valued. Scaling a non-integer F "
        "multiplies the controller state by the scale factor at every update, "
        "so the encrypted state grows without bound and eventually leaves the "
        "plaintext space. Realize the controller with an integer F (FIR and "
        "PID controllers always admit one)."
    )


class InvalidScale(ValueError):
    """A scale factor is not strictly positive."""


def _exact_matrix(a, shape=None) -> np.ndarray:
    arr = np.asarray(a, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = exact(v)
    if shape is not None:
        out = out.reshape(shape)
    return out


def _float(a) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in np.atleast_2d(a)], dtype=float)


@dataclass(frozen=True)
class Scales:
    """Quantization scales, stored as exact rationals."""

    R_y: Fraction
    S_G: Fraction
    S_HJ: Fraction
    R_u: Fraction

    def __post_init__(self):
        for name in ("R_y", "S_G", "S_HJ", "R_u"):
            v = exact(getattr(self, name))
            if v <= 0:
                raise InvalidScale(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)

    @property
    def output_scale(self) -> Fraction:
        """``R_y * S_G * S_HJ``: the real value of one unit of ``u_bar``."""
        return self.R_y * self.S_G * self.S_HJ

    @property
    def state_scale(self) -> Fraction:
        """``R_y * S_G``: the real value of one unit of ``x_bar``."""
        return self.R_y * self.S_G


class LinearController:
    """``x[t+1] = F x[t] + G y[t]``, ``u[t] = H x[t] + J y[t]`` (SISO).

    Entries are held as exact rationals; ``as_float`` gives the real view.
    """

    def __init__(self, F, G, H, J, x0=None):
        F = np.atleast_2d(np.asarray(F, dtype=object))
        n = F.shape[0]
        if F.shape != (n, n):
            raise ShapeError(f"F must be square, got {F.shape}")
        self.F = _exact_matrix(F)
        self.G = _exact_matrix(np.asarray(G, dtype=object).reshape(-1), (n, 1))
        self.H = _exact_matrix(np.asarray(H, dtype=object).reshape(-1), (1, n))
        self.J = _exact_matrix(np.asarray(J, dtype=object).reshape(-1), (1, 1))
        x0 = np.zeros(n, dtype=object) if x0 is None else np.asarray(x0, dtype=object).reshape(-1)
        if x0.shape != (n,):
            raise ShapeError(f"x0 must have {n} entries")
        self.x0 = _exact_matrix(x0)

    @property
    def n(self) -> int:
        return self.F.shape[0]

    def as_float(self):
        """``(F, G, H, J, x0)`` as float arrays."""
        return (
            _float(self.F),
            _float(self.G),
            _float(self.H),
            _float(self.J),
            np.array([float(v) for v in self.x0]),
        )

    def has_integer_F(self) -> bool:
        return all(v.denominator == 1 for v in self.F.flat)

    def transfer_function(self, z: complex) -> complex:
        F, G, H, J, _ = self.as_float()
        return complex((H @ np.linalg.solve(z * np.eye(self.n) - F, G) + J)[0, 0])

    def __repr__(self):
        return f"LinearController(n={self.n})"


@dataclass(frozen=True)
class QuantizedController:
    """Integer controller ``x_bar+ = F x_bar + G_bar y_bar``, ``u_bar = H_bar x_bar + J_bar y_bar``."""

    F: np.ndarray
    G_bar: np.ndarray
    H_bar: np.ndarray
    J_bar: np.ndarray
    x0_bar: np.ndarray
    scales: Scales

    @property
    def n(self) -> int:
        return self.F.shape[0]

    def output(self, xbar, ybar: int) -> int:
        return int((self.H_bar.dot(xbar))[0] + self.J_bar[0, 0] * int(ybar))

    def update(self, xbar, ybar: int) -> np.ndarray:
        return self.F.dot(xbar) + self.G_bar[:, 0] * int(ybar)

    def entries(self):
        """Every static integer of the controller, for range checks."""
        for a in (self.F, self.G_bar, self.H_bar, self.J_bar, self.x0_bar):
            yield from (int(v) for v in a.flat)


def quantize(ctrl: LinearController, scales: Scales) -> QuantizedController:
    bad = [v for v in ctrl.F.flat if v.denominator != 1]
    if bad:
        raise NonIntegerF(f"F has non-integer entries {[str(v) for v in bad[:4]]}. {NonIntegerF.explanation}")
    if not isinstance(scales, Scales):
        scales = Scales(*scales)
    F = np.array([[int(v) for v in row] for row in ctrl.F], dtype=object)
    G_bar = round_half_away(ctrl.G / scales.S_G)
    H_bar = round_half_away(ctrl.H / scales.S_HJ)
    J_bar = round_half_away(ctrl.J / (scales.S_HJ * scales.S_G))
    x0_bar = round_half_away(ctrl.x0 / scales.state_scale)
    return QuantizedController(F, G_bar, H_bar, J_bar, x0_bar, scales)


def quantize_measurement(y, R_y) -> int:
    """Sensor stage: ``round(y / R_y)``."""
    R_y = exact(R_y)
    if R_y <= 0:
        raise InvalidScale("R_y must be positive")
    return round_half_away(exact(y) / R_y)


def dequantize_control(u_bar: int, scales: Scales) -> Fraction:
    """Actuator stage: ``R_u * round(R_y S_G S_HJ / R_u * u_bar)``."""
    ratio = scales.output_scale / scales.R_u
    return scales.R_u * round_half_away(ratio * int(u_bar))


class EncryptedController:
    """Homomorphically encrypted controller.

    Holds only ciphertexts: the encrypted matrices and the encrypted state.
    There is deliberately no place for a secret key on this object.
    """

    __slots__ = ("F_enc", "G_enc", "H_enc", "J_enc", "x_enc", "params")

    def __init__(
        self,
        F_enc: GswMatrix,
        G_enc: GswMatrix,
        H_enc: GswMatrix,
        J_enc: GswMatrix,
        x_enc: Ciphertext,
        params: Params,
    ):
        n = x_enc.rows
        shapes = {"F": (F_enc.shape, (n, n)), "G": (G_enc.shape, (n, 1)), "H": (H_enc.shape, (1, n)), "J": (J_enc.shape, (1, 1))}
        for name, (got, want) in shapes.items():
            if got != want:
                raise ShapeError(f"{name}_enc has shape {got}, expected {want}")
        self.F_enc, self.G_enc, self.H_enc, self.J_enc = F_enc, G_enc, H_enc, J_enc
        self.x_enc = x_enc
        self.params = params

    @property
    def n(self) -> int:
        return self.x_enc.rows

    def step(self, y_enc: Ciphertext) -> Ciphertext:
        """Compute ``u[t]`` from the current state, then advance the state."""
        if y_enc.rows != 1:
            raise ShapeError("y_enc must be a single ciphertext row")
        p = self.params
        u_enc = add(mat_mul_ct(self.H_enc, self.x_enc, p), mat_mul_ct(self.J_enc, y_enc, p))
        self.x_enc = add(mat_mul_ct(self.F_enc, self.x_enc, p), mat_mul_ct(self.G_enc, y_enc, p))
        return u_enc


def encrypt_controller(
    qc: QuantizedController,
    sk: SecretKey,
    params: Params,
    rng: Optional[np.random.Generator] = None,
) -> EncryptedController:
    bad = [v for v in qc.entries() if not in_signed_range(v, params.p)]
    if bad:
        raise PlaintextRangeError(f"controller entries {bad[:4]} outside [p] for p={params.p}")
    if rng is None:
        rng = np.random.default_rng()
    F_enc = encrypt_gsw_matrix(qc.F, sk, params, rng)
    G_enc = encrypt_gsw_matrix(qc.G_bar, sk, params, rng)
    H_enc = encrypt_gsw_matrix(qc.H_bar, sk, params, rng)
    J_enc = encrypt_gsw_matrix(qc.J_bar, sk, params, rng)
    x_enc = encrypt(qc.x0_bar, sk, params, rng)
    return EncryptedController(F_enc, G_enc, H_enc, J_enc, x_enc, params)


def realize_fir(b) -> LinearController:
    """State-space form of ``C(z) = sum_i b[n-i] z^-i`` with ``b = (b_0, ..., b_n)``.

    ``F`` is the down-shift matrix, so it is integer by construction.
    """
    b = [exact(v) for v in b]
    n = len(b) - 1
    if n < 1:
        raise ValueError("an FIR realization needs at least two coefficients")
    F = np.zeros((n, n), dtype=object)
    for i in range(1, n):
        F[i, i - 1] = 1
    G = np.zeros(n, dtype=object)
    G[0] = 1
    H = [b[n - 1 - k] for k in range(n)]
    return LinearController(F, G, H, b[n])


def pid_coefficients(kp, ki, kd, Ts, Nd):
    """``(b0, b1, b2)`` of the integer-F PID realization."""
    kp, ki, kd, Ts = exact(kp), exact(ki), exact(kd), exact(Ts)
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    if int(Nd) != Nd or Nd < 1:
        raise ValueError("Nd must be a positive integer")
    Nd = int(Nd)
    b1 = ki * Ts - kd * Nd**2 / Ts
    b0 = ki * Ts * Nd - ki * Ts + kd * Nd**2 / Ts
    b2 = kp + kd * Nd / Ts
    return b0, b1, b2


def realize_pid(kp, ki, kd, Ts, Nd: int) -> LinearController:
    """Realization of ``kp + ki Ts/(z-1) + kd/(Ts/Nd + Ts/(z-1))`` with integer F."""
    b0, b1, b2 = pid_coefficients(kp, ki, kd, Ts, Nd)
    Nd = int(Nd)
    F = [[2 - Nd, Nd - 1], [1, 0]]
    return LinearController(F, [1, 0], [b1, b0], b2)


def pid_transfer_function(kp, ki, kd, Ts, Nd, z: complex) -> complex:
    kp, ki, kd, Ts = float(kp), float(ki), float(kd), float(Ts)
    return kp + ki * Ts / (z - 1) + kd / (Ts / Nd + Ts / (z - 1))
