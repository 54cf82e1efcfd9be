"""Closed-loop simulation: nominal, quantized and encrypted loops.

The plant runs in double precision.  Everything on the controller side
(quantized states, ciphertexts, the ``xi`` instrumentation) is exact.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional

import numpy as np

from .controller import (
    EncryptedController,
    LinearController,
    QuantizedController,
    dequantize_control,
    quantize_measurement,
)
from .gsw import delta_bound, delta_bound_worst_case
from .lwe import Ciphertext, Params, SecretKey, encrypt, phase
from .zq import ShapeError, exact, in_signed_range, round_half_away

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Raised in strict mode when a run overflows or diverges."""


class Plant:
    """``x_p[t+1] = A x_p[t] + B u[t]``, ``y[t] = C x_p[t]``."""

    def __init__(self, A, B, C, x0=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ShapeError(f"A must be square, got {self.A.shape}")
        self.B = np.asarray(B, dtype=float)
        self.C = np.asarray(C, dtype=float)
        if self.B.size != n or self.C.size != n:
            raise ShapeError(f"plant must be single-input single-output with {n} states")
        self.B = self.B.reshape(n, 1)
        self.C = self.C.reshape(1, n)
        self.x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
        if self.x0.size != n:
            raise ShapeError(f"x0 must have {n} entries")
        self.x0 = self.x0.reshape(n)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def output(self, xp) -> float:
        return float((self.C @ xp)[0])

    def update(self, xp, u: float) -> np.ndarray:
        return self.A @ xp + self.B[:, 0] * u


@dataclass
class LoopTrace:
    """Per-step record of one closed-loop run (row ``t`` is before update ``t``)."""

    kind: str
    y: List[float] = field(default_factory=list)
    u: List[float] = field(default_factory=list)
    xp: List[np.ndarray] = field(default_factory=list)
    # controller state: real for nominal runs, integer x_bar otherwise
    xbar: List[np.ndarray] = field(default_factory=list)
    xi: List[np.ndarray] = field(default_factory=list)
    err_L: List[int] = field(default_factory=list)
    delta1: List[Fraction] = field(default_factory=list)
    delta2: List[Fraction] = field(default_factory=list)
    overflow: List[bool] = field(default_factory=list)
    ybar: List[int] = field(default_factory=list)
    ubar: List[int] = field(default_factory=list)
    u_prime: List[Fraction] = field(default_factory=list)
    Delta1: List[np.ndarray] = field(default_factory=list)
    Delta2: List[Fraction] = field(default_factory=list)
    xbar_shared: List[np.ndarray] = field(default_factory=list)
    xp_final: Optional[np.ndarray] = None
    complete: bool = True

    def __len__(self):
        return len(self.y)

    @property
    def instrumented(self) -> bool:
        return self.kind == "encrypted" and len(self.xi) == len(self)

    def max_err_L(self) -> int:
        return max((abs(v) for v in self.err_L), default=0)

    def converged(self, tol: float = 1e-2) -> bool:
        return self.xp_final is not None and bool(np.max(np.abs(self.xp_final)) < tol)


def run_nominal(plant: Plant, ctrl: LinearController, horizon: int) -> LoopTrace:
    """Real-valued closed loop with the unquantized controller."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    F, G, H, J, x = ctrl.as_float()
    xp = plant.x0.copy()
    tr = LoopTrace("nominal")
    for _ in range(horizon):
        y = plant.output(xp)
        u = float((H @ x)[0] + J[0, 0] * y)
        tr.y.append(y)
        tr.u.append(u)
        tr.xp.append(xp.copy())
        tr.xbar.append(x.copy())
        tr.overflow.append(False)
        xp = plant.update(xp, u)
        x = F @ x + G[:, 0] * y
    tr.xp_final = xp
    return tr


def _outside(values, p: Optional[int]) -> bool:
    return p is not None and any(not in_signed_range(v, p) for v in values)


def run_quantized(
    plant: Plant,
    qc: QuantizedController,
    horizon: int,
    p: Optional[int] = None,
) -> LoopTrace:
    """Plant in floats, integer controller, sensor/actuator quantization.

    With ``p`` given, steps where ``x_bar``, ``y_bar`` or ``u_bar`` leave
    ``[p]`` are flagged in ``trace.overflow``.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    xp = plant.x0.copy()
    xbar = qc.x0_bar.copy()
    tr = LoopTrace("quantized")
    for _ in range(horizon):
        y = plant.output(xp)
        ybar = quantize_measurement(y, qc.scales.R_y)
        ubar = qc.output(xbar, ybar)
        u = float(dequantize_control(ubar, qc.scales))
        tr.y.append(y)
        tr.u.append(u)
        tr.xp.append(xp.copy())
        tr.xbar.append(xbar.copy())
        tr.ybar.append(ybar)
        tr.ubar.append(ubar)
        tr.overflow.append(_outside(list(xbar) + [ybar, ubar], p))
        xp = plant.update(xp, u)
        xbar = qc.update(xbar, ybar)
    tr.xp_final = xp
    return tr


def session_rngs(seed: int):
    """Independent generators ``(controller_setup, sensor)`` derived from one seed."""
    ctrl_ss, sensor_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(ctrl_ss), np.random.default_rng(sensor_ss)


def _xi(c: Ciphertext, sk: SecretKey, params: Params) -> np.ndarray:
    return np.array([Fraction(int(v), params.L) for v in phase(c, sk, params)], dtype=object)


StepFn = Callable[[Ciphertext], "tuple[Ciphertext, Ciphertext]"]


def encrypted_loop(
    plant: Plant,
    x0_enc: Ciphertext,
    step_fn: StepFn,
    qc: QuantizedController,
    sk: SecretKey,
    params: Params,
    horizon: int,
    rng: np.random.Generator,
    trace: Optional[LoopTrace] = None,
) -> LoopTrace:
    """Plant-side loop around an arbitrary encrypted controller.

    ``step_fn(y_enc)`` must return ``(u_enc, x_enc_next)``; it is where the
    controller lives (in process or across a network).  Every use of ``sk``
    happens here, on the plant side.  Steps are appended to ``trace`` as they
    complete, so a caller that catches an exception keeps the partial record.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if x0_enc.rows != qc.n:
        raise ShapeError("encrypted state does not match the controller order")
    L, p = params.L, params.p
    xp = plant.x0.copy()
    x_enc = x0_enc
    xbar_sh = qc.x0_bar.copy()
    tr = LoopTrace("encrypted") if trace is None else trace
    for _ in range(horizon):
        y = plant.output(xp)
        ybar = quantize_measurement(y, qc.scales.R_y)
        y_enc = encrypt([ybar], sk, params, rng)
        xi = _xi(x_enc, sk, params)
        u_enc, x_next = step_fn(y_enc)
        u_prime = Fraction(int(phase(u_enc, sk, params)[0]), L)
        ubar = round_half_away(u_prime)
        u = float(dequantize_control(ubar, qc.scales))

        ubar_ref = qc.output(xbar_sh, ybar)
        xi_next = _xi(x_next, sk, params)
        D1 = xi_next - qc.F.dot(xi) - qc.G_bar[:, 0] * ybar
        D2 = u_prime - qc.H_bar.dot(xi)[0] - qc.J_bar[0, 0] * ybar

        tr.y.append(y)
        tr.u.append(u)
        tr.xp.append(xp.copy())
        tr.xi.append(xi)
        tr.ybar.append(ybar)
        tr.ubar.append(ubar)
        tr.u_prime.append(u_prime)
        tr.Delta1.append(D1)
        tr.Delta2.append(D2)
        tr.delta1.append(max(abs(v) for v in D1))
        tr.delta2.append(abs(D2))
        tr.xbar_shared.append(xbar_sh.copy())
        tr.overflow.append(_outside(list(xbar_sh) + [ubar_ref], p))

        xp = plant.update(xp, u)
        x_enc = x_next
        xbar_sh = qc.update(xbar_sh, ybar)
    tr.xp_final = xp
    return tr


def run_encrypted(
    plant: Plant,
    ec: EncryptedController,
    qc: QuantizedController,
    sk: SecretKey,
    params: Params,
    horizon: int,
    rng: Optional[np.random.Generator] = None,
) -> LoopTrace:
    """Closed loop with the encrypted controller, instrumented with ``xi``.

    ``rng`` drives the sensor encryptions; by default it is derived from
    ``params.seed`` (see :func:`session_rngs`).  The reference ``x_bar`` for
    the error signal ``L (xi - x_bar)`` comes from the quantized controller
    running its own closed loop from the same initial conditions.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if rng is None:
        rng = session_rngs(params.seed)[1]

    def step(y_enc):
        u_enc = ec.step(y_enc)
        return u_enc, ec.x_enc

    tr = encrypted_loop(plant, ec.x_enc, step, qc, sk, params, horizon, rng)
    attach_reference(tr, plant, qc, params)
    return tr


def attach_reference(tr: LoopTrace, plant: Plant, qc: QuantizedController, params: Params) -> None:
    """Fill ``xbar`` and ``err_L`` from an independent quantized closed loop."""
    ref = run_quantized(plant, qc, len(tr), params.p)
    tr.xbar = ref.xbar
    tr.err_L = []
    for xi, xb in zip(tr.xi, ref.xbar):
        diff = [int(params.L * v) - params.L * int(b) for v, b in zip(xi, xb)]
        tr.err_L.append(max(diff, key=abs))


@dataclass
class DisturbanceReport:
    """Measured disturbance magnitudes per step, and their bounds."""

    delta1: List[Fraction]
    delta2: List[Fraction]
    delta_y: List[Fraction]
    delta_dec: List[Fraction]
    delta_u: List[Fraction]
    bound_delta1: Fraction
    bound_delta2: Fraction
    worst_delta1: Fraction
    worst_delta2: Fraction
    bound_delta_y: Fraction
    bound_delta_dec: Fraction
    bound_delta_u: Fraction

    def violations(self, guaranteed: bool = True) -> dict:
        """Count of steps exceeding each bound.

        ``guaranteed=True`` checks Delta_1/Delta_2 against the worst-case
        bounds; ``False`` uses the closed-form analysis bounds.
        """
        b1 = self.worst_delta1 if guaranteed else self.bound_delta1
        b2 = self.worst_delta2 if guaranteed else self.bound_delta2
        return {
            "delta1": sum(v > b1 for v in self.delta1),
            "delta2": sum(v > b2 for v in self.delta2),
            "delta_y": sum(v > self.bound_delta_y for v in self.delta_y),
            "delta_dec": sum(v > self.bound_delta_dec for v in self.delta_dec),
            "delta_u": sum(v > self.bound_delta_u for v in self.delta_u),
        }


def disturbance_report(trace: LoopTrace, params: Params, qc: QuantizedController) -> DisturbanceReport:
    if not trace.instrumented:
        raise ValueError("trace lacks encrypted-loop instrumentation")
    sc = qc.scales
    fresh = Fraction(params.r, 2 * params.L)
    g_norm = max(abs(int(v)) for v in qc.G_bar.flat)
    j_norm = abs(int(qc.J_bar[0, 0]))

    delta_y, delta_dec, delta_u = [], [], []
    for y, ybar, up in zip(trace.y, trace.ybar, trace.u_prime):
        delta_y.append(abs(sc.R_y * ybar - exact(y)))
        dec = round_half_away(up)
        delta_dec.append(abs(sc.output_scale * (dec - up)))
        delta_u.append(abs(dequantize_control(dec, sc) - sc.output_scale * dec))

    return DisturbanceReport(
        delta1=list(trace.delta1),
        delta2=list(trace.delta2),
        delta_y=delta_y,
        delta_dec=delta_dec,
        delta_u=delta_u,
        bound_delta1=g_norm * fresh + delta_bound(qc.F, params) + delta_bound(qc.G_bar, params),
        bound_delta2=j_norm * fresh + delta_bound(qc.H_bar, params) + delta_bound(qc.J_bar, params),
        worst_delta1=g_norm * fresh + delta_bound_worst_case(qc.F, params) + delta_bound_worst_case(qc.G_bar, params),
        worst_delta2=j_norm * fresh + delta_bound_worst_case(qc.H_bar, params) + delta_bound_worst_case(qc.J_bar, params),
        bound_delta_y=sc.R_y / 2,
        bound_delta_dec=sc.output_scale / 2,
        bound_delta_u=sc.R_u / 2,
    )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return _fmt_fraction(v)
    return repr(float(v))


def _fmt_fraction(v: Fraction) -> str:
    """Exact decimal text when it terminates, ``a/b`` otherwise."""
    if v.denominator == 1:
        return str(v.numerator)
    den, twos, fives = v.denominator, 0, 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{v.numerator}/{v.denominator}"
    digits = max(twos, fives)
    scaled = abs(v.numerator) * (10**digits // v.denominator)
    sign = "-" if v < 0 else ""
    whole, frac = divmod(scaled, 10**digits)
    return f"{sign}{whole}.{frac:0{digits}d}"


def csv_header(n_plant: int, n_ctrl: int) -> List[str]:
    return (
        ["t", "y", "u"]
        + [f"xp{i}" for i in range(n_plant)]
        + [f"xbar{i}" for i in range(n_ctrl)]
        + [f"xi{i}" for i in range(n_ctrl)]
        + ["err_L", "delta1", "delta2", "overflow_flag"]
    )


def emit_csv(trace: LoopTrace, path) -> None:
    """Write the trace as CSV to a path or an open text stream.

    ``err_L`` is the largest-magnitude component of ``L (xi - x_bar)``;
    ``delta1``/``delta2`` are ``||Delta_1||_inf`` and ``|Delta_2|``.  Columns
    that a run does not produce (e.g. ``xi`` for a nominal run) are empty.
    """
    n_plant = len(trace.xp[0]) if trace.xp else 0
    n_ctrl = len(trace.xbar[0]) if trace.xbar else (len(trace.xi[0]) if trace.xi else 0)

    def col(seq, t):
        return seq[t] if t < len(seq) else None

    def write(fh):
        w = csv.writer(fh)
        w.writerow(csv_header(n_plant, n_ctrl))
        for t in range(len(trace)):
            xbar = col(trace.xbar, t)
            xi = col(trace.xi, t)
            row = [t, trace.y[t], trace.u[t]]
            row += list(trace.xp[t])
            row += list(xbar) if xbar is not None else [None] * n_ctrl
            row += list(xi) if xi is not None else [None] * n_ctrl
            row += [col(trace.err_L, t), col(trace.delta1, t), col(trace.delta2, t), bool(trace.overflow[t])]
            w.writerow([_fmt(v) for v in row])

    if hasattr(path, "write"):
        write(path)
    else:
        with open(path, "w", newline="") as fh:
            write(fh)


def _parse(text: str):
    if text == "":
        return None
    if "/" in text:
        return Fraction(text)
    try:
        return int(text)
    except ValueError:
        return float(text)


def read_csv(path) -> dict:
    """Parse a trace CSV back into columns.

    Integers come back as ``int``, plant quantities as ``float`` and exact
    rationals (``xi``, ``delta1``, ``delta2``) as ``Fraction``.
    """
    exact_cols = ("xi", "delta1", "delta2")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {h: [] for h in header}
    for row in body:
        for h, text in zip(header, row):
            if h.startswith(exact_cols) and text != "":
                out[h].append(Fraction(text))
            elif h == "overflow_flag":
                out[h].append(text == "1")
            else:
                out[h].append(_parse(text))
    return out
