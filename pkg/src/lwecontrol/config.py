"""Controller definition files.

A definition file is plain text, one ``key = value`` per line, ``#`` starts
a comment.  Values are exact decimals (``0.1``, ``1e-3``, ``-1.414``) or
fractions (``1/3``).  Matrices use brackets with ``,`` between entries and
``;`` between rows: ``F = [0, 1; -1, 2]``.  Plant entries (``A``, ``B``,
``C``, ``xp0``) may also use ``sqrt(2)``; the plant is simulated in floating
point anyway.

Recognised keys::

    A B C xp0                  plant matrices and initial state
    controller                 ss | fir | pid           (default ss)
    F G H J x0                 state-space controller   (controller = ss)
    b x0                       FIR coefficients b_0..b_n (controller = fir)
    kp ki kd Ts Nd x0          PID gains                (controller = pid)
    Ry Sg Shj Ru               quantization scales
    p L r N base seed          cryptosystem parameters
    horizon                    number of closed-loop steps
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .controller import LinearController, Scales, realize_fir, realize_pid
from .lwe import Params
from .sim import Plant
from .zq import exact


class ConfigError(ValueError):
    """Malformed controller definition file."""


_PLANT_KEYS = {"A", "B", "C", "xp0"}
_KNOWN = _PLANT_KEYS | {
    "controller", "F", "G", "H", "J", "x0", "b", "kp", "ki", "kd", "Ts", "Nd",
    "Ry", "Sg", "Shj", "Ru", "p", "L", "r", "N", "base", "seed", "horizon",
}
_SQRT = re.compile(r"^sqrt\((.+)\)$")


@dataclass
class RunConfig:
    plant: Plant
    controller: LinearController
    scales: Scales
    params: Params
    horizon: int
    controller_kind: str = "ss"


def _scalar(text: str, allow_float: bool):
    text = text.strip()
    m = _SQRT.match(text)
    if m:
        if not allow_float:
            raise ConfigError(f"sqrt() is only allowed for plant entries: {text!r}")
        return math.sqrt(float(exact(m.group(1))))
    try:
        return exact(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def parse_value(text: str, allow_float: bool = False) -> np.ndarray:
    """Parse a scalar or bracketed matrix into a 2-D object array."""
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"unterminated matrix: {text!r}")
        rows = [r for r in text[1:-1].split(";")]
        parsed = [[_scalar(v, allow_float) for v in re.split(r"[,\s]+", r.strip()) if v] for r in rows]
        parsed = [r for r in parsed if r] or [[]]
        if len({len(r) for r in parsed}) != 1:
            raise ConfigError(f"ragged matrix: {text!r}")
        return np.array(parsed, dtype=object)
    return np.array([[_scalar(text, allow_float)]], dtype=object)


def _int(values: dict, key: str, default=None) -> int:
    if key not in values:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    v = values[key]
    if v.size != 1 or Fraction(v.flat[0]).denominator != 1:
        raise ConfigError(f"{key} must be an integer")
    return int(v.flat[0])


def _one(values: dict, key: str):
    if key not in values:
        raise ConfigError(f"missing key {key!r}")
    v = values[key]
    if v.size != 1:
        raise ConfigError(f"{key} must be a scalar")
    return v.flat[0]


def parse_config(text: str) -> RunConfig:
    values: dict = {}
    seen: set = set()
    kind = "ss"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KNOWN:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key == "controller":
            kind = val.lower()
            if kind not in ("ss", "fir", "pid"):
                raise ConfigError(f"line {lineno}: controller must be ss, fir or pid")
            continue
        values[key] = parse_value(val, allow_float=key in _PLANT_KEYS)

    for key in ("A", "B", "C"):
        if key not in values:
            raise ConfigError(f"missing key {key!r}")
    as_float = lambda a: np.array([[float(v) for v in row] for row in a])  # noqa: E731
    plant = Plant(
        as_float(values["A"]),
        as_float(values["B"]),
        as_float(values["C"]),
        as_float(values["xp0"]).reshape(-1) if "xp0" in values else None,
    )

    if kind == "ss":
        for key in ("F", "G", "H", "J"):
            if key not in values:
                raise ConfigError(f"missing key {key!r}")
        ctrl = LinearController(values["F"], values["G"], values["H"], values["J"], values.get("x0"))
    elif kind == "fir":
        if "b" not in values:
            raise ConfigError("missing key 'b'")
        ctrl = realize_fir(values["b"].reshape(-1))
    else:
        ctrl = realize_pid(_one(values, "kp"), _one(values, "ki"), _one(values, "kd"), _one(values, "Ts"), _int(values, "Nd"))
    if kind != "ss" and "x0" in values:
        ctrl = LinearController(ctrl.F, ctrl.G, ctrl.H, ctrl.J, values["x0"])

    scales = Scales(_one(values, "Ry"), _one(values, "Sg"), _one(values, "Shj"), _one(values, "Ru"))
    params = Params(
        p=_int(values, "p"),
        L=_int(values, "L"),
        r=_int(values, "r"),
        N=_int(values, "N", 4),
        base=_int(values, "base", 10),
        seed=_int(values, "seed", 0),
    )
    horizon = _int(values, "horizon", 150)
    return RunConfig(plant, ctrl, scales, params, horizon, kind)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
