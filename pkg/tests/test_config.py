from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from lwecontrol.config import ConfigError, load_config, parse_config, parse_value

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = """
A = [1.1, 0; 0, 0.5]
B = [1; 0]
C = [1, 0]
xp0 = [1; 0]
F = [0, 1; -1, 0]
G = [1; 0]
H = [0.5, -0.25]
J = 1/3
Ry = 1e-3
Sg = 1
Shj = 1e-3
Ru = 1e-6
p = 1e9
L = 100
r = 10
"""


def test_parse_values_exact():
    assert parse_value("0.1").tolist() == [[Fraction(1, 10)]]
    assert parse_value("1/3").tolist() == [[Fraction(1, 3)]]
    assert parse_value("[1, 2; 3, 4]").shape == (2, 2)
    assert parse_value("[1 2 3]").tolist() == [[1, 2, 3]]


def test_full_config():
    cfg = parse_config(BASE)
    assert cfg.controller.J[0, 0] == Fraction(1, 3)
    assert cfg.controller.H.tolist() == [[Fraction(1, 2), Fraction(-1, 4)]]
    assert cfg.params.p == 10**9 and cfg.params.N == 4 and cfg.params.seed == 0
    assert cfg.horizon == 150 and cfg.controller_kind == "ss"
    assert np.allclose(cfg.plant.A, [[1.1, 0], [0, 0.5]])


@pytest.mark.parametrize(
    "extra, msg",
    [
        ("bogus = 1", "unknown key"),
        ("A = 1", "duplicate"),
        ("F2 = 1", "unknown"),
        ("no equals sign", "expected"),
        ("controller = lqr", "controller must be"),
    ],
)
def test_config_errors(extra, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(BASE + extra + "\n")


def test_sqrt_only_for_plant():
    with pytest.raises(ConfigError):
        parse_config(BASE.replace("J = 1/3", "J = sqrt(2)"))
    cfg = parse_config(BASE.replace("A = [1.1, 0; 0, 0.5]", "A = [sqrt(2), 0; 0, 0.5]"))
    assert cfg.plant.A[0, 0] == 2**0.5


def test_ragged_and_missing():
    with pytest.raises(ConfigError, match="ragged"):
        parse_value("[1, 2; 3]")
    with pytest.raises(ConfigError, match="missing"):
        parse_config(BASE.replace("Ru = 1e-6", ""))
    with pytest.raises(ConfigError, match="integer"):
        parse_config(BASE.replace("L = 100", "L = 100.5"))


def test_fir_config():
    text = BASE.replace("F = [0, 1; -1, 0]\nG = [1; 0]\nH = [0.5, -0.25]\nJ = 1/3\n", "controller = fir\nb = [0.1, 0.2, 0.3]\n")
    cfg = parse_config(text)
    assert cfg.controller_kind == "fir" and cfg.controller.F.tolist() == [[0, 0], [1, 0]]


def test_shipped_configs_load():
    scalar = load_config(CONFIGS / "scalar_unstable.cfg")
    assert scalar.params.p == 10**9 and scalar.params.L == 100 and scalar.params.r == 10
    assert scalar.controller.H[0, 0] == Fraction(-1414, 1000)
    pid = load_config(CONFIGS / "pid.cfg")
    assert pid.controller_kind == "pid" and pid.controller.has_integer_F()
    assert load_config(CONFIGS / "pid_stable.cfg").controller.has_integer_F()
