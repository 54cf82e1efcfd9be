from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lwecontrol.zq import ModRing, ShapeError, as_int_array, exact, int_log, is_power_of, mat_mul, round_half_away, smod


@pytest.mark.parametrize(
    "x, q, want",
    [(0, 4, 0), (1, 4, 1), (2, 4, -2), (3, 4, -1), (-2, 4, -2), (-3, 4, 1), (5, 10, -5), (-5, 10, -5), (4, 10, 4)],
)
def test_smod_values(x, q, want):
    assert smod(x, q) == want


@given(st.integers(-(10**40), 10**40), st.integers(2, 10**30))
def test_smod_lands_in_signed_range(x, q):
    v = smod(x, q)
    assert -(q // 2) <= v < q - q // 2
    assert (v - x) % q == 0


def test_smod_array_keeps_big_ints():
    a = np.array([10**25 + 3, -(10**25) - 3, 7], dtype=object)
    out = smod(a, 10**11)
    assert out.dtype == object
    assert list(out) == [3, -3, 7]


def test_smod_int64_input_is_promoted():
    out = smod(np.array([9, -9], dtype=np.int64), 10)
    assert out.dtype == object and list(out) == [-1, 1]


@pytest.mark.parametrize(
    "x, want",
    [(Fraction(1, 2), 1), (Fraction(-1, 2), -1), (Fraction(5, 2), 3), (Fraction(-5, 2), -3), (Fraction(149, 100), 1), (0, 0)],
)
def test_round_half_away(x, want):
    assert round_half_away(x) == want


def test_round_half_away_array():
    out = round_half_away([Fraction(3, 2), Fraction(-3, 2), Fraction(1, 3)])
    assert list(out) == [2, -2, 0]


@given(st.fractions())
def test_round_half_away_is_nearest(x):
    r = round_half_away(x)
    assert abs(x - r) <= Fraction(1, 2)
    if abs(x - r) == Fraction(1, 2):
        assert abs(r) > abs(x)


def test_exact_uses_shortest_decimal():
    assert exact(0.1) == Fraction(1, 10)
    assert exact("1e-3") == Fraction(1, 1000)
    assert exact("-1.414") == Fraction(-1414, 1000)
    assert exact(3) == 3


def test_as_int_array_rejects_fractions():
    with pytest.raises((TypeError, ValueError)):
        as_int_array([1, Fraction(1, 2)])


def test_power_helpers():
    assert is_power_of(10**11, 10) and not is_power_of(2 * 10**4, 10)
    assert int_log(2**20, 2) == 20
    with pytest.raises(ValueError):
        int_log(12, 10)


def test_modring_validation():
    assert ModRing(100).d == 2
    with pytest.raises(ValueError):
        ModRing(2)
    with pytest.raises(ValueError):
        ModRing(120)


@given(st.lists(st.integers(-(10**12), 10**12), min_size=3, max_size=3), st.lists(st.integers(-(10**12), 10**12), min_size=3, max_size=3))
def test_modring_ops_are_closed(a, b):
    ring = ModRing(10**8)
    for v in (ring.add(a, b), ring.sub(a, b), ring.neg(a), ring.scale(a, 7)):
        assert ring.contains(v)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        mat_mul(np.ones((2, 3), dtype=object), np.ones((2, 3), dtype=object), 100)
    with pytest.raises(ShapeError):
        ModRing(100).add([1, 2], [1, 2, 3])


def test_in_signed_range_edges():
    from lwecontrol.zq import in_signed_range

    assert in_signed_range(-5, 10) and in_signed_range(4, 10)
    assert not in_signed_range(5, 10) and not in_signed_range(-6, 10)
