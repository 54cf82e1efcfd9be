import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lwecontrol import framing
from lwecontrol.lwe import (
    Ciphertext,
    Params,
    PlaintextRangeError,
    SecretKey,
    add,
    decrypt,
    encrypt,
    keygen,
    noise_actual,
    sample_signed,
    scalar_mul_plain,
    security_indicator,
    stack,
)
from lwecontrol.zq import ShapeError

P = Params(p=10**4, L=10**4, r=10, N=4)


def _smod(x, q):
    # reference signed residue, written independently of the library
    x %= q
    return x - q if x >= q - q // 2 else x


def test_params_derived_values():
    assert P.q == 10**8 and P.d == 8
    assert Params(p=2**10, L=2**6, r=3, N=2, base=2).d == 16


@pytest.mark.parametrize(
    "kw", [dict(r=10**4), dict(r=-1), dict(p=2 * 10**4), dict(L=300), dict(N=0), dict(base=1), dict(p=1.5)]
)
def test_params_validation(kw):
    base = dict(p=10**4, L=10**4, r=10, N=4)
    base.update(kw)
    with pytest.raises((TypeError, ValueError)):
        Params(**base)


def test_forced_randomness_matches_formula():
    sk = SecretKey([3, -7, 11, 2])
    A = [[5, -9, 12, 40]]
    e = [-3]
    c = encrypt([30], sk, P, A=A, e=e)
    b = _smod(-(5 * 3 + -9 * -7 + 12 * 11 + 40 * 2) + P.L * 30 - 3, P.q)
    assert c.body.tolist() == [[b, 5, -9, 12, 40]]
    assert noise_actual(c, [30], sk, P).tolist() == [-3]


@settings(max_examples=200)
@given(st.lists(st.integers(-5000, 4999), min_size=1, max_size=8), st.integers(0, 2**32))
def test_roundtrip(msgs, seed):
    rng = np.random.default_rng(seed)
    sk = keygen(P, rng)
    assert decrypt(encrypt(msgs, sk, P, rng), sk, P).tolist() == msgs


@given(st.integers(-2000, 1999), st.integers(-2000, 1999), st.integers(0, 2**32))
def test_additive_homomorphism(m1, m2, seed):
    rng = np.random.default_rng(seed)
    sk = keygen(P, rng)
    c = add(encrypt(m1, sk, P, rng), encrypt(m2, sk, P, rng))
    assert decrypt(c, sk, P)[0] == m1 + m2
    assert c.noise_budget == Fraction(10)


@given(st.integers(-50, 49), st.integers(-50, 50), st.integers(0, 2**32))
def test_scalar_multiplication(m, k, seed):
    rng = np.random.default_rng(seed)
    sk = keygen(P, rng)
    c = scalar_mul_plain(encrypt(m, sk, P, rng), k)
    assert decrypt(c, sk, P)[0] == m * k
    assert abs(noise_actual(c, m * k, sk, P)[0]) <= c.noise_budget


def test_plaintext_range_boundary():
    sk = keygen(P)
    assert decrypt(encrypt(-5000, sk, P), sk, P)[0] == -5000
    with pytest.raises(PlaintextRangeError):
        encrypt(5000, sk, P)


def test_error_sampled_from_signed_interval():
    vals = sample_signed(np.random.default_rng(0), 10, 20000)
    assert min(vals) == -5 and max(vals) == 4
    assert list(sample_signed(np.random.default_rng(0), 0, 5)) == [0] * 5


def test_wide_modulus_sampling():
    m = 10**25
    vals = sample_signed(np.random.default_rng(1), m, 200)
    assert all(-(m // 2) <= int(v) < m // 2 for v in vals)
    assert max(abs(int(v)) for v in vals) > 2**63


def test_keygen_seeded_and_in_range():
    a, b = keygen(P), keygen(P)
    assert a == b and a.N == 4
    assert all(-(P.q * P.L) // 2 <= int(v) < (P.q * P.L) // 2 for v in a.sk)
    assert keygen(P.replace(seed=1)) != a


def test_zero_noise_mode():
    Z = P.replace(r=0)
    sk = keygen(Z)
    c = encrypt([7, -3], sk, Z, np.random.default_rng(2))
    assert noise_actual(c, [7, -3], sk, Z).tolist() == [0, 0]
    assert math.isinf(security_indicator(Z))


def test_security_indicator_linear_in_N():
    a = security_indicator(Params(p=10**4, L=10**4, r=100, N=20))
    b = security_indicator(Params(p=10**4, L=10**4, r=100, N=40))
    assert b == pytest.approx(2 * a, rel=1e-15)
    assert a == pytest.approx(20 / (math.log2(10**8) - math.log2(100)))


def test_ciphertext_is_immutable_and_reduced():
    c = Ciphertext([[P.q + 1, 2 * P.q]], P.q)
    assert c.body.tolist() == [[1, 0]]
    with pytest.raises(ValueError):
        c.body[0, 0] = 5


def test_add_shape_mismatch():
    sk = keygen(P)
    with pytest.raises(ShapeError):
        add(encrypt([1, 2], sk, P), encrypt([1], sk, P))


def test_stack_rows():
    sk = keygen(P)
    rng = np.random.default_rng(3)
    c = stack(encrypt(1, sk, P, rng), encrypt([2, 3], sk, P, rng))
    assert decrypt(c, sk, P).tolist() == [1, 2, 3]


def test_serialization_roundtrip():
    sk = keygen(P)
    c = encrypt([1, -2, 3], sk, P, np.random.default_rng(4))
    assert Ciphertext.from_bytes(c.to_bytes(P), P) == c
    assert SecretKey.from_bytes(sk.to_bytes(P), P) == sk


def test_key_and_ciphertext_frames_not_interchangeable():
    sk = keygen(P)
    with pytest.raises(framing.FrameError):
        Ciphertext.from_bytes(sk.to_bytes(P), P)
    c = encrypt(1, sk, P)
    with pytest.raises(framing.FrameError):
        SecretKey.from_bytes(c.to_bytes(P), P)


def test_mismatched_params_rejected():
    sk = keygen(P)
    with pytest.raises(framing.FrameError):
        SecretKey.from_bytes(sk.to_bytes(P), P.replace(N=5))
    with pytest.raises(framing.FrameError):
        Ciphertext.from_bytes(encrypt(1, sk, P).to_bytes(P), P.replace(p=10**5))


def test_lower_edge_survives_negative_error():
    sk = keygen(P)
    for e in (-5, -1, 0, 4):
        assert decrypt(encrypt(-5000, sk, P, e=[e], A=[[1, 2, 3, 4]]), sk, P)[0] == -5000


def test_error_of_half_L_flips_the_message():
    sk = keygen(P)
    c = encrypt(1, sk, P, e=[P.L // 2], A=[[1, 1, 1, 1]])
    # (L + L/2) / L rounds away from zero to 2
    assert decrypt(c, sk, P)[0] == 2
    c = encrypt(1, sk, P, e=[P.L // 2 - 1], A=[[1, 1, 1, 1]])
    assert decrypt(c, sk, P)[0] == 1
