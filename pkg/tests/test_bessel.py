import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holegl.bessel import K_SWITCH, bessel, bessel_I, bessel_K, bessel_k_branches, bessel_wronskian_residual, i0, k0
from holegl.errors import DomainError

EULER_GAMMA = 0.5772156649015329

# Frozen with mpmath at 30 digits.
FROZEN = {
    1.0: (1.2660658777520084, 0.565159103992485, 0.42102443824070834, 0.6019072301972346),
    0.05: (1.000625097663032, 0.02500781331384447, 3.11423402947199, 19.909674325882506),
}


def _mp(x):
    mpmath.mp.dps = 30
    return tuple(float(f(x)) for f in (
        lambda t: mpmath.besseli(0, t), lambda t: mpmath.besseli(1, t),
        lambda t: mpmath.besselk(0, t), lambda t: mpmath.besselk(1, t)))


@pytest.mark.parametrize("x", sorted(FROZEN))
def test_frozen_values(x):
    b = bessel(x)
    for got, want in zip((b.I0, b.I1, b.K0, b.K1), FROZEN[x]):
        assert got == pytest.approx(want, rel=1e-12)


def test_k0_at_small_argument_matches_two_digit_value():
    assert abs(k0(0.05) - 3.114) <= 1e-3


def test_against_mpmath_on_log_grid():
    xs = np.geomspace(1e-8, 50, 120)
    worst = 0.0
    for x in xs:
        ours = bessel(float(x))
        for got, want in zip((ours.I0, ours.I1, ours.K0, ours.K1), _mp(float(x))):
            worst = max(worst, abs(got - want) / abs(want))
    assert worst <= 1e-12


@given(st.floats(min_value=1e-8, max_value=50.0))
@settings(max_examples=60, deadline=None)
def test_against_mpmath_random(x):
    ours = bessel(x)
    for got, want in zip((ours.I0, ours.I1, ours.K0, ours.K1), _mp(x)):
        assert got == pytest.approx(want, rel=1e-12)


def test_small_argument_limit():
    for x in (1e-6, 1e-8, 1e-10):
        assert abs(k0(x) + math.log(x / 2) + EULER_GAMMA) < 1e-9


def test_k0_log_asymptote():
    for x in (1e-3, 1e-4, 1e-6):
        assert abs(k0(x) / (-math.log(x)) - 1) <= 0.05


@pytest.mark.parametrize("x,bound", [(1.0, 1e-12), (1e-4, 1e-10), (25.0, 1e-12)])
def test_wronskian_examples(x, bound):
    assert bessel_wronskian_residual(x) <= bound


def test_wronskian_on_range():
    xs = np.geomspace(1e-6, 30, 300)
    assert max(bessel_wronskian_residual(float(x)) for x in xs) <= 1e-12


def test_monotonicity():
    xs = np.geomspace(1e-6, 30, 200)
    I0, _ = bessel_I(xs)
    K0, _ = bessel_K(xs)
    assert np.all(np.diff(I0) > 0)
    assert np.all(np.diff(K0) < 0)
    assert np.all(I0 >= 1.0)
    assert np.all(K0 > 0.0)


def test_branches_agree_at_switch():
    series, fraction = bessel_k_branches(K_SWITCH)
    assert abs(series - fraction) / fraction <= 1e-11


def test_vectorized_matches_scalar():
    xs = np.array([0.01, 0.5, 2.0, 7.5, 40.0])
    K0, K1 = bessel_K(xs)
    for x, a, b in zip(xs, K0, K1):
        s = bessel(float(x))
        assert a == s.K0 and b == s.K1


def test_i_at_zero():
    assert i0(0.0) == 1.0
    I0, I1 = bessel_I(0.0)
    assert I1 == 0.0


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_k_domain_error(x):
    with pytest.raises(DomainError):
        bessel(x)
    with pytest.raises(DomainError):
        bessel_wronskian_residual(x)


def test_i_rejects_negative():
    with pytest.raises(DomainError):
        bessel_I(-0.5)
