import cmath
import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from scipy import integrate

from cbbm.observables import Beta
from cbbm.oracles import MomentOracleInput, mean_partition, pth_moment_growth_rate, second_moment_normalized

SQRT2 = math.sqrt(2.0)


def test_mean_partition_trivial_cases():
    assert mean_partition(MomentOracleInput(0.0, 0.0, 0.0, 3.0)) == pytest.approx(math.exp(3.0))
    v = mean_partition(MomentOracleInput(0.7, 0.0, 0.5, 2.0))
    assert v.imag == 0.0 and v.real == pytest.approx(math.exp(2 * (1 + 0.245)))


def test_mean_partition_example():
    v = mean_partition(MomentOracleInput(0.4, 0.3, 0.7, 2.0))
    assert abs(v) == pytest.approx(math.exp(2.07), rel=1e-14)
    assert cmath.phase(v) == pytest.approx(0.168, abs=1e-14)


def test_mean_partition_against_numeric_integration():
    s, tau, rho, t = 0.4, 0.3, 0.7, 2.0
    cov = np.array([[t, rho * t], [rho * t, t]])
    inv = np.linalg.inv(cov)
    norm = 1 / (2 * math.pi * math.sqrt(np.linalg.det(cov)))

    def dens(y, x):
        v = np.array([x, y])
        return norm * math.exp(-0.5 * v @ inv @ v)

    lim = 12 * math.sqrt(t)
    re = integrate.dblquad(lambda y, x: dens(y, x) * math.exp(s * x) * math.cos(tau * y), -lim, lim, -lim, lim,
                           epsabs=1e-11)[0]
    im = integrate.dblquad(lambda y, x: dens(y, x) * math.exp(s * x) * math.sin(tau * y), -lim, lim, -lim, lim,
                           epsabs=1e-11)[0]
    v = mean_partition(MomentOracleInput(s, tau, rho, t))
    assert cmath.isclose(v, math.exp(t) * complex(re, im), rel_tol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1), st.floats(0, 5), st.floats(0, 5))
def test_mean_partition_factorizes_in_time(s, tau, rho, a, b):
    va = mean_partition(MomentOracleInput(s, tau, rho, a))
    vb = mean_partition(MomentOracleInput(s, tau, rho, b))
    vab = mean_partition(MomentOracleInput(s, tau, rho, a + b))
    assert cmath.isclose(va * vb, vab, rel_tol=1e-10)


def test_second_moment_examples():
    assert second_moment_normalized(MomentOracleInput(0.5, 1.0, 0.0, 0.0)) == 1.0
    v = second_moment_normalized(MomentOracleInput(0.5, 1.0, 0.0, 10.0))
    assert v == pytest.approx(1 + 8 * (1 - math.exp(-2.5)), rel=1e-14)
    assert v == pytest.approx(8.34332, abs=1e-5)
    b13 = second_moment_normalized(MomentOracleInput(0.6, 0.8, 0.0, 10.0)) / 10.0
    assert b13 == pytest.approx(2.1, abs=1e-12)


def test_second_moment_against_numeric_integral():
    # many-to-two: 1 + K int_0^t exp((1 - s^2 - tau^2) u) du
    for s, tau, t in ((0.5, 1.0, 7.0), (0.3, 0.2, 4.0), (0.6, 0.8, 3.0)):
        c = 1 - s * s - tau * tau
        integral = integrate.quad(lambda u: math.exp(c * u), 0, t)[0]
        assert second_moment_normalized(MomentOracleInput(s, tau, 0.3, t)) == pytest.approx(1 + 2 * integral)


def test_second_moment_ignores_rho_and_uses_K():
    a = second_moment_normalized(MomentOracleInput(0.5, 1.0, 0.0, 6.0))
    b = second_moment_normalized(MomentOracleInput(0.5, 1.0, -0.9, 6.0))
    c = second_moment_normalized(MomentOracleInput(0.5, 1.0, 0.0, 6.0, K=3.0))
    assert a == b
    assert c - 1 == pytest.approx(1.5 * (a - 1))
    with pytest.raises(ValueError):
        MomentOracleInput(0.5, 1.0, K=-1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 10), st.floats(0, 2 * math.pi))
@example(2.75, 9.021462697055731e-160)  # tau^2 underflows to a denormal
def test_second_moment_continuous_across_unit_circle(t, ang):
    s, tau = math.cos(ang), math.sin(ang)
    on = second_moment_normalized(MomentOracleInput(s, tau, 0.0, t))
    assert on == pytest.approx(1 + 2 * t, rel=1e-9)
    for eps in (1e-7, -1e-7):
        near = second_moment_normalized(MomentOracleInput(s * (1 + eps), tau * (1 + eps), 0.0, t))
        assert near == pytest.approx(on, rel=1e-5)


def test_growth_rate_signs():
    # B1 strictly inside |s|+|t| < sqrt2 at p = sqrt2/s
    assert pth_moment_growth_rate(Beta(0.5, 0.3), SQRT2 / 0.5) < 0
    assert pth_moment_growth_rate(complex(0.5, 0.3), 2.0) < 0
    # on B12 at p = sqrt2/s: marginal
    b12 = Beta(1.0, SQRT2 - 1.0)
    assert abs(pth_moment_growth_rate(b12, SQRT2)) < 1e-12
    # on B12 with p below sqrt2/s (gamma above sigma): negative
    assert pth_moment_growth_rate(b12, 1.3) < 0
    # outside |s|+|t| < sqrt2 the rate is positive
    assert pth_moment_growth_rate(Beta(1.0, 0.6), SQRT2) > 0


def test_growth_rate_range_errors():
    with pytest.raises(ValueError, match="p out of range"):
        pth_moment_growth_rate(Beta(1.0, 0.2), 1.5)
    with pytest.raises(ValueError, match="p out of range"):
        pth_moment_growth_rate(Beta(0.5, 0.2), 1.0)
    with pytest.raises(ValueError):
        pth_moment_growth_rate(Beta(0.0, 0.2), 2.0)
