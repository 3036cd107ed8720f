"""Closed-form baselines. Deliberately independent of the samplers."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class MomentOracleInput:
    sigma: float
    tau: float
    rho: float = 0.0
    t: float = 0.0
    K: float = 2.0

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be non-negative")


def mean_partition(q: MomentOracleInput) -> complex:
    """E X(t) = e^t * E exp(sigma x + i tau y) for one Gaussian pair of variance t."""
    s, tau = q.sigma, q.tau
    return cmath.exp(q.t * complex(1.0 + 0.5 * (s * s - tau * tau), s * tau * q.rho))


def second_moment_normalized(q: MomentOracleInput) -> float:
    """E |X(t)|^2 exp(-2t(1/2 + sigma^2)), diagonal included.

    Many-to-two: 1 + K * int_0^t exp((1 - sigma^2 - tau^2) u) du.  Does not
    depend on rho.  Divide by t for the boundary-scaled sum.
    """
    c = 1.0 - q.sigma ** 2 - q.tau ** 2
    ct = c * q.t
    # t * expm1(ct) / ct, continuous through c = 0; series near 0 (denormal ct loses bits)
    if abs(ct) < 1e-8:
        integral = q.t * (1.0 + ct / 2.0 + ct * ct / 6.0)
    else:
        integral = q.t * math.expm1(ct) / ct
    return 1.0 + q.K * integral


def _parts(beta):
    if isinstance(beta, (complex, float, int)):
        return complex(beta).real, complex(beta).imag
    return beta.sigma, beta.tau


def pth_moment_growth_rate(beta, p: float) -> float:
    """Exponential growth rate of the integrand bounding E|M(t)|^p.

    Off the B1/B2 boundary the p = sqrt2/sigma bound is used (it controls
    every smaller p as well).  On the boundary |sigma| + |tau| = sqrt2 the
    rate is taken at gamma = sqrt2/p, oriented so that p < sqrt2/sigma gives a
    negative rate.  A negative rate predicts L^p-boundedness.  ``beta`` may be
    a complex number or anything with ``sigma`` and ``tau`` attributes.
    """
    sigma, tau = _parts(beta)
    s, t = abs(sigma), abs(tau)
    if s == 0.0:
        raise ValueError("p range undefined for sigma = 0")
    p_max = SQRT2 / s
    if not 1.0 < p <= p_max * (1 + 1e-12):
        raise ValueError(f"p out of range: need 1 < p <= sqrt2/sigma = {p_max}")
    if abs(s + t - SQRT2) <= 1e-12 and s > 1.0 / SQRT2:
        gamma = SQRT2 / p
        return (1.0 - gamma * gamma / (s * s)) / (SQRT2 * s)
    return (t * t - (s - SQRT2) ** 2) / (SQRT2 * s)
