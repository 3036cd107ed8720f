"""Partition function, martingales and normalized sums, all evaluated in log domain."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .bbm import leaf_barrier_flags

SQRT2 = math.sqrt(2.0)
_CHUNK = 1 << 16

# Cody-Waite split of pi/2; k * _P1 is exact for |k| < 2**20.
_TWO_OVER_PI = 0.6366197723675814
_P1 = 1.5707963267341256
_P2 = 6.077100506506192e-11
_P3 = 2.0222662487959506e-21
MAX_FAST_PHASE = 1.0e5


@nb.njit(nogil=True, cache=True, fastmath=True)
def _phase_sum(w, theta):
    """(sum w cos theta, sum w sin theta) with a branch-free sin/cos.

    Range reduction to [-pi/4, pi/4] and degree-17 Taylor polynomials; the
    absolute error is within a few ulps for |theta| <= 1e5.
    """
    re = 0.0
    im = 0.0
    for i in range(w.shape[0]):
        x = theta[i]
        k = np.floor(x * _TWO_OVER_PI + 0.5)
        r = ((x - k * _P1) - k * _P2) - k * _P3
        r2 = r * r
        s = r + r * r2 * (-1 / 6 + r2 * (1 / 120 + r2 * (-1 / 5040 + r2 * (1 / 362880 + r2 * (
            -1 / 39916800 + r2 * (1 / 6227020800 + r2 * (-1 / 1307674368000 + r2 / 355687428096000)))))))
        c = 1.0 + r2 * (-0.5 + r2 * (1 / 24 + r2 * (-1 / 720 + r2 * (1 / 40320 + r2 * (
            -1 / 3628800 + r2 * (1 / 479001600 + r2 * (-1 / 87178291200 + r2 / 20922789888000)))))))
        q = k - 4.0 * np.floor(k * 0.25)
        h = np.floor(q * 0.5)
        odd = q - 2.0 * h
        sign = 1.0 - 2.0 * h
        re += w[i] * sign * ((1.0 - odd) * c - odd * s)
        im += w[i] * sign * ((1.0 - odd) * s + odd * c)
    return re, im


@nb.njit(nogil=True, cache=True)
def _stream_terms(shift, re, im, exponents, phases):
    """One pass, one term at a time; rescales when a new maximum appears."""
    for i in range(exponents.shape[0]):
        e = exponents[i]
        if e > shift:
            scale = math.exp(shift - e)
            re *= scale
            im *= scale
            shift = e
        w = math.exp(e - shift)
        re += w * math.cos(phases[i])
        im += w * math.sin(phases[i])
    return shift, re, im


@dataclass(frozen=True)
class ComplexExpSum:
    """sum_k exp(e_k + i theta_k) stored as exp(shift) * (re + i im)."""

    shift: float = -math.inf
    re: float = 0.0
    im: float = 0.0
    count: int = 0

    @classmethod
    def from_terms(cls, exponents, phases=None) -> "ComplexExpSum":
        """Two-pass evaluation: explicit maximum, then the shifted sum."""
        e = np.ascontiguousarray(exponents, dtype=float)
        if e.size == 0:
            return cls()
        m = float(e.max())
        w = np.exp(e - m)
        if phases is None:
            return cls(m, float(w.sum()), 0.0, e.size)
        th = np.ascontiguousarray(phases, dtype=float)
        if np.abs(th).max() <= MAX_FAST_PHASE:
            re, im = _phase_sum(w, th)
        else:
            re, im = float(w @ np.cos(th)), float(w @ np.sin(th))
        return cls(m, re, im, e.size)

    @classmethod
    def streaming(cls, exponents, phases) -> "ComplexExpSum":
        e = np.ascontiguousarray(exponents, dtype=float)
        th = np.ascontiguousarray(phases, dtype=float)
        return cls().push_many(e, th)

    def push_many(self, exponents, phases) -> "ComplexExpSum":
        if len(exponents) == 0:
            return self
        shift, re, im = _stream_terms(self.shift if self.count else -np.inf, self.re, self.im,
                                      exponents, phases)
        return ComplexExpSum(shift, re, im, self.count + len(exponents))

    def push(self, exponent: float, phase: float = 0.0) -> "ComplexExpSum":
        return self.merge(ComplexExpSum(exponent, math.cos(phase), math.sin(phase), 1))

    def merge(self, other: "ComplexExpSum") -> "ComplexExpSum":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        if self.shift >= other.shift:
            f = math.exp(other.shift - self.shift)
            return ComplexExpSum(self.shift, self.re + f * other.re, self.im + f * other.im,
                                 self.count + other.count)
        return other.merge(self)

    @property
    def log_magnitude(self) -> float:
        return self.shift + 0.5 * math.log(self.re * self.re + self.im * self.im)

    @property
    def phase(self) -> float:
        return math.atan2(self.im, self.re)

    def scaled(self, log_factor: float = 0.0) -> complex:
        """exp(log_factor) times the sum, computed without overflow of the shift."""
        return math.exp(self.shift + log_factor) * complex(self.re, self.im)

    @property
    def value(self) -> complex:
        return self.scaled(0.0)


@dataclass(frozen=True)
class Beta:
    """Complex inverse temperature sigma + i tau."""

    sigma: float
    tau: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and math.isfinite(self.tau)):
            raise ValueError("beta must be finite")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def parse(cls, text: str) -> "Beta":
        """Accept ``a+bi``, ``a-bi``, ``bi`` or ``a`` (``j`` works as well)."""
        s = text.strip().replace(" ", "").replace("i", "j")
        try:
            z = complex(s)
        except ValueError:
            raise ValueError(f"cannot parse beta from {text!r}") from None
        return cls(z.real, z.imag)

    def __complex__(self):
        return complex(self.sigma, self.tau)

    def __str__(self):
        return f"{self.sigma!r}{'+' if self.tau >= 0 else '-'}{abs(self.tau)!r}i"


def partition_function(forest, beta: Beta) -> ComplexExpSum:
    """Streaming max-shift sum of exp(sigma x_k + i tau y_k) over the leaves.

    ``forest`` may be a :class:`BbmForest` or a :class:`Cloud` snapshot.
    """
    x = forest.x
    if x.size == 0:
        raise ValueError("no particles")
    y = forest.y if beta.tau != 0.0 else None
    acc = ComplexExpSum()
    for a in range(0, x.size, _CHUNK):
        e = beta.sigma * x[a:a + _CHUNK]
        th = None if y is None else beta.tau * y[a:a + _CHUNK]
        acc = acc.merge(ComplexExpSum.from_terms(e, th))
    return acc


def _time(forest, t):
    return forest.t if t is None else float(t)


def mckean_log_norm(beta: Beta, t: float) -> float:
    return -t * (1.0 + 0.5 * (beta.sigma ** 2 - beta.tau ** 2))


def mckean_martingale(forest, beta: Beta, t: float = None) -> complex:
    """Unit-mean martingale exp(-t(1 + (s^2 - tau^2)/2) - i s tau rho t) X(t).

    The deterministic phase exp(-i sigma tau rho t) cancels the phase of the
    mean, so the expectation is exactly 1 for every rho.
    """
    t = _time(forest, t)
    X = partition_function(forest, beta)
    return X.scaled(mckean_log_norm(beta, t)) * cmath.exp(-1j * beta.sigma * beta.tau * forest.rho * t)


def _real_log_sum(forest, theta):
    x = forest.x
    m = float((theta * x).max())
    return m + math.log(np.exp(theta * x - m).sum())


def additive_real_martingale(forest, theta: float, t: float = None) -> float:
    t = _time(forest, t)
    return math.exp(_real_log_sum(forest, theta) - t * (1.0 + 0.5 * theta * theta))


def derivative_martingale(forest, t: float = None) -> float:
    t = _time(forest, t)
    gap = SQRT2 * t - forest.x
    return float(np.sum(gap * np.exp(-SQRT2 * gap)))


def seneta_heyde(forest, t: float = None) -> float:
    t = _time(forest, t)
    return math.sqrt(t) * float(np.sum(np.exp(-SQRT2 * (SQRT2 * t - forest.x))))


def normalized_log_norm(beta: Beta, t: float) -> float:
    return -t * (0.5 + beta.sigma ** 2)


def normalized_partition(forest, beta: Beta, t: float = None, boundary_scaling: bool = False) -> complex:
    """exp(-t(1/2 + sigma^2)) X(t), divided by sqrt(t) when ``boundary_scaling``."""
    t = _time(forest, t)
    if boundary_scaling and t < 1.0:
        raise ValueError("boundary scaling needs t >= 1")
    n = partition_function(forest, beta).scaled(normalized_log_norm(beta, t))
    return n / math.sqrt(t) if boundary_scaling else n


def constrained_partition(forest, beta: Beta, t: float = None, r: float = 0.0, gamma: float = 0.75,
                          A: float = 4.0, rng: np.random.Generator = None) -> complex:
    """Normalized sum over the leaves passing both barrier checks."""
    t = _time(forest, t)
    if A <= 0:
        raise ValueError("A must be positive")
    if rng is None:
        raise ValueError("an explicit random stream is required for the barrier marks")
    endpoint, path = leaf_barrier_flags(forest, beta.sigma, gamma, r, A, rng)
    keep = endpoint & path
    if not keep.any():
        return 0j
    x = forest.x[keep]
    e = beta.sigma * x
    th = beta.tau * forest.y[keep]
    return ComplexExpSum.from_terms(e, th).scaled(normalized_log_norm(beta, t))
