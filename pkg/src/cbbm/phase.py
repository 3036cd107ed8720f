"""Phase classification, limiting free energy and CLT scaling rules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .observables import Beta

TOL = 1e-12
SQRT2 = math.sqrt(2.0)
INV_SQRT2 = 1.0 / SQRT2


class PhaseLabel(str, enum.Enum):
    B1 = "B1"
    B2 = "B2"
    B3 = "B3"
    B12 = "B12"
    B13 = "B13"
    B23 = "B23"
    TRIPLE = "TRIPLE"


class NoCltRule(ValueError):
    pass


def classify(beta: Beta, tol: float = TOL) -> PhaseLabel:
    s, t = abs(beta.sigma), abs(beta.tau)
    a = 2.0 * s * s - 1.0  # B2 side > 0 > B3 side
    b = s + t - SQRT2  # B2 needs > 0
    c = s * s + t * t - 1.0  # B3 needs > 0
    on_a, on_b, on_c = abs(a) <= tol, abs(b) <= tol, abs(c) <= tol
    if on_a and on_b and on_c:
        return PhaseLabel.TRIPLE
    if on_a and c > tol:
        return PhaseLabel.B23
    if on_b and a > tol:
        return PhaseLabel.B12
    if on_c and a < -tol:
        return PhaseLabel.B13
    if a > tol and b > tol:
        return PhaseLabel.B2
    if a < -tol and c > tol:
        return PhaseLabel.B3
    return PhaseLabel.B1


def _branch_values(beta: Beta) -> dict[str, float]:
    s, t = beta.sigma, beta.tau
    return {
        "B1": 1.0 + 0.5 * (s * s - t * t),
        "B2": SQRT2 * abs(s),
        "B3": 0.5 + s * s,
    }


# closure of each boundary: the branches that meet there
_BRANCHES = {
    PhaseLabel.B1: ("B1",),
    PhaseLabel.B2: ("B2",),
    PhaseLabel.B3: ("B3",),
    PhaseLabel.B12: ("B1", "B2"),
    PhaseLabel.B13: ("B1", "B3"),
    PhaseLabel.B23: ("B2", "B3"),
    PhaseLabel.TRIPLE: ("B1", "B2", "B3"),
}


def adjacent_branches(beta: Beta) -> dict[str, float]:
    vals = _branch_values(beta)
    return {k: vals[k] for k in _BRANCHES[classify(beta)]}


def limiting_log_partition(beta: Beta) -> float:
    """lim (1/t) log |X(t)| in probability."""
    return next(iter(adjacent_branches(beta).values()))


class VarianceMartingale(str, enum.Enum):
    M_2SIGMA = "M_2SIGMA"
    SH_DERIVATIVE = "SH_DERIVATIVE"


@dataclass(frozen=True)
class ScalingRule:
    """How to turn X into the statistic S whose conditional law is Gaussian.

    ``statistic`` is ``"increment"`` for the martingale-increment rule of the
    high-temperature strip and ``"normalized"`` otherwise; ``log_norm_rate``
    is the per-unit-time exponent removed from X.
    """

    label: PhaseLabel
    statistic: str
    log_norm_rate: float
    t_exponent: float
    r_exponent: float
    variance_martingale: VarianceMartingale
    variance_constant: str

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "statistic": self.statistic,
            "log_norm_rate": self.log_norm_rate,
            "t_exponent": self.t_exponent,
            "r_exponent": self.r_exponent,
            "variance_martingale": self.variance_martingale.value,
            "variance_constant": self.variance_constant,
        }


def clt_scaling(beta: Beta, tol: float = TOL) -> ScalingRule:
    s, t = beta.sigma, beta.tau
    if abs(s) > INV_SQRT2 + tol:
        raise NoCltRule(f"no CLT rule for |sigma| = {abs(s)} > 1/sqrt(2)")
    label = classify(beta, tol)
    m2 = VarianceMartingale.M_2SIGMA
    sh = VarianceMartingale.SH_DERIVATIVE
    if label is PhaseLabel.B1:
        return ScalingRule(label, "increment", 1.0 + 0.5 * (s * s - t * t), 0.0, 0.0, m2, "C1")
    rate = 0.5 + s * s
    if label is PhaseLabel.B3:
        return ScalingRule(label, "normalized", rate, 0.0, 0.0, m2, "C2")
    if label is PhaseLabel.B13:
        return ScalingRule(label, "normalized", rate, -0.5, 0.0, m2, "C3")
    if label is PhaseLabel.B23:
        return ScalingRule(label, "normalized", rate, 0.0, 0.25, sh, "C2")
    if label is PhaseLabel.TRIPLE:
        return ScalingRule(label, "normalized", rate, -0.5, 0.25, sh, "C3")
    raise NoCltRule(f"no CLT rule for phase {label.value}")


def _boundary_points(n: int = 4001) -> np.ndarray:
    u = np.linspace(0.0, 1.0, n)
    pts = []
    # B13 arc, |sigma| < 1/sqrt2
    ang = np.pi / 4 + u * np.pi / 2
    pts.append(np.c_[np.cos(ang), np.sin(ang)])
    # B12 segment from (1/sqrt2, 1/sqrt2) to (sqrt2, 0)
    pts.append(np.c_[INV_SQRT2 + u * INV_SQRT2, INV_SQRT2 - u * INV_SQRT2])
    # B23 ray sigma = 1/sqrt2, tau >= 1/sqrt2 (long enough for any grid of interest)
    pts.append(np.c_[np.full(n, INV_SQRT2), INV_SQRT2 + u * 20.0])
    quad = np.vstack(pts)
    return np.vstack([quad * [sx, sy] for sx in (1, -1) for sy in (1, -1)])


_BOUNDARY = None


def boundary_distance(beta: Beta) -> float:
    """Euclidean distance from beta to the nearest phase boundary (numerical)."""
    global _BOUNDARY
    if _BOUNDARY is None:
        _BOUNDARY = _boundary_points()
    d = _BOUNDARY - [beta.sigma, beta.tau]
    return float(np.sqrt((d * d).sum(axis=1)).min())
