"""Replica orchestration and the statistical experiments built on it."""

from __future__ import annotations

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import observables as obs
from .bbm import leaf_cloud, positions_at, sample_positions
from .config import ExperimentConfig
from .gw import BINARY, OffspringLaw, sample_tree
from .observables import Beta
from .oracles import MomentOracleInput, second_moment_normalized
from .phase import NoCltRule, PhaseLabel, VarianceMartingale, classify, clt_scaling, limiting_log_partition
from .rng import substream

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
KS_C_1PCT = 1.628  # asymptotic Kolmogorov quantile at level 0.01


# -- Kolmogorov-Smirnov --------------------------------------------------------

def standard_normal_cdf(x):
    """Phi(x) via the complementary error function (array-aware)."""
    return special.ndtr(x)


def ks_statistic(samples, cdf=standard_normal_cdf) -> float:
    """sup_x |F_n(x) - F(x)| for a continuous reference cdf."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max((i / n - f).max(), (f - (i - 1) / n).max()))


def ks_two_sample(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(fa - fb).max())


def ks_critical(n: int, m: int | None = None, c: float = KS_C_1PCT) -> float:
    """Large-sample critical value; two-sample when ``m`` is given."""
    if m is None:
        return c / math.sqrt(n)
    return c * math.sqrt((n + m) / (n * m))


def ks_two_sample_pvalue(a, b) -> float:
    n, m = len(a), len(b)
    en = math.sqrt(n * m / (n + m))
    return float(special.kolmogorov(en * ks_two_sample(a, b)))


# -- replicas ------------------------------------------------------------------

Probe = tuple  # (Beta, rho)


@dataclass(eq=False)
class ReplicaTable:
    """Per-replica observables at every horizon and for every (beta, rho) probe.

    Complex partition functions are kept as (log |X|, arg X); real
    observables (M_{2 sigma, 0}, derivative and Seneta-Heyde martingales) are
    kept linear.
    """

    seed: int
    horizons: tuple
    probes: tuple
    replica_ids: np.ndarray
    log_mag: np.ndarray  # (n, probes, horizons)
    phase: np.ndarray
    m2sigma: np.ndarray
    deriv: np.ndarray  # (n, horizons)
    sh: np.ndarray
    n_particles: np.ndarray
    constrained: np.ndarray | None = None  # (n,) complex N^{c,A}(t) for probe 0
    kept_fraction: np.ndarray | None = None

    def __len__(self):
        return self.replica_ids.shape[0]

    def hi(self, t: float) -> int:
        for j, h in enumerate(self.horizons):
            if abs(h - t) < 1e-12:
                return j
        raise KeyError(f"horizon {t} not in table {self.horizons}")

    def pi(self, beta: Beta, rho: float) -> int:
        for j, (b, r) in enumerate(self.probes):
            if b == beta and r == rho:
                return j
        raise KeyError(f"probe ({beta}, {rho}) not in table")

    def _complex(self, p, h, log_norm, extra_phase=0.0):
        return np.exp(self.log_mag[:, p, h] + log_norm) * np.exp(1j * (self.phase[:, p, h] + extra_phase))

    def partition(self, beta, rho, t) -> np.ndarray:
        return self._complex(self.pi(beta, rho), self.hi(t), 0.0)

    def normalized(self, beta, rho, t) -> np.ndarray:
        return self._complex(self.pi(beta, rho), self.hi(t), obs.normalized_log_norm(beta, t))

    def mckean(self, beta, rho, t) -> np.ndarray:
        return self._complex(self.pi(beta, rho), self.hi(t), obs.mckean_log_norm(beta, t),
                             -beta.sigma * beta.tau * rho * t)

    def log_partition(self, beta, rho, t) -> np.ndarray:
        return self.log_mag[:, self.pi(beta, rho), self.hi(t)]

    def m2(self, beta, rho, t) -> np.ndarray:
        return self.m2sigma[:, self.pi(beta, rho), self.hi(t)]

    def z(self, t) -> np.ndarray:
        return self.deriv[:, self.hi(t)]

    def seneta_heyde(self, t) -> np.ndarray:
        return self.sh[:, self.hi(t)]

    def select(self, mask) -> "ReplicaTable":
        sub = {k: (None if v is None else v[mask]) for k, v in self._arrays().items()}
        return ReplicaTable(self.seed, self.horizons, self.probes, **sub)

    def _arrays(self):
        return dict(replica_ids=self.replica_ids, log_mag=self.log_mag, phase=self.phase,
                    m2sigma=self.m2sigma, deriv=self.deriv, sh=self.sh, n_particles=self.n_particles,
                    constrained=self.constrained, kept_fraction=self.kept_fraction)

    @classmethod
    def concat(cls, tables) -> "ReplicaTable":
        first = tables[0]
        arrays = {}
        for k, v in first._arrays().items():
            arrays[k] = None if v is None else np.concatenate([t._arrays()[k] for t in tables])
        return cls(first.seed, first.horizons, first.probes, **arrays)

    def equals(self, other: "ReplicaTable") -> bool:
        """Bitwise equality of every stored array."""
        if (self.seed, self.horizons, self.probes) != (other.seed, other.horizons, other.probes):
            return False
        for k, v in self._arrays().items():
            w = other._arrays()[k]
            if (v is None) != (w is None):
                return False
            if v is not None and (v.shape != w.shape or v.tobytes() != w.tobytes()):
                return False
        return True

    CSV_HEADER = "replica_id,t,beta_sigma,beta_tau,rho,log_mag,phase,m2sigma,deriv,sh,n_re,n_im"

    def csv_rows(self):
        yield self.CSV_HEADER
        for i in range(len(self)):
            for h, t in enumerate(self.horizons):
                for p, (beta, rho) in enumerate(self.probes):
                    lm = self.log_mag[i, p, h]
                    ph = self.phase[i, p, h]
                    n = cmath.exp(complex(lm + obs.normalized_log_norm(beta, t), ph))
                    yield ",".join([
                        str(int(self.replica_ids[i])), repr(t), repr(beta.sigma), repr(beta.tau), repr(rho),
                        f"{lm:.17g}", f"{ph:.17g}", f"{self.m2sigma[i, p, h]:.17g}",
                        f"{self.deriv[i, h]:.17g}", f"{self.sh[i, h]:.17g}",
                        f"{n.real:.17g}", f"{n.imag:.17g}"])

    def write_csv(self, path):
        with open(path, "w") as fh:
            for row in self.csv_rows():
                fh.write(row + "\n")


def replica_row(seed, index, horizons, probes, law=BINARY, node_cap=10**8, barrier=None):
    """Observables of one replica; a pure function of ``(seed, index)`` and the layout."""
    rng = substream(seed, index)
    H = max(horizons)
    tree = sample_tree(H, law, rng, node_cap=node_cap)
    forest = sample_positions(tree, 0.0, rng)
    inner = [h for h in horizons if h < H]
    clouds = dict(zip(inner, positions_at(forest, inner, rng)))
    clouds[H] = leaf_cloud(forest)
    nh, npb = len(horizons), len(probes)
    out = {
        "log_mag": np.empty((npb, nh)), "phase": np.empty((npb, nh)), "m2sigma": np.empty((npb, nh)),
        "deriv": np.empty(nh), "sh": np.empty(nh), "n_particles": np.empty(nh, dtype=np.int64),
    }
    for j, h in enumerate(horizons):
        cloud = clouds[h]
        out["n_particles"][j] = cloud.x.size
        out["deriv"][j] = obs.derivative_martingale(cloud, h)
        out["sh"][j] = obs.seneta_heyde(cloud, h) if h > 0 else 1.0
        m2_cache = {}
        for p, (beta, rho) in enumerate(probes):
            X = obs.partition_function(cloud.with_rho(rho), beta)
            out["log_mag"][p, j] = X.log_magnitude
            out["phase"][p, j] = X.phase
            if beta.sigma not in m2_cache:
                m2_cache[beta.sigma] = obs.additive_real_martingale(cloud, 2.0 * beta.sigma, h)
            out["m2sigma"][p, j] = m2_cache[beta.sigma]
    if barrier is not None:
        beta, rho = probes[0]
        A, gamma, r = barrier
        f = forest.with_rho(rho)
        endpoint, path = obs.leaf_barrier_flags(f, beta.sigma, gamma, r, A, rng)
        keep = endpoint & path
        out["kept_fraction"] = keep.mean()
        if keep.any():
            out["constrained"] = obs.ComplexExpSum.from_terms(
                beta.sigma * f.x[keep], beta.tau * f.y[keep]).scaled(obs.normalized_log_norm(beta, H))
        else:
            out["constrained"] = 0j
    return out


def run_replicas(config: ExperimentConfig, probes=None, progress=None) -> ReplicaTable:
    """Simulate ``config.replicas`` independent replicas.

    Replica ``i`` uses the substream ``(seed, first_replica + i)`` only, so the
    table does not depend on ``config.threads`` or execution order.
    """
    if config.seed is None:
        raise ValueError("run_replicas needs a resolved master seed")
    horizons = config.resolved_horizons()
    probes = tuple(probes) if probes is not None else ((config.beta, config.rho),)
    law = config.law
    n = config.replicas
    barrier = None
    if config.barrier:
        barrier = (config.A, config.gamma, config.r if config.r is not None else 0.0)
    nh, npb = len(horizons), len(probes)
    table = ReplicaTable(
        seed=config.seed, horizons=horizons, probes=probes,
        replica_ids=np.arange(config.first_replica, config.first_replica + n, dtype=np.int64),
        log_mag=np.empty((n, npb, nh)), phase=np.empty((n, npb, nh)), m2sigma=np.empty((n, npb, nh)),
        deriv=np.empty((n, nh)), sh=np.empty((n, nh)), n_particles=np.empty((n, nh), dtype=np.int64),
        constrained=np.empty(n, dtype=complex) if barrier else None,
        kept_fraction=np.empty(n) if barrier else None,
    )

    def work(rows):
        for i in rows:
            row = replica_row(config.seed, int(table.replica_ids[i]), horizons, probes, law,
                              config.node_cap, barrier)
            for k, v in row.items():
                getattr(table, k)[i] = v
            if progress is not None:
                progress(i)

    if config.threads == 1 or n < 2:
        work(range(n))
    else:
        chunks = [range(a, min(n, a + 64)) for a in range(0, n, 64)]
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            for fut in [pool.submit(work, c) for c in chunks]:
                fut.result()
    return table


# -- reports -------------------------------------------------------------------

def _mean_se(v):
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return float(v.mean()) if v.size else float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _cplx(z):
    return [float(z.real), float(z.imag)]


@dataclass
class CltReport:
    beta: Beta
    rho: float
    r: float
    t: float
    rule: dict
    n_used: int
    n_excluded: int
    c_hat: float
    c_hat_se: float
    c_hat_mean_of_ratios: float
    ks_re: float
    ks_im: float
    mixed_moment: float
    mean_abs_w2: float
    slope: float
    slope_se: float
    intercept: float
    intercept_se: float
    oracle: float | None = None
    oracle_limit: float | None = None
    diagnostics: dict = field(default_factory=dict)
    w: np.ndarray = field(default=None, repr=False)
    s: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "beta": [self.beta.sigma, self.beta.tau], "rho": self.rho, "r": self.r, "t": self.t,
            "rule": self.rule, "n_used": self.n_used, "n_excluded": self.n_excluded,
            "c_hat": self.c_hat, "c_hat_se": self.c_hat_se, "c_hat_mean_of_ratios": self.c_hat_mean_of_ratios,
            "ks_re": self.ks_re, "ks_im": self.ks_im, "ks_critical_1pct": ks_critical(max(self.n_used, 1)),
            "mixed_moment": self.mixed_moment, "mean_abs_w2": self.mean_abs_w2,
            "regression": {"slope": self.slope, "slope_se": self.slope_se,
                           "intercept": self.intercept, "intercept_se": self.intercept_se},
            "oracle": self.oracle, "oracle_limit": self.oracle_limit,
            "diagnostics": self.diagnostics,
        }


def _ols_hc0(v, y):
    """y = a + b v by least squares with heteroskedasticity-robust (HC0) errors."""
    X = np.c_[np.ones_like(v), v]
    xtx_inv = np.linalg.inv(X.T @ X)
    coef = xtx_inv @ X.T @ y
    resid = y - X @ coef
    meat = (X * resid[:, None] ** 2).T @ X
    cov = xtx_inv @ meat @ xtx_inv
    return coef[0], math.sqrt(cov[0, 0]), coef[1], math.sqrt(cov[1, 1])


def clt_statistic(table: ReplicaTable, beta: Beta, rho: float, r: float, t: float, rule=None):
    """Scaled statistic S and conditioning variable V per the phase's scaling rule."""
    rule = rule or clt_scaling(beta)
    if rule.statistic == "increment":
        c = 1.0 - beta.sigma ** 2 - beta.tau ** 2
        s = (table.mckean(beta, rho, t) - table.mckean(beta, rho, r)) * math.exp(0.5 * c * r)
    else:
        s = table.normalized(beta, rho, t) * t ** rule.t_exponent * r ** rule.r_exponent
    if rule.variance_martingale is VarianceMartingale.M_2SIGMA:
        v = table.m2(beta, rho, r)
    else:
        v = math.sqrt(2.0 / math.pi) * table.z(r)
    return s, v, rule


def conditional_mean(table: ReplicaTable, beta: Beta, rho: float, r: float, t: float, rule) -> np.ndarray:
    """E[S | time-r data]: each time-r particle contributes its mean descendant sum.

    Zero for the increment rule; for the normalized rules it is the time-r
    sum carried forward by E N(t - r), which only vanishes as t - r grows.
    """
    if rule.statistic == "increment":
        return np.zeros(len(table), dtype=complex)
    c = 1.0 - beta.sigma ** 2 - beta.tau ** 2
    carry = math.exp(0.5 * c * (t - r)) * cmath.exp(1j * beta.sigma * beta.tau * rho * (t - r))
    return table.normalized(beta, rho, r) * carry * t ** rule.t_exponent * r ** rule.r_exponent


def _c_hat(s, v):
    """Self-normalizing constant mean|S|^2 / mean V with a delta-method se."""
    a = np.abs(s) ** 2
    mv = float(np.mean(v))
    c = float(np.mean(a)) / mv
    se = float(np.std(a - c * v, ddof=1) / (mv * math.sqrt(a.size)))
    return c, se


def _gauss_checks(s, v):
    c_hat, _ = _c_hat(s, v)
    w = s / np.sqrt(c_hat * v / 2.0)
    return c_hat, w


def clt_oracle(beta: Beta, r: float, t: float, K: float, rule):
    """Finite-t second-moment oracle for E|S|^2 / E V, and its t -> infinity limit."""
    c = 1.0 - beta.sigma ** 2 - beta.tau ** 2
    label = rule.label
    if label is PhaseLabel.B3:
        return (second_moment_normalized(MomentOracleInput(beta.sigma, beta.tau, 0.0, t, K)), 1.0 + K / -c)
    if label is PhaseLabel.B13:
        return second_moment_normalized(MomentOracleInput(beta.sigma, beta.tau, 0.0, t, K)) / t, K
    if label is PhaseLabel.B1:
        # orthogonal increments: E|M(t) - M(r)|^2 e^{cr} = (K/c - 1)(1 - e^{-c(t-r)})
        return (K / c - 1.0) * -math.expm1(-c * (t - r)), K / c - 1.0
    return None, None


def clt_from_table(table: ReplicaTable, beta: Beta, rho: float, r: float, t: float, K: float = 2.0) -> CltReport:
    s, v, rule = clt_statistic(table, beta, rho, r, t)
    good = v > 0
    n_excl = int((~good).sum())
    s, v = s[good], v[good]
    if s.size < 2:
        raise ValueError("degenerate conditioning: fewer than two replicas with positive variance martingale")
    c_hat, c_se = _c_hat(s, v)
    w = s / np.sqrt(c_hat * v / 2.0)
    a, a_se, b, b_se = _ols_hc0(v, np.abs(s) ** 2)
    oracle, limit = clt_oracle(beta, r, t, K, rule)

    # finite-t diagnostics, not part of the limit statement
    diag = {}
    if rule.statistic != "increment":
        sc = s - conditional_mean(table, beta, rho, r, t, rule)[good]
        c_c, w_c = _gauss_checks(sc, v)
        diag["centered"] = {"c_hat": c_c, "ks_re": ks_statistic(w_c.real), "ks_im": ks_statistic(w_c.imag),
                            "mixed_moment": float(abs(np.mean(w_c * w_c)))}
    c_re, c_im = float(np.mean(s.real ** 2) / np.mean(v)), float(np.mean(s.imag ** 2) / np.mean(v))
    diag["componentwise"] = {
        "c_re": c_re, "c_im": c_im,
        "ks_re": ks_statistic(s.real / np.sqrt(c_re * v)) if c_re > 0 else None,
        "ks_im": ks_statistic(s.imag / np.sqrt(c_im * v)) if c_im > 0 else None,
    }
    return CltReport(
        beta=beta, rho=rho, r=r, t=t, rule=rule.to_dict(), n_used=int(s.size), n_excluded=n_excl,
        c_hat=c_hat, c_hat_se=c_se, c_hat_mean_of_ratios=float(np.mean(np.abs(s) ** 2 / v)),
        ks_re=ks_statistic(w.real), ks_im=ks_statistic(w.imag),
        mixed_moment=float(abs(np.mean(w * w))), mean_abs_w2=float(np.mean(np.abs(w) ** 2)),
        slope=b, slope_se=b_se, intercept=a, intercept_se=a_se,
        oracle=oracle, oracle_limit=limit, diagnostics=diag, w=w, s=s, v=v,
    )


def conditional_clt_experiment(beta: Beta, rho: float, r: float, t: float, replicas: int, seed: int,
                               law: OffspringLaw = BINARY, threads: int = 1) -> CltReport:
    """Conditional Gaussianity of the scaled partition function given time-r data.

    ``t`` is the total horizon and ``0 < r < t`` the conditioning time.
    """
    clt_scaling(beta)
    if not 0 < r < t:
        raise ValueError("need 0 < r < t")
    cfg = ExperimentConfig(command="clt", sigma=beta.sigma, tau=beta.tau, rho=rho, t=t, r=r,
                           replicas=replicas, seed=seed, offspring=law.spec(), threads=threads)
    return clt_from_table(run_replicas(cfg), beta, rho, r, t, law.K)


@dataclass
class MartingaleReport:
    beta: Beta
    rho: float
    p: float
    horizons: tuple
    mean: list  # [re, im] per horizon
    mean_se: list
    pth_moment: list
    pth_moment_se: list
    second_moment_oracle: list
    increment_l1: list  # E|M(t_{j+1}) - M(t_j)|
    increment_l1_se: list
    n: int

    def to_dict(self) -> dict:
        return {k: (getattr(self, k) if k != "beta" else [self.beta.sigma, self.beta.tau])
                for k in self.__dataclass_fields__}


def _check_martingale_args(beta: Beta, p: float):
    label = classify(beta)
    if label not in (PhaseLabel.B1, PhaseLabel.B12):
        raise ValueError(f"martingale experiment needs beta in B1 or B12, got {label.value}")
    if beta.sigma != 0 and not 1.0 < p <= SQRT2 / abs(beta.sigma) * (1 + 1e-12):
        raise ValueError(f"p out of admissible range (1, {SQRT2 / abs(beta.sigma)}]")
    if beta.sigma == 0 and not p > 1.0:
        raise ValueError("p out of admissible range: need p > 1")


def martingale_from_table(table: ReplicaTable, beta: Beta, rho: float, horizons, p: float,
                          K: float = 2.0) -> MartingaleReport:
    _check_martingale_args(beta, p)
    horizons = tuple(sorted(horizons))
    ms = [table.mckean(beta, rho, h) for h in horizons]
    mean, mean_se, mom, mom_se, oracle = [], [], [], [], []
    c = 1.0 - beta.sigma ** 2 - beta.tau ** 2
    for h, m in zip(horizons, ms):
        re, re_se = _mean_se(m.real)
        im, im_se = _mean_se(m.imag)
        mean.append([re, im])
        mean_se.append([re_se, im_se])
        a, a_se = _mean_se(np.abs(m) ** p)
        mom.append(a)
        mom_se.append(a_se)
        oracle.append(second_moment_normalized(MomentOracleInput(beta.sigma, beta.tau, rho, h, K))
                      * math.exp(-c * h))
    inc, inc_se = [], []
    for a, b in zip(ms, ms[1:]):
        d, d_se = _mean_se(np.abs(b - a))
        inc.append(d)
        inc_se.append(d_se)
    return MartingaleReport(beta, rho, p, horizons, mean, mean_se, mom, mom_se, oracle, inc, inc_se, len(table))


def martingale_experiment(beta: Beta, rho: float, horizons, p: float, replicas: int, seed: int,
                          law: OffspringLaw = BINARY, threads: int = 1) -> MartingaleReport:
    _check_martingale_args(beta, p)
    cfg = ExperimentConfig(command="martingale", sigma=beta.sigma, tau=beta.tau, rho=rho,
                           t=max(horizons), horizons=tuple(horizons), p=p, replicas=replicas, seed=seed,
                           offspring=law.spec(), threads=threads)
    return martingale_from_table(run_replicas(cfg), beta, rho, horizons, p, law.K)


@dataclass
class SmoothingReport:
    beta: Beta
    rho: float
    r: float
    t: float
    n: int
    ks_re: float
    ks_im: float
    ks: float
    critical_1pct: float
    direct_mean: list
    assembled_mean: list

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["beta"] = [self.beta.sigma, self.beta.tau]
        return d


def _mckean_direct(seed, i, beta, rho, horizon, law, node_cap):
    rng = substream(seed, 0, i)
    forest = sample_positions(sample_tree(horizon, law, rng, node_cap=node_cap), rho, rng)
    return obs.mckean_martingale(forest, beta, horizon)


def _mckean_assembled(seed, i, beta, rho, r, t, law, node_cap):
    rng = substream(seed, 1, i)
    outer = sample_positions(sample_tree(r, law, rng, node_cap=node_cap), rho, rng)
    x, y = outer.x, outer.y
    # a_k(r) with the same normalization and phase as the martingale itself
    a = np.exp(beta.sigma * x + obs.mckean_log_norm(beta, r)) * np.exp(
        1j * (beta.tau * y - beta.sigma * beta.tau * rho * r))
    total = 0j
    for k in range(x.size):
        g = substream(seed, 2, i, k)
        inner = sample_positions(sample_tree(t, law, g, node_cap=node_cap), rho, g)
        total += a[k] * obs.mckean_martingale(inner, beta, t)
    return total


def smoothing_recursion_check(beta: Beta, rho: float, r: float, t: float, replicas: int, seed: int,
                              law: OffspringLaw = BINARY, threads: int = 1,
                              node_cap: int = 10**8) -> SmoothingReport:
    """Two-sample KS between M(t+r) sampled directly and sum_k a_k(r) M^(k)(t)."""
    label = classify(beta)
    if label not in (PhaseLabel.B1, PhaseLabel.B12):
        raise ValueError(f"smoothing check needs beta in B1 or B12, got {label.value}")
    if replicas < 1:
        raise ValueError("need at least one replica")
    direct = np.empty(replicas, dtype=complex)
    assembled = np.empty(replicas, dtype=complex)

    def work(rows):
        for i in rows:
            direct[i] = _mckean_direct(seed, i, beta, rho, t + r, law, node_cap)
            assembled[i] = _mckean_assembled(seed, i, beta, rho, r, t, law, node_cap)

    if threads == 1:
        work(range(replicas))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for fut in [pool.submit(work, range(a, min(replicas, a + 32))) for a in range(0, replicas, 32)]:
                fut.result()
    ks_re = ks_two_sample(direct.real, assembled.real)
    ks_im = ks_two_sample(direct.imag, assembled.imag) if beta.tau != 0 else 0.0
    return SmoothingReport(beta, rho, r, t, replicas, ks_re, ks_im, max(ks_re, ks_im),
                           ks_critical(replicas, replicas), _cplx(direct.mean()), _cplx(assembled.mean()))


def grid_points(n: int = 9, top: float = 1.5, min_distance: float = 0.0) -> list[Beta]:
    from .phase import boundary_distance

    vals = np.linspace(0.0, top, n)
    pts = [Beta(float(s), float(t)) for s in vals for t in vals]
    return [b for b in pts if boundary_distance(b) >= min_distance]


def free_energy_from_table(table: ReplicaTable, grid, rho: float, t: float) -> list[dict]:
    rows = []
    for beta in grid:
        med = float(np.median(table.log_partition(beta, rho, t))) / t
        formula = limiting_log_partition(beta)
        rows.append({"sigma": beta.sigma, "tau": beta.tau, "label": classify(beta).value,
                     "median": med, "formula": formula, "gap": med - formula})
    return rows


def free_energy_map(grid, rho: float, t: float, replicas: int, seed: int, law: OffspringLaw = BINARY,
                    threads: int = 1) -> list[dict]:
    """Median over replicas of (1/t) log|X| against the limiting formula, per grid point."""
    if t < 6:
        raise ValueError("free-energy map needs t >= 6")
    grid = list(grid)
    cfg = ExperimentConfig(command="free-energy-map", rho=rho, t=t, replicas=replicas, seed=seed,
                           offspring=law.spec(), threads=threads)
    table = run_replicas(cfg, probes=[(b, rho) for b in grid])
    return free_energy_from_table(table, grid, rho, t)


def critical_from_table(table: ReplicaTable) -> list[dict]:
    """Derivative and Seneta-Heyde martingale summaries per horizon."""
    rows = []
    for h in table.horizons:
        if h == 0:
            continue
        z, sh = table.z(h), table.seneta_heyde(h)
        zm, zse = _mean_se(z)
        shm, shse = _mean_se(sh)
        corr = float(np.corrcoef(z, sh)[0, 1]) if len(z) > 2 else float("nan")
        rows.append({"t": h, "z_mean": zm, "z_se": zse, "z_positive": float((z > 0).mean()),
                     "sh_mean": shm, "sh_se": shse, "sh_expected": math.sqrt(h), "corr_sh_z": corr})
    return rows


def summary_from_table(table: ReplicaTable, K: float = 2.0) -> dict:
    """Means of the primary probe's observables per horizon, with oracles."""
    beta, rho = table.probes[0]
    rows = []
    for h in table.horizons:
        m = table.mckean(beta, rho, h)
        n = table.normalized(beta, rho, h)
        q = MomentOracleInput(beta.sigma, beta.tau, rho, h, K)
        rows.append({
            "t": h, "mckean_mean": _cplx(m.mean()), "mckean_se": [_mean_se(m.real)[1], _mean_se(m.imag)[1]],
            "n_abs2_mean": float(np.mean(np.abs(n) ** 2)), "n_abs2_oracle": second_moment_normalized(q),
            "log_partition_median_per_t": float(np.median(table.log_partition(beta, rho, h)) / h) if h else None,
            "formula": limiting_log_partition(beta),
        })
    out = {"probe": {"beta": [beta.sigma, beta.tau], "rho": rho}, "horizons": rows,
           "critical": critical_from_table(table)}
    if table.constrained is not None:
        out["constrained"] = {"abs2_mean": float(np.mean(np.abs(table.constrained) ** 2)),
                              "kept_fraction_mean": float(table.kept_fraction.mean())}
    return out


__all__ = [
    "standard_normal_cdf", "ks_statistic", "ks_two_sample", "ks_critical", "ks_two_sample_pvalue",
    "ReplicaTable", "replica_row", "run_replicas", "CltReport", "clt_from_table", "conditional_clt_experiment",
    "MartingaleReport", "martingale_from_table", "martingale_experiment", "SmoothingReport",
    "smoothing_recursion_check", "grid_points", "free_energy_from_table", "free_energy_map",
    "critical_from_table", "summary_from_table", "NoCltRule",
]
