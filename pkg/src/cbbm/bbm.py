"""Coupled Brownian motions (X, Y) on a Galton-Watson tree.

Y is built as rho * X + sqrt(1 - rho^2) * Z with Z an independent BBM on the
same tree, so one sampled (X, Z) pair serves every correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numba as nb
import numpy as np

from .gw import GwTree


@nb.njit(nogil=True, cache=True)
def _increments(gen, parent, birth, death, node_x, node_z):
    for i in range(parent.shape[0]):
        s = math.sqrt(death[i] - birth[i])
        dx = s * gen.standard_normal()
        dz = s * gen.standard_normal()
        p = parent[i]
        if p >= 0:
            node_x[i] = node_x[p] + dx
            node_z[i] = node_z[p] + dz
        else:
            node_x[i] = dx
            node_z[i] = dz


@nb.njit(nogil=True, cache=True)
def _snapshot(gen, parent, birth, death, node_x, node_z, horizon, times):
    """Positions of the particles alive at each of the sorted ``times``.

    Interior times are filled in with Brownian bridges; several times on one
    edge are sampled sequentially so their joint law is exact.
    """
    nt = times.shape[0]
    n = parent.shape[0]
    counts = np.zeros(nt, dtype=np.int64)
    for i in range(n):
        for j in range(nt):
            s = times[j]
            if birth[i] <= s and (s < death[i] or (s == horizon and death[i] == horizon)):
                counts[j] += 1
    offsets = np.zeros(nt + 1, dtype=np.int64)
    for j in range(nt):
        offsets[j + 1] = offsets[j] + counts[j]
    xs = np.empty(offsets[nt])
    zs = np.empty(offsets[nt])
    nodes = np.empty(offsets[nt], dtype=np.int64)
    fill = offsets[:nt].copy()
    for i in range(n):
        p = parent[i]
        b = birth[i]
        x0 = node_x[p] if p >= 0 else 0.0
        z0 = node_z[p] if p >= 0 else 0.0
        e = death[i]
        for j in range(nt):
            s = times[j]
            if not (birth[i] <= s and (s < e or (s == horizon and e == horizon))):
                continue
            if s == e:
                x = node_x[i]
                z = node_z[i]
            elif s == b:
                x = x0
                z = z0
            else:
                frac = (s - b) / (e - b)
                sd = math.sqrt((s - b) * (e - s) / (e - b))
                x = x0 + frac * (node_x[i] - x0) + sd * gen.standard_normal()
                z = z0 + frac * (node_z[i] - z0) + sd * gen.standard_normal()
                b = s
                x0 = x
                z0 = z
            k = fill[j]
            xs[k] = x
            zs[k] = z
            nodes[k] = i
            fill[j] = k + 1
    return xs, zs, nodes, offsets


@dataclass(frozen=True, eq=False)
class BbmForest:
    """End-of-edge positions of X and Z for every node of the tree."""

    tree: GwTree
    rho: float
    node_x: np.ndarray
    node_z: np.ndarray

    def _start(self, pos):
        p = self.tree.parent
        return np.where(p >= 0, pos[np.maximum(p, 0)], 0.0)

    @property
    def dx(self) -> np.ndarray:
        """Per-edge increments of X."""
        return self.node_x - self._start(self.node_x)

    @property
    def dz(self) -> np.ndarray:
        return self.node_z - self._start(self.node_z)

    @property
    def t(self) -> float:
        return self.tree.horizon

    @cached_property
    def x(self) -> np.ndarray:
        return self.node_x[self.tree.leaves]

    @cached_property
    def z(self) -> np.ndarray:
        return self.node_z[self.tree.leaves]

    @property
    def y(self) -> np.ndarray:
        return _couple(self.rho, self.x, self.z)

    def with_rho(self, rho: float) -> "BbmForest":
        _check_rho(rho)
        f = BbmForest(self.tree, float(rho), self.node_x, self.node_z)
        f.__dict__.update({k: v for k, v in self.__dict__.items() if k in ("x", "z")})
        return f

    def dump_leaves(self) -> str:
        x, y = self.x, self.y
        return "".join(f"{k} {x[k]:.17g} {y[k]:.17g}\n" for k in range(x.shape[0]))


@dataclass(frozen=True, eq=False)
class Cloud:
    """Positions of the particles alive at one time ``t``."""

    t: float
    rho: float
    x: np.ndarray
    z: np.ndarray
    nodes: np.ndarray

    @property
    def y(self) -> np.ndarray:
        return _couple(self.rho, self.x, self.z)

    def with_rho(self, rho: float) -> "Cloud":
        _check_rho(rho)
        return Cloud(self.t, float(rho), self.x, self.z, self.nodes)


def _couple(rho, x, z):
    if rho == 1.0:
        return x.copy()
    if rho == -1.0:
        return -x
    return rho * x + math.sqrt(1.0 - rho * rho) * z


def _check_rho(rho):
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")


def sample_positions(tree: GwTree, rho: float, rng: np.random.Generator) -> BbmForest:
    _check_rho(rho)
    n = tree.n_nodes
    node_x, node_z = np.empty(n), np.empty(n)
    _increments(rng, tree.parent, tree.birth, tree.death, node_x, node_z)
    return BbmForest(tree, float(rho), node_x, node_z)


def positions_at(forest: BbmForest, times, rng: np.random.Generator) -> list[Cloud]:
    """Particle clouds at each requested time (jointly consistent)."""
    times = np.asarray(times, dtype=float)
    order = np.argsort(times, kind="stable")
    ts = times[order]
    if ts.size and (ts[0] < 0 or ts[-1] > forest.t):
        raise ValueError("snapshot times must lie in [0, horizon]")
    tree = forest.tree
    xs, zs, nodes, off = _snapshot(rng, tree.parent, tree.birth, tree.death,
                                   forest.node_x, forest.node_z, tree.horizon, ts)
    clouds = [None] * len(ts)
    for j, pos in enumerate(order):
        a, b = off[j], off[j + 1]
        clouds[pos] = Cloud(float(ts[j]), forest.rho, xs[a:b], zs[a:b], nodes[a:b])
    return clouds


def leaf_cloud(forest: BbmForest) -> Cloud:
    return Cloud(forest.t, forest.rho, forest.x, forest.z, forest.tree.leaves)


# -- barrier events --------------------------------------------------------

@dataclass(frozen=True)
class PathRecord:
    """(time, x) at each ancestral branch point of one leaf, plus the horizon."""

    times: np.ndarray
    xs: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        xs = np.asarray(self.xs, dtype=float)
        if times.shape != xs.shape or times.size < 1:
            raise ValueError("times and positions must be non-empty and aligned")
        if times[0] != 0.0 or xs[0] != 0.0:
            raise ValueError("a path record starts at (0, 0)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("path record times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "xs", xs)


def path_record(forest: BbmForest, k: int) -> PathRecord:
    tree = forest.tree
    leaf = int(tree.leaves[k])
    chain = tree.ancestors(leaf)[::-1]
    times = [0.0] + [float(tree.death[v]) for v in chain]
    xs = [0.0] + [float(forest.node_x[v]) for v in chain]
    if len(times) > 1 and times[1] == 0.0:
        # root branched at time zero
        times, xs = times[1:], xs[1:]
    return PathRecord(np.array(times), np.array(xs))


@dataclass(frozen=True)
class BarrierFlags:
    endpoint: bool
    path: bool

    def __bool__(self):
        return self.endpoint and self.path


@nb.njit(cache=True, inline="always")
def _barrier(s, sigma, gamma):
    return 2.0 * sigma * s + s ** gamma


@nb.njit(nogil=True, cache=True)
def _segment_ok(gen, s1, x1, s2, x2, sigma, gamma, r):
    """Whether the bridge from (s1, x1) to (s2, x2) stays under the barrier on [r, s2].

    Crossing of the chord of the barrier is decided by one Bernoulli draw with
    the exact linear-boundary bridge probability exp(-2 h1 h2 / ds).
    """
    if s2 < r:
        return True
    if s1 < r:
        frac = (r - s1) / (s2 - s1)
        sd = math.sqrt((r - s1) * (s2 - r) / (s2 - s1))
        x1 = x1 + frac * (x2 - x1) + sd * gen.standard_normal()
        s1 = r
    h1 = _barrier(s1, sigma, gamma) - x1
    h2 = _barrier(s2, sigma, gamma) - x2
    if h1 < 0.0 or h2 < 0.0:
        return False
    if s2 == s1:
        return True
    p_cross = math.exp(-2.0 * h1 * h2 / (s2 - s1))
    return not (gen.random() < p_cross)


@nb.njit(nogil=True, cache=True)
def _path_ok(gen, times, xs, sigma, gamma, r):
    ok = True
    for j in range(times.shape[0] - 1):
        if not _segment_ok(gen, times[j], xs[j], times[j + 1], xs[j + 1], sigma, gamma, r):
            ok = False
    return ok


@nb.njit(nogil=True, cache=True)
def _edge_marks(gen, parent, birth, death, node_x, sigma, gamma, r):
    n = parent.shape[0]
    ok = np.empty(n, dtype=np.bool_)
    for i in range(n):
        p = parent[i]
        x0 = node_x[p] if p >= 0 else 0.0
        good = _segment_ok(gen, birth[i], x0, death[i], node_x[i], sigma, gamma, r)
        ok[i] = good and (ok[p] if p >= 0 else True)
    return ok


def _check_barrier(gamma, r, t):
    if not 0.5 < gamma < 1.0:
        raise ValueError(f"invalid barrier exponent gamma={gamma}, need 1/2 < gamma < 1")
    if not 0.0 <= r <= t:
        raise ValueError("need 0 <= r <= t")


def path_barrier_event(path: PathRecord, sigma: float, gamma: float, r: float, t: float, A: float,
                       rng: np.random.Generator) -> BarrierFlags:
    """Endpoint flag {x(t) < 2 sigma t + A sqrt(t)} and path flag on [r, t]."""
    _check_barrier(gamma, r, t)
    if path.times[-1] != t:
        raise ValueError("path record must end at the horizon t")
    endpoint = bool(path.xs[-1] < 2.0 * sigma * t + A * math.sqrt(t))
    ok = _path_ok(rng, path.times, path.xs, float(sigma), float(gamma), float(r))
    return BarrierFlags(endpoint, bool(ok))


def leaf_barrier_flags(forest: BbmForest, sigma: float, gamma: float, r: float, A: float,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint and path flags for every leaf.

    Each edge gets one crossing mark, shared by all leaves below it.
    """
    t = forest.t
    _check_barrier(gamma, r, t)
    tree = forest.tree
    ok = _edge_marks(rng, tree.parent, tree.birth, tree.death, forest.node_x,
                     float(sigma), float(gamma), float(r))
    endpoint = forest.x < 2.0 * sigma * t + A * math.sqrt(t)
    return endpoint, ok[tree.leaves]
