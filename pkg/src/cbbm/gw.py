"""Continuous-time Galton-Watson genealogy, sampled exactly event by event."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numba as nb
import numpy as np

DEFAULT_NODE_CAP = 10**8


class HorizonTooLarge(RuntimeError):
    """Raised when a tree would not fit under the node budget."""


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring distribution with no deaths and mean two children."""

    probs: Mapping[int, float] = field(default_factory=lambda: {2: 1.0})

    def __post_init__(self):
        probs = {int(k): float(p) for k, p in self.probs.items() if p != 0.0}
        if not probs:
            raise ValueError("empty offspring law")
        if any(k < 1 for k in probs):
            raise ValueError("offspring law must have p_0 = 0 and support in k >= 1")
        if any(p < 0 for p in probs.values()):
            raise ValueError("negative offspring probability")
        if abs(sum(probs.values()) - 1.0) > 1e-12:
            raise ValueError("offspring probabilities must sum to 1")
        mean = sum(k * p for k, p in probs.items())
        if abs(mean - 2.0) > 1e-12:
            raise ValueError(f"offspring mean must be 2, got {mean}")
        object.__setattr__(self, "probs", dict(sorted(probs.items())))

    @property
    def K(self) -> float:
        """Second factorial moment sum_k k(k-1) p_k."""
        return sum(k * (k - 1) * p for k, p in self.probs.items())

    @property
    def is_binary(self) -> bool:
        return self.probs == {2: 1.0}

    @property
    def max_children(self) -> int:
        return max(self.probs)

    def tables(self) -> tuple[np.ndarray, np.ndarray]:
        values = np.array(list(self.probs), dtype=np.int64)
        cum = np.cumsum(list(self.probs.values()))
        cum[-1] = 1.0
        return cum, values

    def spec(self) -> str:
        return ",".join(f"{k}:{p!r}" for k, p in self.probs.items())

    @classmethod
    def parse(cls, text: str) -> "OffspringLaw":
        """Parse ``"2:1"`` or ``"1:0.5,3:0.5"``; ``"binary"`` is accepted too."""
        text = text.strip()
        if text in ("", "binary"):
            return cls()
        probs: dict[int, float] = {}
        for part in text.split(","):
            k, _, p = part.partition(":")
            if not _:
                raise ValueError(f"bad offspring term {part!r}, expected k:p")
            probs[int(k)] = probs.get(int(k), 0.0) + float(p)
        return cls(probs)


BINARY = OffspringLaw()


@dataclass(frozen=True, eq=False)
class GwTree:
    """Flat node table in creation order; children of a node are contiguous.

    ``death[i]`` is the branching time of node ``i`` or the horizon if it is
    still alive then.  Leaves are the nodes without children, listed in
    index order.
    """

    horizon: float
    parent: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    first_child: np.ndarray
    n_children: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.parent.shape[0]

    @property
    def leaves(self) -> np.ndarray:
        try:
            return self._leaves
        except AttributeError:
            leaves = np.flatnonzero(self.n_children == 0)
            object.__setattr__(self, "_leaves", leaves)
            return leaves

    @property
    def n_leaves(self) -> int:
        return self.leaves.shape[0]

    def ancestors(self, node: int) -> list[int]:
        """Path from ``node`` up to the root, inclusive."""
        out = []
        while node >= 0:
            out.append(node)
            node = int(self.parent[node])
        return out

    def dump(self) -> str:
        lines = [f"# horizon {self.horizon!r}"]
        for i in range(self.n_nodes):
            lines.append(f"{i} {int(self.parent[i])} {self.birth[i]:.17g} {int(self.n_children[i])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "GwTree":
        horizon = None
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(" ")
                if key == "horizon":
                    horizon = float(val)
                continue
            i, p, b, k = line.split()
            rows.append((int(i), int(p), float(b), int(k)))
        if horizon is None:
            raise ValueError("tree dump lacks a '# horizon' header")
        n = len(rows)
        parent = np.array([r[1] for r in rows], dtype=np.int64)
        birth = np.array([r[2] for r in rows])
        n_children = np.array([r[3] for r in rows], dtype=np.int64)
        first_child = np.full(n, -1, dtype=np.int64)
        death = np.full(n, horizon)
        for i in range(n - 1, 0, -1):
            p = parent[i]
            first_child[p] = i
            death[p] = birth[i]
        return cls(horizon, parent, birth, death, first_child, n_children)


@nb.njit(nogil=True, cache=True)
def _grow(gen, horizon, cum, values, binary, parent, birth, death, first_child, n_children):
    cap = parent.shape[0]
    parent[0] = -1
    birth[0] = 0.0
    count = 1
    i = 0
    while i < count:
        d = birth[i] + gen.standard_exponential()
        if d >= horizon:
            death[i] = horizon
            first_child[i] = -1
            n_children[i] = 0
        else:
            if binary:
                k = 2
            else:
                k = values[np.searchsorted(cum, gen.random(), side="right")]
            if count + k > cap:
                return -1
            death[i] = d
            first_child[i] = count
            n_children[i] = k
            for _ in range(k):
                parent[count] = i
                birth[count] = d
                count += 1
        i += 1
    return count


def expected_nodes(horizon: float, law: OffspringLaw = BINARY) -> float:
    # branch events occur at rate E n(s) = e^s; each adds E[k] = 2 nodes
    return 1.0 + 2.0 * math.expm1(horizon)


def sample_tree(horizon: float, law: OffspringLaw = BINARY, rng: np.random.Generator = None,
                node_cap: int = DEFAULT_NODE_CAP, capacity: int | None = None) -> GwTree:
    """Sample the genealogy up to ``horizon``.

    Each particle lives an exponential(1) time and is then replaced by an
    independent number of children drawn from ``law``.  ``capacity`` is only
    the initial table size; the result does not depend on it.
    """
    if not horizon >= 0:
        raise ValueError("horizon must be >= 0")
    if rng is None:
        raise ValueError("an explicit random stream is required")
    if expected_nodes(horizon, law) > node_cap:
        raise HorizonTooLarge(
            f"horizon too large: about {expected_nodes(horizon, law):.3g} nodes expected, cap {node_cap}")
    cum, values = law.tables()
    if capacity is None:
        capacity = 10.0 * math.exp(horizon) * law.max_children / 2 + 64
    cap = int(min(node_cap, max(capacity, law.max_children + 1)))
    saved = rng.bit_generator.state
    while True:
        parent = np.empty(cap, dtype=np.int64)
        birth = np.empty(cap)
        death = np.empty(cap)
        first_child = np.empty(cap, dtype=np.int64)
        n_children = np.empty(cap, dtype=np.int64)
        count = _grow(rng, float(horizon), cum, values, law.is_binary,
                      parent, birth, death, first_child, n_children)
        if count > 0:
            break
        if cap >= node_cap:
            raise HorizonTooLarge(f"horizon too large: tree exceeded the node cap {node_cap}")
        # replay the same draws into a bigger table
        rng.bit_generator.state = saved
        cap = min(node_cap, 4 * cap)
    # views: pages past ``count`` were never touched, so they cost no memory
    return GwTree(float(horizon), parent[:count], birth[:count], death[:count],
                  first_child[:count], n_children[:count])


def _leaf_node(tree: GwTree, k: int) -> int:
    if not 0 <= k < tree.n_leaves:
        raise IndexError(f"leaf out of range: {k} not in [0, {tree.n_leaves})")
    return int(tree.leaves[k])


def overlap(tree: GwTree, k: int, l: int) -> float:
    """Time of the most recent common ancestor of leaves ``k`` and ``l``."""
    a = _leaf_node(tree, k)
    b = _leaf_node(tree, l)
    if a == b:
        return tree.horizon
    seen = set(tree.ancestors(a))
    while b not in seen:
        b = int(tree.parent[b])
    return float(tree.death[b])


def overlap_matrix(tree: GwTree) -> np.ndarray:
    """All pairwise overlaps; quadratic, meant for small trees."""
    n = tree.n_leaves
    paths = [tree.ancestors(int(v))[::-1] for v in tree.leaves]
    out = np.empty((n, n))
    for i in range(n):
        out[i, i] = tree.horizon
        for j in range(i + 1, n):
            pi, pj = paths[i], paths[j]
            m = 0
            while m < min(len(pi), len(pj)) and pi[m] == pj[m]:
                m += 1
            out[i, j] = out[j, i] = tree.death[pi[m - 1]]
    return out
