"""Reproducible per-replica random streams.

Every replica draws from its own generator whose key is a pure function of
the master seed and an index path, e.g. ``(seed, replica)`` or
``(seed, replica, inner)``.  The key derivation is a splitmix64 cascade:

    key  = fmix(seed)
    key  = fmix(key XOR fmix(index))      for each index in the path

where ``fmix(v)`` is the splitmix64 output function applied to
``v + 0x9E3779B97F4A7C15`` (all arithmetic mod 2**64).  The key then seeds an
SFC64 state as ``(s1, s2, s3, counter=1)`` from three successive splitmix64
outputs, followed by 12 discarded rounds.  Nothing here depends on platform,
thread count or call order, so replica ``i`` is identical whether it is run
alone, in a batch, or on another machine.
"""

from __future__ import annotations

import secrets

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _splitmix_out(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def fmix(v: int) -> int:
    """splitmix64 output for the state ``v + golden``."""
    return _splitmix_out((v + GOLDEN) & MASK64)


def derive_key(seed: int, *path: int) -> int:
    key = fmix(seed & MASK64)
    for idx in path:
        if idx < 0:
            raise ValueError("substream indices must be non-negative")
        key = fmix(key ^ fmix(idx & MASK64))
    return key


def _sfc_state(key: int) -> np.ndarray:
    words = []
    s = key
    for _ in range(3):
        s = (s + GOLDEN) & MASK64
        words.append(_splitmix_out(s))
    return np.array(words + [1], dtype=np.uint64)


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream addressed by ``(seed, *path)``."""
    bg = np.random.SFC64(0)
    bg.state = {
        "bit_generator": "SFC64",
        "state": {"state": _sfc_state(derive_key(seed, *path))},
        "has_uint32": 0,
        "uinteger": 0,
    }
    bg.random_raw(12)
    return np.random.Generator(bg)


def fresh_seed() -> int:
    """A 64-bit master seed drawn from system entropy."""
    return secrets.randbits(64)
