"""Deterministic, splittable random streams.

Every path (or replication) index gets its own counter-based Philox stream
derived from ``(seed, domain, index)``.  Path ``i`` therefore reproduces
bit-identically no matter how paths are batched or distributed over workers.
"""
from __future__ import annotations

import numpy as np

# Stream domains keep draws for different noise components independent even
# when they share a seed.  A Brownian component and a fractional component
# simulated under the same seed must not consume the same stream.
DOMAIN_FBM = 0
DOMAIN_BM = 1
DOMAIN_CIRCULANT = 2
DOMAIN_DOUBLING = 3
DOMAIN_WALK = 4
DOMAIN_RENEWAL = 5
DOMAIN_AGENTS = 6


def stream(seed: int, domain: int, index: int) -> np.random.Generator:
    """Return the Philox generator for one (seed, domain, index) triple."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(domain, index))
    return np.random.Generator(np.random.Philox(ss))


def normals(seed: int, domain: int, index: int, n: int) -> np.ndarray:
    """Standard normal draws from one stream."""
    return stream(seed, domain, index).standard_normal(n)
