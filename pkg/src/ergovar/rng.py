"""Reproducible random streams.

Every simulation in the package takes an explicit seed; replicate r of an
experiment with master seed s draws from ``stream(s, r)``.  Streams for
different (seed, index) pairs are independent by SeedSequence construction,
and the same pair always yields the same stream.
"""

from __future__ import annotations

import numpy as np


def stream(master_seed: int, *indices: int) -> np.random.Generator:
    """Generator for the stream keyed by (master_seed, *indices)."""
    return np.random.default_rng(np.random.SeedSequence((master_seed, *indices)))


def as_generator(seed) -> np.random.Generator:
    """Pass Generators through; wrap ints (or SeedSequences) in default_rng."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_streams(seed, k: int) -> list[np.random.Generator]:
    """k independent child generators of a seed, Generator, or SeedSequence.

    Simulators that need several purposes of randomness (initialization,
    proposals, noise, acceptance) take one stream each, so runs that differ
    only in how much of one purpose they consume stay coupled on the others.
    """
    if isinstance(seed, np.random.Generator):
        return seed.spawn(k)
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in seq.spawn(k)]
