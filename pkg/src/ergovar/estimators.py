"""Empirical asymptotic-variance estimation and divergence detection.

Batch means estimates ``lim n var(mean of f over n steps)`` from one path:
chop the path into batches, and scale the sample variance of the batch
averages by the batch length.  When the true asymptotic variance is
infinite there is nothing to converge to; the operational signature is that
batch-means estimates keep growing as the path gets longer, which
:func:`divergence_scan` quantifies over a grid of path lengths and seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import PathTooShort


@dataclass(frozen=True)
class PathSample:
    """f evaluated along one simulated path, with provenance metadata."""

    values: np.ndarray
    model_id: str = ""
    seed: int | None = None
    burn_in: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("values must be a nonempty 1-d array")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class AvarEstimate:
    """Batch-means estimate with its own Monte Carlo standard error."""

    value: float
    batch_len: int
    n_batches: int
    stderr: float


class ScanResult(NamedTuple):
    fraction: float
    estimates: np.ndarray  # (n_seeds, len(n_grid))
    n_grid: tuple
    n_seeds: int


def default_batch_len(n: int) -> int:
    return max(1, int(np.floor(np.sqrt(n))))


def batch_means(path, batch_len: int | None = None) -> AvarEstimate:
    """Batch-means estimate of the asymptotic variance of f along a path.

    value = batch_len * sample variance of the batch averages, over
    ``len(path) // batch_len`` full batches; stderr is the chi-square
    approximation ``value * sqrt(2 / (n_batches - 1))``.  The estimate is
    invariant under adding a constant to the path.

    Raises
    ------
    PathTooShort
        If the path holds fewer than two full batches.
    """
    values = path.values if isinstance(path, PathSample) else np.asarray(path, dtype=float)
    n = len(values)
    if batch_len is None:
        batch_len = default_batch_len(n)
    if batch_len < 1:
        raise ValueError("batch_len must be >= 1")
    if n < 2 * batch_len:
        raise PathTooShort(f"path of length {n} < 2 batches of {batch_len}")
    n_batches = n // batch_len
    means = values[: n_batches * batch_len].reshape(n_batches, batch_len).mean(axis=1)
    value = float(batch_len * np.var(means, ddof=1))
    return AvarEstimate(
        value=value,
        batch_len=int(batch_len),
        n_batches=int(n_batches),
        stderr=float(value * np.sqrt(2.0 / (n_batches - 1))),
    )


def divergence_scan(
    generator: Callable[[int, int], np.ndarray],
    n_grid=(10**3, 10**4, 10**5, 10**6),
    seeds: int = 50,
) -> ScanResult:
    """Fraction of seeds whose batch-means estimates grow along `n_grid`.

    `generator(n, seed)` must yield a fresh path of f-values of length n.
    Finite-variance chains fluctuate around their limit, so strict growth
    across the whole grid is rare; empirically infinite-variance chains grow
    almost every time.
    """
    n_grid = tuple(int(n) for n in n_grid)
    seed_list = range(seeds) if isinstance(seeds, int) else list(seeds)
    estimates = np.empty((len(seed_list), len(n_grid)))
    for i, seed in enumerate(seed_list):
        for j, n in enumerate(n_grid):
            estimates[i, j] = batch_means(generator(n, seed)).value
    growing = np.all(np.diff(estimates, axis=1) > 0.0, axis=1)
    return ScanResult(
        fraction=float(np.mean(growing)),
        estimates=estimates,
        n_grid=n_grid,
        n_seeds=len(estimates),
    )
