"""Jump-chain decomposition, reconstruction, and weighted estimators.

A reversible kernel with ``P(x, x) < 1`` everywhere factors as

    P(x, .) = rho(x) * Ptilde(x, .) + (1 - rho(x)) * delta_x,

where `Ptilde` is the jump kernel (the chain of distinct moves) and
``rho(x)`` the probability of leaving x in one step.  The original chain is
recovered by holding each jump state for an independent Geometric(rho) time.
This module fixes the canonical maximal decomposition ``rho = 1 - diag(P)``
with a zero-diagonal jump kernel, verifies the exact variance identity

    avar(f, P) = pi(f^2/rho) - pi(f^2) + pi(rho) * avar(f/rho, Ptilde)

against the dense oracle, and implements the two self-normalized estimators
of pi(f) built from a jump path: the holding-time weighted average and its
Rao-Blackwellized version weighting by 1/rho.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._loops import markov_path
from .errors import AbsorbingState, EmptyPath
from .finite_chain import (
    FiniteReversibleKernel,
    as_state_function,
    asymptotic_variance_exact,
    centered,
    spectral_gap,
)
from .rng import as_generator

#: a diagonal entry this close to 1 means the state is absorbing
ABSORBING_TOL = 1e-12


@dataclass(frozen=True)
class JumpDecomposition:
    """Holding-exit probabilities, jump kernel, and its invariant law."""

    rho: np.ndarray
    jump_kernel: FiniteReversibleKernel
    pi_rho: float

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if np.min(rho) <= 0 or np.max(rho) > 1 + 1e-12:
            raise ValueError("rho must lie in (0, 1]")
        if np.max(np.abs(np.diag(self.jump_kernel.matrix))) > 1e-15:
            raise ValueError("jump kernel must have zero diagonal")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def pi_tilde(self) -> np.ndarray:
        """Invariant law of the jump chain, proportional to pi * rho."""
        return self.jump_kernel.pi


@dataclass(frozen=True)
class JumpPath:
    """A jump-chain realization: visited states and their holding times."""

    states: np.ndarray
    taus: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        taus = np.asarray(self.taus, dtype=np.int64)
        if states.shape != taus.shape or states.ndim != 1:
            raise ValueError("states and taus must be 1-d of equal length")
        if len(taus) and taus.min() < 1:
            raise ValueError("holding times must be >= 1")
        states.setflags(write=False)
        taus.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "taus", taus)

    def __len__(self) -> int:
        return len(self.states)

    def to_csv(self, target, labels=None) -> None:
        """Write columns index,state,tau; `labels` maps indices to names."""
        own = not hasattr(target, "write")
        fh = open(target, "w", newline="") if own else target
        try:
            writer = csv.writer(fh)
            writer.writerow(["index", "state", "tau"])
            for i, (s, t) in enumerate(zip(self.states, self.taus), start=1):
                writer.writerow([i, labels[s] if labels is not None else int(s), int(t)])
        finally:
            if own:
                fh.close()


class GapInheritance(NamedTuple):
    gap_p: float
    gap_jump: float
    ok: bool


@dataclass(frozen=True)
class EstimatorVariances:
    """Limiting variances of the two jump-path estimators of pi(f)."""

    sigma2_rb: float
    sigma2_geo: float


def jump_invariant(pi, rho) -> np.ndarray:
    """Invariant law of a jump chain: pi * rho, normalized."""
    w = np.asarray(pi, dtype=float) * np.asarray(rho, dtype=float)
    return w / w.sum()


def decompose(kernel: FiniteReversibleKernel) -> JumpDecomposition:
    """Canonical maximal decomposition with zero-diagonal jump kernel.

    ``rho[x] = 1 - P[x, x]`` and ``Ptilde[x, y] = P[x, y] / rho[x]`` off the
    diagonal.  This is the unique decomposition whose jump kernel never holds,
    and matches the accepted-proposal chain of Metropolis kernels whose
    proposals put no mass on the current point.

    Raises
    ------
    AbsorbingState
        If some diagonal entry equals 1 (within 1e-12).
    """
    P = kernel.matrix
    rho = 1.0 - np.diag(P)
    hit = np.nonzero(rho <= ABSORBING_TOL)[0]
    if hit.size:
        raise AbsorbingState(kernel.states[hit[0]])
    Pt = P / rho[:, None]
    np.fill_diagonal(Pt, 0.0)
    Pt = Pt / Pt.sum(axis=1, keepdims=True)
    jump = FiniteReversibleKernel(
        states=kernel.states, matrix=Pt, pi=jump_invariant(kernel.pi, rho)
    )
    return JumpDecomposition(rho=rho, jump_kernel=jump, pi_rho=float(kernel.pi @ rho))


def recompose(decomp: JumpDecomposition) -> np.ndarray:
    """Reassemble the original transition matrix from a decomposition."""
    P = decomp.rho[:, None] * decomp.jump_kernel.matrix
    P[np.diag_indices_from(P)] += 1.0 - decomp.rho
    return P


def reconstruct_path(jump: JumpPath) -> np.ndarray:
    """Unroll holding times: each jump state repeated tau times."""
    return np.repeat(jump.states, jump.taus)


def geometric_holding_times(rho_states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Geometric(rho) holding times on {1, 2, ...} by inversion.

    tau = ceil(ln U / ln(1 - rho)) with U drawn in (0, 1]; the rho = 1 branch
    returns 1 exactly.
    """
    u = 1.0 - rng.random(rho_states.shape[0])  # in (0, 1]
    taus = np.ones(rho_states.shape[0], dtype=np.int64)
    sub = rho_states < 1.0
    if np.any(sub):
        with np.errstate(divide="ignore"):
            raw = np.ceil(np.log(u[sub]) / np.log1p(-rho_states[sub]))
        taus[sub] = np.maximum(raw, 1.0).astype(np.int64)
    return taus


def simulate_jump_path(
    decomp: JumpDecomposition, n_jumps: int, seed, burn_in: int = 0
) -> JumpPath:
    """Simulate the jump chain from its invariant law with geometric holds.

    Deterministic given `seed`.  `burn_in` extra initial jumps are simulated
    and dropped; the default 0 keeps the stationary start under which the
    estimator limit theorems are stated.
    """
    if n_jumps < 1:
        raise ValueError("n_jumps must be >= 1")
    rng = as_generator(seed)
    total = n_jumps + burn_in
    cum_pi = np.cumsum(decomp.pi_tilde)
    start = min(int(np.searchsorted(cum_pi, rng.random(), side="right")), len(cum_pi) - 1)
    cum_rows = np.cumsum(decomp.jump_kernel.matrix, axis=1)
    states = markov_path(cum_rows, start, rng.random(total - 1))[burn_in:]
    taus = geometric_holding_times(decomp.rho[states], rng)
    return JumpPath(states=states, taus=taus)


def variance_identity_residual(kernel: FiniteReversibleKernel, f) -> float:
    """Gap between the two exact routes to avar(f, P).

    The left side is the dense-oracle asymptotic variance; the right side is
    ``pi(f^2/rho) - pi(f^2) + pi(rho) * avar(f/rho, Ptilde)``.  f is centered
    internally; f/rho is then automatically centered under the jump invariant
    (asserted to 1e-12).
    """
    fbar = centered(kernel, f)
    decomp = decompose(kernel)
    g = fbar / decomp.rho
    drift = float(decomp.pi_tilde @ g)
    scale = max(1.0, float(decomp.pi_tilde @ np.abs(g)))
    if abs(drift) > 1e-12 * scale:
        raise AssertionError(f"f/rho not centered under jump invariant: {drift:.2e}")
    lhs = asymptotic_variance_exact(kernel, fbar)
    rhs = (
        float(kernel.pi @ (fbar**2 / decomp.rho))
        - float(kernel.pi @ fbar**2)
        + decomp.pi_rho * asymptotic_variance_exact(decomp.jump_kernel, g)
    )
    return abs(lhs - rhs)


def gap_inheritance_check(kernel: FiniteReversibleKernel) -> GapInheritance:
    """The jump kernel's right gap is never below the original kernel's."""
    gap_p = spectral_gap(kernel).gap
    gap_jump = spectral_gap(decompose(kernel).jump_kernel).gap
    return GapInheritance(gap_p, gap_jump, gap_jump >= gap_p - 1e-12)


def rb_estimate(jump: JumpPath, rho, f) -> float:
    """Rao-Blackwellized jump-path estimate of pi(f).

    Replaces the geometric holding times by their conditional expectations:
    ``sum f(X_i)/rho(X_i) / sum 1/rho(X_i)``.
    """
    if len(jump) == 0:
        raise EmptyPath("cannot estimate from an empty path")
    rho = np.asarray(rho, dtype=float)
    f = np.asarray(f, dtype=float)
    inv = 1.0 / rho[jump.states]
    return float(np.sum(inv * f[jump.states]) / np.sum(inv))


def geo_estimate(jump: JumpPath, rho, f) -> float:
    """Holding-time weighted estimate ``sum tau_i f(X_i) / sum tau_i``.

    Identical by construction to the plain ergodic average of the
    reconstructed path.
    """
    if len(jump) == 0:
        raise EmptyPath("cannot estimate from an empty path")
    f = np.asarray(f, dtype=float)
    taus = jump.taus.astype(float)
    return float(np.sum(taus * f[jump.states]) / np.sum(taus))


def estimator_variances_exact(kernel: FiniteReversibleKernel, f) -> EstimatorVariances:
    """Closed-form limiting variances of the two estimators.

    sigma2_rb = pi(rho)^2 * avar(f/rho, Ptilde); sigma2_geo adds the price of
    the geometric holds and collapses algebraically to pi(rho) * avar(f, P).
    """
    fbar = centered(kernel, f)
    decomp = decompose(kernel)
    g = fbar / decomp.rho
    var_jump = asymptotic_variance_exact(decomp.jump_kernel, g)
    pr = decomp.pi_rho
    sigma2_rb = pr**2 * var_jump
    sigma2_geo = pr * (
        float(kernel.pi @ (fbar**2 / decomp.rho))
        - float(kernel.pi @ fbar**2)
        + pr * var_jump
    )
    return EstimatorVariances(sigma2_rb=max(0.0, sigma2_rb), sigma2_geo=max(0.0, sigma2_geo))
