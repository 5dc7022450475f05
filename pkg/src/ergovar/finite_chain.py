"""Exact computations for finite-state reversible Markov kernels.

This module is the ground truth the rest of the package is tested against:
stationary distributions, Dirichlet forms, the spectrum of the kernel on the
orthogonal complement of constants, and the asymptotic variance

    avar(f, P) = lim_n  n * var( (1/n) * sum_i f(X_i) ),   X_1 ~ pi,

evaluated in closed form through the spectral representation of the
self-adjoint operator P on L2(pi).  Everything here is dense linear algebra;
the state count is capped so results stay at double-precision accuracy.

Functions are pure and kernels are immutable, so values can be shared freely
across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from .errors import DimensionMismatch, ReducibleChain, SingularSystem

#: structural tolerance (row sums, probability normalization)
STOCHASTIC_TOL = 1e-12
#: tolerance for detailed-balance and identity checks
BALANCE_TOL = 1e-10
#: dense eigendecompositions only; exactness over scale
MAX_STATES = 2000


@dataclass(frozen=True)
class FiniteReversibleKernel:
    """A row-stochastic matrix with labelled states and its invariant law.

    Parameters
    ----------
    states : tuple
        State labels, length n >= 2.
    matrix : (n, n) ndarray
        Row-stochastic transition probabilities.
    pi : (n,) ndarray
        Invariant probability vector, strictly positive, satisfying detailed
        balance ``pi[x] * matrix[x, y] == pi[y] * matrix[y, x]``.
    """

    states: tuple
    matrix: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        matrix = np.ascontiguousarray(np.asarray(self.matrix, dtype=float))
        pi = np.ascontiguousarray(np.asarray(self.pi, dtype=float))
        states = tuple(self.states)
        n = len(states)
        if n < 2:
            raise ValueError("need at least 2 states")
        if n > MAX_STATES:
            raise ValueError(f"state count {n} exceeds the dense cap {MAX_STATES}")
        if matrix.shape != (n, n):
            raise DimensionMismatch(f"matrix shape {matrix.shape} != ({n}, {n})")
        if pi.shape != (n,):
            raise DimensionMismatch(f"pi shape {pi.shape} != ({n},)")
        if not np.all(np.isfinite(matrix)) or np.min(matrix) < 0:
            raise ValueError("matrix entries must be finite and >= 0")
        row_err = np.max(np.abs(matrix.sum(axis=1) - 1.0))
        if row_err > STOCHASTIC_TOL:
            raise ValueError(f"rows must sum to 1 (max error {row_err:.2e})")
        if abs(pi.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValueError("pi must sum to 1")
        if np.min(pi) <= 0:
            raise ValueError("pi must be strictly positive on every state")
        flux = pi[:, None] * matrix
        db_err = np.max(np.abs(flux - flux.T))
        if db_err > BALANCE_TOL:
            raise ValueError(f"detailed balance violated (max error {db_err:.2e})")
        matrix.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "pi", pi)

    @property
    def n(self) -> int:
        return len(self.states)

    @classmethod
    def from_matrix(cls, matrix, states=None, pi=None) -> "FiniteReversibleKernel":
        """Build a kernel, solving for the invariant law when `pi` is omitted."""
        matrix = np.asarray(matrix, dtype=float)
        if states is None:
            states = tuple(range(matrix.shape[0]))
        if pi is None:
            pi = stationary_distribution(matrix)
        return cls(states=tuple(states), matrix=matrix, pi=np.asarray(pi, dtype=float))

    @classmethod
    def from_json(cls, source) -> "FiniteReversibleKernel":
        """Load from a JSON document ``{"states": [...], "matrix": [[...]], "pi": [...]}``.

        `source` is a path, an open file, or an already-parsed dict; `pi` is
        optional and recomputed when absent.
        """
        if isinstance(source, dict):
            doc = source
        elif hasattr(source, "read"):
            doc = json.load(source)
        else:
            with open(source) as fh:
                doc = json.load(fh)
        return cls.from_matrix(doc["matrix"], states=doc.get("states"), pi=doc.get("pi"))

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "matrix": self.matrix.tolist(),
            "pi": self.pi.tolist(),
        }

    def expectation(self, f) -> float:
        """pi(f)."""
        return float(self.pi @ as_state_function(self, f))

    def variance(self, f) -> float:
        """var_pi(f)."""
        f = as_state_function(self, f)
        m = self.pi @ f
        return float(self.pi @ (f - m) ** 2)


@dataclass(frozen=True)
class SpectralReport:
    """Spectrum of the kernel on mean-zero functions.

    `eigenvalues` is the sorted spectrum of P restricted to the orthogonal
    complement of constants in L2(pi); all values lie in [-1, 1].  `gap` is
    the right spectral gap, 1 minus the largest of those eigenvalues, in
    [0, 2].  Periodic chains put spectrum at -1, which leaves the right gap
    (and asymptotic variances) perfectly finite, so the left edge is exposed
    separately as `min_eigenvalue`.
    """

    eigenvalues: np.ndarray
    gap: float

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float))
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])


def as_state_function(kernel: FiniteReversibleKernel, f) -> np.ndarray:
    """Validate `f` as a state function: one finite value per state."""
    f = np.asarray(f, dtype=float)
    if f.shape != (kernel.n,):
        raise DimensionMismatch(f"function shape {f.shape} != ({kernel.n},)")
    if not np.all(np.isfinite(f)):
        raise ValueError("function values must be finite")
    return f


def centered(kernel: FiniteReversibleKernel, f) -> np.ndarray:
    """f - pi(f).  Asymptotic variances are invariant under this shift."""
    f = as_state_function(kernel, f)
    return f - kernel.pi @ f


def stationary_distribution(matrix) -> np.ndarray:
    """Solve v P = v, v >= 0, sum(v) = 1 for a row-stochastic matrix.

    The matrix need not be reversible.  Uses a dense solve with one step of
    iterative refinement; the result satisfies
    ``max|v (P - I)| <= 1e-12``.

    Raises
    ------
    ReducibleChain
        If the directed graph of positive entries is not strongly connected.
    """
    P = np.asarray(matrix, dtype=float)
    n = P.shape[0]
    if P.ndim != 2 or P.shape != (n, n):
        raise DimensionMismatch(f"expected a square matrix, got shape {P.shape}")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > STOCHASTIC_TOL or np.min(P) < 0:
        raise ValueError("matrix must be row-stochastic")
    graph = scipy.sparse.csr_matrix(P > 0)
    ncomp, _ = scipy.sparse.csgraph.connected_components(
        graph, directed=True, connection="strong"
    )
    if ncomp != 1:
        raise ReducibleChain(f"{ncomp} strongly connected components")

    # (P^T - I) v = 0 with the last equation replaced by sum(v) = 1.
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    v = np.linalg.solve(A, b)
    for _ in range(2):  # iterative refinement against the exact equations
        r = A @ v - b
        if np.max(np.abs(r)) < 1e-15:
            break
        v = v - np.linalg.solve(A, r)
    v = np.maximum(v, 0.0)
    v = v / v.sum()
    residual = np.max(np.abs(v @ P - v))
    if residual > STOCHASTIC_TOL:
        raise ValueError(f"stationary solve residual {residual:.2e} above tolerance")
    return v


def dirichlet_form(kernel: FiniteReversibleKernel, f) -> float:
    """Quadratic energy of f under the chain.

    Evaluates the double sum ``0.5 * sum_{x,y} pi[x] P[x,y] (f[y]-f[x])^2``,
    which equals the inner product <f, (I-P) f>_pi; always >= 0.
    """
    f = as_state_function(kernel, f)
    diff = f[None, :] - f[:, None]
    return float(0.5 * np.sum(kernel.pi[:, None] * kernel.matrix * diff**2))


def _complement_basis(pi: np.ndarray) -> np.ndarray:
    """Orthonormal (n, n-1) basis of the complement of sqrt(pi) in R^n.

    Householder reflection mapping e_1 to sqrt(pi); columns 2..n then span
    the orthogonal complement exactly.
    """
    u = np.sqrt(pi)
    e1 = np.zeros_like(u)
    e1[0] = 1.0
    v = e1 - u
    norm = np.linalg.norm(v)
    if norm < 1e-14:  # pi concentrated on the first coordinate direction
        H = np.eye(len(u))
    else:
        v = v / norm
        H = np.eye(len(u)) - 2.0 * np.outer(v, v)
    return H[:, 1:]


def _symmetrized(kernel: FiniteReversibleKernel) -> np.ndarray:
    """D^{1/2} P D^{-1/2}, symmetrized; unitarily equivalent to P on L2(pi)."""
    d = np.sqrt(kernel.pi)
    S = (d[:, None] * kernel.matrix) / d[None, :]
    return 0.5 * (S + S.T)


def _restricted_spectrum(kernel: FiniteReversibleKernel):
    """Eigenpairs of P on the complement of constants.

    Returns (Q, eigenvalues, W) with Q the (n, n-1) complement basis of
    sqrt(pi) and W the eigenvectors of Q^T S Q.
    """
    Q = _complement_basis(kernel.pi)
    B = Q.T @ _symmetrized(kernel) @ Q
    vals, W = np.linalg.eigh(0.5 * (B + B.T))
    return Q, np.clip(vals, -1.0, 1.0), W


def spectral_gap(kernel: FiniteReversibleKernel) -> SpectralReport:
    """Right spectral gap of the kernel on mean-zero functions.

    The gap is 1 minus the largest eigenvalue of P restricted to the
    orthogonal complement of constants under the pi-weighted inner product;
    equivalently the infimum of ``dirichlet_form(f) / var_pi(f)`` over
    non-constant f.
    """
    _, vals, _ = _restricted_spectrum(kernel)
    return SpectralReport(eigenvalues=vals, gap=float(1.0 - vals[-1]))


def asymptotic_variance_exact(kernel: FiniteReversibleKernel, f) -> float:
    """Asymptotic variance of stationary ergodic averages of f.

    Centers f internally and evaluates ``<f, (I+P)(I-P)^{-1} f>_pi`` on the
    complement of constants through the eigendecomposition of the
    pi-symmetrized matrix.  Returns ``inf`` only if 1 is an eigenvalue there,
    which cannot happen for an irreducible kernel.
    """
    fbar = centered(kernel, f)
    Q, vals, W = _restricted_spectrum(kernel)
    coeffs = W.T @ (Q.T @ (np.sqrt(kernel.pi) * fbar))
    one_minus = 1.0 - vals
    mass = coeffs**2
    if np.any((one_minus <= 1e-12) & (mass > 1e-24)):
        return float("inf")
    keep = one_minus > 1e-12
    return float(np.sum(mass[keep] * (1.0 + vals[keep]) / one_minus[keep]))


def variational_avar(kernel: FiniteReversibleKernel, f) -> float:
    """Asymptotic variance through its variational representation.

    The supremum of ``2 * (2<f,g>_pi - dirichlet_form(g)) - <f,f>_pi`` over g
    is attained at the solution of ``(I - P) g = f`` on mean-zero functions,
    found here by a least-squares solve; the result agrees with
    :func:`asymptotic_variance_exact` to 1e-10 relative, by an independent
    computation route.

    Raises
    ------
    SingularSystem
        If (I - P) restricted to mean-zero functions is numerically singular
        (smallest singular value below 1e-12).
    """
    fbar = centered(kernel, f)
    n = kernel.n
    # (I - P) g = fbar subject to pi . g = 0, as one stacked least-squares
    # system; the stack is singular exactly when (I - P) is singular on the
    # mean-zero subspace.
    A = np.vstack([np.eye(n) - kernel.matrix, kernel.pi[None, :]])
    b = np.concatenate([fbar, [0.0]])
    svals = np.linalg.svd(A, compute_uv=False)
    if svals[-1] < 1e-12:
        raise SingularSystem(f"smallest singular value {svals[-1]:.2e}")
    g, *_ = np.linalg.lstsq(A, b, rcond=None)
    inner_fg = float(kernel.pi @ (fbar * g))
    inner_ff = float(kernel.pi @ fbar**2)
    return 2.0 * (2.0 * inner_fg - dirichlet_form(kernel, g)) - inner_ff
