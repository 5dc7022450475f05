"""Independence Metropolis-Hastings: simulation and variance classification.

An independence sampler proposes from a fixed distribution mu and accepts
with probability ``1 ^ w(y)/w(x)`` where ``w = dpi/dmu``.  Ergodic averages
of f under this chain have finite asymptotic variance exactly when f is
square-integrable under pi AND w*f is square-integrable under mu; this module
implements that classification, the acceptance-probability bounds

    1/(pi(w) + w(x))  <=  rho(x)  <=  1 ^ 1/w(x),

the uniform minorization of the accepted-proposal chain by pi(rho) times its
invariant law, and the comparison with self-normalized importance sampling
(the sampler's asymptotic variance always dominates the SNIS limit
pi(w * fbar^2)).

Models come in two modes.  Exact mode carries a finite support with mu as a
probability vector, and every quantity here is an exact sum; weights may be
supplied up to a constant and are normalized internally.  Sampler mode
carries only a proposal sampler and an (unnormalized) weight function;
classification then requires caller-supplied moment values, since no generic
quadrature can be trusted with the tail behavior these verdicts depend on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from ._loops import imh_accept_loop, imh_accept_loop_with_flags
from .errors import MissingMoments, NotExactMode, ZeroWeightSum
from .finite_chain import FiniteReversibleKernel, asymptotic_variance_exact
from .rng import as_generator


@dataclass(frozen=True, eq=False)
class ImhModel:
    """Proposal distribution plus weight function ``w = dpi/dmu``.

    Exact mode (`support` / `mu` / `w` set) enables exact summation of every
    moment; `w` is normalized so mu(w) = 1.  Sampler mode only carries
    `proposal_sampler` and `weight_fn` (scale-invariant where it matters).
    `w_bar` is the essential sup of the normalized weight, possibly inf.
    """

    name: str
    weight_fn: Callable | None
    proposal_sampler: Callable | None
    support: np.ndarray | None
    mu: np.ndarray | None
    w: np.ndarray | None
    w_bar: float

    @classmethod
    def exact(cls, support, mu, weight, name="") -> "ImhModel":
        """Finite-support model; `weight` is a vector or callable, any scale."""
        support = np.asarray(support, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if mu.shape != support.shape or support.ndim != 1:
            raise ValueError("support and mu must be 1-d of equal length")
        if np.min(mu) <= 0 or abs(mu.sum() - 1.0) > 1e-12:
            raise ValueError("mu must be a strictly positive probability vector")
        w = np.asarray(weight(support) if callable(weight) else weight, dtype=float)
        if w.shape != support.shape or np.min(w) <= 0:
            raise ValueError("weights must be strictly positive on the support")
        w = w / float(mu @ w)
        support.setflags(write=False)
        mu.setflags(write=False)
        w.setflags(write=False)
        return cls(
            name=name,
            weight_fn=None,
            proposal_sampler=None,
            support=support,
            mu=mu,
            w=w,
            w_bar=float(np.max(w)),
        )

    @classmethod
    def from_sampler(cls, proposal_sampler, weight_fn, w_bar=float("inf"), name="") -> "ImhModel":
        """Sampler-mode model: `proposal_sampler(rng, size)` -> draws."""
        return cls(
            name=name,
            weight_fn=weight_fn,
            proposal_sampler=proposal_sampler,
            support=None,
            mu=None,
            w=None,
            w_bar=float(w_bar),
        )

    @property
    def is_exact(self) -> bool:
        return self.support is not None

    def _require_exact(self, op: str) -> None:
        if not self.is_exact:
            raise NotExactMode(f"{op} needs a finite-support model")

    @property
    def pi(self) -> np.ndarray:
        """Target probabilities mu * w (exact mode)."""
        self._require_exact("pi")
        return self.mu * self.w

    def weight_at(self, values: np.ndarray) -> np.ndarray:
        """Weights at sampled values, in either mode."""
        if self.weight_fn is not None:
            return np.asarray(self.weight_fn(values), dtype=float)
        self._require_exact("weight lookup")
        idx = np.searchsorted(self.support, values)
        idx = np.clip(idx, 0, len(self.support) - 1)
        if not np.allclose(self.support[idx], values):
            raise ValueError("values outside the finite support")
        return self.w[idx]


@dataclass(frozen=True)
class VarianceClassification:
    """Verdict of the two-moment test for finite asymptotic variance."""

    f_in_L2_pi: bool
    wf_in_L2_mu: bool
    verdict: str
    pi_f2: float | None = None
    mu_w2f2: float | None = None

    def __post_init__(self):
        expected = "finite" if (self.f_in_L2_pi and self.wf_in_L2_mu) else "infinite"
        if self.verdict != expected:
            raise ValueError("verdict must follow the two booleans")

    @classmethod
    def from_moments(cls, pi_f2: float, mu_w2f2: float) -> "VarianceClassification":
        a, b = np.isfinite(pi_f2), np.isfinite(mu_w2f2)
        return cls(
            f_in_L2_pi=bool(a),
            wf_in_L2_mu=bool(b),
            verdict="finite" if (a and b) else "infinite",
            pi_f2=float(pi_f2),
            mu_w2f2=float(mu_w2f2),
        )

    @property
    def is_finite(self) -> bool:
        return self.verdict == "finite"


class RhoBounds(NamedTuple):
    rho: float
    lower: float
    upper: float


class EnvelopeBounds(NamedTuple):
    lower_jump: float
    lower_snis: float
    upper: float
    var_exact: float
    ok: bool


class MinorizationReport(NamedTuple):
    constant: float
    pi_rho: float
    ok: bool


def _f_values(model: ImhModel, f) -> np.ndarray:
    vals = np.asarray(f(model.support) if callable(f) else f, dtype=float)
    if vals.shape != model.support.shape:
        raise ValueError("f must give one value per support point")
    return vals


def rho_vector(model: ImhModel) -> np.ndarray:
    """Exit probability rho(x) = sum_y mu(y) (1 ^ w(y)/w(x)), exact mode.

    This counts accepted self-proposals as exits, matching the
    accepted-proposal chain rather than the diagonal of the transition
    matrix.
    """
    model._require_exact("rho_vector")
    ratio = np.minimum(1.0, model.w[None, :] / model.w[:, None])
    return ratio @ model.mu


def jump_matrix(model: ImhModel) -> np.ndarray:
    """Accepted-proposal kernel Ptilde(x, y) = mu(y) (1 ^ w(y)/w(x)) / rho(x)."""
    model._require_exact("jump_matrix")
    rho = rho_vector(model)
    return (np.minimum(1.0, model.w[None, :] / model.w[:, None]) * model.mu[None, :]) / rho[
        :, None
    ]


def pi_tilde(model: ImhModel) -> np.ndarray:
    """Invariant law of the accepted-proposal chain, prop. to pi * rho."""
    v = model.pi * rho_vector(model)
    return v / v.sum()


def induced_kernel(model: ImhModel) -> FiniteReversibleKernel:
    """Full transition matrix of the sampler on the finite support."""
    model._require_exact("induced_kernel")
    A = np.minimum(1.0, model.w[None, :] / model.w[:, None]) * model.mu[None, :]
    P = A.copy()
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return FiniteReversibleKernel(states=tuple(model.support), matrix=P, pi=model.pi)


def imh_simulate(model: ImhModel, n: int, seed, burn_in: int = 0, return_accepted: bool = False):
    """Simulate n steps of the sampler; deterministic given `seed`.

    The initial state is a proposal draw; `burn_in` additional leading steps
    are simulated and dropped.  With `return_accepted` the per-step accept
    flags come back too (flag i tells whether proposal i replaced the state).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(seed)
    total = n + burn_in
    if model.is_exact:
        cum = np.cumsum(model.mu)
        prop_idx = np.minimum(
            np.searchsorted(cum, rng.random(total), side="right"), len(cum) - 1
        )
        w_prop = model.w[prop_idx]
        values = model.support[prop_idx]
    else:
        values = np.asarray(model.proposal_sampler(rng, total), dtype=float)
        w_prop = np.asarray(model.weight_fn(values), dtype=float)
        if np.min(w_prop) <= 0:
            raise ValueError("weight function must be strictly positive at proposals")
    u = rng.random(total)
    if return_accepted:
        idx, acc = imh_accept_loop_with_flags(w_prop, u)
        return values[idx][burn_in:], acc[burn_in:]
    idx = imh_accept_loop(w_prop, u)
    return values[idx][burn_in:]


def rho_and_bounds(model: ImhModel, x: int) -> RhoBounds:
    """Exact exit probability at support index `x` with its sandwich.

    lower = 1/(pi(w) + w(x)); upper = 1 ^ 1/w(x).  pi(w) is finite on a
    finite support; models with pi(w) = inf belong to sampler mode, where the
    lower bound degenerates to 0.
    """
    model._require_exact("rho_and_bounds")
    rho = float(rho_vector(model)[x])
    pi_w = float(model.pi @ model.w)
    return RhoBounds(
        rho=rho,
        lower=1.0 / (pi_w + model.w[x]),
        upper=min(1.0, 1.0 / model.w[x]),
    )


def classify(model: ImhModel, f, moments: tuple[float, float] | None = None) -> VarianceClassification:
    """Two-moment classification of avar(f, P) for the independence sampler.

    Exact mode sums pi(fbar^2) and mu(w^2 fbar^2) directly (f is centered
    internally).  Sampler mode requires ``moments = (pi_f2, mu_w2f2)`` for
    the centered f, each a finite float or inf; there is no generic numeric
    integration that can be trusted to decide these.
    """
    if model.is_exact:
        fv = _f_values(model, f)
        fbar = fv - float(model.pi @ fv)
        pi_f2 = float(model.pi @ fbar**2)
        mu_w2f2 = float(model.mu @ (model.w * fbar) ** 2)
        return VarianceClassification.from_moments(pi_f2, mu_w2f2)
    if moments is None:
        raise MissingMoments("sampler-mode classification needs (pi_f2, mu_w2f2)")
    return VarianceClassification.from_moments(*moments)


def snis_estimate(samples, model: ImhModel, f) -> float:
    """Self-normalized importance sampling: sum(w f) / sum(w) over mu-draws.

    Scale-invariant in w, so unnormalized weights are fine.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    w = model.weight_at(samples)
    total = float(np.sum(w))
    if total <= 0.0:
        raise ZeroWeightSum("all importance weights are numerically zero")
    fv = np.asarray(f(samples), dtype=float) if callable(f) else np.asarray(f, dtype=float)
    return float(np.sum(w * fv) / total)


def snis_limit_variance(model: ImhModel, f, moment: float | None = None) -> float:
    """Limiting variance pi(w * fbar^2) of the SNIS estimator.

    Exact mode computes the sum; sampler mode requires the caller to supply
    the value.
    """
    if model.is_exact:
        fv = _f_values(model, f)
        fbar = fv - float(model.pi @ fv)
        return float(model.pi @ (model.w * fbar**2))
    if moment is None:
        raise MissingMoments("sampler-mode limit variance needs pi(w * fbar^2)")
    return float(moment)


def envelope_bounds(model: ImhModel, f, tol: float = 1e-10) -> EnvelopeBounds:
    """Exact two-sided envelope of avar(f, P) plus the SNIS lower bound.

    lower_jump = 2 pi(rho) pit(f^2/rho^2) - pi(f^2)
    upper      = 2 pit(f^2/rho^2) - pi(f^2)
    lower_snis = pi(w f^2)

    `var_exact` comes from the dense oracle on the induced transition matrix;
    `ok` asserts lower_jump, lower_snis <= var_exact <= upper within `tol`.
    """
    model._require_exact("envelope_bounds")
    fv = _f_values(model, f)
    fbar = fv - float(model.pi @ fv)
    rho = rho_vector(model)
    pt = pi_tilde(model)
    pi_rho = float(model.pi @ rho)
    second = float(pt @ (fbar / rho) ** 2)
    pi_f2 = float(model.pi @ fbar**2)
    lower_jump = 2.0 * pi_rho * second - pi_f2
    upper = 2.0 * second - pi_f2
    lower_snis = float(model.pi @ (model.w * fbar**2))
    var_exact = asymptotic_variance_exact(induced_kernel(model), fbar)
    ok = (
        lower_jump <= var_exact + tol
        and lower_snis <= var_exact + tol
        and var_exact <= upper + tol
    )
    return EnvelopeBounds(lower_jump, lower_snis, upper, var_exact, ok)


def minorization_check(model: ImhModel) -> MinorizationReport:
    """Uniform minorization of the accepted-proposal chain.

    constant = min_{x,y} Ptilde(x, y) / pitilde(y); the chain is uniformly
    ergodic with constant at least pi(rho), checked to 1e-12.
    """
    model._require_exact("minorization_check")
    Pt = jump_matrix(model)
    pt = pi_tilde(model)
    pi_rho = float(model.pi @ rho_vector(model))
    constant = float(np.min(Pt / pt[None, :]))
    return MinorizationReport(constant=constant, pi_rho=pi_rho, ok=constant >= pi_rho - 1e-12)
