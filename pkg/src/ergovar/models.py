"""Built-in models, addressable by name from experiment configs.

Finite kernels (exact oracle substrate), independence-sampler models in both
exact and sampler modes, pseudo-marginal models, and the randomized
generators the sweep experiments draw from.  Sampler-mode families whose
classification moments cannot be summed on a computer carry them in closed
form instead (zeta-function sums for the discrete power laws, Pareto moments
for the continuous family); simulation never truncates those supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import zeta

from ._loops import markov_path
from .errors import UnknownModel
from .finite_chain import FiniteReversibleKernel
from .imh import ImhModel, VarianceClassification
from .pseudo_marginal import (
    AbcNoise,
    AtomNoise,
    LognormalNoise,
    MarginalModel,
    NoiseFamily,
    PmModel,
)
from .rng import as_generator

# ---------------------------------------------------------------------------
# finite kernels


def two_state_kernel(a: float = 0.3, b: float = 0.3) -> FiniteReversibleKernel:
    """Two states with cross probabilities a and b; pi = (b, a)/(a+b)."""
    if not (0 < a <= 1 and 0 < b <= 1):
        raise ValueError("a and b must lie in (0, 1]")
    matrix = np.array([[1.0 - a, a], [b, 1.0 - b]])
    pi = np.array([b, a]) / (a + b)
    return FiniteReversibleKernel(states=(0, 1), matrix=matrix, pi=pi)


def iid_kernel(pi) -> FiniteReversibleKernel:
    """Every row equals pi: one-step perfect mixing."""
    pi = np.asarray(pi, dtype=float)
    matrix = np.tile(pi, (len(pi), 1))
    return FiniteReversibleKernel(states=tuple(range(len(pi))), matrix=matrix, pi=pi)


@dataclass(frozen=True, eq=False)
class BirthDeathModel:
    """Lazy birth-death walk on {1..N} with designed exit probabilities.

    Moves up with probability rho(x) p and down with rho(x)(1-p), holding
    otherwise; rho(x) = 1/(x+1) decays, so the chain holds longer the higher
    it sits.  The top state reflects (its up-move mass folds into holding).
    The distinct-move chain is a simple random walk whose invariant law is
    the Geometric(1 - p/(1-p)) law restricted to {1..N}; with the default
    p = 1/4, N = 30 the truncated tail mass is below 3e-14 relative.
    """

    kernel: FiniteReversibleKernel
    rho: np.ndarray
    p: float

    def identity_function(self) -> np.ndarray:
        return np.asarray(self.kernel.states, dtype=float)

    def designed_jump_invariant(self) -> np.ndarray:
        """pi * rho normalized, for the designed (not canonical) rho."""
        w = self.kernel.pi * self.rho
        return w / w.sum()

    def geometric_reference(self) -> np.ndarray:
        """Geometric(1 - p/(1-p)) restricted to {1..N} and renormalized."""
        x = np.asarray(self.kernel.states, dtype=float)
        w = (self.p / (1.0 - self.p)) ** x
        return w / w.sum()


def birth_death_model(p: float = 0.25, n_states: int = 30) -> BirthDeathModel:
    if not 0 < p < 0.5:
        raise ValueError("p must lie in (0, 1/2)")
    states = np.arange(1, n_states + 1)
    rho = 1.0 / (states + 1.0)
    P = np.zeros((n_states, n_states))
    P[0, 1] = rho[0] * p
    P[0, 0] = 1.0 - P[0, 1]
    for i in range(1, n_states - 1):
        P[i, i + 1] = rho[i] * p
        P[i, i - 1] = rho[i] * (1.0 - p)
        P[i, i] = 1.0 - rho[i]
    P[-1, -2] = rho[-1] * (1.0 - p)
    P[-1, -1] = 1.0 - P[-1, -2]
    kernel = FiniteReversibleKernel.from_matrix(P, states=tuple(int(s) for s in states))
    return BirthDeathModel(kernel=kernel, rho=rho, p=p)


def random_reversible_kernel(rng, n: int | None = None, n_max: int = 20, hold_scale: float = 1.0):
    """Random reversible kernel from a symmetric conductance matrix.

    Strictly positive off-diagonal conductances keep the chain irreducible;
    `hold_scale` controls how much self-transition mass the diagonal gets.
    """
    rng = as_generator(rng)
    if n is None:
        n = int(rng.integers(2, n_max + 1))
    C = rng.uniform(0.1, 1.0, size=(n, n))
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, rng.uniform(0.0, hold_scale, size=n) * 0.5 * (n - 1))
    row = C.sum(axis=1)
    return FiniteReversibleKernel(
        states=tuple(range(n)), matrix=C / row[:, None], pi=row / row.sum()
    )


def random_centered_function(kernel: FiniteReversibleKernel, rng) -> np.ndarray:
    rng = as_generator(rng)
    f = rng.normal(0.0, 1.0, size=kernel.n)
    return f - float(kernel.pi @ f)


def simulate_path(kernel: FiniteReversibleKernel, n: int, seed, start: int | None = None):
    """n state indices of the chain, started from pi unless `start` is given."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(seed)
    if start is None:
        cum_pi = np.cumsum(kernel.pi)
        start = min(int(np.searchsorted(cum_pi, rng.random(), side="right")), kernel.n - 1)
    return markov_path(np.cumsum(kernel.matrix, axis=1), int(start), rng.random(n - 1))


# ---------------------------------------------------------------------------
# independence-sampler models


def two_point_imh() -> ImhModel:
    """Two points, uniform proposal, target (0.75, 0.25): weights (1.5, 0.5)."""
    return ImhModel.exact(
        support=np.array([0.0, 1.0]),
        mu=np.array([0.5, 0.5]),
        weight=np.array([1.5, 0.5]),
        name="two_point",
    )


def two_point_f() -> np.ndarray:
    """Centered indicator of the first point under the two_point target."""
    return np.array([0.25, -0.75])


def random_finite_imh(rng, n_min: int = 2, n_max: int = 8) -> ImhModel:
    """Random exact-mode model: Dirichlet proposal and Dirichlet target."""
    rng = as_generator(rng)
    n = int(rng.integers(n_min, n_max + 1))
    mu = rng.dirichlet(np.ones(n))
    target = rng.dirichlet(np.ones(n))
    # keep both laws comfortably positive so weights stay bounded
    mu = 0.9 * mu + 0.1 / n
    target = 0.9 * target + 0.1 / n
    return ImhModel.exact(
        support=np.arange(n, dtype=float), mu=mu, weight=target / mu, name=f"random_imh_{n}"
    )


def _zeta_or_inf(s: float) -> float:
    return float(zeta(s)) if s > 1.0 else float("inf")


def power_law_imh(beta: float) -> ImhModel:
    """Discrete power law on the positive integers: mu(x) prop x^-beta,
    weight w(x) prop x, so the target is pi(x) prop x^-(beta-1).

    The canonical test function f(x) = x has pi(f^2) finite iff beta > 4 and
    mu((w f)^2) finite iff beta > 5, so beta in (4, 5] is the showcase of a
    square-integrable f whose ergodic averages still have infinite
    asymptotic variance.
    """
    if beta <= 2.0:
        raise ValueError("beta must exceed 2 for a normalizable target")

    def sampler(rng, size):
        return stats.zipf.rvs(beta, size=size, random_state=rng).astype(float)

    return ImhModel.from_sampler(
        proposal_sampler=sampler,
        weight_fn=lambda x: np.asarray(x, dtype=float),
        w_bar=float("inf"),
        name=f"power_law_discrete(beta={beta:g})",
    )


def power_law_moments(beta: float) -> tuple[float, float]:
    """Centered classification moments (pi(fbar^2), mu((w fbar)^2)) for
    f(x) = x under the power-law model, via zeta sums."""
    z_pi = _zeta_or_inf(beta - 1.0)
    mean = _zeta_or_inf(beta - 2.0) / z_pi
    if not np.isfinite(mean):
        return float("inf"), float("inf")
    pi_f2 = _zeta_or_inf(beta - 3.0) / z_pi - mean**2
    if np.isfinite(pi_f2):
        pi_f2 = float(pi_f2)
    # mu (w fbar)^2 = zeta(beta)/zeta(beta-1)^2 * sum x^(2-beta) (x-mean)^2
    core = (
        _zeta_or_inf(beta - 4.0)
        - 2.0 * mean * _zeta_or_inf(beta - 3.0)
        + mean**2 * _zeta_or_inf(beta - 2.0)
    )
    mu_w2f2 = float(zeta(beta)) / z_pi**2 * core if np.isfinite(core) else float("inf")
    return float(pi_f2), float(mu_w2f2)


def pareto_exponential_imh(alpha: float) -> ImhModel:
    """Pareto(alpha) target on [1, inf) proposed from a shifted unit
    exponential; the weight alpha x^-(alpha+1) e^(x-1) is unbounded and
    w * f never has a finite second moment under the proposal, for any
    polynomially growing f."""
    if alpha <= 1.0:
        raise ValueError("alpha must exceed 1")

    def sampler(rng, size):
        return 1.0 + rng.exponential(size=size)

    def weight(x):
        x = np.asarray(x, dtype=float)
        return alpha * x ** (-alpha - 1.0) * np.exp(x - 1.0)

    return ImhModel.from_sampler(
        proposal_sampler=sampler,
        weight_fn=weight,
        w_bar=float("inf"),
        name=f"pareto_target_exponential_proposal(alpha={alpha:g})",
    )


def pareto_moments(alpha: float) -> tuple[float, float]:
    """Centered moments for f(x) = x under the Pareto/exponential model."""
    if alpha <= 2.0:
        return float("inf"), float("inf")
    pi_f2 = alpha / ((alpha - 1.0) ** 2 * (alpha - 2.0))
    return float(pi_f2), float("inf")


# ---------------------------------------------------------------------------
# pseudo-marginal models


def pm_two_state_atoms() -> PmModel:
    """Symmetric two-state marginal (every proposal accepted, right gap 0.6)
    with two-atom noise at 0.5 and 1.5 (second moment 1.25)."""
    marginal = MarginalModel(
        states=np.array([0.0, 1.0]),
        pi_bar=np.array([0.5, 0.5]),
        q_bar=np.array([[0.7, 0.3], [0.3, 0.7]]),
        name="two_state_symmetric",
    )
    return PmModel(
        marginal=marginal,
        noise=AtomNoise([(0.5, 0.5), (1.5, 0.5)]),
        name="pm_two_state_atoms",
    )


def pm_two_point_lognormal(sigma2: float = 0.5) -> PmModel:
    """Two-point independent-proposal marginal with lognormal noise."""
    marginal = MarginalModel(
        states=np.array([0.0, 1.0]),
        pi_bar=np.array([0.75, 0.25]),
        q_bar=np.array([[0.5, 0.5], [0.5, 0.5]]),
        name="two_point_marginal",
    )
    return PmModel(
        marginal=marginal,
        noise=LognormalNoise(sigma2),
        name=f"pm_two_point_lognormal(sigma2={sigma2:g})",
    )


def pm_abc_finite(n_states: int = 20) -> PmModel:
    """Likelihood-threshold model on a uniform prior over {1..m}.

    h(x) = x/(2m), the target is prop. to h, and the proposal is the prior,
    so the noise second moment 1/h exactly cancels the density ratio: the
    product s(x) dpibar/dmubar(x) is constant in x.
    """
    m = int(n_states)
    states = np.arange(1, m + 1, dtype=float)
    h = states / (2.0 * m)
    pi_bar = h / h.sum()
    q_bar = np.tile(np.full(m, 1.0 / m), (m, 1))
    marginal = MarginalModel(states=states, pi_bar=pi_bar, q_bar=q_bar, name="abc_uniform_prior")
    return PmModel(marginal=marginal, noise=AbcNoise(h), name=f"pm_abc_finite(m={m})")


@dataclass(frozen=True)
class AnalyticPmFamily:
    """Independent-proposal pseudo-marginal family on the positive integers
    with closed-form classification moments.

    Marginal proposal mubar(x) prop x^-beta, target pibar(x) prop x^(1-beta),
    likelihood-threshold noise with h(x) = (1+x)^-gamma (gamma a nonnegative
    integer), test function f(x) = x.  Averaging the noise N-fold rescales
    its excess second moment by 1/N without moving either verdict boundary:
    pi(fbar^2) finite iff beta > 4, criterion finite iff beta > gamma + 5.
    """

    beta: float
    gamma: int

    @property
    def name(self) -> str:
        return f"pm_abc_power_law(beta={self.beta:g},gamma={self.gamma})"

    def moments(self, n_avg: int = 1) -> tuple[float, float]:
        beta, gamma = self.beta, int(self.gamma)
        z_pi = _zeta_or_inf(beta - 1.0)
        mean = _zeta_or_inf(beta - 2.0) / z_pi
        if not np.isfinite(mean):
            return float("inf"), float("inf")
        pi_f2 = _zeta_or_inf(beta - 3.0) / z_pi - mean**2

        def centered_square_sum(extra_exponent: float) -> float:
            # sum_x x^(2-beta+extra) (x - mean)^2
            return (
                _zeta_or_inf(beta - 4.0 - extra_exponent)
                - 2.0 * mean * _zeta_or_inf(beta - 3.0 - extra_exponent)
                + mean**2 * _zeta_or_inf(beta - 2.0 - extra_exponent)
            )

        # s_N(x) = 1 + ((1+x)^gamma - 1)/N, expanded binomially
        pieces = (1.0 - 1.0 / n_avg) * centered_square_sum(0.0)
        for j in range(gamma + 1):
            pieces += math.comb(gamma, j) / n_avg * centered_square_sum(float(j))
        scale = float(zeta(beta)) / z_pi**2
        criterion = scale * pieces if np.isfinite(pieces) else float("inf")
        return float(pi_f2), float(criterion)

    def classify(self, n_avg: int = 1) -> VarianceClassification:
        return VarianceClassification.from_moments(*self.moments(n_avg))


class TableNoise(NoiseFamily):
    """State-dependent noise given by an explicit atom table per state."""

    kind = "atoms_table"
    state_independent = False

    def __init__(self, table):
        self._table = []
        for values, probs in table:
            values = np.asarray(values, dtype=float)
            probs = np.asarray(probs, dtype=float)
            if np.min(values) < 0 or np.min(probs) <= 0 or abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError("bad atom table")
            if abs(values @ probs - 1.0) > 1e-10:
                raise ValueError("noise mean must be 1 at every state")
            order = np.argsort(values)
            self._table.append((values[order], probs[order]))

    def sample(self, x, rng, size=None):
        values, probs = self._table[int(x)]
        cum = np.cumsum(probs)
        idx = np.minimum(np.searchsorted(cum, rng.random(size), side="right"), len(values) - 1)
        return values[idx]

    def second_moment(self, x) -> float:
        values, probs = self._table[int(x)]
        return float(probs @ values**2)

    @property
    def s_bar(self) -> float:
        return max(self.second_moment(x) for x in range(len(self._table)))

    def atoms(self, x=None):
        if x is None:
            raise ValueError("state-dependent family: atoms need a state")
        return self._table[int(x)]


def random_pm_discrete(rng, n_states_max: int = 4, n_atoms_max: int = 3) -> PmModel:
    """Random exact-discrete pseudo-marginal model for product-chain sweeps."""
    rng = as_generator(rng)
    n = int(rng.integers(2, n_states_max + 1))
    pi_bar = 0.9 * rng.dirichlet(np.ones(n)) + 0.1 / n
    q_bar = 0.9 * rng.dirichlet(np.ones(n), size=n) + 0.1 / n
    table = []
    for _ in range(n):
        k = int(rng.integers(2, n_atoms_max + 1))
        values = np.sort(rng.uniform(0.1, 2.0, size=k))
        probs = rng.dirichlet(np.ones(k))
        values = values / float(values @ probs)  # unit mean
        table.append((values, probs))
    marginal = MarginalModel(states=np.arange(n, dtype=float), pi_bar=pi_bar, q_bar=q_bar)
    return PmModel(marginal=marginal, noise=TableNoise(table), name=f"random_pm_{n}")


# ---------------------------------------------------------------------------
# registry


MODEL_REGISTRY = {
    "two_state": two_state_kernel,
    "iid": iid_kernel,
    "birth_death": birth_death_model,
    "random_reversible": random_reversible_kernel,
    "two_point": two_point_imh,
    "random_finite_imh": random_finite_imh,
    "power_law_discrete": power_law_imh,
    "pareto_target_exponential_proposal": pareto_exponential_imh,
    "pm_two_state_atoms": pm_two_state_atoms,
    "pm_two_point_lognormal": pm_two_point_lognormal,
    "pm_abc_finite": pm_abc_finite,
    "pm_abc_power_law": lambda beta, gamma: AnalyticPmFamily(beta=beta, gamma=gamma),
    "random_pm_discrete": random_pm_discrete,
}


def build_model(name: str, params: dict | None = None):
    """Instantiate a registry model by name.

    Raises
    ------
    UnknownModel
        If the name is not registered.
    """
    if name not in MODEL_REGISTRY:
        known = ", ".join(sorted(MODEL_REGISTRY))
        raise UnknownModel(f"unknown model {name!r}; known: {known}")
    return MODEL_REGISTRY[name](**(params or {}))


def build_function(spec, kernel: FiniteReversibleKernel) -> np.ndarray:
    """Resolve a function spec against a finite kernel.

    Accepts a list of values, ``{"name": "values", "values": [...]}``,
    ``{"name": "identity"}`` (state labels as numbers), or
    ``{"name": "indicator", "state": i, "centered": bool}``.
    """
    if isinstance(spec, (list, tuple, np.ndarray)):
        return np.asarray(spec, dtype=float)
    name = spec.get("name")
    if name == "values":
        return np.asarray(spec["values"], dtype=float)
    if name == "identity":
        return np.asarray(kernel.states, dtype=float)
    if name == "indicator":
        f = np.zeros(kernel.n)
        f[int(spec["state"])] = 1.0
        if spec.get("centered", True):
            f = f - float(kernel.pi @ f)
        return f
    raise UnknownModel(f"unknown function spec {spec!r}")
