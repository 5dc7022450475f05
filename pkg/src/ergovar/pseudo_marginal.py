"""Pseudo-marginal chains: noise families, auxiliary kernel, classification.

A pseudo-marginal chain targets pi(dx, du) = pibar(dx) Q_x(du) u on the
extended space of (state, multiplicative noise) pairs, where each Q_x has
unit mean, so u * pibar(x) is an unbiased nonnegative estimate of the
marginal density.  A move from (x, u) proposes y from the marginal proposal
and fresh noise v from Q_y, and accepts with ``1 ^ rbar(x, y) v/u``.

The analysis kernel R uses the same proposal with the factorized acceptance
``(1 ^ rbar)(1 ^ v/u)``, which never exceeds the pseudo-marginal acceptance,
so R's asymptotic variances dominate those of the chain itself (Peskun).
For state-independent noise R's exit probability factorizes as
``rhobar(x) * rho_U(u)`` with rho_U(u) = E[1 ^ V/u], and the unit-mean
contract pins the sandwich 1/(sbar + u) <= rho_U(u) <= 1 ^ 1/u, where sbar
bounds the noise second moments.

Exact-discrete mode (finite marginal space, finitely many noise atoms per
state) builds the full product kernels for both the chain and R and reuses
the dense oracle, turning the qualitative statements into machine-checked
inequalities.  Noise atoms at u = 0 carry zero pi-mass and are never
accepted from, so the product space excludes them; simulation likewise never
initializes at u = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import ndtr

from ._loops import mh_path, pm_path_atoms, pm_path_prenoise
from .errors import (
    MissingMoments,
    NotExactMode,
    UnevaluableNoise,
    ZeroNoiseCurrent,
)
from .finite_chain import FiniteReversibleKernel, asymptotic_variance_exact, spectral_gap
from .imh import VarianceClassification
from .rng import as_generator, spawn_streams

_GAP_POSITIVE = 1e-12


# ---------------------------------------------------------------------------
# noise families


class NoiseFamily:
    """Per-state distribution of the multiplicative noise, unit mean.

    Subclasses provide sampling, the second moment s(x) (possibly inf), its
    essential sup `s_bar` (always supplied analytically, never estimated),
    and, when the distribution is atomic, the exact atoms at each state.
    """

    kind = "custom"
    state_independent = False

    def sample(self, x, rng, size=None):
        raise NotImplementedError

    def second_moment(self, x) -> float:
        raise NotImplementedError

    @property
    def s_bar(self) -> float:
        raise NotImplementedError

    def atoms(self, x=None):
        """(values, probs) arrays, or None when the family is not atomic."""
        return None


class AtomNoise(NoiseFamily):
    """State-independent noise supported on finitely many atoms."""

    kind = "atoms"
    state_independent = True

    def __init__(self, pairs):
        pairs = [(float(v), float(p)) for v, p in pairs]
        values = np.array([v for v, _ in pairs])
        probs = np.array([p for _, p in pairs])
        if np.min(values) < 0:
            raise ValueError("noise values must be >= 0")
        if np.min(probs) <= 0 or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("atom probabilities must be positive and sum to 1")
        mean = float(values @ probs)
        if abs(mean - 1.0) > 1e-10:
            raise ValueError(f"noise mean must be 1, got {mean!r}")
        order = np.argsort(values)
        self.values = values[order]
        self.probs = probs[order]
        self._cum = np.cumsum(self.probs)

    def sample(self, x, rng, size=None):
        u = rng.random(size)
        idx = np.minimum(np.searchsorted(self._cum, u, side="right"), len(self.values) - 1)
        return self.values[idx]

    def second_moment(self, x=None) -> float:
        return float(self.probs @ self.values**2)

    @property
    def s_bar(self) -> float:
        return self.second_moment()

    def atoms(self, x=None):
        return self.values, self.probs


def unit_noise() -> AtomNoise:
    """Point mass at 1: the pseudo-marginal chain collapses to the marginal."""
    return AtomNoise([(1.0, 1.0)])


class AbcNoise(NoiseFamily):
    """Two-atom likelihood noise Q_x({1/h(x)}) = h(x) = 1 - Q_x({0}).

    `h` maps states to (0, 1); a vector is indexed by state, a scalar gives a
    state-independent family.  The second moment is 1/h(x).
    """

    kind = "abc"

    def __init__(self, h):
        if np.isscalar(h):
            self.h = None
            self._h_const = float(h)
            self.state_independent = True
            hmin, hmax = self._h_const, self._h_const
        else:
            self.h = np.asarray(h, dtype=float)
            self._h_const = None
            self.state_independent = False
            hmin, hmax = float(np.min(self.h)), float(np.max(self.h))
        if hmin <= 0.0 or hmax > 1.0:
            raise ValueError("h must take values in (0, 1]")
        self._s_bar = 1.0 / hmin

    def _h_at(self, x) -> float:
        return self._h_const if self.h is None else float(self.h[x])

    def sample(self, x, rng, size=None):
        h = self._h_at(x)
        return np.where(rng.random(size) < h, 1.0 / h, 0.0)

    def second_moment(self, x) -> float:
        return 1.0 / self._h_at(x)

    @property
    def s_bar(self) -> float:
        return self._s_bar

    def atoms(self, x=None):
        if x is None and not self.state_independent:
            raise ValueError("state-dependent family: atoms need a state")
        h = self._h_at(x)
        return np.array([0.0, 1.0 / h]), np.array([1.0 - h, h])


class LognormalNoise(NoiseFamily):
    """Lognormal noise with unit mean: exp N(-sigma2/2, sigma2).

    Continuous, so there are no atoms, but the acceptance expectations have
    closed forms used by the profile and sandwich checks.
    """

    kind = "lognormal_mean1"
    state_independent = True

    def __init__(self, sigma2):
        if sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        self.sigma2 = float(sigma2)
        self._m = -self.sigma2 / 2.0
        self._s = float(np.sqrt(self.sigma2))

    def sample(self, x, rng, size=None):
        return rng.lognormal(mean=self._m, sigma=self._s, size=size)

    def sample_size_biased(self, x, rng, size=None):
        # law of u under pi(dx, du) given x, i.e. Q(du) u
        return rng.lognormal(mean=self._m + self.sigma2, sigma=self._s, size=size)

    def second_moment(self, x=None) -> float:
        return float(np.exp(self.sigma2))

    @property
    def s_bar(self) -> float:
        return self.second_moment()

    def threshold_expectation(self, c: float) -> float:
        """E[1 ^ V/c] in closed form."""
        if c <= 0:
            return 1.0
        z = (np.log(c) - self._m) / self._s
        return float((1.0 - ndtr(z)) + ndtr(z - self._s) / c)

    def pairwise_min_mean(self) -> float:
        """E[min(U, V)] for independent copies; equals 2 Phi(-sigma/sqrt 2)."""
        return float(2.0 * ndtr(-self._s / np.sqrt(2.0)))


class AveragedNoise(NoiseFamily):
    """Average of N independent copies of a base family.

    Averaging shrinks the excess second moment: s_N(x) = 1 + (s(x) - 1)/N.
    Atomic bases stay atomic (N-fold convolution, rescaled).
    """

    kind = "averaged"

    def __init__(self, base: NoiseFamily, n_avg: int):
        if n_avg < 1:
            raise ValueError("n_avg must be >= 1")
        self.base = base
        self.n_avg = int(n_avg)
        self.state_independent = base.state_independent
        self._atom_cache = {}

    def sample(self, x, rng, size=None):
        shape = (self.n_avg,) if size is None else (np.prod(size), self.n_avg)
        draws = self.base.sample(x, rng, shape)
        out = draws.mean(axis=-1)
        return out if size is None else out.reshape(size)

    def second_moment(self, x) -> float:
        s = self.base.second_moment(x)
        return 1.0 + (s - 1.0) / self.n_avg

    @property
    def s_bar(self) -> float:
        return 1.0 + (self.base.s_bar - 1.0) / self.n_avg

    def atoms(self, x=None):
        base_atoms = self.base.atoms(x)
        if base_atoms is None:
            return None
        key = None if x is None or self.state_independent else int(x)
        if key not in self._atom_cache:
            values, probs = base_atoms
            dist = {0.0: 1.0}
            for _ in range(self.n_avg):
                new = {}
                for s, ps in dist.items():
                    for v, pv in zip(values, probs):
                        t = round(s + v, 12)
                        new[t] = new.get(t, 0.0) + ps * pv
                dist = new
            vals = np.array(sorted(dist)) / self.n_avg
            ps = np.array([dist[v] for v in sorted(dist)])
            self._atom_cache[key] = (vals, ps)
        return self._atom_cache[key]


class CustomNoise(NoiseFamily):
    """Sampler-only family; second moments must be supplied, never estimated."""

    kind = "custom"

    def __init__(self, sampler, second_moment, s_bar=None, state_independent=True):
        self._sampler = sampler
        self._second_moment = second_moment
        self._s_bar = float(s_bar) if s_bar is not None else float(second_moment)
        self.state_independent = state_independent

    def sample(self, x, rng, size=None):
        return self._sampler(x, rng, size)

    def second_moment(self, x=None) -> float:
        return float(self._second_moment(x)) if callable(self._second_moment) else float(
            self._second_moment
        )

    @property
    def s_bar(self) -> float:
        return self._s_bar


def noise_from_config(cfg: dict) -> NoiseFamily:
    """Build a noise family from its configuration dictionary."""
    kind = cfg.get("kind")
    if kind == "atoms":
        return AtomNoise(cfg["atoms"])
    if kind == "abc":
        return AbcNoise(cfg["h"])
    if kind == "lognormal_mean1":
        return LognormalNoise(cfg["sigma2"])
    if kind == "averaged":
        return AveragedNoise(noise_from_config(cfg["base"]), cfg["N"])
    if kind == "point":
        return unit_noise()
    raise ValueError(f"unknown noise kind {kind!r}")


# ---------------------------------------------------------------------------
# models and single steps


@dataclass(frozen=True, eq=False)
class MarginalModel:
    """Finite marginal target, proposal matrix, and induced MH quantities."""

    states: np.ndarray
    pi_bar: np.ndarray
    q_bar: np.ndarray
    name: str = ""

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        pi_bar = np.asarray(self.pi_bar, dtype=float)
        q_bar = np.asarray(self.q_bar, dtype=float)
        n = len(states)
        if pi_bar.shape != (n,) or q_bar.shape != (n, n):
            raise ValueError("inconsistent marginal shapes")
        if np.min(pi_bar) <= 0 or abs(pi_bar.sum() - 1.0) > 1e-12:
            raise ValueError("pi_bar must be a strictly positive probability vector")
        if np.min(q_bar) < 0 or np.max(np.abs(q_bar.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("q_bar must be row-stochastic")
        if not np.array_equal(q_bar > 0, (q_bar > 0).T):
            raise ValueError("proposal support pattern must be symmetric")
        for arr in (states, pi_bar, q_bar):
            arr.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "pi_bar", pi_bar)
        object.__setattr__(self, "q_bar", q_bar)

    @property
    def n(self) -> int:
        return len(self.states)

    def rbar_matrix(self) -> np.ndarray:
        """rbar(x, y) = pi_bar(y) q_bar(y, x) / (pi_bar(x) q_bar(x, y))."""
        num = self.pi_bar[None, :] * self.q_bar.T
        den = self.pi_bar[:, None] * self.q_bar
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        return r

    def alpha_bar(self) -> np.ndarray:
        return np.minimum(1.0, self.rbar_matrix())

    def rho_bar(self) -> np.ndarray:
        """Marginal acceptance probability from each state (self-proposals count)."""
        return (self.q_bar * self.alpha_bar()).sum(axis=1)

    def mh_kernel(self) -> FiniteReversibleKernel:
        """The marginal Metropolis-Hastings transition matrix."""
        A = self.q_bar * self.alpha_bar()
        P = A.copy()
        np.fill_diagonal(P, 0.0)
        np.fill_diagonal(P, 1.0 - P.sum(axis=1))
        return FiniteReversibleKernel(states=tuple(self.states), matrix=P, pi=self.pi_bar)

    def jump_kernel_acceptance(self) -> FiniteReversibleKernel:
        """Accepted-proposal chain of the marginal sampler (may hold via
        accepted self-proposals), with invariant law prop. to pi_bar * rho_bar."""
        rho = self.rho_bar()
        Pt = (self.q_bar * self.alpha_bar()) / rho[:, None]
        pt = self.pi_bar * rho
        return FiniteReversibleKernel(
            states=tuple(self.states), matrix=Pt, pi=pt / pt.sum()
        )

    @property
    def independent_proposal(self) -> np.ndarray | None:
        """mu_bar when all proposal rows coincide, else None."""
        if np.max(np.abs(self.q_bar - self.q_bar[0][None, :])) < 1e-14:
            return self.q_bar[0]
        return None


@dataclass(frozen=True, eq=False)
class PmModel:
    """Marginal model plus a unit-mean noise family."""

    marginal: MarginalModel
    noise: NoiseFamily
    name: str = ""

    @property
    def exact_discrete(self) -> bool:
        try:
            return all(
                self.noise.atoms(x) is not None for x in range(self.marginal.n)
            )
        except ValueError:
            return False

    def _require_exact(self, op: str) -> None:
        if not self.exact_discrete:
            raise NotExactMode(f"{op} needs finitely many noise atoms per state")


@dataclass(frozen=True)
class PmState:
    """Extended-chain state: marginal state index and current noise value."""

    x: int
    u: float


def pm_step(model: PmModel, state: PmState, rng) -> PmState:
    """One pseudo-marginal transition: accept (y, v) with 1 ^ rbar v/u."""
    if state.u <= 0.0:
        raise ZeroNoiseCurrent("pseudo-marginal step undefined at u = 0")
    rng = as_generator(rng)
    m = model.marginal
    cum = np.cumsum(m.q_bar[state.x])
    y = min(int(np.searchsorted(cum, rng.random(), side="right")), m.n - 1)
    v = float(model.noise.sample(y, rng))
    if rng.random() * state.u < m.rbar_matrix()[state.x, y] * v:
        return PmState(x=y, u=v)
    return state


def aux_kernel_step(model: PmModel, state: PmState, rng) -> PmState:
    """One step of the auxiliary kernel with acceptance (1 ^ rbar)(1 ^ v/u).

    The factorized acceptance never exceeds the pseudo-marginal one; this is
    asserted on every computed pair.
    """
    if state.u <= 0.0:
        raise ZeroNoiseCurrent("auxiliary step undefined at u = 0")
    rng = as_generator(rng)
    m = model.marginal
    cum = np.cumsum(m.q_bar[state.x])
    y = min(int(np.searchsorted(cum, rng.random(), side="right")), m.n - 1)
    v = float(model.noise.sample(y, rng))
    rbar = m.rbar_matrix()[state.x, y]
    alpha = min(1.0, rbar * v / state.u)
    alpha_r = min(1.0, rbar) * min(1.0, v / state.u)
    assert alpha_r <= alpha + 1e-15
    if rng.random() < alpha_r:
        return PmState(x=y, u=v)
    return state


def stationary_noise_draw(noise: NoiseFamily, x: int, rng) -> float:
    """Draw u from its conditional stationary law Q_x(du) u at state x.

    Exact for atomic families and lognormal noise; other families fall back
    to a positive plain draw (then a burn-in is advisable).
    """
    atoms = noise.atoms(x)
    if atoms is not None:
        values, probs = atoms
        weights = values * probs
        cum = np.cumsum(weights / weights.sum())
        idx = min(int(np.searchsorted(cum, rng.random(), side="right")), len(values) - 1)
        return float(values[idx])
    if isinstance(noise, LognormalNoise):
        return float(noise.sample_size_biased(x, rng))
    while True:  # initialization must avoid the u = 0 boundary
        v = float(noise.sample(x, rng))
        if v > 0:
            return v


def pm_simulate(model: PmModel, n: int, seed, burn_in: int = 0):
    """Simulate n states of the pseudo-marginal chain.

    Returns (xs, us): state indices and noise values, with xs[0] the initial
    state drawn from the marginal target and us[0] from its conditional
    stationary law where that is exactly available.  The proposal and
    acceptance uniforms come from streams independent of the noise stream, so
    a run with unit noise is coupled step for step to
    :func:`mh_simulate_marginal` with the same seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    init_rng, prop_rng, noise_rng, acc_rng = spawn_streams(seed, 4)
    m = model.marginal
    total = n - 1 + burn_in
    cum_pi = np.cumsum(m.pi_bar)
    x0 = min(int(np.searchsorted(cum_pi, init_rng.random(), side="right")), m.n - 1)
    u0 = stationary_noise_draw(model.noise, x0, init_rng)
    q_cum = np.cumsum(m.q_bar, axis=1)
    rbar = m.rbar_matrix()
    up = prop_rng.random(total)
    ua = acc_rng.random(total)

    atoms_ok = model.exact_discrete
    if atoms_ok:
        per_state = [model.noise.atoms(x) for x in range(m.n)]
        k = max(len(v) for v, _ in per_state)
        atom_vals = np.zeros((m.n, k))
        atom_cum = np.ones((m.n, k))
        atom_len = np.zeros(m.n, dtype=np.int64)
        for i, (vals, probs) in enumerate(per_state):
            atom_len[i] = len(vals)
            atom_vals[i, : len(vals)] = vals
            atom_cum[i, : len(vals)] = np.cumsum(probs)
        uv = noise_rng.random(total)
        xs, us = pm_path_atoms(
            q_cum, rbar, atom_cum, atom_vals, atom_len, x0, u0, up, uv, ua
        )
    elif model.noise.state_independent:
        vs = np.asarray(model.noise.sample(None, noise_rng, total), dtype=float)
        xs, us = pm_path_prenoise(q_cum, rbar, vs, x0, u0, up, ua)
    else:
        xs = np.empty(total + 1, dtype=np.int64)
        us = np.empty(total + 1)
        state = PmState(x0, u0)
        xs[0], us[0] = state.x, state.u
        for i in range(total):
            y = min(int(np.searchsorted(q_cum[state.x], up[i], side="right")), m.n - 1)
            v = float(model.noise.sample(y, noise_rng))
            if ua[i] * state.u < rbar[state.x, y] * v:
                state = PmState(y, v)
            xs[i + 1], us[i + 1] = state.x, state.u
    return xs[burn_in:], us[burn_in:]


def mh_simulate_marginal(marginal: MarginalModel, n: int, seed, burn_in: int = 0):
    """Simulate the marginal MH chain with the pm_simulate stream layout."""
    if n < 1:
        raise ValueError("n must be >= 1")
    init_rng, prop_rng, _noise, acc_rng = spawn_streams(seed, 4)
    total = n - 1 + burn_in
    cum_pi = np.cumsum(marginal.pi_bar)
    x0 = min(int(np.searchsorted(cum_pi, init_rng.random(), side="right")), marginal.n - 1)
    q_cum = np.cumsum(marginal.q_bar, axis=1)
    xs = mh_path(q_cum, marginal.rbar_matrix(), x0, prop_rng.random(total), acc_rng.random(total))
    return xs[burn_in:]


# ---------------------------------------------------------------------------
# acceptance-probability bounds


class SandwichReport(NamedTuple):
    value: float
    lower: float
    upper: float
    ok: bool
    stderr: float | None


class NoiseProfile(NamedTuple):
    value: float
    lower: float
    upper: float
    pair_mean: float
    pair_lower: float
    stderr: float | None


def _threshold_expectation(noise: NoiseFamily, c: float, x=None, mc: int | None = None, seed=0):
    """E[1 ^ V/c] for V ~ Q_x: exact for atoms, closed form for lognormal,
    Monte Carlo (value, stderr) when `mc` draws are allowed."""
    atoms = noise.atoms(x)
    if atoms is not None:
        values, probs = atoms
        return float(probs @ np.minimum(1.0, values / c)), None
    if isinstance(noise, LognormalNoise):
        return noise.threshold_expectation(c), None
    if mc is None:
        raise UnevaluableNoise("no atoms or closed form; pass mc=<draws> for Monte Carlo")
    rng = as_generator(seed)
    draws = np.minimum(1.0, np.asarray(noise.sample(x, rng, mc), dtype=float) / c)
    return float(draws.mean()), float(draws.std(ddof=1) / np.sqrt(mc))


def acceptance_sandwich(
    noise: NoiseFamily, c: float, x=None, mc: int | None = None, seed=0
) -> SandwichReport:
    """Check 1/(E[Y^2] + c) <= E[1 ^ Y/c] <= 1 ^ 1/c for unit-mean Y ~ Q_x.

    Exact evaluations must satisfy the sandwich to 1e-10; Monte Carlo ones to
    4 standard errors.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    value, stderr = _threshold_expectation(noise, c, x=x, mc=mc, seed=seed)
    s = noise.second_moment(x)
    lower = 0.0 if not np.isfinite(s) else 1.0 / (s + c)
    upper = min(1.0, 1.0 / c)
    slack = 1e-10 if stderr is None else 4.0 * stderr
    ok = (value >= lower - slack) and (value <= upper + slack)
    return SandwichReport(value, lower, upper, ok, stderr)


def noise_acceptance_profile(
    noise: NoiseFamily, u: float, x=None, mc: int | None = None, seed=0
) -> NoiseProfile:
    """rho_U(u) = E[1 ^ V/u] with its sandwich, plus the weighted mean.

    `pair_mean` is E[U rho_U(U)] = E[min(U, V)] for independent copies, which
    the unit-mean contract bounds below by 1/(2 sbar).
    """
    if u <= 0:
        raise ValueError("u must be positive")
    value, stderr = _threshold_expectation(noise, u, x=x, mc=mc, seed=seed)
    s_bar = noise.s_bar
    lower = 0.0 if not np.isfinite(s_bar) else 1.0 / (s_bar + u)
    upper = min(1.0, 1.0 / u)
    atoms = noise.atoms(x)
    if atoms is not None:
        values, probs = atoms
        pair_mean = float(probs @ (np.minimum.outer(values, values) @ probs))
    elif isinstance(noise, LognormalNoise):
        pair_mean = noise.pairwise_min_mean()
    elif mc is not None:
        rng = as_generator(seed)
        a = np.asarray(noise.sample(x, rng, mc), dtype=float)
        b = np.asarray(noise.sample(x, rng, mc), dtype=float)
        pair_mean = float(np.minimum(a, b).mean())
    else:
        raise UnevaluableNoise("no atoms or closed form; pass mc=<draws> for Monte Carlo")
    pair_lower = 0.0 if not np.isfinite(s_bar) else 1.0 / (2.0 * s_bar)
    return NoiseProfile(value, lower, upper, pair_mean, pair_lower, stderr)


class AuxExitReport(NamedTuple):
    rho_r: float
    lower: float
    upper: float
    ok_pointwise: bool
    rho_r_x: float
    lower_x: float
    upper_x: float
    ok_weighted: bool


def aux_exit_probability(model: PmModel, x: int, u: float) -> float:
    """Exact exit probability of the auxiliary kernel from (x, u)."""
    model._require_exact("aux_exit_probability")
    if u <= 0:
        raise ZeroNoiseCurrent("exit probability evaluated at u = 0")
    m = model.marginal
    qa = m.q_bar[x] * m.alpha_bar()[x]
    inner = np.empty(m.n)
    for y in range(m.n):
        values, probs = model.noise.atoms(y)
        inner[y] = probs @ np.minimum(1.0, values / u)
    return float(qa @ inner)


def aux_exit_bounds_check(model: PmModel, state: PmState, tol: float = 1e-10) -> AuxExitReport:
    """Both sandwiches on the auxiliary kernel's exit probabilities.

    Pointwise: rhobar(x)/(sbar + u) <= rho_R(x, u) <= rhobar(x)(1 ^ 1/u).
    Noise-weighted: rhobar(x)/(2 sbar) <= E[U rho_R(x, U)] <= rhobar(x).
    Exact-discrete mode only; evaluated at u > 0.
    """
    model._require_exact("aux_exit_bounds_check")
    if state.u <= 0:
        raise ZeroNoiseCurrent("bounds are checked at u > 0 only")
    m = model.marginal
    rho_bar_x = float(m.rho_bar()[state.x])
    s_bar = model.noise.s_bar
    rho_r = aux_exit_probability(model, state.x, state.u)
    lower = rho_bar_x / (s_bar + state.u)
    upper = rho_bar_x * min(1.0, 1.0 / state.u)
    ok1 = lower - tol <= rho_r <= upper + tol

    values, probs = model.noise.atoms(state.x)
    keep = values > 0
    rho_r_x = float(
        sum(
            p * v * aux_exit_probability(model, state.x, v)
            for v, p in zip(values[keep], probs[keep])
        )
    )
    lower_x = rho_bar_x / (2.0 * s_bar)
    upper_x = rho_bar_x
    ok2 = lower_x - tol <= rho_r_x <= upper_x + tol
    return AuxExitReport(rho_r, lower, upper, ok1, rho_r_x, lower_x, upper_x, ok2)


# ---------------------------------------------------------------------------
# exact-discrete product chains


@dataclass(frozen=True, eq=False)
class ProductChains:
    """Dense product-space kernels for the chain and its auxiliary kernel."""

    kernel_p: FiniteReversibleKernel
    kernel_r: FiniteReversibleKernel
    pairs: tuple  # (state index, noise value) per product state
    marginal_states: np.ndarray

    def function(self, f, x_only: bool = False) -> np.ndarray:
        """Evaluate f(x_value, u) (or f(x_value)) on the product states."""
        xs = self.marginal_states[np.array([p[0] for p in self.pairs])]
        if x_only:
            return np.asarray(f(xs), dtype=float)
        us = np.array([p[1] for p in self.pairs])
        return np.asarray(f(xs, us), dtype=float)


def product_chains(model: PmModel) -> ProductChains:
    """Build the exact product kernels on {x} x {positive noise atoms at x}.

    Atoms at u = 0 carry no target mass and are never accepted from, so they
    enter only through rejected proposals; the product space excludes them.
    """
    model._require_exact("product_chains")
    m = model.marginal
    pairs = []
    weights = []
    for x in range(m.n):
        values, probs = model.noise.atoms(x)
        for v, p in zip(values, probs):
            if v > 0:
                pairs.append((x, float(v)))
                weights.append(m.pi_bar[x] * p * v)
    pairs = tuple(pairs)
    pi = np.array(weights)
    pi = pi / pi.sum()
    N = len(pairs)
    rbar = m.rbar_matrix()
    atom_prob = {}
    for x in range(m.n):
        values, probs = model.noise.atoms(x)
        atom_prob[x] = {float(v): float(p) for v, p in zip(values, probs)}

    P = np.zeros((N, N))
    R = np.zeros((N, N))
    for s, (x, u) in enumerate(pairs):
        for t, (y, v) in enumerate(pairs):
            if t == s:
                continue
            prop = m.q_bar[x, y] * atom_prob[y][v]
            if prop == 0.0:
                continue
            P[s, t] = prop * min(1.0, rbar[x, y] * v / u)
            R[s, t] = prop * min(1.0, rbar[x, y]) * min(1.0, v / u)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    np.fill_diagonal(R, 1.0 - R.sum(axis=1))
    labels = tuple((m.states[x], u) for x, u in pairs)
    kernel_p = FiniteReversibleKernel(states=labels, matrix=P, pi=pi)
    kernel_r = FiniteReversibleKernel(states=labels, matrix=R, pi=pi)
    return ProductChains(
        kernel_p=kernel_p, kernel_r=kernel_r, pairs=pairs, marginal_states=m.states
    )


def peskun_ordered(model: PmModel, f, x_only: bool = False, tol: float = 1e-12):
    """avar(f, P) <= avar(f, R) on the exact product chains.

    Returns (var_p, var_r, ok); the factorized acceptance can only lose.
    """
    prod = product_chains(model)
    fv = prod.function(f, x_only=x_only)
    var_p = asymptotic_variance_exact(prod.kernel_p, fv)
    var_r = asymptotic_variance_exact(prod.kernel_r, fv)
    return var_p, var_r, var_p <= var_r + tol


# ---------------------------------------------------------------------------
# classification and sufficiency


def _centered_product_moments(model: PmModel, f, x_only: bool):
    """(fbar over atoms, helper sums) for exact-discrete classification."""
    m = model.marginal
    if x_only:
        fx = np.asarray(f(m.states), dtype=float)
        c = float(m.pi_bar @ fx)
        return fx - c, None
    total = 0.0
    for x in range(m.n):
        values, probs = model.noise.atoms(x)
        total += m.pi_bar[x] * float(np.sum(probs * values * f(m.states[x], values)))
    return None, total


def classify_independent_proposal(
    model: PmModel, f, x_only: bool = False, moments: tuple[float, float] | None = None
) -> VarianceClassification:
    """Finite-variance classification when the marginal proposal is independent.

    The chain is then itself an independence sampler on (x, u) with weight
    ``w(x, u) = u * dpibar/dmubar(x)``, so avar(f, P) is finite iff f is in
    L2_0(pi) and the weighted second moment

        integral  u^2 (dpibar/dmubar)(x) f(x, u)^2  pibar(dx) Q_x(du)

    is finite; for f depending on x alone this reduces to
    ``sum pibar(x) (dpibar/dmubar)(x) s(x) f(x)^2``.  Exact-discrete models
    (or `x_only` with evaluable s) are summed exactly; otherwise pass
    ``moments = (pi_f2, criterion)`` computed analytically.
    """
    mu_bar = model.marginal.independent_proposal
    if mu_bar is None:
        raise ValueError("classification requires an independent marginal proposal")
    if moments is not None:
        return VarianceClassification.from_moments(*moments)
    m = model.marginal
    w_marg = m.pi_bar / mu_bar
    if x_only:
        fx = np.asarray(f(m.states), dtype=float)
        fbar = fx - float(m.pi_bar @ fx)
        s = np.array([model.noise.second_moment(x) for x in range(m.n)])
        pi_f2 = float(m.pi_bar @ fbar**2)
        criterion = float(np.sum(m.pi_bar * w_marg * s * fbar**2))
        return VarianceClassification.from_moments(pi_f2, criterion)
    if not model.exact_discrete:
        raise MissingMoments("need noise atoms, x_only reduction, or explicit moments")
    _, pi_f = _centered_product_moments(model, f, x_only=False)
    pi_f2 = 0.0
    criterion = 0.0
    for x in range(m.n):
        values, probs = model.noise.atoms(x)
        fbar = np.asarray(f(m.states[x], values), dtype=float) - pi_f
        pi_f2 += m.pi_bar[x] * float(np.sum(probs * values * fbar**2))
        criterion += m.pi_bar[x] * w_marg[x] * float(np.sum(probs * values**2 * fbar**2))
    return VarianceClassification.from_moments(pi_f2, criterion)


@dataclass(frozen=True)
class SufficiencyEntry:
    """Outcome of one sufficiency condition: hypothesis statuses, the
    criterion integral where evaluable, and the conclusion it supports."""

    hypotheses: dict
    criterion_value: float | None
    applies: bool
    conclusion: str
    detail: str = ""


@dataclass(frozen=True)
class SufficiencyReport:
    bounded_noise_condition: SufficiencyEntry
    independent_noise_condition: SufficiencyEntry


def _hypothesis_status(verified: bool | None, asserted: bool | None):
    """(status string, holds?) from an exact check or a caller assertion."""
    if verified is not None:
        return ("verified" if verified else "failed"), verified
    if asserted is not None:
        return ("assumed" if asserted else "failed"), asserted
    return "not established", False


def sufficiency_report(
    model: PmModel,
    f,
    x_only: bool = False,
    marginal_vb: bool | None = None,
    jump_vb: bool | None = None,
) -> SufficiencyReport:
    """Check the two sufficient conditions for finite avar(f, P).

    The first needs the marginal chain variance bounding (its right gap
    positive) and uniformly bounded noise second moments, and concludes from
    the integral of f^2 against pibar(dx) Q_x(du) u^2.  The second is weaker
    on the marginal side: it needs only the marginal accepted-proposal chain
    variance bounding, but requires state-independent noise; for functions of
    x alone it concludes directly from avar(f, marginal) being finite.

    On finite marginal spaces both gap hypotheses are verified exactly;
    otherwise pass `marginal_vb` / `jump_vb` as caller assertions, recorded
    as such.
    """
    m = model.marginal
    s_bar = model.noise.s_bar
    gap_m = spectral_gap(m.mh_kernel()).gap
    gap_j = spectral_gap(m.jump_kernel_acceptance()).gap
    status_m, holds_m = _hypothesis_status(gap_m > _GAP_POSITIVE, marginal_vb)
    status_j, holds_j = _hypothesis_status(gap_j > _GAP_POSITIVE, jump_vb)
    s_finite = bool(np.isfinite(s_bar))

    # first condition: second-moment integral against pibar x Q_x, weight u^2
    criterion1 = None
    if x_only:
        fx = np.asarray(f(m.states), dtype=float)
        fbar = fx - float(m.pi_bar @ fx)
        s = np.array([model.noise.second_moment(x) for x in range(m.n)])
        criterion1 = float(np.sum(m.pi_bar * fbar**2 * s))
    elif model.exact_discrete:
        _, pi_f = _centered_product_moments(model, f, x_only=False)
        criterion1 = 0.0
        for x in range(m.n):
            values, probs = model.noise.atoms(x)
            fbar = np.asarray(f(m.states[x], values), dtype=float) - pi_f
            criterion1 += m.pi_bar[x] * float(np.sum(probs * values**2 * fbar**2))
    applies1 = holds_m and s_finite and criterion1 is not None and np.isfinite(criterion1)
    entry1 = SufficiencyEntry(
        hypotheses={
            "marginal chain variance bounding": status_m,
            "noise second moments uniformly bounded": "verified" if s_finite else "failed",
        },
        criterion_value=criterion1,
        applies=applies1,
        conclusion="finite" if applies1 else "no conclusion",
        detail=f"marginal right gap {gap_m:.6g}, s_bar {s_bar:.6g}",
    )

    # second condition: state-independent noise, marginal jump chain gap
    indep = model.noise.state_independent
    criterion2 = None
    var_marginal = None
    if indep:
        rho_bar = m.rho_bar()
        if x_only:
            fx = np.asarray(f(m.states), dtype=float)
            fbar = fx - float(m.pi_bar @ fx)
            var_marginal = asymptotic_variance_exact(m.mh_kernel(), fbar)
            criterion2 = float(np.sum(m.pi_bar * fbar**2 / rho_bar) * 2.0 * s_bar)
        elif model.exact_discrete:
            _, pi_f = _centered_product_moments(model, f, x_only=False)
            criterion2 = 0.0
            for x in range(m.n):
                values, probs = model.noise.atoms(x)
                fbar = np.asarray(f(m.states[x], values), dtype=float) - pi_f
                criterion2 += (
                    m.pi_bar[x]
                    / rho_bar[x]
                    * float(np.sum(probs * (values + s_bar) * values * fbar**2))
                )
    route2 = (
        criterion2 is not None and np.isfinite(criterion2)
    ) or (x_only and var_marginal is not None and np.isfinite(var_marginal))
    applies2 = indep and holds_j and s_finite and route2
    entry2 = SufficiencyEntry(
        hypotheses={
            "state-independent noise": "verified" if indep else "failed",
            "marginal jump chain variance bounding": status_j,
            "noise second moments uniformly bounded": "verified" if s_finite else "failed",
        },
        criterion_value=criterion2,
        applies=applies2,
        conclusion="finite" if applies2 else "no conclusion",
        detail=(
            f"jump right gap {gap_j:.6g}"
            + ("" if var_marginal is None else f", marginal avar {var_marginal:.6g}")
        ),
    )
    return SufficiencyReport(
        bounded_noise_condition=entry1, independent_noise_condition=entry2
    )


def mean_contract_check(noise: NoiseFamily, x, n: int = 100_000, seed: int = 0):
    """Empirical unit-mean check: |mean - 1| <= 4 sqrt(s(x)-1)/sqrt(n).

    Returns (mean, tolerance, ok); ok is None when s(x) is infinite (no
    usable error bar).
    """
    rng = as_generator(seed)
    draws = np.asarray(noise.sample(x, rng, n), dtype=float)
    if np.min(draws) < 0:
        raise ValueError("noise draws must be nonnegative")
    mean = float(draws.mean())
    s = noise.second_moment(x)
    if not np.isfinite(s):
        return mean, float("inf"), None
    tol = 4.0 * np.sqrt(max(s - 1.0, 0.0)) / np.sqrt(n) + 1e-12
    return mean, tol, bool(abs(mean - 1.0) <= tol)
