"""Config-driven experiment runner.

Every built-in experiment turns one checkable claim into a deterministic
run: given (config, master seed) it produces the same CSV bytes, a set of
named pass/fail checks, and static figures.  Replicates fan out over a
thread pool (the compiled loops release the GIL) with one random stream per
(master seed, replicate); aggregation is by replicate index, so the worker
count never changes any output.

CSV schema (fixed): experiment, model, function, n, replicate, seed, metric,
value, stderr, oracle_value, check_name, check_passed.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import models, plotting
from .errors import InvalidConfig, UnknownModel
from .estimators import batch_means, divergence_scan
from .finite_chain import asymptotic_variance_exact, centered, spectral_gap
from .imh import (
    VarianceClassification,
    envelope_bounds,
    imh_simulate,
    minorization_check,
    rho_and_bounds,
)
from .jump_chain import (
    decompose,
    estimator_variances_exact,
    gap_inheritance_check,
    geo_estimate,
    rb_estimate,
    simulate_jump_path,
    variance_identity_residual,
)
from .pseudo_marginal import (
    AbcNoise,
    AtomNoise,
    AveragedNoise,
    CustomNoise,
    LognormalNoise,
    MarginalModel,
    PmModel,
    PmState,
    acceptance_sandwich,
    aux_exit_bounds_check,
    classify_independent_proposal,
    mh_simulate_marginal,
    noise_acceptance_profile,
    peskun_ordered,
    pm_simulate,
    product_chains,
    sufficiency_report,
)
from .rng import stream


class Check(NamedTuple):
    name: str
    passed: bool
    value: float | None
    detail: str


@dataclass
class ExperimentConfig:
    """One experiment run: model/function specs, sizes, seed, output."""

    experiment: str
    model: dict = field(default_factory=dict)
    function: dict | list | None = None
    n: int = 0
    replicates: int = 1
    master_seed: int = 0
    out_dir: str = "results"
    workers: int = 1
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            known = ", ".join(sorted(EXPERIMENTS))
            raise UnknownModel(f"unknown experiment {self.experiment!r}; known: {known}")
        if self.n < 1:
            raise InvalidConfig(f"field 'n': must be >= 1, got {self.n}")
        if self.replicates < 1:
            raise InvalidConfig(f"field 'replicates': must be >= 1, got {self.replicates}")
        if self.workers < 1:
            raise InvalidConfig(f"field 'workers': must be >= 1, got {self.workers}")


@dataclass
class RunReport:
    """Everything one run produced, before and after it hit disk."""

    experiment: str
    claim: str
    rows: list
    checks: list
    figures: list
    csv_path: str | None
    elapsed_s: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


_COLUMNS = (
    "experiment",
    "model",
    "function",
    "n",
    "replicate",
    "seed",
    "metric",
    "value",
    "stderr",
    "oracle_value",
    "check_name",
    "check_passed",
)


def _row(experiment, model="", function="", n="", replicate="", seed="", metric="",
         value=None, stderr=None, oracle_value=None, check_name="", check_passed=""):
    def fmt(v):
        if v is None or v == "":
            return ""
        if isinstance(v, float):
            return repr(v)
        return v
    return {
        "experiment": experiment,
        "model": model,
        "function": function,
        "n": n,
        "replicate": replicate,
        "seed": seed,
        "metric": metric,
        "value": fmt(value),
        "stderr": fmt(stderr),
        "oracle_value": fmt(oracle_value),
        "check_name": check_name,
        "check_passed": check_passed,
    }


def _map_indexed(fn: Callable[[int], object], count: int, workers: int) -> list:
    """fn(i) for i in range(count), results in index order."""
    if workers <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


# ---------------------------------------------------------------------------
# experiment runners


def _run_jump_identity_sweep(cfg: ExperimentConfig, out: Path):
    n_kernels = cfg.replicates
    rows, residuals = [], []
    ok_identity = ok_gap = ok_geo = True
    worst = 0.0
    for i in range(n_kernels):
        rng = stream(cfg.master_seed, i)
        kernel = models.random_reversible_kernel(rng, n_max=cfg.params.get("max_states", 20))
        f = models.random_centered_function(kernel, rng)
        lhs = asymptotic_variance_exact(kernel, f)
        res = variance_identity_residual(kernel, f)
        rel = res / max(1.0, abs(lhs))
        worst = max(worst, rel)
        residuals.append(rel)
        ok_identity &= rel <= 1e-10
        gaps = gap_inheritance_check(kernel)
        ok_gap &= gaps.ok
        ev = estimator_variances_exact(kernel, f)
        pr = decompose(kernel).pi_rho
        geo_err = abs(ev.sigma2_geo - pr * lhs) / max(1.0, abs(pr * lhs))
        ok_geo &= geo_err <= 1e-10
        rows += [
            _row(cfg.experiment, model=f"random_reversible[{kernel.n}]", function="random_centered",
                 replicate=i, seed=cfg.master_seed, metric="identity_residual_rel",
                 value=rel, oracle_value=lhs),
            _row(cfg.experiment, model=f"random_reversible[{kernel.n}]", replicate=i,
                 seed=cfg.master_seed, metric="gap_p", value=gaps.gap_p,
                 oracle_value=gaps.gap_jump),
            _row(cfg.experiment, model=f"random_reversible[{kernel.n}]", replicate=i,
                 seed=cfg.master_seed, metric="sigma2_geo", value=ev.sigma2_geo,
                 oracle_value=pr * lhs),
        ]
    checks = [
        Check("jump_variance_identity", ok_identity, worst,
              f"max relative residual {worst:.3e} over {n_kernels} kernels (tol 1e-10)"),
        Check("gap_inheritance", ok_gap, None,
              "jump-kernel right gap >= chain right gap - 1e-12 on every kernel"),
        Check("geo_variance_identity", ok_geo, None,
              "sigma2_geo equals pi(rho) * avar(f, P) to 1e-10 relative"),
    ]
    figures = [plotting.residual_figure(
        out / "jump_identity_residuals.svg", residuals, 1e-10,
        "variance identity residuals (relative)")]
    return rows, checks, figures


def _run_birth_death_exact(cfg: ExperimentConfig, out: Path):
    p = cfg.params.get("p", 0.25)
    n_states = cfg.params.get("n_states", 30)
    model = models.birth_death_model(p=p, n_states=n_states)
    kernel = model.kernel
    f = model.identity_function()

    pt = model.designed_jump_invariant()
    ref = model.geometric_reference()
    tv = 0.5 * float(np.abs(pt - ref).sum())
    ok_tv = tv <= 1e-10

    oracle = asymptotic_variance_exact(kernel, f)
    idx = models.simulate_path(kernel, cfg.n, stream(cfg.master_seed, 0))
    # the chain relaxes in ~2/gap = 350 steps; batches must dwarf that
    est = batch_means(centered(kernel, f)[idx], batch_len=cfg.params.get("batch_len", 10_000))
    ok_bm = abs(est.value - oracle) <= 3.0 * est.stderr

    rows = [
        _row(cfg.experiment, model=f"birth_death(p={p},N={n_states})", function="identity",
             metric="jump_invariant_tv", value=tv),
        _row(cfg.experiment, model=f"birth_death(p={p},N={n_states})", function="identity",
             n=cfg.n, seed=cfg.master_seed, metric="batch_means", value=est.value,
             stderr=est.stderr, oracle_value=oracle),
    ]
    checks = [
        Check("jump_invariant_truncated_geometric", ok_tv, tv,
              f"total variation {tv:.3e} (tol 1e-10)"),
        Check("batch_means_matches_oracle", ok_bm, est.value,
              f"|{est.value:.6g} - {oracle:.6g}| <= 3 * {est.stderr:.3g}"),
    ]
    figures = [plotting.series_figure(
        out / "birth_death_jump_invariant.svg",
        np.asarray(kernel.states, dtype=float),
        {"pi * rho (normalized)": pt, "truncated geometric": ref},
        "jump-chain invariant vs truncated geometric", "state", "probability",
        logy=True)]
    return rows, checks, figures


def _run_imh_two_point(cfg: ExperimentConfig, out: Path):
    model = models.two_point_imh()
    f = models.two_point_f()
    env = envelope_bounds(model, f)
    checks = [
        Check("exact_variance_value", abs(env.var_exact - 0.375) <= 1e-12, env.var_exact,
              "avar(f, P) = 0.375 on the two-point model"),
        Check("envelope_holds", env.ok, None,
              f"{env.lower_jump:.6f} and {env.lower_snis:.6f} <= var <= {env.upper:.6f}"),
        Check("upper_edge_tight", abs(env.upper - env.var_exact) <= 1e-12, env.upper,
              "the upper envelope value is attained"),
        Check("snis_lower_value", abs(env.lower_snis - 0.140625) <= 1e-12, env.lower_snis,
              "importance-sampling limit variance bound = 0.140625"),
        Check("jump_lower_value", abs(env.lower_jump - 0.234375) <= 1e-12, env.lower_jump,
              "jump-moment lower bound = 0.234375"),
    ]
    rows = [
        _row(cfg.experiment, model=model.name, function="centered_indicator", metric=m, value=v)
        for m, v in [
            ("var_exact", env.var_exact), ("lower_jump", env.lower_jump),
            ("lower_snis", env.lower_snis), ("upper", env.upper),
        ]
    ]
    return rows, checks, []


def _run_imh_minorization_sweep(cfg: ExperimentConfig, out: Path):
    rows, labels, consts, prs = [], [], [], []
    all_ok = True
    for i in range(cfg.replicates):
        model = models.random_finite_imh(stream(cfg.master_seed, i))
        rep = minorization_check(model)
        all_ok &= rep.ok
        labels.append(model.name)
        consts.append(rep.constant)
        prs.append(rep.pi_rho)
        rows.append(_row(cfg.experiment, model=model.name, replicate=i, seed=cfg.master_seed,
                         metric="minorization_constant", value=rep.constant,
                         oracle_value=rep.pi_rho, check_name="minorization",
                         check_passed=str(rep.ok)))
    checks = [Check("uniform_minorization", all_ok, min(consts),
                    f"min constant {min(consts):.4f} >= mean acceptance rate on all models")]
    figures = [plotting.bounds_figure(out / "minorization.svg", labels, prs, consts,
                                      np.ones(len(consts)),
                                      "minorization constant vs mean acceptance rate")]
    return rows, checks, figures


def _run_acceptance_sandwich_suite(cfg: ExperimentConfig, out: Path):
    rows, checks = [], []
    c_grid = [0.25, 0.5, 1.0, 2.0, 5.0]
    u_grid = [0.25, 0.5, 1.0, 1.5, 3.0]

    # pointwise sandwich for unit-mean variables, exact families
    atom = AtomNoise([(0.5, 0.5), (1.5, 0.5)])
    two_atom_zero = AtomNoise([(0.0, 0.5), (2.0, 0.5)])
    families = [
        ("point_mass", AtomNoise([(1.0, 1.0)]), None),
        ("atoms_05_15", atom, None),
        ("atoms_0_2", two_atom_zero, None),
        ("abc_h_0.2", AbcNoise(0.2), None),
        ("averaged_atoms_N2", AveragedNoise(atom, 2), None),
        ("averaged_atoms_N10", AveragedNoise(atom, 10), None),
        ("lognormal_0.5", LognormalNoise(0.5), None),
    ]
    ok_exact = True
    for label, fam, x in families:
        for c in c_grid:
            rep = acceptance_sandwich(fam, c, x=x)
            ok_exact &= rep.ok
            rows.append(_row(cfg.experiment, model=label, metric=f"sandwich_c={c}",
                             value=rep.value, oracle_value=rep.lower,
                             check_name="sandwich", check_passed=str(rep.ok)))
    checks.append(Check("pointwise_sandwich_exact", ok_exact, None,
                        "1/(E[Y^2]+c) <= E[1^Y/c] <= 1^1/c on all exact families (tol 1e-10)"))

    # sampled family at 4 standard errors
    sampled = CustomNoise(
        sampler=lambda x, rng, size: rng.lognormal(-0.25, np.sqrt(0.5), size),
        second_moment=float(np.exp(0.5)),
    )
    ok_mc = True
    for c in c_grid:
        rep = acceptance_sandwich(sampled, c, mc=cfg.params.get("mc", 100_000),
                                  seed=stream(cfg.master_seed, 1))
        ok_mc &= rep.ok
        rows.append(_row(cfg.experiment, model="sampled_lognormal_0.5",
                         metric=f"sandwich_c={c}", value=rep.value, stderr=rep.stderr,
                         check_name="sandwich_mc", check_passed=str(rep.ok)))
    checks.append(Check("pointwise_sandwich_sampled", ok_mc, None,
                        "Monte Carlo family satisfies the sandwich at 4 standard errors"))

    # exit-probability sandwich for independence samplers
    ok_rho = True
    imh_models = [models.two_point_imh()] + [
        models.random_finite_imh(stream(cfg.master_seed, 100 + i)) for i in range(cfg.replicates)
    ]
    for model in imh_models:
        for x in range(len(model.support)):
            rb = rho_and_bounds(model, x)
            ok = rb.lower - 1e-10 <= rb.rho <= rb.upper + 1e-10
            ok_rho &= ok
            rows.append(_row(cfg.experiment, model=model.name, metric=f"rho_x={x}",
                             value=rb.rho, oracle_value=rb.lower,
                             check_name="rho_sandwich", check_passed=str(ok)))
    checks.append(Check("exit_probability_sandwich", ok_rho, None,
                        "1/(pi(w)+w(x)) <= rho(x) <= 1^1/w(x) on every state of every model"))

    # noise acceptance profile and its weighted mean
    ok_prof = True
    prof_rows = []
    for label, fam, x in [("atoms_05_15", atom, None), ("point_mass", AtomNoise([(1.0, 1.0)]), None),
                          ("lognormal_0.5", LognormalNoise(0.5), None)]:
        for u in u_grid:
            prof = noise_acceptance_profile(fam, u, x=x)
            ok = (prof.lower - 1e-10 <= prof.value <= prof.upper + 1e-10
                  and prof.pair_mean >= prof.pair_lower - 1e-10)
            ok_prof &= ok
            prof_rows.append((f"{label}@u={u}", prof))
            rows.append(_row(cfg.experiment, model=label, metric=f"profile_u={u}",
                             value=prof.value, oracle_value=prof.lower,
                             check_name="profile_sandwich", check_passed=str(ok)))
    checks.append(Check("noise_profile_sandwich", ok_prof, None,
                        "1/(sbar+u) <= E[1^V/u] <= 1^1/u and E[min(U,V)] >= 1/(2 sbar)"))

    # auxiliary-kernel exit bounds on exact-discrete product models
    ok_aux = True
    pm_models = [models.pm_two_state_atoms(), models.pm_abc_finite(10)] + [
        models.random_pm_discrete(stream(cfg.master_seed, 200 + i)) for i in range(5)
    ]
    for pm in pm_models:
        for x in range(pm.marginal.n):
            values, _ = pm.noise.atoms(x)
            for u in values[values > 0]:
                rep = aux_exit_bounds_check(pm, PmState(x, float(u)))
                ok = rep.ok_pointwise and rep.ok_weighted
                ok_aux &= ok
                rows.append(_row(cfg.experiment, model=pm.name, metric=f"aux_exit_x={x}_u={u:g}",
                                 value=rep.rho_r, oracle_value=rep.lower,
                                 check_name="aux_exit_sandwich", check_passed=str(ok)))
    checks.append(Check("aux_exit_sandwich", ok_aux, None,
                        "auxiliary-kernel exit probabilities inside both sandwiches (tol 1e-10)"))

    labels = [lab for lab, _ in prof_rows]
    figures = [plotting.bounds_figure(
        out / "noise_profile_bounds.svg", labels,
        [p.lower for _, p in prof_rows], [p.value for _, p in prof_rows],
        [p.upper for _, p in prof_rows], "noise acceptance profile with its sandwich")]
    return rows, checks, figures


def _run_estimator_clt(cfg: ExperimentConfig, out: Path):
    kernel = models.two_state_kernel(0.3, 0.3)
    f = np.array([1.0, -1.0])
    decomp = decompose(kernel)
    exact = estimator_variances_exact(kernel, f)
    n = cfg.n

    def one(i: int):
        path = simulate_jump_path(decomp, n, stream(cfg.master_seed, i))
        return (np.sqrt(n) * geo_estimate(path, decomp.rho, f),
                np.sqrt(n) * rb_estimate(path, decomp.rho, f))

    results = _map_indexed(one, cfg.replicates, cfg.workers)
    geo = np.array([g for g, _ in results])
    rb = np.array([r for _, r in results])
    var_geo = float(np.var(geo, ddof=1))
    var_rb = float(np.var(rb, ddof=1))
    ok_geo = abs(var_geo - exact.sigma2_geo) <= 0.05 * exact.sigma2_geo
    ok_rb = var_rb <= 0.01

    rows = [_row(cfg.experiment, model="two_state(0.3,0.3)", function="(1,-1)", n=n,
                 replicate=i, seed=cfg.master_seed, metric="sqrt_n_geo", value=float(g))
            for i, g in enumerate(geo)]
    rows += [_row(cfg.experiment, model="two_state(0.3,0.3)", function="(1,-1)", n=n,
                  replicate=i, seed=cfg.master_seed, metric="sqrt_n_rb", value=float(r))
             for i, r in enumerate(rb)]
    rows += [
        _row(cfg.experiment, model="two_state(0.3,0.3)", metric="replicate_var_geo",
             value=var_geo, oracle_value=exact.sigma2_geo),
        _row(cfg.experiment, model="two_state(0.3,0.3)", metric="replicate_var_rb",
             value=var_rb, oracle_value=exact.sigma2_rb),
    ]
    checks = [
        Check("clt_variance_geo", ok_geo, var_geo,
              f"replicate variance {var_geo:.4f} within 5% of {exact.sigma2_geo}"),
        Check("clt_variance_rb", ok_rb, var_rb,
              f"replicate variance {var_rb:.2e} <= 0.01 (limit variance 0 here)"),
    ]
    figures = [plotting.replicate_hist_figure(
        out / "clt_geo_replicates.svg", geo, None,
        "sqrt(n) * holding-time estimator over replicates", "sqrt(n) * estimate")]
    return rows, checks, figures


def _run_peskun_product_sweep(cfg: ExperimentConfig, out: Path):
    rows, labels, vps, vrs = [], [], [], []
    all_ok = True
    pm_list = [models.pm_two_state_atoms()] + [
        models.random_pm_discrete(stream(cfg.master_seed, i)) for i in range(cfg.replicates - 1)
    ]
    for i, pm in enumerate(pm_list):
        prod = product_chains(pm)
        rng = stream(cfg.master_seed, 1000 + i)
        fv = models.random_centered_function(prod.kernel_p, rng)
        var_p = asymptotic_variance_exact(prod.kernel_p, fv)
        var_r = asymptotic_variance_exact(prod.kernel_r, fv)
        ok = var_p <= var_r + 1e-12
        all_ok &= ok
        labels.append(pm.name)
        vps.append(var_p)
        vrs.append(var_r)
        rows.append(_row(cfg.experiment, model=pm.name, function="random_centered",
                         replicate=i, seed=cfg.master_seed, metric="var_p", value=var_p,
                         oracle_value=var_r, check_name="peskun_order",
                         check_passed=str(ok)))
    checks = [Check("peskun_order", all_ok, None,
                    "avar(f, chain) <= avar(f, auxiliary kernel) on every exact product model")]
    figures = [plotting.bounds_figure(out / "peskun_order.svg", labels,
                                      np.zeros(len(vps)), vps, vrs,
                                      "chain variance (dot) below auxiliary-kernel variance (cap)")]
    return rows, checks, figures


def _run_averaging_invariance(cfg: ExperimentConfig, out: Path):
    n_values = cfg.params.get("n_values", [1, 2, 10])
    rows, checks = [], []
    identity = lambda x: x

    exact_cases = [
        ("pm_abc_finite(10)", models.pm_abc_finite(10)),
        ("pm_two_point_atoms_indep", PmModel(
            marginal=MarginalModel(
                states=np.array([0.0, 1.0]),
                pi_bar=np.array([0.75, 0.25]),
                q_bar=np.array([[0.5, 0.5], [0.5, 0.5]]),
            ),
            noise=AtomNoise([(0.5, 0.5), (1.5, 0.5)]),
        )),
    ]
    all_ok = True
    for label, base_model in exact_cases:
        verdicts = []
        for n_avg in n_values:
            noise = base_model.noise if n_avg == 1 else AveragedNoise(base_model.noise, n_avg)
            cls = classify_independent_proposal(
                PmModel(marginal=base_model.marginal, noise=noise), identity, x_only=True
            )
            verdicts.append(cls.verdict)
            rows.append(_row(cfg.experiment, model=f"{label}/N={n_avg}", function="identity",
                             metric="criterion", value=cls.mu_w2f2,
                             check_name="verdict", check_passed=cls.verdict))
        ok = len(set(verdicts)) == 1
        all_ok &= ok
        checks.append(Check(f"invariance_{label}", ok, None,
                            f"verdicts {verdicts} identical across N={n_values}"))

    analytic_cases = [
        models.AnalyticPmFamily(beta=8.0, gamma=1),    # finite
        models.AnalyticPmFamily(beta=6.0, gamma=2),    # criterion diverges
        models.AnalyticPmFamily(beta=3.5, gamma=1),    # f not square-integrable
    ]
    for fam in analytic_cases:
        verdicts = []
        for n_avg in n_values:
            cls = fam.classify(n_avg)
            verdicts.append(cls.verdict)
            rows.append(_row(cfg.experiment, model=f"{fam.name}/N={n_avg}", function="identity",
                             metric="criterion", value=cls.mu_w2f2,
                             check_name="verdict", check_passed=cls.verdict))
        ok = len(set(verdicts)) == 1
        all_ok &= ok
        checks.append(Check(f"invariance_{fam.name}", ok, None,
                            f"verdicts {verdicts} identical across N={n_values}"))
    checks.insert(0, Check("averaging_invariance_all", all_ok, None,
                           "every built-in model keeps its verdict under noise averaging"))
    return rows, checks, []


def _divergence_rows(cfg, scan, model_name):
    rows = []
    for i in range(scan.n_seeds):
        for j, n in enumerate(scan.n_grid):
            rows.append(_row(cfg.experiment, model=model_name, function="identity", n=n,
                             replicate=i, seed=cfg.master_seed, metric="batch_means",
                             value=float(scan.estimates[i, j])))
    rows.append(_row(cfg.experiment, model=model_name, metric="monotone_fraction",
                     value=scan.fraction))
    return rows


def _run_divergence_power_law(cfg: ExperimentConfig, out: Path):
    beta = cfg.params.get("beta", 4.5)
    model = models.power_law_imh(beta)
    moments = models.power_law_moments(beta)
    threshold = cfg.params.get("threshold", 0.9)
    n_grid = cfg.params.get("n_grid", [10**3, 10**4, 10**5, 10**6])

    def generator(n, seed_index):
        return imh_simulate(model, n, stream(cfg.master_seed, seed_index))

    scan = divergence_scan(generator, n_grid=n_grid, seeds=cfg.replicates)
    classification = VarianceClassification.from_moments(*moments)
    ok = scan.fraction >= threshold
    checks = [
        Check("weighted_moment_divergent", not classification.wf_in_L2_mu, moments[1],
              f"mu((w f)^2) = {moments[1]} for beta = {beta}"),
        Check("monotone_growth", ok, scan.fraction,
              f"fraction {scan.fraction:.2f} of {scan.n_seeds} seeds grew "
              f"across {list(scan.n_grid)} (threshold {threshold})"),
    ]
    rows = _divergence_rows(cfg, scan, model.name)
    figures = [plotting.scan_growth_figure(out / "divergence_power_law.svg", scan.n_grid,
                                           scan.estimates,
                                           f"batch-means growth, {model.name}")]
    return rows, checks, figures


def _run_divergence_null(cfg: ExperimentConfig, out: Path):
    kernel = models.two_state_kernel(0.3, 0.3)
    f = np.array([1.0, -1.0])
    threshold = cfg.params.get("threshold", 0.5)
    n_grid = cfg.params.get("n_grid", [10**3, 10**4, 10**5, 10**6])

    def generator(n, seed_index):
        return f[models.simulate_path(kernel, n, stream(cfg.master_seed, seed_index))]

    scan = divergence_scan(generator, n_grid=n_grid, seeds=cfg.replicates)
    ok = scan.fraction <= threshold
    checks = [Check("no_monotone_growth", ok, scan.fraction,
                    f"fraction {scan.fraction:.2f} <= {threshold} on the finite-variance model")]
    rows = _divergence_rows(cfg, scan, "two_state(0.3,0.3)")
    figures = [plotting.scan_growth_figure(out / "divergence_null.svg", scan.n_grid,
                                           scan.estimates, "batch-means, finite-variance null")]
    return rows, checks, figures


def _run_batch_means_calibration(cfg: ExperimentConfig, out: Path):
    # models whose relaxation times are far below the batch length, so the
    # chi-square error bar of batch means is itself trustworthy
    cases = [
        ("two_state(0.3,0.3)", models.two_state_kernel(0.3, 0.3), np.array([1.0, -1.0])),
        ("two_state(0.05,0.05)", models.two_state_kernel(0.05, 0.05), np.array([1.0, -1.0])),
        ("iid_4", models.iid_kernel(np.array([0.4, 0.3, 0.2, 0.1])), None),
        ("random_reversible_a", models.random_reversible_kernel(stream(7, 0), n=8), None),
        ("random_reversible_b", models.random_reversible_kernel(stream(7, 1), n=12), None),
    ]
    seeds_per_case = cfg.replicates
    batch_len = cfg.params.get("batch_len", 1000)
    rows = []
    failures = 0
    total = 0
    for ci, (label, kernel, f) in enumerate(cases):
        if f is None:
            f = models.random_centered_function(kernel, stream(7, 100 + ci))
        fc = centered(kernel, f)
        oracle = asymptotic_variance_exact(kernel, fc)

        def one(i: int):
            idx = models.simulate_path(kernel, cfg.n, stream(cfg.master_seed, ci, i))
            return batch_means(fc[idx], batch_len=batch_len)

        for i, est in enumerate(_map_indexed(one, seeds_per_case, cfg.workers)):
            hit = abs(est.value - oracle) <= 3.0 * est.stderr
            failures += not hit
            total += 1
            rows.append(_row(cfg.experiment, model=label, n=cfg.n, replicate=i,
                             seed=cfg.master_seed, metric="batch_means", value=est.value,
                             stderr=est.stderr, oracle_value=oracle,
                             check_name="within_3se", check_passed=str(bool(hit))))
    allowed = cfg.params.get("allowed_failures", max(2, total // 100))
    ok = failures <= allowed
    checks = [Check("calibration_3se", ok, float(failures),
                    f"{failures}/{total} runs outside 3 standard errors (allowed {allowed})")]
    return rows, checks, []


def _run_pm_unit_noise_coupling(cfg: ExperimentConfig, out: Path):
    from .pseudo_marginal import unit_noise

    cases = [
        ("pm_two_state", models.pm_two_state_atoms().marginal),
        ("pm_two_point", models.pm_two_point_lognormal().marginal),
        ("pm_abc_finite(6)", models.pm_abc_finite(6).marginal),
    ]
    rows, all_ok = [], True
    for label, marginal in cases:
        pm = PmModel(marginal=marginal, noise=unit_noise())
        for s in range(cfg.replicates):
            seed = stream(cfg.master_seed, s)
            seed2 = stream(cfg.master_seed, s)
            xs, us = pm_simulate(pm, cfg.n, seed)
            ys = mh_simulate_marginal(marginal, cfg.n, seed2)
            same = bool(np.array_equal(xs, ys) and np.all(us == 1.0))
            all_ok &= same
            rows.append(_row(cfg.experiment, model=label, n=cfg.n, replicate=s,
                             seed=cfg.master_seed, metric="paths_identical",
                             value=float(same), check_name="coupling",
                             check_passed=str(same)))
    checks = [Check("unit_noise_collapse", all_ok, None,
                    "pseudo-marginal and marginal paths identical under shared streams")]
    return rows, checks, []


def _run_sufficiency_suite(cfg: ExperimentConfig, out: Path):
    rows, checks = [], []
    identity = lambda x: x

    # exact-discrete model: both conditions verified, conclusion cross-checked
    pm = models.pm_two_state_atoms()
    rep = sufficiency_report(pm, identity, x_only=True)
    prod = product_chains(pm)
    fv = prod.function(identity, x_only=True)
    fv = fv - float(prod.kernel_p.pi @ fv)
    var_product = asymptotic_variance_exact(prod.kernel_p, fv)
    ok1 = rep.bounded_noise_condition.applies and np.isfinite(var_product)
    checks.append(Check("bounded_noise_condition_concludes", ok1, var_product,
                        f"product-chain avar {var_product:.6g} finite as concluded"))
    rows.append(_row(cfg.experiment, model=pm.name, function="identity",
                     metric="product_avar", value=var_product,
                     check_name="bounded_noise_condition",
                     check_passed=rep.bounded_noise_condition.conclusion))

    # state-independent continuous noise: the jump-gap route concludes
    pm_ln = models.pm_two_point_lognormal(0.5)
    rep_ln = sufficiency_report(pm_ln, identity, x_only=True)
    ok2 = rep_ln.independent_noise_condition.applies
    checks.append(Check("independent_noise_condition_concludes", ok2, None,
                        rep_ln.independent_noise_condition.detail))
    rows.append(_row(cfg.experiment, model=pm_ln.name, function="identity",
                     metric="criterion", value=rep_ln.independent_noise_condition.criterion_value,
                     check_name="independent_noise_condition",
                     check_passed=rep_ln.independent_noise_condition.conclusion))

    # Monte Carlo sanity on the lognormal model: estimates stay bounded
    xs, us = pm_simulate(pm_ln, cfg.n, stream(cfg.master_seed, 0))
    values = pm_ln.marginal.states[xs]
    est = batch_means(values - values.mean())
    ok3 = np.isfinite(est.value) and est.value >= 0.0
    checks.append(Check("pm_path_sanity", ok3, est.value,
                        f"batch-means {est.value:.4g} finite on a {cfg.n}-step path"))
    rows.append(_row(cfg.experiment, model=pm_ln.name, function="identity", n=cfg.n,
                     seed=cfg.master_seed, metric="batch_means", value=est.value,
                     stderr=est.stderr))

    # likelihood-threshold family: weighted moment is exactly proportional
    # to the prior second moment, so the finite class is L2 of the prior
    pm_abc = models.pm_abc_finite(12)
    w_marg = pm_abc.marginal.pi_bar / pm_abc.marginal.q_bar[0]
    s = np.array([pm_abc.noise.second_moment(x) for x in range(pm_abc.marginal.n)])
    const = s * w_marg
    ok4 = float(np.max(np.abs(const - const[0]))) <= 1e-12 * abs(const[0])
    checks.append(Check("threshold_family_constant_product", ok4, float(const[0]),
                        "s(x) * density ratio constant in x for the threshold family"))
    rows.append(_row(cfg.experiment, model=pm_abc.name, metric="s_times_ratio",
                     value=float(const[0])))
    return rows, checks, []


# ---------------------------------------------------------------------------
# registry, config handling, runner


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    claim: str
    runner: Callable
    defaults: dict
    budget_s: float


EXPERIMENTS = {
    spec.name: spec
    for spec in [
        ExperimentSpec(
            "jump_identity_sweep",
            "jump-chain variance identity, gap inheritance, and the holding-time "
            "estimator variance identity, on randomized reversible kernels",
            _run_jump_identity_sweep,
            {"n": 1, "replicates": 50, "master_seed": 20240810},
            5.0,
        ),
        ExperimentSpec(
            "birth_death_exact",
            "lazy birth-death walk: jump invariant is a truncated geometric law; "
            "batch means matches the exact asymptotic variance",
            _run_birth_death_exact,
            {"n": 10**6, "replicates": 1, "master_seed": 2},
            15.0,
        ),
        ExperimentSpec(
            "imh_two_point",
            "two-point independence sampler: exact variance envelope with tight "
            "upper edge and the importance-sampling lower bound",
            _run_imh_two_point,
            {"n": 1, "replicates": 1, "master_seed": 0},
            1.0,
        ),
        ExperimentSpec(
            "imh_minorization_sweep",
            "accepted-proposal chain is minorized by its invariant law times the "
            "mean acceptance rate",
            _run_imh_minorization_sweep,
            {"n": 1, "replicates": 20, "master_seed": 11},
            5.0,
        ),
        ExperimentSpec(
            "acceptance_sandwich_suite",
            "acceptance-probability sandwiches for unit-mean noise: pointwise, "
            "exit-probability, profile, and auxiliary-kernel forms",
            _run_acceptance_sandwich_suite,
            {"n": 1, "replicates": 20, "master_seed": 5},
            20.0,
        ),
        ExperimentSpec(
            "estimator_clt",
            "replicate CLT variances of the two jump-path estimators match their "
            "closed forms",
            _run_estimator_clt,
            {"n": 10**5, "replicates": 200, "master_seed": 7},
            30.0,
        ),
        ExperimentSpec(
            "peskun_product_sweep",
            "the factorized-acceptance auxiliary kernel never has smaller "
            "asymptotic variance than the chain (exact product spaces)",
            _run_peskun_product_sweep,
            {"n": 1, "replicates": 20, "master_seed": 21},
            10.0,
        ),
        ExperimentSpec(
            "averaging_invariance",
            "averaging the noise never changes which ergodic averages have "
            "finite asymptotic variance",
            _run_averaging_invariance,
            {"n": 1, "replicates": 1, "master_seed": 0},
            5.0,
        ),
        ExperimentSpec(
            "divergence_power_law",
            "batch-means estimates grow without bound when the weighted second "
            "moment diverges (square-integrable f, heavy weights)",
            _run_divergence_power_law,
            {"n": 10**6, "replicates": 50, "master_seed": 2},
            110.0,
        ),
        ExperimentSpec(
            "divergence_null",
            "finite-variance null model: batch-means estimates do not grow "
            "monotonically with path length",
            _run_divergence_null,
            {"n": 10**6, "replicates": 50, "master_seed": 2},
            60.0,
        ),
        ExperimentSpec(
            "batch_means_calibration",
            "batch means concentrates on the exact asymptotic variance within "
            "3 standard errors across built-in models",
            _run_batch_means_calibration,
            {"n": 10**6, "replicates": 40, "master_seed": 13},
            60.0,
        ),
        ExperimentSpec(
            "pm_unit_noise_coupling",
            "unit noise collapses the pseudo-marginal chain onto the marginal "
            "chain, path for path under shared random streams",
            _run_pm_unit_noise_coupling,
            {"n": 20_000, "replicates": 3, "master_seed": 17},
            10.0,
        ),
        ExperimentSpec(
            "sufficiency_suite",
            "sufficient conditions for finite asymptotic variance of "
            "marginal-function averages, verified on built-in models",
            _run_sufficiency_suite,
            {"n": 10**5, "replicates": 1, "master_seed": 19},
            15.0,
        ),
    ]
}


def default_config(name: str) -> ExperimentConfig:
    if name not in EXPERIMENTS:
        known = ", ".join(sorted(EXPERIMENTS))
        raise UnknownModel(f"unknown experiment {name!r}; known: {known}")
    spec = EXPERIMENTS[name]
    return ExperimentConfig(experiment=name, **{k: v for k, v in spec.defaults.items()})


def load_config(path) -> ExperimentConfig:
    """Read one experiment config from a JSON document.

    Raises InvalidConfig with line/field diagnostics on malformed input and
    UnknownModel for unknown experiment names.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise InvalidConfig(f"{path}: line {err.lineno} column {err.colno}: {err.msg}") from err
    except OSError as err:
        raise InvalidConfig(f"{path}: {err}") from err
    if not isinstance(doc, dict):
        raise InvalidConfig(f"{path}: top level must be an object")
    if "experiment" not in doc:
        raise InvalidConfig(f"{path}: field 'experiment' is required")
    name = doc["experiment"]
    if name not in EXPERIMENTS:
        known = ", ".join(sorted(EXPERIMENTS))
        raise UnknownModel(f"unknown experiment {name!r}; known: {known}")
    cfg = default_config(name)
    allowed = {"experiment", "model", "function", "n", "replicates", "master_seed",
               "out_dir", "workers", "params"}
    for key, value in doc.items():
        if key not in allowed:
            raise InvalidConfig(f"{path}: unknown field {key!r}")
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def run(cfg: ExperimentConfig, write_outputs: bool = True) -> RunReport:
    """Execute one experiment; write its CSV and figures under cfg.out_dir.

    Deterministic given (config, master seed): the CSV bytes are identical
    across runs on one platform.
    """
    cfg.validate()
    spec = EXPERIMENTS[cfg.experiment]
    out = Path(cfg.out_dir)
    if write_outputs:
        out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows, checks, figures = spec.runner(cfg, out)
    elapsed = time.perf_counter() - t0
    for check in checks:
        rows.append(_row(cfg.experiment, seed=cfg.master_seed, metric="check",
                         value=check.value, check_name=check.name,
                         check_passed=str(bool(check.passed))))
    csv_path = None
    if write_outputs:
        csv_path = str(out / f"{cfg.experiment}.csv")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    return RunReport(
        experiment=cfg.experiment,
        claim=spec.claim,
        rows=rows,
        checks=checks,
        figures=[str(f) for f in figures],
        csv_path=csv_path,
        elapsed_s=elapsed,
    )


def list_experiments(machine: bool = False) -> str:
    """Registry listing; one line per experiment with its claim anchor."""
    if machine:
        lines = [
            json.dumps({
                "name": spec.name,
                "claim": spec.claim,
                "defaults": spec.defaults,
                "budget_s": spec.budget_s,
            }, sort_keys=True)
            for spec in EXPERIMENTS.values()
        ]
        return "\n".join(lines)
    width = max(len(name) for name in EXPERIMENTS)
    lines = [f"{spec.name:<{width}}  {spec.claim}" for spec in EXPERIMENTS.values()]
    return "\n".join(lines)
