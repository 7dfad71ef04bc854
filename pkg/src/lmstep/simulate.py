"""Scenario presets, data generation, state alignment and the Monte Carlo
replication harness."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .em import FitOptions, fit_basic_lm_fml, fit_cov_lm_fml
from .errors import LmStepError
from .model import initial_probs_batch, transition_matrices_batch
from .panel import CovariatePanel, ResponsePanel
from .params import (PAIRWISE, CovariateLatentParams, DifferenceTransitions,
                     LatentChainParams, MeasurementParams, ModelParams,
                     PairwiseTransitions)
from .threestep import ThreeStepOptions, fit_3s, fit_3s_imp

ESTIMATORS = ("fml", "3s", "3s-imp")


@dataclass(frozen=True)
class CovariateSpec:
    """AR(1) covariate generator settings shared by the covariate scenarios."""

    q1: int = 2
    q2: int = 2
    ar_coef: float = 0.5
    noise_var: float = 1.0


@dataclass(frozen=True, eq=False)
class Scenario:
    id: str
    n: int
    T: int
    r: int
    k: int
    truth: ModelParams
    covariates: CovariateSpec | None = None

    @property
    def cats(self) -> np.ndarray:
        return self.truth.measurement.cats

    def with_items(self, r: int) -> "Scenario":
        """Same scenario with ``r`` copies of the (exchangeable) item table."""
        table = self.truth.measurement.phi[0]
        meas = MeasurementParams(phi=(table,) * r, k=self.k)
        return replace(self, r=r, truth=ModelParams(measurement=meas, latent=self.truth.latent))


def _binary_table(p_agree: float, extra_half_state: bool = False) -> np.ndarray:
    cols = [[p_agree, 1.0 - p_agree], [1.0 - p_agree, p_agree]]
    if extra_half_state:
        cols.append([0.5, 0.5])
    return np.array(cols).T


def _uniform_pairwise(k: int, intercept: float, slopes) -> PairwiseTransitions:
    coef = np.zeros((k, k, 1 + len(slopes)))
    for u in range(k):
        for v in range(k):
            if u != v:
                coef[u, v] = [intercept, *slopes]
    return PairwiseTransitions(coef)


def _basic_scenario(sid, n, T, r, table, pi, Pi):
    k = len(pi)
    meas = MeasurementParams(phi=(table,) * r, k=k)
    truth = ModelParams(measurement=meas, latent=LatentChainParams(pi=np.asarray(pi),
                                                                   Pi=np.asarray(Pi)))
    return Scenario(id=sid, n=n, T=T, r=r, k=k, truth=truth)


def _cov_scenario(sid, n, T, r, table, beta_cols, intercept, slopes):
    k = table.shape[1]
    meas = MeasurementParams(phi=(table,) * r, k=k)
    beta = np.column_stack(beta_cols) if beta_cols else np.zeros((3, 0))
    latent = CovariateLatentParams(beta=beta, trans=_uniform_pairwise(k, intercept, slopes))
    truth = ModelParams(measurement=meas, latent=latent)
    return Scenario(id=sid, n=n, T=T, r=r, k=k, truth=truth, covariates=CovariateSpec())


def _build_presets() -> dict:
    t70 = _binary_table(0.7)
    t90 = _binary_table(0.9)
    pi2 = [0.5, 0.5]
    pi3 = [1 / 3, 1 / 3, 1 / 3]
    diag9 = [[0.9, 0.1], [0.1, 0.9]]
    diag6 = [[0.6, 0.4], [0.4, 0.6]]
    diag6_3 = [[0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]]
    log19 = float(np.log(0.1 / 0.9))
    log46 = float(np.log(0.4 / 0.6))
    b_col = np.array([0.0, 0.5, 1.0])
    presets = {
        "basic-s1": _basic_scenario("basic-s1", 500, 5, 5, t70, pi2, diag9),
        "basic-s2": _basic_scenario("basic-s2", 500, 5, 5, t70, pi2, diag6),
        "basic-s3": _basic_scenario("basic-s3", 500, 5, 5, t90, pi2, diag9),
        "basic-s4": _basic_scenario("basic-s4", 500, 5, 5,
                                    _binary_table(0.7, extra_half_state=True), pi3, diag6_3),
        "cov-s1": _cov_scenario("cov-s1", 500, 5, 5, t70, [b_col], log19, [0.5, 1.0]),
        "cov-s2": _cov_scenario("cov-s2", 500, 5, 5, t70, [b_col], log46, [0.5, 1.0]),
        "cov-s3": _cov_scenario("cov-s3", 500, 5, 5, t90, [b_col], log19, [0.5, 1.0]),
        "cov-s4": _cov_scenario("cov-s4", 500, 5, 5,
                                _binary_table(0.9, extra_half_state=True),
                                [b_col, b_col], log46, [0.5, 1.0]),
    }
    presets["basic-s1-n1000"] = replace(presets["basic-s1"], id="basic-s1-n1000", n=1000)
    presets["basic-s1-t8"] = replace(presets["basic-s1"], id="basic-s1-t8", T=8)
    return presets


_PRESETS = _build_presets()


def preset_names() -> tuple:
    return tuple(sorted(_PRESETS))


def scenario_preset(name: str) -> Scenario:
    """One of the built-in simulation designs; see :func:`preset_names`."""
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; available: "
                         + ", ".join(preset_names())) from None


def gen_covariates_ar1(n: int, T: int, q: int, seed,
                       ar_coef: float = 0.5, noise_var: float = 1.0) -> CovariatePanel:
    """Stationary AR(1) covariate paths, independent across units and columns.

    The first occasion is drawn from the stationary distribution with variance
    ``noise_var / (1 - ar_coef**2)``.
    """
    rng = np.random.default_rng(seed)
    x = _ar1_paths(rng, n, T, q, ar_coef, noise_var)
    return CovariatePanel(x_init=x[:, 0, :], x_trans=x[:, 1:, :])


def _ar1_paths(rng, n, T, q, ar_coef, noise_var):
    x = np.empty((n, T, q))
    if q:
        x[:, 0, :] = rng.standard_normal((n, q)) * np.sqrt(noise_var / (1.0 - ar_coef ** 2))
        for t in range(1, T):
            x[:, t, :] = ar_coef * x[:, t - 1, :] + rng.standard_normal((n, q)) * np.sqrt(noise_var)
    return x


def _draw_rows(rng, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs``."""
    cum = probs.cumsum(axis=1)
    u = rng.random(probs.shape[0])
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def gen_panel(scenario: Scenario, seed):
    """Simulate one dataset; returns ``(panel, covs_or_None, state_paths)``.

    The state paths (n, T) are the generating latent states, kept for oracle
    checks. Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    n, T, r, k = scenario.n, scenario.T, scenario.r, scenario.k
    truth = scenario.truth

    covs = None
    if scenario.covariates is not None:
        cs = scenario.covariates
        if cs.q1 != cs.q2:
            raise ValueError("preset generator assumes a shared covariate design")
        x = _ar1_paths(rng, n, T, cs.q1, cs.ar_coef, cs.noise_var)
        covs = CovariatePanel(x_init=x[:, 0, :], x_trans=x[:, 1:, :])
        pi_rows = initial_probs_batch(truth.latent.beta, covs.x_init)
        Pi4 = transition_matrices_batch(truth.latent.trans, covs.x_trans)
    else:
        pi_rows = np.broadcast_to(truth.latent.pi, (n, k))
        Pi4 = np.broadcast_to(truth.latent.Pi, (n, max(T - 1, 0), k, k))

    states = np.empty((n, T), dtype=np.int64)
    states[:, 0] = _draw_rows(rng, pi_rows)
    for t in range(1, T):
        rows = Pi4[np.arange(n), t - 1, states[:, t - 1], :]
        states[:, t] = _draw_rows(rng, rows)

    y = np.empty((n, T, r), dtype=np.int16)
    phi = truth.measurement.phi
    for t in range(T):
        for j in range(r):
            y[:, t, j] = _draw_rows(rng, phi[j].T[states[:, t]])
    return ResponsePanel(y=y, cats=scenario.cats), covs, states


def permute_states(params: ModelParams, perm) -> ModelParams:
    """Relabel states so new state ``u`` is old state ``perm[u]``.

    Logit blocks are re-expressed against the permuted reference categories,
    so the implied probabilities are exactly the relabeled originals.
    """
    perm = list(perm)
    k = params.k
    meas = MeasurementParams(phi=tuple(p[:, perm] for p in params.measurement.phi), k=k)
    latent = params.latent
    if isinstance(latent, LatentChainParams):
        new_latent = LatentChainParams(pi=latent.pi[perm], Pi=latent.Pi[np.ix_(perm, perm)])
    else:
        full = np.zeros((latent.beta.shape[0], k))
        full[:, 1:] = latent.beta
        shifted = full[:, perm] - full[:, [perm[0]]]
        beta = shifted[:, 1:]
        if isinstance(latent.trans, PairwiseTransitions):
            trans = PairwiseTransitions(latent.trans.coef[np.ix_(perm, perm)])
        else:
            slopes = latent.trans.slopes[perm] - latent.trans.slopes[perm[0]][None, :]
            trans = DifferenceTransitions(latent.trans.intercepts[np.ix_(perm, perm)], slopes)
        new_latent = CovariateLatentParams(beta=beta, trans=trans)
    return ModelParams(measurement=meas, latent=new_latent)


def align_states(est: ModelParams, truth: ModelParams):
    """Relabel ``est`` to the permutation closest to ``truth`` in the response
    tables (squared distance); returns ``(aligned, perm)``."""
    if est.k != truth.k:
        raise ValueError("state counts differ")
    k = est.k
    if k > 6:
        raise ValueError("exhaustive alignment supports k <= 6")
    best_perm = None
    best_cost = np.inf
    for perm in itertools.permutations(range(k)):
        cost = 0.0
        for pe, pt in zip(est.measurement.phi, truth.measurement.phi):
            cost += float(((pe[:, perm] - pt) ** 2).sum())
        if cost < best_cost - 1e-15:
            best_cost = cost
            best_perm = perm
    return permute_states(est, best_perm), best_perm


def param_vector(params: ModelParams):
    """Flatten a parameter set into ``(names, values)`` with 1-based labels."""
    names, values = [], []
    for j, p in enumerate(params.measurement.phi):
        for y in range(p.shape[0]):
            for u in range(params.k):
                names.append(f"phi[{j + 1},{y},{u + 1}]")
                values.append(p[y, u])
    latent = params.latent
    if isinstance(latent, LatentChainParams):
        for u in range(params.k):
            names.append(f"pi[{u + 1}]")
            values.append(latent.pi[u])
        for u in range(params.k):
            for v in range(params.k):
                names.append(f"Pi[{u + 1},{v + 1}]")
                values.append(latent.Pi[u, v])
    else:
        for i in range(latent.beta.shape[0]):
            for u in range(1, params.k):
                names.append(f"beta[{i},{u + 1}]")
                values.append(latent.beta[i, u - 1])
        if isinstance(latent.trans, PairwiseTransitions):
            coef = latent.trans.coef
            for u in range(params.k):
                for v in range(params.k):
                    if u != v:
                        for i in range(coef.shape[2]):
                            names.append(f"Gamma[{u + 1},{v + 1},{i}]")
                            values.append(coef[u, v, i])
        else:
            for u in range(params.k):
                for v in range(params.k):
                    if u != v:
                        names.append(f"gamma0[{u + 1},{v + 1}]")
                        values.append(latent.trans.intercepts[u, v])
            for u in range(1, params.k):
                for i in range(latent.trans.slopes.shape[1]):
                    names.append(f"gamma1[{u + 1},{i + 1}]")
                    values.append(latent.trans.slopes[u, i])
    return names, np.array(values)


@dataclass(eq=False)
class MonteCarloReport:
    """Per-parameter bias, standard error and root mean square error across
    replications, plus per-replication diagnostics."""

    estimator: str
    names: list
    truth: np.ndarray
    bias: np.ndarray
    se: np.ndarray
    rmse: np.ndarray
    reps: int
    n_failed: int
    estimates: np.ndarray
    converged: list = field(default_factory=list)
    cycles: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)


def _seed_int(seed_seq) -> int:
    return int(seed_seq.generate_state(1, np.uint64)[0])


def _run_estimator(est, panel, covs, k, layout, seed_seq, fit_opts, ts_opts):
    if est == "fml":
        opts = replace(fit_opts, seed=_seed_int(seed_seq))
        if covs is None:
            return fit_basic_lm_fml(panel, k, opts)
        return fit_cov_lm_fml(panel, covs, k, layout, opts)
    opts = replace(ts_opts, lc_opts=replace(ts_opts.lc_opts, seed=_seed_int(seed_seq)))
    if est == "3s":
        return fit_3s(panel, k, covs, layout, opts)
    if est == "3s-imp":
        return fit_3s_imp(panel, k, covs, layout, opts)
    raise ValueError(f"unknown estimator {est!r}; available: " + ", ".join(ESTIMATORS))


def _mc_replication(args):
    scenario, estimators, layout, rep_seed, fit_opts, ts_opts = args
    streams = rep_seed.spawn(1 + len(ESTIMATORS))
    panel, covs, _ = gen_panel(scenario, streams[0])
    out = {}
    for est in estimators:
        stream = streams[1 + ESTIMATORS.index(est)]
        t0 = time.perf_counter()
        try:
            fit = _run_estimator(est, panel, covs, scenario.k, layout, stream,
                                 fit_opts, ts_opts)
            aligned, _ = align_states(fit.params, scenario.truth)
            _, vec = param_vector(aligned)
            out[est] = (vec, fit.converged, fit.cycles, time.perf_counter() - t0)
        except (LmStepError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            out[est] = ("failed", str(exc), None, time.perf_counter() - t0)
    return out


def run_monte_carlo(scenario: Scenario, estimators, reps: int, seed,
                    fit_opts: FitOptions = FitOptions(),
                    ts_opts: ThreeStepOptions = ThreeStepOptions(),
                    layout: str = PAIRWISE, n_jobs: int = 1) -> dict:
    """Replicated estimation study; returns one report per estimator.

    Each replication draws a fresh dataset from a child seed, fits the chosen
    estimators, aligns states to the truth and records the parameter vector.
    Failed replications are excluded and counted; more than 20% failures for
    an estimator aborts the harness. The report is identical for identical
    arguments, independent of ``n_jobs``.
    """
    estimators = list(estimators)
    for est in estimators:
        if est not in ESTIMATORS:
            raise ValueError(f"unknown estimator {est!r}; available: " + ", ".join(ESTIMATORS))
    if reps < 2:
        raise ValueError("need at least 2 replications")

    rep_seeds = np.random.SeedSequence(seed).spawn(reps)
    tasks = [(scenario, estimators, layout, s, fit_opts, ts_opts) for s in rep_seeds]

    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_mc_replication, tasks, chunksize=1))
    else:
        results = [_mc_replication(t) for t in tasks]

    truth_names, truth_vec = param_vector(scenario.truth)
    reports = {}
    for est in estimators:
        vecs, conv, cycles, walls = [], [], [], []
        n_failed = 0
        for res in results:
            vec, a, b, wall = res[est]
            walls.append(wall)
            if isinstance(vec, str):
                n_failed += 1
                continue
            vecs.append(vec)
            conv.append(a)
            cycles.append(b)
        if n_failed > 0.2 * reps:
            raise RuntimeError(f"estimator {est}: {n_failed}/{reps} replications failed")
        est_mat = np.vstack(vecs)
        bias = est_mat.mean(axis=0) - truth_vec
        se = est_mat.std(axis=0, ddof=0)
        rmse = np.sqrt(((est_mat - truth_vec[None, :]) ** 2).mean(axis=0))
        reports[est] = MonteCarloReport(
            estimator=est, names=truth_names, truth=truth_vec, bias=bias, se=se,
            rmse=rmse, reps=reps, n_failed=n_failed, estimates=est_mat,
            converged=conv, cycles=cycles, wall_times=walls)
    return reports
