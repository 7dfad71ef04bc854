"""EM estimation: full-likelihood fits of the latent Markov model and the
pooled latent-class fit used as the first step of the stepwise estimators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend, mlogit
from .errors import ConvergenceError, NumericalError, SeparationError
from .model import log_emissions_panel, posterior_moments
from .panel import CovariatePanel, ResponsePanel
from .params import (DIFFERENCE, PAIRWISE, PHI_FLOOR, CovariateLatentParams,
                     DifferenceTransitions, LatentChainParams, MeasurementParams,
                     ModelParams, PairwiseTransitions)


@dataclass(frozen=True)
class FitOptions:
    """Common EM controls. ``rel_tol`` is on |dl| / (|l| + 1) between iterations."""

    max_iter: int = 1000
    rel_tol: float = 1e-8
    n_starts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")


@dataclass(eq=False)
class FitResult:
    """Outcome of a multi-start fit; ``loglik`` is the best start's final value."""

    params: ModelParams
    loglik: float
    iterations: list
    converged: bool
    start_logliks: list
    loglik_traces: list = field(default_factory=list)
    degenerate: bool = False
    cycles: int | None = None
    loglik_kind: str = "marginal"


@dataclass(eq=False)
class LCFit:
    """Pooled latent-class fit: response tables plus marginal state probabilities."""

    phi: MeasurementParams
    rho: np.ndarray
    loglik: float
    converged: bool
    iterations: list
    start_logliks: list
    loglik_traces: list
    degenerate: bool = False


def _converged(ll_new: float, ll_old: float, rel_tol: float) -> bool:
    return abs(ll_new - ll_old) / (abs(ll_old) + 1.0) < rel_tol


def pooled_frequencies(panel: ResponsePanel) -> list:
    """Per-item empirical category frequencies over all (unit, occasion) pairs,
    missing entries excluded; uniform when an item is never observed."""
    pooled = panel.pooled()
    freqs = []
    for j in range(panel.r):
        yj = pooled[:, j]
        obs = yj >= 0
        cnt = np.bincount(yj[obs], minlength=panel.cats[j]).astype(np.float64)
        total = cnt.sum()
        freqs.append(cnt / total if total > 0 else np.full(panel.cats[j], 1.0 / panel.cats[j]))
    return freqs


def _floored_columns(table: np.ndarray) -> np.ndarray:
    table = np.clip(table, PHI_FLOOR, 1.0 - PHI_FLOOR)
    return table / table.sum(axis=0, keepdims=True)


def random_start(panel: ResponsePanel, k: int, seed, scale: float = 1.0,
                 covs: CovariatePanel | None = None, layout: str = PAIRWISE) -> ModelParams:
    """Deterministic random initialization around data-driven anchors.

    Response tables perturb the pooled empirical frequencies, the initial
    vector perturbs uniform, transitions perturb a diagonal-dominant matrix,
    and regression coefficients are small symmetric draws around zero. With
    ``scale == 0`` every start collapses to the same anchor; with ``k == 1``
    the start is the exact empirical-frequency solution.
    """
    rng = np.random.default_rng(seed)
    freqs = pooled_frequencies(panel)
    if k == 1:
        phi = tuple(f.reshape(-1, 1) for f in freqs)
    else:
        phi = []
        for f in freqs:
            noise = np.exp(scale * rng.standard_normal((f.shape[0], k)))
            phi.append(_floored_columns(np.clip(f[:, None], PHI_FLOOR, None) * noise))
        phi = tuple(phi)
    meas = MeasurementParams(phi=phi, k=k)

    if covs is None:
        if k == 1:
            latent = LatentChainParams(pi=np.ones(1), Pi=np.ones((1, 1)))
        else:
            pi = np.exp(scale * rng.standard_normal(k))
            pi /= pi.sum()
            base = 0.7 * np.eye(k) + 0.3 / k
            Pi = base * np.exp(scale * rng.standard_normal((k, k)))
            Pi /= Pi.sum(axis=1, keepdims=True)
            latent = LatentChainParams(pi=pi, Pi=Pi)
    else:
        q1, q2 = covs.q1, covs.q2
        beta = 0.2 * scale * rng.standard_normal((1 + q1, k - 1))
        if layout == PAIRWISE:
            coef = 0.2 * scale * rng.standard_normal((k, k, 1 + q2))
            coef[np.arange(k), np.arange(k), :] = 0.0
            trans = PairwiseTransitions(coef)
        elif layout == DIFFERENCE:
            icpt = 0.2 * scale * rng.standard_normal((k, k))
            np.fill_diagonal(icpt, 0.0)
            slopes = 0.2 * scale * rng.standard_normal((k, q2))
            slopes[0] = 0.0
            trans = DifferenceTransitions(icpt, slopes)
        else:
            raise ValueError(f"unknown layout {layout!r}")
        latent = CovariateLatentParams(beta=beta, trans=trans)
    return ModelParams(measurement=meas, latent=latent)


def _phi_mstep(pooled_y: np.ndarray, resp: np.ndarray, cats: np.ndarray):
    """Closed-form measurement update from pooled responsibilities.

    Returns the floored column-stochastic tables and whether any state
    received zero posterior mass on some item (state collapse).
    """
    k = resp.shape[1]
    collapsed = False
    phi = []
    for j in range(pooled_y.shape[1]):
        yj = pooled_y[:, j]
        obs = yj >= 0
        cnt = np.empty((cats[j], k))
        yo = yj[obs]
        for u in range(k):
            cnt[:, u] = np.bincount(yo, weights=resp[obs, u], minlength=cats[j])
        colsum = cnt.sum(axis=0)
        empty = colsum <= 0
        if np.any(empty):
            collapsed = True
            cnt[:, empty] = 1.0 / cats[j]
        phi.append(_floored_columns(cnt / np.where(empty, 1.0, colsum)[None, :]))
    return tuple(phi), collapsed


def _count_patterns(panel: ResponsePanel) -> int:
    return np.unique(panel.pooled(), axis=0).shape[0]


def independence_loglik(panel: ResponsePanel) -> float:
    """Pooled log-likelihood of the one-class model (items independent with
    empirical category frequencies); closed form."""
    pooled = panel.pooled()
    total = 0.0
    for j in range(panel.r):
        yj = pooled[:, j]
        cnt = np.bincount(yj[yj >= 0], minlength=panel.cats[j]).astype(np.float64)
        pos = cnt > 0
        total += float((cnt[pos] * np.log(cnt[pos] / cnt.sum())).sum())
    return total


def fit_lc_pooled(panel: ResponsePanel, k: int, opts: FitOptions = FitOptions()) -> LCFit:
    """Latent-class EM treating each (unit, occasion) pair as an independent
    observation (n*T pooled units); closed-form updates for the response
    tables and the marginal state probabilities. Best of ``n_starts``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    N = panel.n * panel.T
    pooled_y = panel.pooled()
    logE = np.empty((panel.n, panel.T, k))

    seeds = np.random.SeedSequence(opts.seed).spawn(opts.n_starts)
    best = None
    iterations, start_logliks, traces = [], [], []
    for s, seed in enumerate(seeds):
        start = random_start(panel, k, seed)
        phi, rho = start.measurement.phi, (start.latent.pi if k > 1 else np.ones(1))
        trace = []
        collapsed = False
        n_iter = 0
        converged = False
        for m in range(opts.max_iter + 1):
            meas = MeasurementParams(phi=phi, k=k)
            backend.log_emissions(panel.y, meas.log_padded(), logE)
            logpost = logE.reshape(N, k) + np.log(rho)[None, :]
            shift = logpost.max(axis=1)
            if not np.all(np.isfinite(shift)):
                raise NumericalError("non-finite pooled log-likelihood")
            w = np.exp(logpost - shift[:, None])
            norm = w.sum(axis=1)
            ll = float((np.log(norm) + shift).sum())
            trace.append(ll)
            if m > 0 and _converged(ll, trace[-2], opts.rel_tol):
                converged = True
                break
            if m == opts.max_iter:
                break
            resp = w / norm[:, None]
            rho = resp.mean(axis=0)
            rho = np.clip(rho, PHI_FLOOR, None)
            rho /= rho.sum()
            phi, c = _phi_mstep(pooled_y, resp, panel.cats)
            collapsed = collapsed or c
            n_iter = m + 1
        iterations.append(n_iter)
        start_logliks.append(trace[-1])
        traces.append(trace)
        cand = (trace[-1], -s, MeasurementParams(phi=phi, k=k), rho, converged, collapsed)
        if best is None or cand[:2] > best[:2]:
            best = cand
    _, _, meas, rho, converged, collapsed = best
    degenerate = collapsed
    if k >= 2:
        # uninformative clustering: no gain over the one-class closed form
        ll1 = independence_loglik(panel)
        degenerate = (degenerate or k > _count_patterns(panel)
                      or best[0] <= ll1 + 1e-6 * (abs(ll1) + 1.0))
    return LCFit(phi=meas, rho=rho, loglik=best[0], converged=converged,
                 iterations=iterations, start_logliks=start_logliks, loglik_traces=traces,
                 degenerate=degenerate)


def _latent_mstep_basic(moments) -> tuple[LatentChainParams, bool]:
    b, bb = moments.b, moments.bb
    k = b.shape[2]
    pi = b[:, 0, :].sum(axis=0)
    pi = np.clip(pi / pi.sum(), 0.0, None)
    pi /= pi.sum()
    rows = bb.sum(axis=(0, 1)) if bb.size else np.zeros((k, k))
    degenerate = False
    Pi = np.empty((k, k))
    for u in range(k):
        tot = rows[u].sum()
        if tot <= 0:
            Pi[u] = 1.0 / k
            degenerate = True
        else:
            Pi[u] = rows[u] / tot
    return LatentChainParams(pi=pi, Pi=Pi), degenerate


def fit_basic_lm_fml(panel: ResponsePanel, k: int, opts: FitOptions = FitOptions(),
                     _allow_t1: bool = False) -> FitResult:
    """Full-likelihood EM for the model without covariates.

    E-step: forward-backward smoothing per unit. M-step: closed-form updates
    of the response tables, the initial vector and the transition matrix.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if panel.T == 1 and not _allow_t1:
        raise ValueError("T=1 panels carry no transition information; "
                         "fit the pooled latent-class model instead (fit_lc_pooled)")
    return _fit_lm(panel, None, k, PAIRWISE, opts)


def fit_cov_lm_fml(panel: ResponsePanel, covs: CovariatePanel, k: int,
                   layout: str = PAIRWISE, opts: FitOptions = FitOptions()) -> FitResult:
    """Full-likelihood EM with covariates on the initial and transition logits.

    The measurement update stays closed form; the latent block is refit each
    M-step by the weighted multinomial logit solvers, warm started at the
    current coefficients.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if layout not in (PAIRWISE, DIFFERENCE):
        raise ValueError(f"unknown layout {layout!r}")
    if panel.T == 1:
        raise ValueError("T=1 panels carry no transition information; "
                         "fit the pooled latent-class model instead (fit_lc_pooled)")
    covs.check_matches(panel)
    return _fit_lm(panel, covs, k, layout, opts)


def _latent_mstep_cov(moments, covs: CovariatePanel, current: CovariateLatentParams,
                      layout: str, em_iter: int) -> CovariateLatentParams:
    b, bb = moments.b, moments.bb
    n, _, k = b.shape
    if k == 1:
        return current
    try:
        beta, _ = mlogit.fit_weighted_mlogit(
            mlogit.WeightedLogitProblem(covs.x_init, b[:, 0, :], ref_class=0),
            coef0=current.beta)
        n_obs = bb.shape[0] * bb.shape[1]
        x_flat = covs.x_trans.reshape(n_obs, covs.q2)
        bb_flat = bb.reshape(n_obs, k, k)
        if layout == PAIRWISE:
            coef, _ = mlogit.fit_transition_pairwise(x_flat, bb_flat,
                                                     coef0=current.trans.coef)
            trans = PairwiseTransitions(coef)
        else:
            icpt, slopes, _ = mlogit.fit_transition_difference(x_flat, bb_flat,
                                                               init=current.trans)
            trans = DifferenceTransitions(icpt, slopes)
    except (SeparationError, ConvergenceError) as exc:
        raise type(exc)(f"EM iteration {em_iter}: {exc}") from exc
    return CovariateLatentParams(beta=beta, trans=trans)


def _fit_lm(panel, covs, k, layout, opts) -> FitResult:
    seeds = np.random.SeedSequence(opts.seed).spawn(opts.n_starts)
    pooled_y = panel.pooled()
    best = None
    iterations, start_logliks, traces = [], [], []
    for s, seed in enumerate(seeds):
        params = random_start(panel, k, seed, covs=covs, layout=layout)
        trace = []
        degenerate = False
        n_iter = 0
        converged = False
        for m in range(opts.max_iter + 1):
            moments = posterior_moments(params.measurement, params.latent, panel, covs)
            trace.append(moments.loglik)
            if m > 0 and _converged(trace[-1], trace[-2], opts.rel_tol):
                converged = True
                break
            if m == opts.max_iter:
                break
            phi, collapsed = _phi_mstep(pooled_y, moments.b.reshape(-1, k), panel.cats)
            degenerate = degenerate or collapsed
            meas = MeasurementParams(phi=phi, k=k)
            if covs is None:
                latent, deg = _latent_mstep_basic(moments)
                degenerate = degenerate or deg
            else:
                latent = _latent_mstep_cov(moments, covs, params.latent, layout, m)
            params = ModelParams(measurement=meas, latent=latent)
            n_iter = m + 1
        iterations.append(n_iter)
        start_logliks.append(trace[-1])
        traces.append(trace)
        cand = (trace[-1], -s, params, converged, degenerate)
        if best is None or cand[:2] > best[:2]:
            best = cand
    _, _, params, converged, degenerate = best
    return FitResult(params=params, loglik=best[0], iterations=iterations,
                     converged=converged, start_logliks=start_logliks,
                     loglik_traces=traces, degenerate=degenerate)
