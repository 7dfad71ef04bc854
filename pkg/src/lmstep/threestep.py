"""Stepwise estimation of the latent process.

Step 1 fits the pooled latent-class model (:func:`lmstep.em.fit_lc_pooled`),
step 2 turns it into expected state/transition indicators per (unit, occasion),
and step 3 maximizes the latent-process part of the complete-data likelihood:
closed-form probability updates without covariates, weighted multinomial
logits with them. The improved variant re-runs steps 2 and 3 to a fixed point
while keeping the step-1 response tables frozen, replacing the pooled marginal
with the chained per-occasion marginal implied by the current latent block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlogit
from .em import (FitOptions, FitResult, LCFit, _latent_mstep_basic, fit_lc_pooled)
from .errors import ConvergenceError, DegenerateLikelihoodError, SeparationError
from .model import (initial_probs_batch, log_emissions_panel, state_marginals,
                    transition_matrices_batch)
from .panel import CovariatePanel, ResponsePanel
from .params import (DIFFERENCE, PAIRWISE, CovariateLatentParams, DifferenceTransitions,
                     LatentChainParams, ModelParams, PairwiseTransitions, PosteriorMoments)


@dataclass(frozen=True)
class ThreeStepOptions:
    """Controls for the stepwise fits.

    ``improved`` selects the iterated variant; ``imp_tol`` is the max-abs
    change in the latent-process parameters that counts as a fixed point.
    """

    improved: bool = False
    imp_max_iter: int = 200
    imp_tol: float = 1e-6
    lc_opts: FitOptions = FitOptions()

    def __post_init__(self):
        if self.imp_max_iter < 1:
            raise ValueError("imp_max_iter must be at least 1")
        if self.imp_tol <= 0:
            raise ValueError("imp_tol must be positive")


def step2_moments(lc: LCFit, panel: ResponsePanel) -> PosteriorMoments:
    """Expected indicators from the pooled fit alone.

    ``b[i, t, :]`` is proportional to ``rho * emission`` and the transition
    moments are the exact products ``b[i, t - 1, u] * b[i, t, v]``, which sum
    to one over (u, v) by construction.
    """
    if lc.phi.r != panel.r or np.any(lc.phi.cats != panel.cats):
        raise ValueError("pooled fit does not match the panel's items")
    logE = log_emissions_panel(lc.phi, panel)
    with np.errstate(divide="ignore"):
        logpost = logE + np.log(lc.rho)[None, None, :]
    b = _softmax_occasions(logpost)
    bb = np.einsum("ntu,ntv->ntuv", b[:, :-1, :], b[:, 1:, :])
    return PosteriorMoments(b=b, bb=bb, loglik=None)


def _softmax_occasions(logpost):
    shift = logpost.max(axis=2)
    finite = np.isfinite(shift)
    if not finite.all():
        i, t = (int(v) for v in np.argwhere(~finite)[0])
        raise DegenerateLikelihoodError(i, t, f"zero posterior normalizer at unit {i}, "
                                              f"occasion {t}")
    w = np.exp(logpost - shift[:, :, None])
    return w / w.sum(axis=2, keepdims=True)


def step3_basic(moments: PosteriorMoments):
    """Closed-form latent-process estimates from expected indicators.

    Returns ``(chain, degenerate)``; a transition row with zero total mass
    falls back to uniform and raises the degeneracy flag.
    """
    return _latent_mstep_basic(moments)


def step3_cov(moments: PosteriorMoments, covs: CovariatePanel, layout: str = PAIRWISE,
              init: CovariateLatentParams | None = None) -> CovariateLatentParams:
    """Weighted-logit latent-process estimates from expected indicators."""
    b, bb = moments.b, moments.bb
    k = b.shape[2]
    if k == 1:
        trans = (PairwiseTransitions(np.zeros((1, 1, 1 + covs.q2)))
                 if layout == PAIRWISE
                 else DifferenceTransitions(np.zeros((1, 1)), np.zeros((1, covs.q2))))
        return CovariateLatentParams(beta=np.zeros((1 + covs.q1, 0)), trans=trans)
    beta, _ = mlogit.fit_weighted_mlogit(
        mlogit.WeightedLogitProblem(covs.x_init, b[:, 0, :], ref_class=0),
        coef0=None if init is None else init.beta)
    n_obs = bb.shape[0] * bb.shape[1]
    x_flat = covs.x_trans.reshape(n_obs, covs.q2)
    bb_flat = bb.reshape(n_obs, k, k)
    if layout == PAIRWISE:
        coef, _ = mlogit.fit_transition_pairwise(
            x_flat, bb_flat, coef0=None if init is None else init.trans.coef)
        trans = PairwiseTransitions(coef)
    elif layout == DIFFERENCE:
        icpt, slopes, _ = mlogit.fit_transition_difference(
            x_flat, bb_flat, init=None if init is None else init.trans)
        trans = DifferenceTransitions(icpt, slopes)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return CovariateLatentParams(beta=beta, trans=trans)


def _latent_delta(old, new) -> float:
    if isinstance(old, LatentChainParams):
        return max(float(np.max(np.abs(old.pi - new.pi))),
                   float(np.max(np.abs(old.Pi - new.Pi))))
    d = float(np.max(np.abs(old.beta - new.beta), initial=0.0))
    if isinstance(old.trans, PairwiseTransitions):
        return max(d, float(np.max(np.abs(old.trans.coef - new.trans.coef))))
    return max(d,
               float(np.max(np.abs(old.trans.intercepts - new.trans.intercepts))),
               float(np.max(np.abs(old.trans.slopes - new.trans.slopes), initial=0.0)))


def _chained_marginals(latent, covs, n, T):
    """Log marginals (n, T, k) and log transition matrices (n, T - 1, k, k)
    implied by the current latent block, per unit."""
    with np.errstate(divide="ignore"):
        if isinstance(latent, LatentChainParams):
            lam = state_marginals(latent, T).lam
            loglam = np.broadcast_to(np.log(lam), (n, T, latent.k))
            logP = np.broadcast_to(np.log(latent.Pi), (n, T - 1, latent.k, latent.k))
            return loglam, logP
        pi2 = initial_probs_batch(latent.beta, covs.x_init)
        Pi4 = transition_matrices_batch(latent.trans, covs.x_trans)
        lam = np.empty((n, T, latent.k))
        lam[:, 0, :] = pi2
        for t in range(1, T):
            lam[:, t, :] = np.einsum("nu,nuv->nv", lam[:, t - 1, :], Pi4[:, t - 1])
        return np.log(lam), np.log(Pi4)


def _improved_moments(logE, loglam, logP) -> PosteriorMoments:
    """Iterated step-2 moments from the chained marginals.

    ``b`` is the per-occasion posterior under the current marginal and the
    frozen step-1 emissions. The transition moments chain it with the
    conditional posterior of the destination state,
    ``bb[u, v] = b[t-1, u] * norm_v(P(v|u) * emission(t, v))``,
    so each bb block sums to one and its row sums reproduce ``b[t-1]``.
    """
    n, T, k = logE.shape
    b = _softmax_occasions(loglam + logE)
    bb = np.empty((n, T - 1, k, k))
    for t in range(1, T):
        logw = logP[:, t - 1] + logE[:, t, None, :]
        shift = logw.max(axis=2)
        finite = np.isfinite(shift)
        if not finite.all():
            i = int(np.argwhere(~finite)[0][0])
            raise DegenerateLikelihoodError(i, t, f"zero posterior normalizer at unit {i}, "
                                                  f"occasion {t}")
        w = np.exp(logw - shift[:, :, None])
        cond = w / w.sum(axis=2, keepdims=True)
        bb[:, t - 1] = b[:, t - 1, :, None] * cond
    return PosteriorMoments(b=b, bb=bb, loglik=None)


def _fit_threestep(panel, k, covs, layout, opts, improved):
    lc = fit_lc_pooled(panel, k, opts.lc_opts)
    moments = step2_moments(lc, panel)
    degenerate = lc.degenerate
    if covs is None:
        latent, deg = step3_basic(moments)
        degenerate = degenerate or deg
    else:
        covs.check_matches(panel)
        latent = step3_cov(moments, covs, layout)

    cycles = 0
    converged = lc.converged
    if improved and panel.T >= 1:
        logE = log_emissions_panel(lc.phi, panel)
        for _ in range(opts.imp_max_iter):
            loglam, logP = _chained_marginals(latent, covs, panel.n, panel.T)
            moments = _improved_moments(logE, loglam, logP)
            if covs is None:
                new_latent, deg = step3_basic(moments)
                degenerate = degenerate or deg
            else:
                new_latent = step3_cov(moments, covs, layout, init=latent)
            delta = _latent_delta(latent, new_latent)
            latent = new_latent
            cycles += 1
            if delta < opts.imp_tol:
                break
        else:
            converged = False

    return FitResult(params=ModelParams(measurement=lc.phi, latent=latent),
                     loglik=lc.loglik, iterations=lc.iterations, converged=converged,
                     start_logliks=lc.start_logliks, loglik_traces=lc.loglik_traces,
                     degenerate=degenerate, cycles=cycles if improved else None,
                     loglik_kind="pooled-lc")


def fit_3s(panel: ResponsePanel, k: int, covs: CovariatePanel | None = None,
           layout: str = PAIRWISE, opts: ThreeStepOptions = ThreeStepOptions()) -> FitResult:
    """Plain stepwise fit: pooled latent-class step, expected indicators,
    one latent-process maximization. The reported log-likelihood is the pooled
    step-1 value (``loglik_kind == 'pooled-lc'``)."""
    return _fit_threestep(panel, k, covs, layout, opts, improved=False)


def fit_3s_imp(panel: ResponsePanel, k: int, covs: CovariatePanel | None = None,
               layout: str = PAIRWISE,
               opts: ThreeStepOptions = ThreeStepOptions(improved=True)) -> FitResult:
    """Iterated stepwise fit; ``FitResult.cycles`` counts the step-2/step-3
    rounds run before the latent parameters moved less than ``imp_tol``.
    Hitting ``imp_max_iter`` clears the converged flag."""
    return _fit_threestep(panel, k, covs, layout, opts, improved=True)
