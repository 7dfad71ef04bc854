"""Model primitives: emissions, covariate links, marginals and smoothing.

Everything here is a pure function of its arguments; the estimators in
:mod:`lmstep.em` and :mod:`lmstep.threestep` are built on these operations.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .errors import DegenerateLikelihoodError
from .panel import CovariatePanel, ResponsePanel
from .params import (CovariateLatentParams, DifferenceTransitions, LatentChainParams,
                     MeasurementParams, PairwiseTransitions, PosteriorMoments,
                     StateMarginals)


def emission_prob(meas: MeasurementParams, panel: ResponsePanel, i: int, t: int, u: int) -> float:
    """Probability of unit ``i``'s responses at occasion ``t`` given state ``u``.

    Missing items are skipped; if every item is missing the empty product is 1.
    """
    if not (0 <= i < panel.n and 0 <= t < panel.T and 0 <= u < meas.k):
        raise IndexError(f"index out of range: unit {i}, occasion {t}, state {u}")
    prob = 1.0
    for j in range(panel.r):
        c = panel.y[i, t, j]
        if c >= 0:
            prob *= meas.phi[j][c, u]
    return float(prob)


def _softmax_last(eta: np.ndarray) -> np.ndarray:
    eta = eta - eta.max(axis=-1, keepdims=True)
    p = np.exp(eta)
    return p / p.sum(axis=-1, keepdims=True)


def initial_probs_batch(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Initial state probabilities for each row of ``x``; shape (n, k).

    State 1 is the reference (linear predictor zero).
    """
    n = x.shape[0]
    if x.shape[1] != beta.shape[0] - 1:
        raise ValueError(f"covariate vector has length {x.shape[1]}, expected {beta.shape[0] - 1}")
    eta = np.zeros((n, beta.shape[1] + 1))
    eta[:, 1:] = beta[0][None, :] + x @ beta[1:]
    return _softmax_last(eta)


def initial_probs(params: CovariateLatentParams, x1: np.ndarray) -> np.ndarray:
    """Initial state distribution at covariate vector ``x1``; length k, sums to 1."""
    x1 = np.asarray(x1, dtype=np.float64).reshape(1, -1)
    return initial_probs_batch(params.beta, x1)[0]


def transition_matrices_batch(trans, x: np.ndarray) -> np.ndarray:
    """Row-stochastic transition matrices for each (unit, occasion) design row.

    x : (n, S, q2) transition covariates; returns (n, S, k, k). The
    self-transition is the reference category of every row.
    """
    n, S, q2 = x.shape
    if q2 != trans.q2:
        raise ValueError(f"covariate vector has length {q2}, expected {trans.q2}")
    if isinstance(trans, PairwiseTransitions):
        eta = np.broadcast_to(trans.coef[:, :, 0], (n, S, trans.k, trans.k)).copy()
        if q2:
            eta += np.einsum("nsq,uvq->nsuv", x, trans.coef[:, :, 1:])
    elif isinstance(trans, DifferenceTransitions):
        eta = np.broadcast_to(trans.intercepts, (n, S, trans.k, trans.k)).copy()
        if q2:
            d = np.einsum("nsq,uq->nsu", x, trans.slopes)
            eta += d[:, :, :, None] - d[:, :, None, :]
    else:
        raise TypeError(f"unsupported transition parameterization: {type(trans).__name__}")
    return _softmax_last(eta)


def transition_probs(params: CovariateLatentParams, x_t: np.ndarray) -> np.ndarray:
    """k x k transition matrix at transition covariate vector ``x_t``."""
    x_t = np.asarray(x_t, dtype=np.float64).reshape(1, 1, -1)
    return transition_matrices_batch(params.trans, x_t)[0, 0]


def state_marginals(chain: LatentChainParams, T: int) -> StateMarginals:
    """Marginal state distribution at each occasion of a homogeneous chain."""
    if T < 1:
        raise ValueError("T must be at least 1")
    lam = np.empty((T, chain.k))
    lam[0] = chain.pi
    for t in range(1, T):
        lam[t] = lam[t - 1] @ chain.Pi
    return StateMarginals(lam)


def state_marginals_cov(params: CovariateLatentParams, x_init: np.ndarray,
                        x_trans: np.ndarray) -> StateMarginals:
    """Per-occasion marginals for one unit's covariate path.

    x_init : (q1,) occasion-1 covariates; x_trans : (T - 1, q2) transition
    covariates for occasions 2..T.
    """
    x_trans = np.asarray(x_trans, dtype=np.float64)
    T = x_trans.shape[0] + 1
    lam = np.empty((T, params.k))
    lam[0] = initial_probs(params, x_init)
    if T > 1:
        P = transition_matrices_batch(params.trans, x_trans[None, :, :])[0]
        for t in range(1, T):
            lam[t] = lam[t - 1] @ P[t - 1]
    return StateMarginals(lam)


def log_emissions_panel(meas: MeasurementParams, panel: ResponsePanel) -> np.ndarray:
    """Log emission probabilities for every (unit, occasion, state); (n, T, k)."""
    if meas.r != panel.r or np.any(meas.cats != panel.cats):
        raise ValueError("measurement tables do not match the panel's items")
    out = np.empty((panel.n, panel.T, meas.k))
    return backend.log_emissions(panel.y, meas.log_padded(), out)


def _chain_arrays(latent, panel: ResponsePanel, covs: CovariatePanel | None):
    """Per-unit (or shared) initial vectors and transition matrices."""
    if isinstance(latent, LatentChainParams):
        return latent.pi, latent.Pi, True
    if covs is None:
        raise ValueError("covariate latent parameters require a covariate panel")
    covs.check_matches(panel)
    pi2 = initial_probs_batch(latent.beta, covs.x_init)
    Pi4 = transition_matrices_batch(latent.trans, covs.x_trans)
    return pi2, Pi4, False


def posterior_moments(meas: MeasurementParams, latent, panel: ResponsePanel,
                      covs: CovariatePanel | None = None) -> PosteriorMoments:
    """Exact smoothing posteriors for every unit, plus the total log-likelihood."""
    logE = log_emissions_panel(meas, panel)
    init, trans, shared = _chain_arrays(latent, panel, covs)
    if shared:
        b, bb, ll, bad = backend.fb_batch_shared(logE, init, trans)
    else:
        b, bb, ll, bad = backend.fb_batch_per_unit(logE, np.ascontiguousarray(init),
                                                   np.ascontiguousarray(trans))
    if bad is not None:
        raise DegenerateLikelihoodError(*bad)
    return PosteriorMoments(b=b, bb=bb, loglik=float(ll.sum()))


def forward_backward(meas: MeasurementParams, latent, panel: ResponsePanel, i: int,
                     covs: CovariatePanel | None = None):
    """Smoothing posteriors of unit ``i``.

    Returns ``(b, bb, loglik)``: state posteriors (T, k), transition
    posteriors (T - 1, k, k) and the unit's marginal log-likelihood.
    """
    if not (0 <= i < panel.n):
        raise IndexError(f"unit index {i} out of range")
    sub = ResponsePanel(panel.y[i:i + 1], panel.cats)
    sub_covs = None if covs is None else CovariatePanel(covs.x_init[i:i + 1],
                                                        covs.x_trans[i:i + 1])
    try:
        pm = posterior_moments(meas, latent, sub, sub_covs)
    except DegenerateLikelihoodError as err:
        raise DegenerateLikelihoodError(i, err.occasion) from None
    return pm.b[0], pm.bb[0], pm.loglik
