"""Weighted multinomial logit solvers.

These maximize weighted log-likelihoods of the form
``sum_obs sum_class w[obs, class] * log p(class | x_obs)`` where the weights
are fractional class memberships. Three variants are used by the estimators:
the occasion-1 state logit (reference state 1), the per-origin transition
logits (reference = self-transition, rows separable) and the shared-slope
transition parameterization (rows coupled through the slope differences).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import ConvergenceError, SeparationError
from .params import DifferenceTransitions, PairwiseTransitions

#: Coefficient magnitude beyond which the likelihood is treated as unbounded
#: (quasi-separation): exp(30) exceeds any realistic odds ratio.
SEPARATION_BOUND = 30.0


@dataclass(frozen=True, eq=False)
class WeightedLogitProblem:
    """One weighted multinomial logit fit.

    design : (m, q) covariate rows (the intercept column is added internally);
    weights : (m, k) nonnegative fractional memberships;
    ref_class : index of the reference category (linear predictor zero).
    """

    design: np.ndarray
    weights: np.ndarray
    ref_class: int = 0

    def __post_init__(self):
        x = np.asarray(self.design, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if x.ndim != 2 or w.ndim != 2 or x.shape[0] != w.shape[0]:
            raise ValueError("design must be (m, q) and weights (m, k) with matching m")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if w.sum() <= 0:
            raise ValueError("need at least one observation with positive weight")
        if not (0 <= self.ref_class < w.shape[1]):
            raise ValueError("ref_class out of range")
        object.__setattr__(self, "design", x)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return self.weights.shape[1]

    @property
    def q(self) -> int:
        return self.design.shape[1]


def _with_intercept(x: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((x.shape[0], 1)), x])


def _eta_full(coef: np.ndarray, x1: np.ndarray, ref: int) -> np.ndarray:
    """Linear predictors for all classes, zero column at the reference."""
    m = x1.shape[0]
    k = coef.shape[1] + 1
    eta = np.zeros((m, k))
    free = [c for c in range(k) if c != ref]
    eta[:, free] = x1 @ coef
    return eta


def mlogit_loglik(coef: np.ndarray, design: np.ndarray, weights: np.ndarray,
                  ref_class: int = 0) -> float:
    """Weighted multinomial log-likelihood at coefficient matrix ``coef``."""
    x1 = _with_intercept(np.asarray(design, dtype=np.float64))
    eta = _eta_full(coef, x1, ref_class)
    lse = logsumexp(eta, axis=1)
    mtot = weights.sum(axis=1)
    return float((weights * eta).sum() - (mtot * lse).sum())


def mlogit_grad(coef: np.ndarray, design: np.ndarray, weights: np.ndarray,
                ref_class: int = 0) -> np.ndarray:
    """Analytic gradient of :func:`mlogit_loglik` with respect to ``coef``."""
    x1 = _with_intercept(np.asarray(design, dtype=np.float64))
    eta = _eta_full(coef, x1, ref_class)
    p = np.exp(eta - logsumexp(eta, axis=1, keepdims=True))
    mtot = weights.sum(axis=1)
    resid = weights - mtot[:, None] * p
    free = [c for c in range(weights.shape[1]) if c != ref_class]
    return x1.T @ resid[:, free]


def _mlogit_hessian(coef, x1, weights, ref):
    k = weights.shape[1]
    d = x1.shape[1]
    eta = _eta_full(coef, x1, ref)
    p = np.exp(eta - logsumexp(eta, axis=1, keepdims=True))
    mtot = weights.sum(axis=1)
    free = [c for c in range(k) if c != ref]
    nf = len(free)
    hess = np.empty((nf * d, nf * d))
    for ia, a in enumerate(free):
        for ib, b in enumerate(free):
            s = mtot * p[:, a] * ((1.0 if a == b else 0.0) - p[:, b])
            block = -(x1 * s[:, None]).T @ x1
            hess[ia * d:(ia + 1) * d, ib * d:(ib + 1) * d] = block
    return hess


def fit_weighted_mlogit(problem: WeightedLogitProblem, coef0: np.ndarray | None = None,
                        gtol: float = 1e-8, max_iter: int = 200):
    """Newton maximization with step halving.

    Returns ``(coef, loglik)`` where ``coef`` is (1 + q, k - 1) with columns
    ordered by class index, the reference class excluded. Raises
    :class:`SeparationError` when coefficients run past ``SEPARATION_BOUND``
    and :class:`ConvergenceError` when the gradient tolerance is not met.
    """
    x1 = _with_intercept(problem.design)
    w = problem.weights
    ref = problem.ref_class
    k, d = problem.k, x1.shape[1]
    coef = np.zeros((d, k - 1)) if coef0 is None else np.array(coef0, dtype=np.float64)
    if coef.shape != (d, k - 1):
        raise ValueError(f"coef0 must have shape ({d}, {k - 1})")
    if k == 1:
        return coef, 0.0
    class_mass = w.sum(axis=0)
    if np.any(class_mass == 0.0):
        c = int(np.argmin(class_mass))
        raise SeparationError(f"class {c} carries zero total weight; its logit "
                              "coefficients diverge (separation)")

    ll = mlogit_loglik(coef, problem.design, w, ref)
    for _ in range(max_iter):
        grad = mlogit_grad(coef, problem.design, w, ref)
        if np.max(np.abs(grad)) < gtol:
            return coef, ll
        hess = _mlogit_hessian(coef, x1, w, ref)
        try:
            step = np.linalg.solve(-hess, grad.reshape(-1, order="F"))
        except np.linalg.LinAlgError:
            ridge = -hess + 1e-8 * np.eye(hess.shape[0])
            try:
                step = np.linalg.solve(ridge, grad.reshape(-1, order="F"))
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(f"singular Hessian in weighted logit: {exc}") from exc
        step = step.reshape(d, k - 1, order="F")
        scale = 1.0
        improved = False
        slack = 1e-12 * (abs(ll) + 1.0)  # float resolution of the objective
        for _ in range(40):
            cand = coef + scale * step
            ll_new = mlogit_loglik(cand, problem.design, w, ref)
            if ll_new >= ll - slack:
                improved = True
                break
            scale *= 0.5
        if not improved:
            # step halving exhausted; the closing gradient check decides
            break
        coef, ll = cand, ll_new
        if np.max(np.abs(coef)) > SEPARATION_BOUND:
            raise SeparationError(
                f"coefficients diverged past {SEPARATION_BOUND:g}; "
                "the weighted likelihood looks unbounded (separation)")
    grad = mlogit_grad(coef, problem.design, w, ref)
    gnorm = float(np.max(np.abs(grad)))
    if gnorm < gtol:
        return coef, ll
    raise ConvergenceError(f"weighted logit did not reach gtol={gtol:g} "
                           f"(gradient max-norm {gnorm:.3e})", grad_norm=gnorm)


def pairwise_loglik(coef: np.ndarray, design: np.ndarray, weights: np.ndarray) -> float:
    """Transition objective under the per-pair parameterization.

    coef : (k, k, 1 + q2) with zero diagonal; weights : (m, k, k) expected
    transition indicators; design : (m, q2).
    """
    k = coef.shape[0]
    total = 0.0
    for u in range(k):
        cols = [v for v in range(k) if v != u]
        total += mlogit_loglik(coef[u, cols, :].T, design, weights[:, u, :], ref_class=u)
    return total


def fit_transition_pairwise(design: np.ndarray, weights: np.ndarray,
                            coef0: np.ndarray | None = None, gtol: float = 1e-8):
    """Row-by-row Newton fits of the per-pair transition logits.

    weights : (m, k, k) expected transition indicators per observation.
    Returns ``(coef, loglik)`` with coef shaped (k, k, 1 + q2), zero diagonal.
    """
    design = np.asarray(design, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    k = weights.shape[1]
    d = design.shape[1] + 1
    coef = np.zeros((k, k, d))
    total = 0.0
    for u in range(k):
        cols = [v for v in range(k) if v != u]
        start = None if coef0 is None else coef0[u, cols, :].T
        try:
            sol, ll = fit_weighted_mlogit(
                WeightedLogitProblem(design, weights[:, u, :], ref_class=u),
                coef0=start, gtol=gtol)
        except (SeparationError, ConvergenceError) as exc:
            raise type(exc)(f"transition row {u + 1}: {exc}") from exc
        coef[u, cols, :] = sol.T
        total += ll
    return coef, total


def _pack_difference(icpt, slopes):
    k = icpt.shape[0]
    off = [icpt[u, v] for u in range(k) for v in range(k) if v != u]
    return np.concatenate([np.asarray(off), slopes[1:].reshape(-1)])


def _unpack_difference(theta, k, q):
    icpt = np.zeros((k, k))
    pos = 0
    for u in range(k):
        for v in range(k):
            if v != u:
                icpt[u, v] = theta[pos]
                pos += 1
    slopes = np.zeros((k, q))
    if q:
        slopes[1:] = theta[pos:].reshape(k - 1, q)
    return icpt, slopes


def difference_loglik(intercepts: np.ndarray, slopes: np.ndarray, design: np.ndarray,
                      weights: np.ndarray) -> float:
    """Transition objective under the shared-slope parameterization."""
    eta = _difference_eta(intercepts, slopes, design)
    lse = logsumexp(eta, axis=2)
    mrow = weights.sum(axis=2)
    return float((weights * eta).sum() - (mrow * lse).sum())


def _difference_eta(icpt, slopes, x):
    m = x.shape[0]
    eta = np.broadcast_to(icpt, (m, icpt.shape[0], icpt.shape[1])).copy()
    if x.shape[1]:
        d = x @ slopes.T
        eta += d[:, :, None] - d[:, None, :]
    return eta


def difference_grad(intercepts: np.ndarray, slopes: np.ndarray, design: np.ndarray,
                    weights: np.ndarray):
    """Analytic gradient of :func:`difference_loglik`.

    Returns ``(g_intercepts, g_slopes)``; the fixed entries (diagonal
    intercepts, state-1 slopes) are reported as zero.
    """
    k = intercepts.shape[0]
    eta = _difference_eta(intercepts, slopes, design)
    p = np.exp(eta - logsumexp(eta, axis=2, keepdims=True))
    mrow = weights.sum(axis=2)
    resid = weights - mrow[:, :, None] * p
    g_icpt = resid.sum(axis=0)
    np.fill_diagonal(g_icpt, 0.0)
    g_slopes = np.zeros_like(slopes)
    if slopes.shape[1]:
        g_slopes[1:] = -(design.T @ resid.sum(axis=1))[:, 1:].T
    return g_icpt, g_slopes


def fit_transition_difference(design: np.ndarray, weights: np.ndarray,
                              init: DifferenceTransitions | None = None,
                              gtol: float = 1e-6, max_iter: int = 2000):
    """Joint gradient-based maximization of the shared-slope transition logits.

    The rows are not separable here, so a single ascent runs over all
    intercepts plus the k - 1 free slope vectors (BFGS on the analytic
    gradient). Returns ``(intercepts, slopes, loglik)``.
    """
    design = np.asarray(design, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    k = weights.shape[1]
    q = design.shape[1]

    if init is not None:
        theta0 = _pack_difference(init.intercepts, init.slopes)
    else:
        theta0 = np.zeros(k * (k - 1) + (k - 1) * q)

    def negative(theta):
        icpt, slopes = _unpack_difference(theta, k, q)
        return -difference_loglik(icpt, slopes, design, weights)

    def negative_grad(theta):
        icpt, slopes = _unpack_difference(theta, k, q)
        gi, gs = difference_grad(icpt, slopes, design, weights)
        return -_pack_difference(gi, gs)

    res = minimize(negative, theta0, jac=negative_grad, method="BFGS",
                   options={"gtol": gtol, "maxiter": max_iter})
    theta = res.x
    if np.max(np.abs(theta)) > SEPARATION_BOUND:
        raise SeparationError(
            f"shared-slope coefficients diverged past {SEPARATION_BOUND:g} (separation)")
    gnorm = float(np.max(np.abs(negative_grad(theta))))
    if gnorm >= gtol:
        # the BFGS line search bottoms out near float resolution of the
        # objective on large weight masses; Newton steps on the analytic
        # gradient (finite-difference Hessian) finish the job
        theta = _newton_polish(negative, negative_grad, theta, gtol)
        gnorm = float(np.max(np.abs(negative_grad(theta))))
        if gnorm >= gtol:
            raise ConvergenceError(
                f"shared-slope transition fit stopped with gradient max-norm {gnorm:.3e}",
                grad_norm=gnorm)
    if np.max(np.abs(theta)) > SEPARATION_BOUND:
        raise SeparationError(
            f"shared-slope coefficients diverged past {SEPARATION_BOUND:g} (separation)")
    icpt, slopes = _unpack_difference(theta, k, q)
    return icpt, slopes, float(-negative(theta))


def _newton_polish(fun, grad, theta, gtol, max_iter=30):
    d = theta.size
    for _ in range(max_iter):
        g = grad(theta)
        if np.max(np.abs(g)) < gtol:
            break
        hess = np.empty((d, d))
        for i in range(d):
            h = 1e-6 * (1.0 + abs(theta[i]))
            e = np.zeros(d)
            e[i] = h
            hess[:, i] = (grad(theta + e) - grad(theta - e)) / (2 * h)
        hess = 0.5 * (hess + hess.T)
        try:
            step = np.linalg.solve(hess, -g)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(hess + 1e-8 * np.eye(d), -g)
        f0 = fun(theta)
        slack = 1e-12 * (abs(f0) + 1.0)
        scale = 1.0
        for _ in range(40):
            cand = theta + scale * step
            if fun(cand) <= f0 + slack:
                theta = cand
                break
            scale *= 0.5
        else:
            break
    return theta


def pairwise_to_transitions(coef: np.ndarray) -> PairwiseTransitions:
    return PairwiseTransitions(coef)


def difference_to_transitions(intercepts: np.ndarray, slopes: np.ndarray) -> DifferenceTransitions:
    return DifferenceTransitions(intercepts, slopes)
