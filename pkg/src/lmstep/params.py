"""Parameter blocks of the latent Markov model.

The measurement block is always a set of column-stochastic response tables.
The latent block is either plain probabilities (no covariates) or multinomial
logit coefficients on the initial and transition logits. Two transition
parameterizations are supported: one coefficient vector per ordered state pair
(``pairwise``) and the parsimonious shared-slope form where the slope of every
pair is a difference of per-state vectors (``difference``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

#: Lower clamp applied to conditional response probabilities after every
#: measurement update; keeps all log-likelihood terms finite.
PHI_FLOOR = 1e-10

PAIRWISE = "pairwise"
DIFFERENCE = "difference"
LAYOUTS = (PAIRWISE, DIFFERENCE)

_STOCHASTIC_TOL = 1e-10


def _check_prob_vector(p, what):
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError(f"{what} entries must lie in [0, 1]")
    if abs(float(p.sum()) - 1.0) > _STOCHASTIC_TOL * max(1, p.size):
        raise ValueError(f"{what} must sum to 1 (got {p.sum()!r})")


@dataclass(frozen=True, eq=False)
class MeasurementParams:
    """Conditional response probability tables, one ``(cats[j], k)`` table per item."""

    phi: tuple
    k: int

    def __post_init__(self):
        phi = tuple(np.ascontiguousarray(np.asarray(p, dtype=np.float64)) for p in self.phi)
        if not phi:
            raise ValueError("need at least one item table")
        for j, p in enumerate(phi):
            if p.ndim != 2 or p.shape[1] != self.k:
                raise ValueError(f"item {j}: table must have shape (c_j, k={self.k})")
            for u in range(self.k):
                _check_prob_vector(p[:, u], f"item {j} state {u} column")
        object.__setattr__(self, "phi", phi)

    @property
    def r(self) -> int:
        return len(self.phi)

    @property
    def cats(self) -> np.ndarray:
        return np.array([p.shape[0] for p in self.phi], dtype=np.int64)

    def log_padded(self) -> np.ndarray:
        """Tables stacked to (r, max_c, k) of log-probabilities, padded with -inf."""
        cmax = int(max(p.shape[0] for p in self.phi))
        out = np.full((self.r, cmax, self.k), -np.inf)
        with np.errstate(divide="ignore"):
            for j, p in enumerate(self.phi):
                out[j, : p.shape[0], :] = np.log(p)
        return out


@dataclass(frozen=True, eq=False)
class LatentChainParams:
    """Homogeneous chain: initial probability vector and row-stochastic transitions."""

    pi: np.ndarray
    Pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64).reshape(-1)
        Pi = np.asarray(self.Pi, dtype=np.float64)
        k = pi.shape[0]
        if Pi.shape != (k, k):
            raise ValueError(f"Pi must be ({k}, {k})")
        _check_prob_vector(pi, "pi")
        for u in range(k):
            _check_prob_vector(Pi[u], f"Pi row {u}")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "Pi", Pi)

    @property
    def k(self) -> int:
        return self.pi.shape[0]


@dataclass(frozen=True, eq=False)
class PairwiseTransitions:
    """Transition logit coefficients, one (1 + q2) vector per ordered pair u != v.

    Stored as ``coef[u, v, :]`` with the diagonal fixed at zero; the
    self-transition is the reference category of row ``u``.
    """

    coef: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=np.float64)
        if coef.ndim != 3 or coef.shape[0] != coef.shape[1]:
            raise ValueError("coef must have shape (k, k, 1 + q2)")
        if not np.all(np.isfinite(coef)):
            raise ValueError("coefficients must be finite")
        k = coef.shape[0]
        if np.any(coef[np.arange(k), np.arange(k), :] != 0):
            raise ValueError("diagonal (self-transition) coefficients must be zero")
        object.__setattr__(self, "coef", coef)

    @property
    def k(self) -> int:
        return self.coef.shape[0]

    @property
    def q2(self) -> int:
        return self.coef.shape[2] - 1

    layout = PAIRWISE


@dataclass(frozen=True, eq=False)
class DifferenceTransitions:
    """Shared-slope transition logits.

    The pair (u, v) logit has intercept ``intercepts[u, v]`` and slope
    ``slopes[u] - slopes[v]``; ``slopes[0]`` is pinned at zero for
    identifiability, so no slope is stored for state 1.
    """

    intercepts: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        icpt = np.asarray(self.intercepts, dtype=np.float64)
        slopes = np.asarray(self.slopes, dtype=np.float64)
        if icpt.ndim != 2 or icpt.shape[0] != icpt.shape[1]:
            raise ValueError("intercepts must be (k, k)")
        k = icpt.shape[0]
        if slopes.ndim != 2 or slopes.shape[0] != k:
            raise ValueError("slopes must be (k, q2)")
        if not (np.all(np.isfinite(icpt)) and np.all(np.isfinite(slopes))):
            raise ValueError("coefficients must be finite")
        if np.any(np.diag(icpt) != 0):
            raise ValueError("diagonal intercepts must be zero")
        if slopes.shape[1] and np.any(slopes[0] != 0):
            raise ValueError("state-1 slope vector is fixed at zero")
        object.__setattr__(self, "intercepts", icpt)
        object.__setattr__(self, "slopes", slopes)

    @property
    def k(self) -> int:
        return self.intercepts.shape[0]

    @property
    def q2(self) -> int:
        return self.slopes.shape[1]

    layout = DIFFERENCE


Transitions = Union[PairwiseTransitions, DifferenceTransitions]


@dataclass(frozen=True, eq=False)
class CovariateLatentParams:
    """Latent-process regression coefficients.

    ``beta[:, u - 2]`` holds the intercept and slopes of the occasion-1 logit
    of state ``u`` against state 1 (the reference), for ``u = 2..k``.
    """

    beta: np.ndarray
    trans: Transitions

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 2:
            raise ValueError("beta must be (1 + q1, k - 1)")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        if beta.shape[1] != self.trans.k - 1:
            raise ValueError("beta columns must match k - 1")
        object.__setattr__(self, "beta", beta)

    @property
    def k(self) -> int:
        return self.trans.k

    @property
    def q1(self) -> int:
        return self.beta.shape[0] - 1

    @property
    def layout(self) -> str:
        return self.trans.layout


LatentParams = Union[LatentChainParams, CovariateLatentParams]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Measurement block plus one latent block (probabilities or coefficients)."""

    measurement: MeasurementParams
    latent: LatentParams

    def __post_init__(self):
        if self.measurement.k != self.latent.k:
            raise ValueError("measurement and latent blocks disagree on the state count")

    @property
    def k(self) -> int:
        return self.measurement.k

    @property
    def has_covariates(self) -> bool:
        return isinstance(self.latent, CovariateLatentParams)


@dataclass(frozen=True, eq=False)
class PosteriorMoments:
    """Expected state and transition indicators given the data.

    ``b[i, t, u]`` is the expected membership of unit ``i`` in state ``u`` at
    occasion ``t``; ``bb[i, t - 1, u, v]`` the expected transition indicator
    from ``u`` at occasion ``t - 1`` to ``v`` at occasion ``t``. ``loglik`` is
    the total log-likelihood for exact smoothing posteriors and ``None`` for
    the approximate moments used by the stepwise estimators.
    """

    b: np.ndarray
    bb: np.ndarray
    loglik: float | None

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64)
        bb = np.asarray(self.bb, dtype=np.float64)
        if b.ndim != 3:
            raise ValueError("b must be (n, T, k)")
        n, T, k = b.shape
        if bb.shape != (n, max(T - 1, 0), k, k):
            raise ValueError("bb must be (n, T - 1, k, k)")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "bb", bb)

    def validate(self, tol: float = 1e-8) -> None:
        if np.any(self.b < -tol) or np.any(self.bb < -tol):
            raise ValueError("posterior moments must be nonnegative")
        if np.max(np.abs(self.b.sum(axis=2) - 1.0), initial=0.0) > tol:
            raise ValueError("b rows must sum to 1")
        if self.bb.size and np.max(np.abs(self.bb.sum(axis=(2, 3)) - 1.0)) > tol:
            raise ValueError("bb blocks must sum to 1")


@dataclass(frozen=True, eq=False)
class StateMarginals:
    """Marginal state distribution per occasion: ``lam[t, u] = P(state u at t)``."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        if lam.ndim != 2:
            raise ValueError("lam must be (T, k)")
        for t in range(lam.shape[0]):
            _check_prob_vector(lam[t], f"occasion {t} marginal")
        object.__setattr__(self, "lam", lam)

    @property
    def T(self) -> int:
        return self.lam.shape[0]

    @property
    def k(self) -> int:
        return self.lam.shape[1]
