"""Containers for categorical response panels and per-unit covariate designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Code used for a missing response inside :attr:`ResponsePanel.y`.
MISSING = -1


@dataclass(frozen=True, eq=False)
class ResponsePanel:
    """Categorical responses of ``n`` units over ``T`` occasions and ``r`` items.

    ``y[i, t, j]`` is the 0-based category of item ``j`` for unit ``i`` at
    occasion ``t``, or :data:`MISSING`. ``cats[j]`` gives the number of
    categories of item ``j`` (at least 2).
    """

    y: np.ndarray
    cats: np.ndarray

    def __post_init__(self):
        y = np.ascontiguousarray(np.asarray(self.y), dtype=np.int16)
        cats = np.asarray(self.cats, dtype=np.int64).reshape(-1)
        if y.ndim != 3:
            raise ValueError("y must have shape (n, T, r)")
        n, T, r = y.shape
        if min(n, T, r) < 1:
            raise ValueError("need n >= 1, T >= 1 and r >= 1")
        if cats.shape[0] != r:
            raise ValueError(f"cats must have length r={r}, got {cats.shape[0]}")
        if np.any(cats < 2):
            raise ValueError("every item needs at least 2 categories")
        bad = (y != MISSING) & ((y < 0) | (y >= cats[None, None, :]))
        if np.any(bad):
            i, t, j = (int(v) for v in np.argwhere(bad)[0])
            raise ValueError(f"response out of range at unit {i}, occasion {t}, item {j}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "cats", cats)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def r(self) -> int:
        return self.y.shape[2]

    def pooled(self) -> np.ndarray:
        """All (unit, occasion) response vectors stacked into shape (n*T, r)."""
        return self.y.reshape(self.n * self.T, self.r)

    def subset(self, idx) -> "ResponsePanel":
        """New panel holding the units listed in ``idx`` (repeats allowed)."""
        return ResponsePanel(self.y[np.asarray(idx)], self.cats)


@dataclass(frozen=True, eq=False)
class CovariatePanel:
    """Covariate designs for the latent process.

    ``x_init[i]`` (length ``q1``) enters the occasion-1 state model and
    ``x_trans[i, t - 2]`` (length ``q2``) enters the transition model at
    occasion ``t = 2..T``.
    """

    x_init: np.ndarray
    x_trans: np.ndarray

    def __post_init__(self):
        xi = np.ascontiguousarray(np.asarray(self.x_init, dtype=np.float64))
        xt = np.ascontiguousarray(np.asarray(self.x_trans, dtype=np.float64))
        if xi.ndim != 2:
            raise ValueError("x_init must have shape (n, q1)")
        if xt.ndim != 3:
            raise ValueError("x_trans must have shape (n, T - 1, q2)")
        if xt.shape[0] != xi.shape[0]:
            raise ValueError("x_init and x_trans disagree on the unit count")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(xt))):
            raise ValueError("covariates must be finite (missing covariates are not supported)")
        object.__setattr__(self, "x_init", xi)
        object.__setattr__(self, "x_trans", xt)

    @property
    def n(self) -> int:
        return self.x_init.shape[0]

    @property
    def q1(self) -> int:
        return self.x_init.shape[1]

    @property
    def q2(self) -> int:
        return self.x_trans.shape[2]

    def check_matches(self, panel: ResponsePanel) -> None:
        if self.n != panel.n:
            raise ValueError(f"covariate rows ({self.n}) do not match panel units ({panel.n})")
        if panel.T >= 2 and self.x_trans.shape[1] != panel.T - 1:
            raise ValueError(
                f"x_trans has {self.x_trans.shape[1]} occasions, panel needs {panel.T - 1}")

    def subset(self, idx) -> "CovariatePanel":
        idx = np.asarray(idx)
        return CovariatePanel(self.x_init[idx], self.x_trans[idx])
