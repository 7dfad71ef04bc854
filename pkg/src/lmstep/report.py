"""Summaries of fitted models: item and section mean scores, state ordering,
covariate-averaged probability tables and bootstrap standard errors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .em import FitResult
from .errors import LmStepError
from .model import initial_probs_batch, transition_matrices_batch
from .panel import CovariatePanel, ResponsePanel
from .params import CovariateLatentParams, MeasurementParams
from .simulate import (ESTIMATORS, _run_estimator, _seed_int, align_states, param_vector)
from .threestep import ThreeStepOptions


@dataclass(eq=False)
class ScoreTable:
    """Item and section mean scores in [0, 1], plus the induced state order."""

    mu: np.ndarray
    mu_bar: np.ndarray
    section_map: np.ndarray
    state_order: np.ndarray


def item_mean_score(meas: MeasurementParams) -> np.ndarray:
    """Normalized expected category index per item and state; (r, k) in [0, 1].

    Linear in the response tables; undefined for single-category items.
    """
    scores = np.empty((meas.r, meas.k))
    for j, p in enumerate(meas.phi):
        c = p.shape[0]
        if c < 2:
            raise ValueError(f"item {j}: mean score undefined with a single category")
        scores[j] = (np.arange(c)[:, None] * p).sum(axis=0) / (c - 1)
    return scores


def section_mean_score(mu: np.ndarray, section_map) -> np.ndarray:
    """Unweighted per-section averages of the item mean scores; (d, k).

    ``section_map`` assigns every item to one section id in ``0..d-1``.
    """
    section_map = np.asarray(section_map, dtype=np.int64)
    if section_map.shape != (mu.shape[0],):
        raise ValueError("section_map must assign every item to a section")
    d = int(section_map.max()) + 1 if section_map.size else 0
    out = np.empty((d, mu.shape[1]))
    for s in range(d):
        rows = section_map == s
        if not rows.any():
            raise ValueError(f"section {s} has no items")
        out[s] = mu[rows].mean(axis=0)
    return out


def order_states(mu_bar: np.ndarray, pivot_section: int) -> np.ndarray:
    """States sorted ascending by the pivot section's mean score.

    Ties keep the original state index (stable sort). Returns 0-based indices.
    """
    if not (0 <= pivot_section < mu_bar.shape[0]):
        raise ValueError("pivot section out of range")
    return np.argsort(mu_bar[pivot_section], kind="stable")


def score_table(meas: MeasurementParams, section_map, pivot_section: int) -> ScoreTable:
    mu = item_mean_score(meas)
    mu_bar = section_mean_score(mu, section_map)
    return ScoreTable(mu=mu, mu_bar=mu_bar, section_map=np.asarray(section_map),
                      state_order=order_states(mu_bar, pivot_section))


@dataclass(eq=False)
class AveragedTables:
    """Group means of per-unit initial vectors and per-occasion transition matrices."""

    groups: list
    initial: dict
    transition: dict


def averaged_probability_tables(fit: FitResult, covs: CovariatePanel,
                                grouping=None) -> AveragedTables:
    """Average the per-unit model probabilities within groups of units.

    ``grouping`` is one label per unit (a single overall group when omitted).
    Each averaged row is a convex combination of probability rows, so it still
    sums to one.
    """
    latent = fit.params.latent
    if not isinstance(latent, CovariateLatentParams):
        raise ValueError("averaged tables need a covariate fit")
    n = covs.n
    labels = np.asarray(["all"] * n if grouping is None else grouping)
    if labels.shape != (n,):
        raise ValueError("grouping must supply one label per unit")
    pi_rows = initial_probs_batch(latent.beta, covs.x_init)
    Pi4 = transition_matrices_batch(latent.trans, covs.x_trans)
    groups = sorted(set(labels.tolist()))
    initial, transition = {}, {}
    for g in groups:
        mask = labels == g
        if not mask.any():
            warnings.warn(f"group {g!r} is empty; omitted")
            continue
        initial[g] = pi_rows[mask].mean(axis=0)
        transition[g] = Pi4[mask].mean(axis=0)
    return AveragedTables(groups=[g for g in groups if g in initial],
                          initial=initial, transition=transition)


@dataclass(eq=False)
class BootstrapResult:
    names: list
    se: np.ndarray
    estimates: np.ndarray
    base: np.ndarray
    n_failed: int
    B: int


def bootstrap_se(panel: ResponsePanel, k: int, B: int, seed,
                 covs: CovariatePanel | None = None, layout: str = "pairwise",
                 estimator: str = "3s", ts_opts: ThreeStepOptions = ThreeStepOptions(),
                 fit_opts=None, allow_fml: bool = False) -> BootstrapResult:
    """Nonparametric bootstrap over units.

    Each draw resamples whole units with replacement (full response and
    covariate histories), refits, aligns states to the original fit and
    contributes one parameter vector; the reported standard errors use a
    B - 1 denominator. The first draws are stable under increasing ``B``
    with the same seed.
    """
    if B < 2:
        raise ValueError("need at least 2 bootstrap draws")
    if estimator == "fml" and not allow_fml:
        raise ValueError("bootstrapping the full-likelihood fit is expensive; "
                         "pass allow_fml=True to override")
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; available: " + ", ".join(ESTIMATORS))
    from .em import FitOptions
    if fit_opts is None:
        fit_opts = FitOptions()

    children = np.random.SeedSequence(seed).spawn(B + 1)
    base_fit = _run_estimator(estimator, panel, covs, k, layout, children[0],
                              fit_opts, ts_opts)
    names, base_vec = param_vector(base_fit.params)

    vecs = []
    n_failed = 0
    for child in children[1:]:
        draw_ss, fit_ss = child.spawn(2)
        rng = np.random.default_rng(draw_ss)
        idx = rng.integers(0, panel.n, size=panel.n)
        sub_panel = panel.subset(idx)
        sub_covs = None if covs is None else covs.subset(idx)
        try:
            fit = _run_estimator(estimator, sub_panel, sub_covs, k, layout, fit_ss,
                                 fit_opts, ts_opts)
            aligned, _ = align_states(fit.params, base_fit.params)
            _, vec = param_vector(aligned)
            vecs.append(vec)
        except (LmStepError, ValueError, np.linalg.LinAlgError):
            n_failed += 1
    if n_failed > 0.2 * B:
        raise RuntimeError(f"{n_failed}/{B} bootstrap draws failed")
    est = np.vstack(vecs)
    return BootstrapResult(names=names, se=est.std(axis=0, ddof=1), estimates=est,
                           base=base_vec, n_failed=n_failed, B=B)
