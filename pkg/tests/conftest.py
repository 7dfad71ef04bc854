import numpy as np
import pytest

from lmstep import (CovariatePanel, LatentChainParams, MeasurementParams, ModelParams,
                    ResponsePanel, gen_panel, scenario_preset)


def random_measurement(rng, k, cats):
    phi = []
    for c in cats:
        t = rng.uniform(0.05, 1.0, size=(c, k))
        phi.append(t / t.sum(axis=0, keepdims=True))
    return MeasurementParams(phi=tuple(phi), k=k)


def random_chain(rng, k):
    pi = rng.uniform(0.05, 1.0, size=k)
    pi /= pi.sum()
    Pi = rng.uniform(0.05, 1.0, size=(k, k))
    Pi /= Pi.sum(axis=1, keepdims=True)
    return LatentChainParams(pi=pi, Pi=Pi)


def random_panel(rng, n, T, cats, missing_frac=0.0):
    cats = np.asarray(cats)
    r = len(cats)
    y = np.empty((n, T, r), dtype=np.int16)
    for j in range(r):
        y[:, :, j] = rng.integers(0, cats[j], size=(n, T))
    if missing_frac > 0:
        mask = rng.random((n, T, r)) < missing_frac
        y[mask] = -1
    return ResponsePanel(y=y, cats=cats)


@pytest.fixture(scope="session")
def s1_panel():
    """One Scenario-1 dataset reused by several test modules."""
    panel, covs, states = gen_panel(scenario_preset("basic-s1"), seed=7)
    return panel, states


@pytest.fixture(scope="session")
def cov_s1_data():
    panel, covs, states = gen_panel(scenario_preset("cov-s1"), seed=7)
    return panel, covs, states
