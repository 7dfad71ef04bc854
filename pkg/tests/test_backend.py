"""Compiled and pure-python kernels must agree to float-roundoff level."""

import numpy as np
import pytest

from lmstep import backend

from .conftest import random_chain, random_measurement, random_panel

c_backend = pytest.importorskip("lmstep._core")
from lmstep import _core_py as py_backend  # noqa: E402


def _case(seed, n=40, T=6, k=3, cats=(2, 3, 2)):
    rng = np.random.default_rng(seed)
    meas = random_measurement(rng, k, cats)
    chain = random_chain(rng, k)
    panel = random_panel(rng, n, T, cats, missing_frac=0.15)
    logE = np.empty((n, T, k))
    return panel, meas, chain, logE


@pytest.mark.parametrize("seed", range(4))
def test_log_emissions_agree(seed):
    panel, meas, _, logE = _case(seed)
    a = c_backend.log_emissions(panel.y, meas.log_padded(), logE.copy())
    b = py_backend.log_emissions(panel.y, meas.log_padded(), logE.copy())
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("seed", range(4))
def test_fb_shared_agree(seed):
    panel, meas, chain, logE = _case(seed)
    c_backend.log_emissions(panel.y, meas.log_padded(), logE)
    b1, bb1, ll1, bad1 = c_backend.fb_batch_shared(logE, chain.pi, chain.Pi)
    b2, bb2, ll2, bad2 = py_backend.fb_batch_shared(logE, chain.pi, chain.Pi)
    assert bad1 is None and bad2 is None
    np.testing.assert_allclose(b1, b2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(bb1, bb2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(ll1, ll2, rtol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_fb_per_unit_agree(seed):
    panel, meas, _, logE = _case(seed)
    rng = np.random.default_rng(1000 + seed)
    n, T, k = logE.shape
    pi2 = rng.dirichlet([1.5] * k, size=n)
    Pi4 = rng.dirichlet([1.5] * k, size=(n, T - 1, k))
    c_backend.log_emissions(panel.y, meas.log_padded(), logE)
    b1, bb1, ll1, _ = c_backend.fb_batch_per_unit(logE, pi2, Pi4)
    b2, bb2, ll2, _ = py_backend.fb_batch_per_unit(logE, pi2, Pi4)
    np.testing.assert_allclose(b1, b2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(bb1, bb2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(ll1, ll2, rtol=1e-12)


def test_degenerate_occasion_reported_identically():
    logE = np.zeros((2, 3, 2))
    logE[1, 2, :] = -np.inf
    pi = np.array([0.5, 0.5])
    Pi = np.full((2, 2), 0.5)
    for impl in (c_backend, py_backend):
        out = impl.fb_batch_shared(logE, pi, Pi)
        assert out[3] == (1, 2)


def test_active_backend_exposes_kernels():
    assert backend.BACKEND in ("c", "python")
    assert callable(backend.fb_batch_shared)
    assert backend.get_backend("python").BACKEND_NAME == "python"
