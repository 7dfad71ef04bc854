import numpy as np
import pytest

from lmstep import SeparationError
from lmstep.mlogit import (WeightedLogitProblem, difference_grad, difference_loglik,
                           fit_transition_difference, fit_transition_pairwise,
                           fit_weighted_mlogit, mlogit_grad, mlogit_loglik,
                           pairwise_loglik)

from .oracles import central_diff, grid_search_2d, rel_err


def random_problem(rng, m=30, q=2, k=3, ref=0):
    x = rng.normal(size=(m, q))
    w = rng.uniform(0.0, 1.0, size=(m, k))
    return WeightedLogitProblem(design=x, weights=w, ref_class=ref)


class TestWeightedMlogit:
    def test_closed_form_intercept(self):
        w = np.tile([0.25, 0.75], (40, 1))
        problem = WeightedLogitProblem(design=np.zeros((40, 0)), weights=w)
        coef, _ = fit_weighted_mlogit(problem)
        assert coef[0, 0] == pytest.approx(np.log(3.0), abs=1e-8)

    def test_all_weight_on_reference_separates(self):
        w = np.tile([1.0, 0.0], (25, 1))
        problem = WeightedLogitProblem(design=np.zeros((25, 0)), weights=w)
        with pytest.raises(SeparationError):
            fit_weighted_mlogit(problem)

    def test_matches_grid_search_oracle(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(20, 1))
        w = rng.uniform(0.05, 1.0, size=(20, 2))
        problem = WeightedLogitProblem(design=x, weights=w)

        def objective(theta):
            return mlogit_loglik(theta.reshape(2, 1), x, w, 0)

        coef, _ = fit_weighted_mlogit(problem)
        oracle, _ = grid_search_2d(objective)
        np.testing.assert_allclose(coef[:, 0], oracle, atol=1e-4)

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(400 + seed)
        p = random_problem(rng)
        theta = rng.normal(size=(3, 2)) * 0.8

        def fun(v):
            return mlogit_loglik(v.reshape(3, 2), p.design, p.weights, p.ref_class)

        g = mlogit_grad(theta, p.design, p.weights, p.ref_class)
        fd = central_diff(fun, theta.reshape(-1)).reshape(3, 2)
        assert rel_err(g, fd) < 1e-5

    def test_weight_scale_equivariance(self):
        rng = np.random.default_rng(11)
        p = random_problem(rng, k=2, q=1)
        coef1, _ = fit_weighted_mlogit(p)
        scaled = WeightedLogitProblem(design=p.design, weights=7.3 * p.weights)
        coef2, _ = fit_weighted_mlogit(scaled)
        np.testing.assert_allclose(coef1, coef2, atol=1e-8)

    def test_same_optimum_from_any_start(self):
        rng = np.random.default_rng(12)
        p = random_problem(rng, k=3, q=2)
        ref, _ = fit_weighted_mlogit(p)
        for s in range(4):
            start = rng.normal(size=ref.shape) * 2.0
            coef, _ = fit_weighted_mlogit(p, coef0=start)
            np.testing.assert_allclose(coef, ref, atol=1e-6)

    def test_invalid_weights_rejected(self):
        with pytest.raises(ValueError):
            WeightedLogitProblem(design=np.zeros((3, 1)), weights=np.full((3, 2), -1.0))
        with pytest.raises(ValueError):
            WeightedLogitProblem(design=np.zeros((3, 1)), weights=np.zeros((3, 2)))


class TestTransitionPairwise:
    def test_self_transitions_only_separate(self):
        w = np.zeros((30, 2, 2))
        w[:, 0, 0] = 1.0
        w[:, 1, 1] = 1.0
        with pytest.raises(SeparationError, match="transition row"):
            fit_transition_pairwise(np.zeros((30, 0)), w)

    def test_intercept_only_closed_form(self):
        counts = np.array([[40.0, 10.0], [5.0, 45.0]])
        w = np.tile(counts / counts.sum(), (60, 1, 1))
        coef, _ = fit_transition_pairwise(np.zeros((60, 0)), w)
        assert coef[0, 1, 0] == pytest.approx(np.log(10.0 / 40.0), abs=1e-7)
        assert coef[1, 0, 0] == pytest.approx(np.log(5.0 / 45.0), abs=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_objective_gradient_check(self, seed):
        rng = np.random.default_rng(500 + seed)
        m, k, q = 25, 3, 2
        x = rng.normal(size=(m, q))
        w = rng.uniform(0.0, 1.0, size=(m, k, k))
        coef = rng.normal(size=(k, k, 1 + q)) * 0.6
        coef[np.arange(k), np.arange(k), :] = 0.0

        free = [(u, v, i) for u in range(k) for v in range(k) if v != u
                for i in range(1 + q)]

        def fun(theta):
            c = coef.copy()
            for pos, (u, v, i) in enumerate(free):
                c[u, v, i] = theta[pos]
            return pairwise_loglik(c, x, w)

        theta0 = np.array([coef[u, v, i] for (u, v, i) in free])
        fd = central_diff(fun, theta0)
        analytic = []
        for u in range(k):
            cols = [v for v in range(k) if v != u]
            g = mlogit_grad(coef[u, cols, :].T, x, w[:, u, :], u)
            for ic, v in enumerate(cols):
                for i in range(1 + q):
                    analytic.append((u, v, i, g[i, ic]))
        ana = np.array([val for (_, _, _, val) in analytic])
        assert rel_err(ana, fd) < 1e-5


class TestTransitionDifference:
    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(600 + seed)
        m, k, q = 20, 3, 2
        x = rng.normal(size=(m, q))
        w = rng.uniform(0.0, 1.0, size=(m, k, k))
        icpt = rng.normal(size=(k, k)) * 0.7
        np.fill_diagonal(icpt, 0.0)
        slopes = rng.normal(size=(k, q)) * 0.7
        slopes[0] = 0.0

        offdiag = [(u, v) for u in range(k) for v in range(k) if v != u]

        def fun(theta):
            ic = icpt.copy()
            sl = slopes.copy()
            for pos, (u, v) in enumerate(offdiag):
                ic[u, v] = theta[pos]
            sl[1:] = theta[len(offdiag):].reshape(k - 1, q)
            return difference_loglik(ic, sl, x, w)

        theta0 = np.concatenate([[icpt[u, v] for u, v in offdiag], slopes[1:].ravel()])
        fd = central_diff(fun, theta0)
        gi, gs = difference_grad(icpt, slopes, x, w)
        ana = np.concatenate([[gi[u, v] for u, v in offdiag], gs[1:].ravel()])
        assert rel_err(ana, fd) < 1e-5

    def test_matches_pairwise_on_antisymmetric_problem(self):
        # at k=2 the shared-slope family is the pairwise family restricted to
        # slope(1->2) == -slope(2->1); on weights generated from such a model
        # both fits recover the same transition probabilities
        rng = np.random.default_rng(13)
        m, q = 400, 1
        x = rng.normal(size=(m, q))
        s = 0.8
        eta12 = -1.2 - s * x[:, 0]
        eta21 = 0.4 + s * x[:, 0]
        p12 = 1 / (1 + np.exp(-eta12))
        p21 = 1 / (1 + np.exp(-eta21))
        w = np.empty((m, 2, 2))
        w[:, 0, 0], w[:, 0, 1] = 1 - p12, p12
        w[:, 1, 0], w[:, 1, 1] = p21, 1 - p21
        coef, _ = fit_transition_pairwise(x, w)
        icpt, slopes, _ = fit_transition_difference(x, w)
        assert coef[0, 1, 0] == pytest.approx(icpt[0, 1], abs=1e-5)
        assert coef[1, 0, 0] == pytest.approx(icpt[1, 0], abs=1e-5)
        assert coef[0, 1, 1] == pytest.approx(-slopes[1, 0], abs=1e-5)
        assert coef[1, 0, 1] == pytest.approx(slopes[1, 0], abs=1e-5)

    def test_zero_slope_process_estimates_near_zero(self):
        # weights from an intercept-only process: fitted slope differences
        # stay within Monte Carlo noise of zero
        rng = np.random.default_rng(14)
        m, k, q = 2000, 3, 2
        x = rng.normal(size=(m, q))
        P = np.array([[0.8, 0.1, 0.1], [0.15, 0.7, 0.15], [0.05, 0.25, 0.7]])
        origin = rng.integers(0, k, size=m)
        dest = np.array([rng.choice(k, p=P[o]) for o in origin])
        w = np.zeros((m, k, k))
        w[np.arange(m), origin, dest] = 1.0
        icpt, slopes, _ = fit_transition_difference(x, w)
        assert np.max(np.abs(slopes)) < 0.12

    def test_objective_value_consistent_with_pairwise(self):
        # expressing a shared-slope model in pairwise coordinates leaves the
        # objective unchanged
        rng = np.random.default_rng(15)
        m, k, q = 10, 3, 2
        x = rng.normal(size=(m, q))
        w = rng.uniform(0.0, 1.0, size=(m, k, k))
        icpt = rng.normal(size=(k, k))
        np.fill_diagonal(icpt, 0.0)
        slopes = rng.normal(size=(k, q))
        slopes[0] = 0.0
        coef = np.zeros((k, k, 1 + q))
        for u in range(k):
            for v in range(k):
                if u != v:
                    coef[u, v, 0] = icpt[u, v]
                    coef[u, v, 1:] = slopes[u] - slopes[v]
        assert difference_loglik(icpt, slopes, x, w) == pytest.approx(
            pairwise_loglik(coef, x, w), rel=1e-12)
