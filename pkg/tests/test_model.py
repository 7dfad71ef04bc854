import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmstep import (CovariateLatentParams, CovariatePanel, DegenerateLikelihoodError,
                    LatentChainParams, MeasurementParams, ModelParams, PairwiseTransitions,
                    ResponsePanel, emission_prob, forward_backward, initial_probs,
                    posterior_moments, state_marginals, state_marginals_cov,
                    transition_probs)
from lmstep.model import initial_probs_batch, transition_matrices_batch
from lmstep.params import DifferenceTransitions

from .conftest import random_chain, random_measurement, random_panel
from .oracles import brute_force_marginals, brute_force_unit


def single_item_panel(values, cats=2):
    y = np.array(values, dtype=np.int16).reshape(1, -1, 1)
    return ResponsePanel(y=y, cats=[cats])


def scenario1_measurement(r, k=2):
    table = np.array([[0.7, 0.3], [0.3, 0.7]])
    return MeasurementParams(phi=(table,) * r, k=k)


class TestEmissionProb:
    def test_single_binary_item(self):
        meas = MeasurementParams(phi=(np.array([[0.7, 0.3], [0.3, 0.7]]),), k=2)
        panel = single_item_panel([1])
        assert emission_prob(meas, panel, 0, 0, 1) == pytest.approx(0.7)
        assert emission_prob(meas, panel, 0, 0, 0) == pytest.approx(0.3)

    def test_all_missing_gives_one(self):
        meas = scenario1_measurement(3)
        y = np.full((1, 2, 3), -1, dtype=np.int16)
        panel = ResponsePanel(y=y, cats=[2, 2, 2])
        assert emission_prob(meas, panel, 0, 0, 0) == 1.0
        assert emission_prob(meas, panel, 0, 1, 1) == 1.0

    def test_scenario1_all_ones_state2(self):
        meas = scenario1_measurement(5)
        y = np.ones((1, 1, 5), dtype=np.int16)
        panel = ResponsePanel(y=y, cats=[2] * 5)
        assert emission_prob(meas, panel, 0, 0, 1) == pytest.approx(0.7 ** 5)

    def test_index_out_of_range(self):
        meas = scenario1_measurement(2)
        panel = random_panel(np.random.default_rng(0), 3, 2, [2, 2])
        with pytest.raises(IndexError):
            emission_prob(meas, panel, 3, 0, 0)
        with pytest.raises(IndexError):
            emission_prob(meas, panel, 0, 2, 0)
        with pytest.raises(IndexError):
            emission_prob(meas, panel, 0, 0, 2)

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_invariant_to_item_order(self, seed):
        rng = np.random.default_rng(seed)
        cats = rng.integers(2, 4, size=4)
        meas = random_measurement(rng, 2, cats)
        panel = random_panel(rng, 2, 2, cats, missing_frac=0.3)
        perm = rng.permutation(4)
        meas_p = MeasurementParams(phi=tuple(meas.phi[j] for j in perm), k=2)
        panel_p = ResponsePanel(y=panel.y[:, :, perm], cats=cats[perm])
        for u in range(2):
            assert emission_prob(meas, panel, 1, 1, u) == pytest.approx(
                emission_prob(meas_p, panel_p, 1, 1, u), rel=1e-12)


class TestLogitLinks:
    def test_zero_beta_uniform(self):
        params = CovariateLatentParams(
            beta=np.zeros((3, 2)),
            trans=PairwiseTransitions(np.zeros((3, 3, 3))))
        p = initial_probs(params, [0.4, -1.2])
        np.testing.assert_allclose(p, np.full(3, 1 / 3), atol=1e-12)

    def test_intercept_only_closed_form(self):
        params = CovariateLatentParams(
            beta=np.array([[np.log(3.0)]]),
            trans=PairwiseTransitions(np.zeros((2, 2, 1))))
        p = initial_probs(params, [])
        np.testing.assert_allclose(p, [0.25, 0.75], atol=1e-12)

    def test_scenario1_log_odds(self):
        beta = np.array([[0.0], [0.5], [1.0]])
        params = CovariateLatentParams(beta=beta,
                                       trans=PairwiseTransitions(np.zeros((2, 2, 3))))
        p = initial_probs(params, [1.0, -1.0])
        assert p[1] / p[0] == pytest.approx(np.exp(-0.5), rel=1e-12)

    def test_dimension_mismatch(self):
        params = CovariateLatentParams(
            beta=np.zeros((3, 1)), trans=PairwiseTransitions(np.zeros((2, 2, 3))))
        with pytest.raises(ValueError):
            initial_probs(params, [1.0])
        with pytest.raises(ValueError):
            transition_probs(params, [1.0])

    def test_zero_gamma_uniform_rows(self):
        params = CovariateLatentParams(
            beta=np.zeros((2, 2)), trans=PairwiseTransitions(np.zeros((3, 3, 2))))
        P = transition_probs(params, [2.0])
        np.testing.assert_allclose(P, np.full((3, 3), 1 / 3), atol=1e-12)

    def test_symmetric_intercepts_give_diag9(self):
        coef = np.zeros((2, 2, 1))
        coef[0, 1, 0] = coef[1, 0, 0] = np.log(0.1 / 0.9)
        params = CovariateLatentParams(beta=np.zeros((1, 1)),
                                       trans=PairwiseTransitions(coef))
        P = transition_probs(params, [])
        np.testing.assert_allclose(P, [[0.9, 0.1], [0.1, 0.9]], atol=1e-12)

    def test_difference_zero_slopes_match_intercept_only(self):
        icpt = np.array([[0.0, 0.3, -0.4], [0.2, 0.0, 0.1], [-0.5, 0.8, 0.0]])
        diff = CovariateLatentParams(
            beta=np.zeros((3, 2)),
            trans=DifferenceTransitions(icpt, np.zeros((3, 2))))
        coef = np.zeros((3, 3, 3))
        coef[:, :, 0] = icpt
        pair = CovariateLatentParams(beta=np.zeros((3, 2)),
                                     trans=PairwiseTransitions(coef))
        x = np.array([1.7, -0.3])
        np.testing.assert_allclose(transition_probs(diff, x), transition_probs(pair, x),
                                   atol=1e-12)

    def test_difference_antisymmetry_at_k2(self):
        # slope of 1->2 is minus the slope of 2->1 under the shared-slope form
        trans = DifferenceTransitions(np.zeros((2, 2)), np.array([[0.0], [0.8]]))
        params = CovariateLatentParams(beta=np.zeros((2, 1)), trans=trans)
        P = transition_probs(params, [1.0])
        logit12 = np.log(P[0, 1] / P[0, 0])
        logit21 = np.log(P[1, 0] / P[1, 1])
        assert logit12 == pytest.approx(-0.8, rel=1e-12)
        assert logit21 == pytest.approx(0.8, rel=1e-12)


class TestStateMarginals:
    def test_first_occasion_is_pi(self):
        chain = LatentChainParams(pi=[0.2, 0.8], Pi=[[0.5, 0.5], [0.1, 0.9]])
        np.testing.assert_allclose(state_marginals(chain, 1).lam[0], [0.2, 0.8])

    def test_identity_transitions_freeze_marginals(self):
        chain = LatentChainParams(pi=[0.3, 0.7], Pi=np.eye(2))
        lam = state_marginals(chain, 4).lam
        np.testing.assert_allclose(lam, np.tile([0.3, 0.7], (4, 1)), atol=1e-15)

    def test_symmetric_stationarity(self):
        chain = LatentChainParams(pi=[0.5, 0.5], Pi=[[0.9, 0.1], [0.1, 0.9]])
        np.testing.assert_allclose(state_marginals(chain, 2).lam[1], [0.5, 0.5],
                                   atol=1e-15)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 4))
        T = int(rng.integers(2, 5))
        chain = random_chain(rng, k)
        lam = state_marginals(chain, T).lam
        oracle = brute_force_marginals(chain.pi, [chain.Pi] * (T - 1), T)
        np.testing.assert_allclose(lam, oracle, atol=1e-12)

    def test_covariate_marginals_match_oracle(self):
        rng = np.random.default_rng(3)
        k, T, q = 3, 4, 2
        beta = rng.normal(size=(1 + q, k - 1)) * 0.5
        coef = rng.normal(size=(k, k, 1 + q)) * 0.5
        coef[np.arange(k), np.arange(k), :] = 0.0
        params = CovariateLatentParams(beta=beta, trans=PairwiseTransitions(coef))
        x1 = rng.normal(size=q)
        xt = rng.normal(size=(T - 1, q))
        lam = state_marginals_cov(params, x1, xt).lam
        pi = initial_probs(params, x1)
        Pis = [transition_probs(params, xt[t]) for t in range(T - 1)]
        oracle = brute_force_marginals(pi, Pis, T)
        np.testing.assert_allclose(lam, oracle, atol=1e-12)


class TestForwardBackward:
    def test_single_state(self):
        rng = np.random.default_rng(1)
        panel = random_panel(rng, 2, 3, [2, 3])
        meas = random_measurement(rng, 1, [2, 3])
        chain = LatentChainParams(pi=[1.0], Pi=[[1.0]])
        b, bb, ll = forward_backward(meas, chain, panel, 0)
        np.testing.assert_allclose(b, 1.0)
        np.testing.assert_allclose(bb, 1.0)
        expected = sum(np.log(emission_prob(meas, panel, 0, t, 0)) for t in range(3))
        assert ll == pytest.approx(expected, rel=1e-12)

    def test_single_occasion_is_bayes(self):
        rng = np.random.default_rng(2)
        panel = random_panel(rng, 1, 1, [2, 2])
        meas = random_measurement(rng, 2, [2, 2])
        chain = random_chain(rng, 2)
        b, bb, ll = forward_backward(meas, chain, panel, 0)
        w = np.array([chain.pi[u] * emission_prob(meas, panel, 0, 0, u) for u in range(2)])
        np.testing.assert_allclose(b[0], w / w.sum(), rtol=1e-12)
        assert bb.shape == (0, 2, 2)

    def test_scenario1_k2_t3_path_enumeration(self):
        meas = scenario1_measurement(1)
        chain = LatentChainParams(pi=[0.5, 0.5], Pi=[[0.9, 0.1], [0.1, 0.9]])
        panel = single_item_panel([1, 0, 1])
        b, bb, ll = forward_backward(meas, chain, panel, 0)
        oll, ob, obb = brute_force_unit(meas.phi, chain.pi, [chain.Pi] * 2, panel.y[0])
        assert ll == pytest.approx(oll, rel=1e-12)
        np.testing.assert_allclose(b, ob, atol=1e-12)
        np.testing.assert_allclose(bb, obb, atol=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_params_match_brute_force(self, seed):
        rng = np.random.default_rng(100 + seed)
        k = int(rng.integers(1, 4))
        T = int(rng.integers(1, 5))
        cats = rng.integers(2, 4, size=int(rng.integers(1, 3)))
        meas = random_measurement(rng, k, cats)
        chain = random_chain(rng, k)
        panel = random_panel(rng, 3, T, cats, missing_frac=0.2)
        for i in range(3):
            b, bb, ll = forward_backward(meas, chain, panel, i)
            oll, ob, obb = brute_force_unit(meas.phi, chain.pi, [chain.Pi] * (T - 1),
                                            panel.y[i])
            assert ll == pytest.approx(oll, rel=1e-10)
            np.testing.assert_allclose(b, ob, atol=1e-10)
            np.testing.assert_allclose(bb, obb, atol=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    def test_covariate_chain_matches_brute_force(self, seed):
        rng = np.random.default_rng(200 + seed)
        k, T, q = 2, 3, 1
        cats = [2, 2]
        meas = random_measurement(rng, k, cats)
        beta = rng.normal(size=(1 + q, k - 1)) * 0.7
        coef = rng.normal(size=(k, k, 1 + q)) * 0.7
        coef[np.arange(k), np.arange(k), :] = 0.0
        latent = CovariateLatentParams(beta=beta, trans=PairwiseTransitions(coef))
        panel = random_panel(rng, 4, T, cats)
        covs = CovariatePanel(x_init=rng.normal(size=(4, q)),
                              x_trans=rng.normal(size=(4, T - 1, q)))
        for i in range(4):
            b, bb, ll = forward_backward(meas, latent, panel, i, covs)
            pi = initial_probs(latent, covs.x_init[i])
            Pis = [transition_probs(latent, covs.x_trans[i, t]) for t in range(T - 1)]
            oll, ob, obb = brute_force_unit(meas.phi, pi, Pis, panel.y[i])
            assert ll == pytest.approx(oll, rel=1e-10)
            np.testing.assert_allclose(b, ob, atol=1e-10)
            np.testing.assert_allclose(bb, obb, atol=1e-10)

    def test_posterior_consistency(self):
        rng = np.random.default_rng(9)
        cats = [2, 3]
        meas = random_measurement(rng, 3, cats)
        chain = random_chain(rng, 3)
        panel = random_panel(rng, 20, 5, cats, missing_frac=0.1)
        pm = posterior_moments(meas, chain, panel)
        pm.validate(tol=1e-8)
        np.testing.assert_allclose(pm.bb.sum(axis=3), pm.b[:, :-1, :], atol=1e-8)
        np.testing.assert_allclose(pm.bb.sum(axis=2), pm.b[:, 1:, :], atol=1e-8)

    def test_no_underflow_at_r100_t50(self):
        rng = np.random.default_rng(10)
        cats = [2] * 100
        meas = random_measurement(rng, 2, cats)
        chain = random_chain(rng, 2)
        panel = random_panel(rng, 2, 50, cats)
        pm = posterior_moments(meas, chain, panel)
        assert np.isfinite(pm.loglik)
        assert np.all(np.isfinite(pm.b))

    def test_degenerate_emission_names_unit_and_occasion(self):
        phi = (np.array([[1.0, 1.0], [0.0, 0.0]]),)  # category 1 impossible everywhere
        meas = MeasurementParams(phi=phi, k=2)
        chain = LatentChainParams(pi=[0.5, 0.5], Pi=[[0.5, 0.5], [0.5, 0.5]])
        panel = single_item_panel([0, 1, 0])
        with pytest.raises(DegenerateLikelihoodError) as err:
            forward_backward(meas, chain, panel, 0)
        assert err.value.unit == 0
        assert err.value.occasion == 1

    def test_all_missing_occasion_flows_through_chain(self):
        meas = scenario1_measurement(2)
        chain = LatentChainParams(pi=[0.5, 0.5], Pi=[[0.9, 0.1], [0.1, 0.9]])
        y = np.array([[[1, 1], [-1, -1], [1, 1]]], dtype=np.int16)
        panel = ResponsePanel(y=y, cats=[2, 2])
        b, bb, ll = forward_backward(meas, chain, panel, 0)
        oll, ob, _ = brute_force_unit(meas.phi, chain.pi, [chain.Pi] * 2, panel.y[0])
        assert ll == pytest.approx(oll, rel=1e-12)
        np.testing.assert_allclose(b, ob, atol=1e-12)
