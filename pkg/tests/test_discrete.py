import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from checks import check_gmm, check_hmm
from conftest import rand_ar, rand_gmm, rand_transition
from switchseg import discrete
from switchseg.discrete import EMConfig, em_fit
from switchseg.errors import RegimeStarvationError
from switchseg.model import AutoregressiveEmission, GaussianMixtureEmission, SwitchingModel, TransitionModel


@pytest.mark.parametrize("k", [0, 1, 2])
def test_hmm_matches_enumeration(k):
    rng = np.random.default_rng(100 + k)
    for _ in range(10):
        r = check_hmm(rng, k)
        assert r["dev"] < 1e-10 and r["viterbi_dev"] < 1e-10 and r["argmax_ok"]


@pytest.mark.parametrize("chained", [False, True])
def test_gmm_matches_enumeration(chained):
    rng = np.random.default_rng(200 + chained)
    for _ in range(10):
        r = check_gmm(rng, chained)
        assert r["dev"] < 1e-10 and r["viterbi_dev"] < 1e-10 and r["argmax_ok"]


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    S = int(rng.integers(1, 5))
    k = int(rng.integers(0, 3))
    T = int(rng.integers(k + 1, 40))
    return SwitchingModel("hmm", rand_transition(rng, S), rand_ar(rng, S, k)), rng.normal(size=T)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_alpha_beta_constancy_and_normalization(seed):
    m, v = _random_instance(seed)
    post = discrete.smooth_parallel(m, v)
    np.testing.assert_allclose(post.gamma.sum(axis=1), 1.0, atol=1e-10)
    per_t = logsumexp(post.log_alpha + post.log_beta, axis=1)
    np.testing.assert_allclose(per_t, post.log_likelihood, atol=1e-9, rtol=0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_parallel_equals_sequential(seed):
    m, v = _random_instance(seed)
    a = discrete.smooth_parallel(m, v)
    b = discrete.smooth_sequential(m, v)
    np.testing.assert_allclose(a.gamma, b.gamma, atol=1e-10)
    assert a.log_likelihood == pytest.approx(b.log_likelihood, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_gmm_posterior_normalization(seed):
    rng = np.random.default_rng(seed)
    S, M = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    m = SwitchingModel("hmm", rand_transition(rng, S), rand_gmm(rng, S, M))
    v = rng.normal(size=int(rng.integers(1, 30)))
    post = discrete.smooth_gmm(m, v)
    np.testing.assert_allclose(post.gamma_joint.sum(axis=(1, 2)), 1.0, atol=1e-10)
    joint = logsumexp(post.log_alpha, axis=2) + post.log_beta
    np.testing.assert_allclose(logsumexp(joint, axis=1), post.log_likelihood, atol=1e-9, rtol=0)


def test_viterbi_ties_go_to_lowest_index():
    m = SwitchingModel("hmm", TransitionModel.uniform(3), AutoregressiveEmission(np.zeros((3, 0)), np.ones(3)))
    res = discrete.viterbi(m, np.zeros(5))
    assert res.path.tolist() == [0] * 5


def test_path_log_joint_matches_viterbi():
    rng = np.random.default_rng(5)
    m = SwitchingModel("hmm", rand_transition(rng, 3), rand_ar(rng, 3, 2))
    v = rng.normal(size=20)
    res = discrete.viterbi(m, v)
    assert discrete.path_log_joint(m, v, res.path) == pytest.approx(res.log_joint, abs=1e-10)


def test_order_mismatch_rejected():
    rng = np.random.default_rng(0)
    m = SwitchingModel("hmm", rand_transition(rng, 2), rand_ar(rng, 2, 1))
    with pytest.raises(ValueError):
        discrete.smooth_parallel(m, rng.normal(size=5), order_k=2)


def test_em_trace_is_monotone_ar():
    rng = np.random.default_rng(3)
    true = SwitchingModel("hmm", TransitionModel.uniform(2, stay=0.95),
                          AutoregressiveEmission([[0.9], [-0.5]], [0.5, 1.0]))
    labels = np.repeat([0, 1, 0, 1], 50)
    v = np.zeros(labels.size)
    for t in range(1, v.size):
        v[t] = true.emission.coefficients[labels[t], 0] * v[t - 1] + rng.normal() * np.sqrt(
            true.emission.noise_variance[labels[t]])
    init = SwitchingModel("hmm", TransitionModel.uniform(2, stay=0.8),
                          AutoregressiveEmission([[0.2], [-0.1]], [2.0, 2.0]))
    fit = em_fit(init, v, EMConfig(max_iter=50, tol=1e-9))
    assert np.all(np.diff(fit.trace) > -1e-8)
    assert sorted(fit.model.emission.coefficients[:, 0]) == pytest.approx([-0.5, 0.9], abs=0.2)


def test_em_trace_is_monotone_gmm():
    rng = np.random.default_rng(4)
    v = np.concatenate([rng.normal(-2, 0.5, 60), rng.normal(2, 0.5, 60)])
    em = GaussianMixtureEmission(np.full((2, 2), 0.5), [[-1.0, 0.0], [0.5, 1.0]], np.ones((2, 2)))
    fit = em_fit(SwitchingModel("hmm", TransitionModel.uniform(2, stay=0.9), em), v, EMConfig(max_iter=40))
    assert np.all(np.diff(fit.trace) > -1e-8)


def test_em_starvation():
    em = GaussianMixtureEmission([[1.0], [1.0]], [[0.0], [1e6]], [[1.0], [1.0]])
    m = SwitchingModel("hmm", TransitionModel.uniform(2, stay=0.9), em)
    with pytest.raises(RegimeStarvationError):
        em_fit(m, np.random.default_rng(0).normal(size=30), EMConfig(max_iter=5))


def test_em_duration_model_updates_emission_only():
    from switchseg.model import DurationSpec
    rng = np.random.default_rng(2)
    m = SwitchingModel("dc", TransitionModel.uniform(2, stay=0.0), rand_ar(rng, 2, 1), DurationSpec.uniform(3, 6))
    fit = em_fit(m, rng.normal(size=40), EMConfig(max_iter=10, update=("emission",)))
    np.testing.assert_array_equal(fit.model.transition.switch, m.transition.switch)
    assert np.all(np.diff(fit.trace) > -1e-8)
    with pytest.raises(ValueError):
        em_fit(m, rng.normal(size=40), EMConfig(max_iter=1))
