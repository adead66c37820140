import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from checks import COLLAPSED_VARIANTS, EXACT_VARIANTS, check_slgssm_collapsed, check_slgssm_exact
from conftest import rand_lg, rand_slgssm
from switchseg import kalman, slgssm
from switchseg.errors import MixtureCapError, NumericalError
from switchseg.model import DurationSpec, SwitchingModel, TransitionModel


def test_scalar_kalman_step():
    p = kalman.RegimeParams(np.eye(1), np.eye(1), np.eye(1), np.eye(1), np.zeros(1), np.eye(1))
    b, ll = kalman.kalman_predict_correct(kalman.GaussianBelief(np.zeros(1), np.eye(1)), p, [2.0])
    assert b.mean[0] == pytest.approx(4 / 3, abs=1e-14)
    assert b.cov[0, 0] == pytest.approx(2 / 3, abs=1e-14)
    assert ll == pytest.approx(-0.5 * (np.log(2 * np.pi * 3) + 4 / 3), abs=1e-14)


@pytest.mark.parametrize("variant", EXACT_VARIANTS)
def test_exact_modes_match_enumeration(variant):
    rng = np.random.default_rng(500 + len(variant))
    for _ in range(8):
        assert check_slgssm_exact(rng, variant)["dev"] < 1e-10


@pytest.mark.parametrize("variant", COLLAPSED_VARIANTS)
def test_collapsed_matches_reference(variant):
    rng = np.random.default_rng(600 + len(variant))
    for _ in range(8):
        r = check_slgssm_collapsed(rng, variant)
        assert r["moment_dev"] < 1e-6 and r["weight_dev"] < 1e-9 and r["smooth_dev"] < 1e-3


def test_factored_dc_filter_equals_naive_branching():
    rng = np.random.default_rng(7)
    m = rand_slgssm(rng, "dc", S=3, H=2, D=1, d_max=4)
    v = rng.normal(size=(12, 1))
    a = slgssm.dur_filter_dc(m, v, factored=True)
    b = slgssm.dur_filter_dc(m, v, factored=False)
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)
    np.testing.assert_allclose(a.means, b.means, atol=1e-10)
    assert a.log_likelihood == pytest.approx(b.log_likelihood, abs=1e-10)


def _single_regime(seed):
    rng = np.random.default_rng(seed)
    H, D = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    em = rand_lg(rng, 1, H, D)
    return SwitchingModel("slgssm", TransitionModel([1.0], [[1.0]]), em), rng.normal(size=(int(rng.integers(1, 15)), D))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_single_regime_reduces_to_kalman_and_rts(seed):
    m, v = _single_regime(seed)
    p = kalman.regime_params(m.emission, 0)
    fm, fc, ll = kalman.kalman_filter(p, v)
    sm, sc, _ = kalman.rts_smoother(p, v)
    f = slgssm.slgssm_filter(m, v)
    np.testing.assert_allclose(f.means[:, 0], fm, atol=1e-9)
    np.testing.assert_allclose(f.covs[:, 0], fc, atol=1e-9)
    assert f.log_likelihood == pytest.approx(ll, abs=1e-9)
    s = slgssm.slgssm_smooth(f)
    np.testing.assert_allclose(s.means[:, 0], sm, atol=1e-8)
    np.testing.assert_allclose(s.covs[:, 0], sc, atol=1e-8)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_collapse_preserves_moments(seed):
    rng = np.random.default_rng(seed)
    K, H = int(rng.integers(1, 6)), int(rng.integers(1, 4))
    w = rng.dirichlet(np.ones(K))
    means = rng.normal(size=(K, H))
    X = rng.normal(size=(K, H, H))
    covs = X @ X.transpose(0, 2, 1) + 0.1 * np.eye(H)
    tot, mean, cov = kalman.collapse(np.log(w) + 1.7, means, covs)
    assert tot == pytest.approx(1.7, abs=1e-12)
    np.testing.assert_allclose(mean, w @ means, atol=1e-12)
    second = np.einsum("k,kij->ij", w, covs + np.einsum("ki,kj->kij", means, means))
    np.testing.assert_allclose(cov + np.outer(mean, mean), second, atol=1e-10)
    np.testing.assert_allclose(cov, cov.T, atol=0)


def _distinct(res, t):
    regime = res.structure.regime
    return len({(int(regime[j]), key) for j, key, *_ in res.components[t]})


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["changepoint", "dc_reset", "ic_reset"]))
def test_exact_component_counts(seed, variant):
    rng = np.random.default_rng(seed)
    # a change point needs a second regime to switch to
    S = int(rng.integers(2 if variant == "changepoint" else 1, 4))
    T = int(rng.integers(1, 7))
    d_max = T if variant == "dc_reset" else int(rng.integers(1, 5))
    m = rand_slgssm(rng, variant, S=S, d_max=d_max)
    # keep every configuration reachable so the counts are exactly the structural ones
    if m.duration is not None:
        m = SwitchingModel("slgssm", m.transition, m.emission, DurationSpec(1, d_max, np.full(d_max, 1 / d_max)),
                           variant=variant)
    v = rng.normal(size=(T, 1))
    if variant == "ic_reset":
        res = slgssm.dur_filter_ic_reset(m, v)
        # one Gaussian per (s, c): the restart time is determined by the count
        assert np.isfinite(res.log_weights).sum(axis=1).tolist() == [S * d_max] * T
        return
    res = slgssm.filter_model(m, v, mode="exact")
    # every regime can carry every restart time up to the current step
    assert [_distinct(res, t) for t in range(T)] == [S * (t + 1) for t in range(T)]


def test_mixture_cap():
    rng = np.random.default_rng(8)
    m = rand_slgssm(rng, "changepoint", S=3)
    with pytest.raises(MixtureCapError):
        slgssm.changepoint_two_state(m, rng.normal(size=(12, 1)), mode="exact", cap=10)


def test_smoother_rejects_wrong_variant():
    rng = np.random.default_rng(9)
    m = rand_slgssm(rng, "plain")
    f = slgssm.slgssm_filter(m, rng.normal(size=(4, 1)))
    with pytest.raises(ValueError):
        slgssm.slgssm_smooth(f, variant="dc")


def test_non_pd_innovation_raises():
    with pytest.raises(NumericalError):
        kalman._chol(np.array([[-1.0]]), "innovation covariance")
