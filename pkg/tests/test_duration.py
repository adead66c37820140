import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from checks import check_dc, check_ic
from conftest import rand_ar, rand_duration, rand_transition
from switchseg import duration
from switchseg.errors import ImpossibleDataError
from switchseg.model import AutoregressiveEmission, DurationSpec, SwitchingModel, TransitionModel


def test_dc_matches_enumeration():
    rng = np.random.default_rng(300)
    for _ in range(15):
        r = check_dc(rng)
        assert r["dev"] < 1e-10 and r["viterbi_dev"] < 1e-10 and r["argmax_ok"]


@pytest.mark.parametrize("cut", [False, True])
def test_ic_matches_enumeration(cut):
    rng = np.random.default_rng(310 + cut)
    for _ in range(15):
        r = check_ic(rng, cut)
        assert r["dev"] < 1e-10 and r["viterbi_dev"] < 1e-10 and r["argmax_ok"]


def _dc_instance(seed, kind="dc"):
    rng = np.random.default_rng(seed)
    S = int(rng.integers(1, 4))
    d_max = int(rng.integers(1, 9))
    d_min = int(rng.integers(1, d_max + 1))
    k = int(rng.integers(0, 3))
    m = SwitchingModel(kind, rand_transition(rng, S), rand_ar(rng, S, k), rand_duration(rng, d_min, d_max),
                       cut=bool(rng.integers(2)) and kind == "ic")
    return m, rng.normal(size=int(rng.integers(1, 30)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_pruned_equals_naive_forward(seed):
    m, v = _dc_instance(seed)
    a, b = duration.dc_forward(m, v), duration.dc_forward_naive(m, v)
    fin = np.isfinite(a)
    np.testing.assert_array_equal(fin, np.isfinite(b))
    np.testing.assert_allclose(a[fin], b[fin], rtol=1e-12, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["dc", "ic"]))
def test_count_tables_constancy(seed, kind):
    m, v = _dc_instance(seed, kind)
    tab = duration.count_smooth(m, v)
    T = v.size
    np.testing.assert_allclose(tab.gamma_s.sum(axis=1), 1.0, atol=1e-10)
    per_t = logsumexp((tab.log_alpha + tab.log_beta).reshape(T, -1), axis=1)
    np.testing.assert_allclose(per_t, tab.log_likelihood, atol=1e-9, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_dc_and_ic_agree_without_cut(seed):
    m, v = _dc_instance(seed)
    mi = SwitchingModel("ic", m.transition, m.emission, m.duration, boundary=m.boundary)
    a, b = duration.dc_smooth(m, v), duration.ic_smooth(mi, v)
    np.testing.assert_allclose(a.gamma_s, b.gamma_s, atol=1e-10)
    assert a.log_likelihood == pytest.approx(b.log_likelihood, abs=1e-9)


def test_geometric_durations_recover_hmm():
    # a duration law geometric in d with a large cap behaves like the implicit HMM
    from switchseg.discrete import smooth_parallel
    rng = np.random.default_rng(1)
    stay = 0.7
    em = rand_ar(rng, 2, 1)
    hmm = SwitchingModel("hmm", TransitionModel([0.5, 0.5], [[stay, 1 - stay], [1 - stay, stay]]), em)
    dc = SwitchingModel("dc", TransitionModel([0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]]), em,
                        DurationSpec.geometric(stay, 120))
    v = rng.normal(size=25)
    np.testing.assert_allclose(duration.dc_smooth(dc, v).gamma_s, smooth_parallel(hmm, v).gamma, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_viterbi_counts_are_consistent(seed):
    m, v = _dc_instance(seed)
    res = duration.dc_viterbi(m, v)
    for t in range(1, v.size):
        if res.counts[t - 1] > 1:
            assert res.path[t] == res.path[t - 1] and res.counts[t] == res.counts[t - 1] - 1
    rho = m.duration.full_pmf()
    for t in np.flatnonzero(np.r_[True, res.counts[:-1] == 1]):
        assert rho[res.counts[t] - 1] > 0 or (t == 0 and m.boundary == "relaxed")


def test_strict_requires_room_for_a_regime():
    m = SwitchingModel("dc", TransitionModel.uniform(2), AutoregressiveEmission(np.zeros((2, 0)), np.ones(2)),
                       DurationSpec.uniform(5, 6), boundary="strict")
    with pytest.raises(ImpossibleDataError):
        duration.dc_smooth(m, np.zeros(3))


def test_relaxed_initial_weights_use_survival():
    # with uninformative observations the count marginal at t=1 is the survival law
    S = 2
    spec = DurationSpec(1, 3, [0.2, 0.3, 0.5])
    m = SwitchingModel("dc", TransitionModel.uniform(S), AutoregressiveEmission(np.zeros((S, 0)), np.ones(S)), spec)
    tab = duration.dc_smooth(m, np.zeros(1))
    surv = np.array([1.0, 0.8, 0.5])
    np.testing.assert_allclose(tab.gamma_sc[0, 0], 0.5 * surv / surv.sum(), atol=1e-12)
