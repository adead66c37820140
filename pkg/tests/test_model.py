import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from switchseg.errors import ModelValidationError
from switchseg.model import (AutoregressiveEmission, DurationSpec, GaussianMixtureEmission, LinearGaussianEmission,
                             SwitchingModel, TransitionModel, geometric_duration_pmf, hazard_to_pmf, pmf_to_hazard,
                             validate_model)


def _ar(S=2):
    return AutoregressiveEmission(np.zeros((S, 1)), np.ones(S))


def test_uniform_model_passes():
    m = SwitchingModel("dc", TransitionModel.uniform(2), _ar(), DurationSpec.uniform(1, 3))
    assert validate_model(m).ok


def test_non_stochastic_column_reported():
    tm = TransitionModel([0.5, 0.5], [[0.5, 0.5], [0.4, 0.5]])
    rep = validate_model(SwitchingModel("hmm", tm, _ar()))
    assert not rep.ok
    assert "column 0 not stochastic" in rep.failures


def test_non_pd_covariance_reported():
    R = np.array([[[-1.0]], [[1.0]]])
    em = LinearGaussianEmission(np.ones((2, 1, 1)), np.ones((2, 1, 1)), np.ones((2, 1, 1)), R,
                                np.zeros((2, 1)), np.ones((2, 1, 1)))
    rep = validate_model(SwitchingModel("slgssm", TransitionModel.uniform(2), em))
    assert any("not PD" in f for f in rep.failures)
    with pytest.raises(ModelValidationError):
        SwitchingModel("slgssm", TransitionModel.uniform(2), em).require_valid()


def test_mixture_weights_checked():
    em = GaussianMixtureEmission([[0.5, 0.4], [0.5, 0.5]], np.zeros((2, 2)), np.ones((2, 2)))
    assert not validate_model(SwitchingModel("hmm", TransitionModel.uniform(2), em)).ok


def test_probability_tolerance_is_1e12():
    eps = 5e-13
    tm = TransitionModel([0.5 + eps, 0.5], np.eye(2))
    assert validate_model(SwitchingModel("hmm", tm, _ar())).ok
    tm = TransitionModel([0.5 + 1e-11, 0.5], np.eye(2))
    assert not validate_model(SwitchingModel("hmm", tm, _ar())).ok


def test_duration_bounds():
    rep = validate_model(SwitchingModel("dc", TransitionModel.uniform(2), _ar(), DurationSpec(3, 2, [1.0])))
    assert not rep.ok


def test_containers_are_read_only():
    tm = TransitionModel.uniform(3, stay=0.8)
    with pytest.raises(ValueError):
        tm.switch[0, 0] = 1.0


def test_geometric_pmf():
    assert geometric_duration_pmf(0.0, 1) == 1.0
    assert geometric_duration_pmf(0.9, 3) == pytest.approx(0.9 ** 2 * 0.1)
    assert sum(geometric_duration_pmf(0.7, d) for d in range(1, 400)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        geometric_duration_pmf(1.0, 2)


def test_hazard_of_uniform():
    lam = pmf_to_hazard(DurationSpec.uniform(1, 3))
    np.testing.assert_allclose(lam, [2 / 3, 1 / 2, 0.0], atol=1e-15)


def test_hazard_zero_tail_and_interior_zero():
    spec = DurationSpec(1, 4, [0.5, 0.0, 0.5, 0.0])
    lam = pmf_to_hazard(spec)
    assert lam[-1] == 0.0
    back = hazard_to_pmf(lam, 1)
    np.testing.assert_allclose(back.pmf, spec.pmf, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(0, 8), st.integers(0, 2 ** 32 - 1))
def test_hazard_round_trip(d_min, extra, seed):
    rng = np.random.default_rng(seed)
    pmf = rng.dirichlet(np.ones(extra + 1))
    pmf[rng.random(pmf.size) < 0.2] = 0.0
    if pmf.sum() == 0:
        pmf[0] = 1.0
    pmf /= pmf.sum()
    spec = DurationSpec(d_min, d_min + extra, pmf)
    lam = pmf_to_hazard(spec)
    assert lam[-1] == 0.0
    assert np.all((lam >= 0) & (lam <= 1))
    back = hazard_to_pmf(lam, d_min)
    np.testing.assert_allclose(back.pmf, spec.pmf, atol=1e-12)
