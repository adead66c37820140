"""Reproductions of the artificial-data experiments (used by the CLI and the acceptance suite)."""
from __future__ import annotations

import numpy as np

from switchseg import discrete, duration
from switchseg.discrete import EMConfig, em_fit
from switchseg.model import (AutoregressiveEmission, DurationSpec, GaussianMixtureEmission, SwitchingModel,
                             TransitionModel)
from switchseg.synth import (REFERENCE_AR_COEFFICIENTS, REFERENCE_DURATION, REFERENCE_NOISE_VARIANCE,
                             gen_sarm_switching, gen_switching_sinusoid, segmentation_error)

BAD_AR_INIT = np.array([
    [0.8, -0.99, 0.0],
    [-0.65, 0.2, 0.1],
    [0.9, -0.35, -0.3],
])
BAD_NOISE_INIT = 100.0


def transition_counts_ml(labels, S: int) -> TransitionModel:
    """Switch matrix estimated by counting transitions in a label sequence (uniform initial law)."""
    counts = np.zeros((S, S))
    np.add.at(counts, (labels[1:], labels[:-1]), 1.0)
    col = counts.sum(axis=0, keepdims=True)
    switch = np.divide(counts, col, out=np.full((S, S), 1.0 / S), where=col > 0)
    return TransitionModel(np.full(S, 1.0 / S), switch)


def usarm_transition(S: int) -> TransitionModel:
    switch = np.full((S, S), 1.0 / (S - 1))
    np.fill_diagonal(switch, 0.0)
    return TransitionModel(np.full(S, 1.0 / S), switch)


def gsarm_model(emission, labels) -> SwitchingModel:
    return SwitchingModel("hmm", transition_counts_ml(labels, emission.S), emission)


def usarm_model(emission, d_range=REFERENCE_DURATION) -> SwitchingModel:
    return SwitchingModel("dc", usarm_transition(emission.S), emission, DurationSpec.uniform(*d_range))


def _decode(model: SwitchingModel, series):
    if model.kind == "hmm":
        smooth = discrete.smooth_parallel(model, series).gamma
        path = discrete.viterbi(model, series).path
    else:
        smooth = duration.dc_smooth(model, series).gamma_s
        path = duration.dc_viterbi(model, series).path
    return np.argmax(smooth, axis=1), path


def known_parameter_run(seed: int) -> dict:
    """Segment with the generating AR parameters; geometric vs explicit uniform durations."""
    data = gen_sarm_switching(seed=seed)
    em = AutoregressiveEmission(REFERENCE_AR_COEFFICIENTS, REFERENCE_NOISE_VARIANCE)
    out = {"seed": seed, "T": data.T}
    for name, model in (("gsarm", gsarm_model(em, data.true_regimes)), ("usarm", usarm_model(em))):
        sm, vt = _decode(model, data.series)
        out[f"{name}_smooth"] = segmentation_error(sm, data.true_regimes)
        out[f"{name}_viterbi"] = segmentation_error(vt, data.true_regimes)
    return out


def em_fitted_run(seed: int, max_iter: int = 200, tol: float = 1e-6) -> dict:
    """Learn the AR parameters by EM from a poor initialization, then segment.

    The geometric-duration model also learns its switch matrix and initial law;
    the explicit-duration model keeps its uniform duration law and switch matrix.
    """
    data = gen_sarm_switching(seed=seed)
    S = REFERENCE_AR_COEFFICIENTS.shape[0]
    em0 = AutoregressiveEmission(BAD_AR_INIT, BAD_NOISE_INIT)
    g0 = SwitchingModel("hmm", TransitionModel.uniform(S, stay=0.9), em0)
    u0 = usarm_model(em0)
    out = {"seed": seed, "T": data.T}
    for name, model, update in (("gsarm", g0, ("initial", "transition", "emission")),
                                ("usarm", u0, ("emission",))):
        fit = em_fit(model, data.series, EMConfig(max_iter=max_iter, tol=tol, update=update))
        sm, vt = _decode(fit.model, data.series)
        out[f"{name}_smooth"] = segmentation_error(sm, data.true_regimes, permute=True)
        out[f"{name}_viterbi"] = segmentation_error(vt, data.true_regimes, permute=True)
        out[f"{name}_iterations"] = len(fit.trace) - 1
        out[f"{name}_loglik"] = fit.trace[-1]
    return out


def _random_gmm(rng, S, M, data):
    mu = rng.choice(data, size=(S, M))
    var = np.full((S, M), np.var(data))
    w = np.full((S, M), 1.0 / M)
    return GaussianMixtureEmission(w, mu, var)


def _random_sarm(rng, S, k, data):
    coef = rng.normal(0.0, 0.5, size=(S, k))
    return AutoregressiveEmission(coef, np.full(S, np.var(data)))


def fit_best_of(model_factory, series, n_starts: int, seed: int, config: EMConfig):
    """Best-likelihood EM fit over seeded random restarts."""
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_starts):
        try:
            fit = em_fit(model_factory(rng), series, config)
        except Exception:  # a starved restart is simply discarded
            continue
        if best is None or fit.trace[-1] > best.trace[-1]:
            best = fit
    if best is None:
        raise RuntimeError("every EM restart failed")
    return best


def sinusoid_run(seed: int, n_starts: int = 5, max_iter: int = 200) -> dict:
    """Two-regime HMM with 3-component Gaussian mixtures vs a 2nd-order switching AR on the sinusoid."""
    data = gen_switching_sinusoid(seed=seed)
    v = data.series.data[:, 0]
    cfg = EMConfig(max_iter=max_iter, tol=1e-8)
    trans = TransitionModel.uniform(2, stay=0.95)
    gmm = fit_best_of(lambda r: SwitchingModel("hmm", trans, _random_gmm(r, 2, 3, v)), data.series,
                      n_starts, seed, cfg)
    sarm = fit_best_of(lambda r: SwitchingModel("hmm", trans, _random_sarm(r, 2, 2, v)), data.series,
                       n_starts, seed, cfg)
    out = {"seed": seed}
    for name, fit in (("hmm_gmm", gmm), ("sarm", sarm)):
        path = discrete.viterbi(fit.model, data.series).path
        out[f"{name}_error"] = segmentation_error(path, data.true_regimes, permute=True)
        out[f"{name}_loglik"] = fit.trace[-1]
    return out
