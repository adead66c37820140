"""
Exact inference and EM for the plain switching model and its k-order
observation-dependence extension (switching AR), including Gaussian-mixture
emissions with independent or chained mixture indicators.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy.special import logsumexp

from switchseg.emissions import ar_design, emission_loglik, gmm_component_loglik
from switchseg.errors import ImpossibleDataError, RegimeStarvationError
from switchseg.model import (AutoregressiveEmission, GaussianMixtureEmission, SwitchingModel,
                             TimeSeries, TransitionModel, as_series)


@dataclass
class PosteriorTables:
    """Smoothing output. ``gamma[t, s] = p(s_t | v_{1:T})``.

    ``log_alpha``/``log_beta`` are the unnormalized log-domain recursions
    (absent for the sequential routine, which keeps ``filtered`` instead).
    ``gamma_joint`` holds ``p(s_t, m_t | v_{1:T})`` for mixture emissions.
    """

    gamma: np.ndarray
    log_likelihood: float
    log_alpha: Optional[np.ndarray] = None
    log_beta: Optional[np.ndarray] = None
    filtered: Optional[np.ndarray] = None
    gamma_joint: Optional[np.ndarray] = None


@dataclass
class ViterbiResult:
    path: np.ndarray
    log_joint: float
    backpointers: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None
    durations: Optional[np.ndarray] = None
    components: Optional[np.ndarray] = None


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _check_order(model: SwitchingModel, order_k: Optional[int]) -> None:
    natural = model.emission.order
    if order_k is not None and order_k != natural:
        raise ValueError(f"order_k={order_k} does not match the emission order {natural}")


def _discrete_model(model: SwitchingModel, order_k) -> None:
    model.require_valid()
    if not isinstance(model.emission, (AutoregressiveEmission, GaussianMixtureEmission)):
        raise TypeError("discrete inference needs an AR or Gaussian-mixture emission")
    _check_order(model, order_k)


@numba.njit(cache=True)
def _lse_row(x):
    m = -np.inf
    for v in x:
        if v > m:
            m = v
    if m == -np.inf:
        return m
    acc = 0.0
    for v in x:
        acc += np.exp(v - m)
    return m + np.log(acc)


@numba.njit(cache=True)
def _forward_kernel(log_init, log_trans, log_obs):
    T, S = log_obs.shape
    log_alpha = np.empty((T, S))
    tmp = np.empty(S)
    for j in range(S):
        log_alpha[0, j] = log_obs[0, j] + log_init[j]
    for t in range(1, T):
        for j in range(S):
            for i in range(S):
                tmp[i] = log_trans[j, i] + log_alpha[t - 1, i]
            log_alpha[t, j] = log_obs[t, j] + _lse_row(tmp)
    return log_alpha


@numba.njit(cache=True)
def _backward_kernel(log_trans, log_obs):
    T, S = log_obs.shape
    log_beta = np.zeros((T, S))
    tmp = np.empty(S)
    for t in range(T - 2, -1, -1):
        for i in range(S):
            for j in range(S):
                tmp[j] = log_trans[j, i] + log_obs[t + 1, j] + log_beta[t + 1, j]
            log_beta[t, i] = _lse_row(tmp)
    return log_beta


def forward_log(log_init, log_trans, log_obs):
    """``log alpha[t, j] = log p(v_t | j) + logsum_i log pi[j, i] + log alpha[t-1, i]``."""
    return _forward_kernel(np.ascontiguousarray(log_init, dtype=float), np.ascontiguousarray(log_trans, dtype=float),
                           np.ascontiguousarray(log_obs, dtype=float))


def backward_log(log_trans, log_obs):
    return _backward_kernel(np.ascontiguousarray(log_trans, dtype=float), np.ascontiguousarray(log_obs, dtype=float))


def _normalize_log_rows(log_w):
    return np.exp(log_w - logsumexp(log_w, axis=-1, keepdims=True))


def _posterior_from_log(log_alpha, log_beta):
    ll = float(logsumexp(log_alpha[-1]))
    if not np.isfinite(ll):
        raise ImpossibleDataError("observations have zero probability under the model")
    return _normalize_log_rows(log_alpha + log_beta), ll


def smooth_parallel(model: SwitchingModel, series, order_k: Optional[int] = None) -> PosteriorTables:
    """Log-domain alpha/beta smoothing, ``O(T S^2)``."""
    _discrete_model(model, order_k)
    series = as_series(series)
    log_obs = emission_loglik(model.emission, series)
    return smooth_loglik(model.transition, log_obs)


def smooth_loglik(transition: TransitionModel, log_obs: np.ndarray) -> PosteriorTables:
    """Alpha/beta smoothing from a precomputed ``(T, S)`` emission table."""
    log_init, log_trans = _log(transition.initial), _log(transition.switch)
    log_alpha = forward_log(log_init, log_trans, log_obs)
    log_beta = backward_log(log_trans, log_obs)
    gamma, ll = _posterior_from_log(log_alpha, log_beta)
    return PosteriorTables(gamma=gamma, log_likelihood=ll, log_alpha=log_alpha, log_beta=log_beta)


def smooth_sequential(model: SwitchingModel, series, order_k: Optional[int] = None) -> PosteriorTables:
    """Filter ``p(s_t | v_{1:t})`` then correct backwards; linear domain with per-step normalizers."""
    _discrete_model(model, order_k)
    series = as_series(series)
    log_obs = emission_loglik(model.emission, series)
    T, S = log_obs.shape
    pi = model.transition.switch
    # per-step rescaling of the emission keeps the linear-domain products finite
    shift = np.max(log_obs, axis=1)
    shift[~np.isfinite(shift)] = 0.0
    obs = np.exp(log_obs - shift[:, None])

    filtered = np.empty((T, S))
    ll = 0.0
    pred = model.transition.initial
    for t in range(T):
        unnorm = obs[t] * pred
        norm = unnorm.sum()
        if not norm > 0:
            raise ImpossibleDataError(f"filtering normalizer p(v_t | v_1:t-1) is zero at t={t}")
        filtered[t] = unnorm / norm
        ll += np.log(norm) + shift[t]
        pred = pi @ filtered[t]

    gamma = np.empty((T, S))
    gamma[-1] = filtered[-1]
    for t in range(T - 2, -1, -1):
        pred = pi @ filtered[t]
        ratio = np.divide(gamma[t + 1], pred, out=np.zeros(S), where=pred > 0)
        gamma[t] = filtered[t] * (pi.T @ ratio)
    return PosteriorTables(gamma=gamma, log_likelihood=float(ll), filtered=filtered)


def _viterbi_core(log_init, log_trans, log_obs) -> ViterbiResult:
    T, S = log_obs.shape
    delta = log_obs[0] + log_init
    psi = np.zeros((T, S), dtype=np.int64)
    for t in range(1, T):
        scores = log_trans + delta[None, :]
        psi[t] = np.argmax(scores, axis=1)
        delta = log_obs[t] + scores[np.arange(S), psi[t]]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    log_joint = float(delta[path[-1]])
    if not np.isfinite(log_joint):
        raise ImpossibleDataError("observations have zero probability under the model")
    for t in range(T - 1, 0, -1):
        path[t - 1] = psi[t, path[t]]
    return ViterbiResult(path=path, log_joint=log_joint, backpointers=psi)


def viterbi_loglik(transition: TransitionModel, log_obs: np.ndarray) -> ViterbiResult:
    """Max-product recursion; ties go to the smallest regime index."""
    return _viterbi_core(_log(transition.initial), _log(transition.switch), log_obs)


def viterbi(model: SwitchingModel, series, order_k: Optional[int] = None) -> ViterbiResult:
    _discrete_model(model, order_k)
    series = as_series(series)
    return viterbi_loglik(model.transition, emission_loglik(model.emission, series))


def path_log_joint(model: SwitchingModel, series, path) -> float:
    """``log p(s_{1:T}, v_{1:T})`` for an explicit regime path."""
    series = as_series(series)
    log_obs = emission_loglik(model.emission, series)
    path = np.asarray(path)
    lj = _log(model.transition.initial[path[0]]) + log_obs[0, path[0]]
    for t in range(1, len(path)):
        lj += _log(model.transition.switch[path[t], path[t - 1]]) + log_obs[t, path[t]]
    return float(lj)


def _gmm_model(model: SwitchingModel) -> GaussianMixtureEmission:
    model.require_valid()
    if not isinstance(model.emission, GaussianMixtureEmission):
        raise TypeError("mixture smoothing needs a Gaussian-mixture emission")
    return model.emission


def smooth_gmm(model: SwitchingModel, series) -> PosteriorTables:
    """Smoothing over (regime, mixture component) with independent indicators.

    ``log_alpha`` has shape ``(T, S, M)``; ``log_beta`` is ``(T, S)``.
    """
    em = _gmm_model(model)
    series = as_series(series)
    comp = gmm_component_loglik(em, series) + _log(em.weights)[None]  # log p(v|s,m) p(m|s)
    T, S, M = comp.shape
    log_trans = _log(model.transition.switch)

    # sum_{m'} alpha[t-1, s', m'] is the regime-level alpha with the mixture-summed
    # emission, so the shared prediction term comes from the plain recursion
    emit = logsumexp(comp, axis=2)
    log_alpha_s = forward_log(_log(model.transition.initial), log_trans, emit)
    with np.errstate(invalid="ignore"):
        log_alpha = comp + (log_alpha_s - emit)[:, :, None]
    log_alpha[~np.isfinite(emit)] = -np.inf
    log_beta = backward_log(log_trans, emit)

    ll = float(logsumexp(log_alpha[-1]))
    if not np.isfinite(ll):
        raise ImpossibleDataError("observations have zero probability under the model")
    joint = log_alpha + log_beta[:, :, None]
    gamma_joint = np.exp(joint - logsumexp(joint.reshape(T, -1), axis=1)[:, None, None])
    return PosteriorTables(gamma=gamma_joint.sum(axis=2), log_likelihood=ll, log_alpha=log_alpha,
                           log_beta=log_beta, gamma_joint=gamma_joint)


def smooth_gmm_chained(model: SwitchingModel, series) -> PosteriorTables:
    """Smoothing with a Markov link between consecutive mixture indicators.

    Uses ``p(m_t | m_{t-1}, s_t)`` from ``emission.mixture_transition`` and
    ``p(m_1 | s_1)`` from ``emission.weights``. Cost ``O(T S M (S + M))``.
    """
    em = _gmm_model(model)
    if em.mixture_transition is None:
        raise ValueError("chained mixture smoothing needs emission.mixture_transition")
    series = as_series(series)
    comp = gmm_component_loglik(em, series)
    T, S, M = comp.shape
    log_trans = _log(model.transition.switch)
    log_W = _log(em.mixture_transition)  # [s, m, m_prev]

    log_alpha = np.empty((T, S, M))
    log_alpha[0] = comp[0] + _log(em.weights) + _log(model.transition.initial)[:, None]
    for t in range(1, T):
        # sum over s_{t-1} first: (s, m_prev)
        over_s = logsumexp(log_trans[:, :, None] + log_alpha[t - 1][None, :, :], axis=1)
        log_alpha[t] = comp[t] + logsumexp(log_W + over_s[:, None, :], axis=2)

    log_beta = np.zeros((T, S, M))
    for t in range(T - 2, -1, -1):
        nxt = comp[t + 1] + log_beta[t + 1]  # (s', m')
        # inner[s', m] = logsum_{m'} W[s', m', m] + nxt[s', m']
        inner = logsumexp(log_W + nxt[:, :, None], axis=1)
        log_beta[t] = logsumexp(log_trans[:, :, None] + inner[:, None, :], axis=0)

    ll = float(logsumexp(log_alpha[-1]))
    if not np.isfinite(ll):
        raise ImpossibleDataError("observations have zero probability under the model")
    joint = log_alpha + log_beta
    gamma_joint = np.exp(joint - logsumexp(joint.reshape(T, -1), axis=1)[:, None, None])
    return PosteriorTables(gamma=gamma_joint.sum(axis=2), log_likelihood=ll, log_alpha=log_alpha,
                           log_beta=log_beta, gamma_joint=gamma_joint)


def viterbi_gmm(model: SwitchingModel, series) -> ViterbiResult:
    """Joint most likely (regime, mixture component) path.

    Runs over the product space ``(s, m)`` (flattened as ``s * M + m``), with
    independent indicators ``p(m | s)`` or the chained law when
    ``emission.mixture_transition`` is set. ``path`` holds regimes and
    ``components`` the mixture indices; ties go to the smallest flat index.
    """
    em = _gmm_model(model)
    series = as_series(series)
    comp = gmm_component_loglik(em, series)
    T, S, M = comp.shape
    log_pi = _log(model.transition.switch)
    log_w = _log(em.weights)
    if em.mixture_transition is None:
        log_m = np.broadcast_to(log_w[:, :, None], (S, M, M))
    else:
        log_m = _log(em.mixture_transition)
    # log_trans[(s, m), (s', m')] = log pi[s, s'] + log p(m | m', s)
    log_trans = (log_pi[:, None, :, None] + log_m[:, :, None, :]).reshape(S * M, S * M)
    log_init = (_log(model.transition.initial)[:, None] + log_w).ravel()
    res = _viterbi_core(log_init, log_trans, comp.reshape(T, S * M))
    flat = res.path
    return ViterbiResult(path=flat // M, log_joint=res.log_joint, backpointers=res.backpointers,
                         components=flat % M)


# ---------------------------------------------------------------------------
# EM


@dataclass
class EMConfig:
    max_iter: int = 100
    tol: float = 1e-6
    order_k: Optional[int] = None
    update: tuple = ("initial", "transition", "emission")
    tie_variance: bool = False
    fit_intercept: bool = False
    covariance_floor: float = 1e-9
    starvation_threshold: float = 1e-12


@dataclass
class EMResult:
    model: SwitchingModel
    trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def log_likelihood(self) -> float:
        return self.trace[-1]


def _pairwise_counts(log_alpha, log_beta, log_obs, log_trans, ll):
    """``sum_t p(s_{t-1} = i, s_t = j | v)`` arranged as ``[j, i]``."""
    T, S = log_obs.shape
    if T < 2:
        return np.zeros((S, S))
    a = log_alpha[:-1, None, :]  # (T-1, 1, i)
    b = (log_obs[1:] + log_beta[1:])[:, :, None]  # (T-1, j, 1)
    xi = np.exp(a + b + log_trans[None] - ll)
    return xi.sum(axis=0)


def _check_starvation(resp, threshold):
    for s, r in enumerate(resp):
        if r < threshold:
            raise RegimeStarvationError(f"regime {s} received total responsibility {r:.3g}")


def _update_ar(em: AutoregressiveEmission, series: TimeSeries, gamma: np.ndarray, cfg: EMConfig):
    v = series.data[:, 0]
    k = em.order
    X = ar_design(v, k)
    rows = np.arange(series.T) >= k if em.initial_law == "ignore" else np.ones(series.T, bool)
    X, y, w = X[rows], v[rows], gamma[rows]
    S = em.S
    _check_starvation(w.sum(axis=0), cfg.starvation_threshold)
    coef = np.array(em.coefficients, copy=True)
    icpt = np.array(em.intercepts, copy=True)
    sq = np.empty(S)
    for s in range(S):
        sw = np.sqrt(w[:, s])
        if cfg.fit_intercept:
            Xs = np.column_stack([np.ones(len(y)), X])
            sol = np.linalg.lstsq(Xs * sw[:, None], y * sw, rcond=None)[0]
            icpt[s], coef[s] = sol[0], sol[1:]
        elif k > 0:
            coef[s] = np.linalg.lstsq(X * sw[:, None], (y - icpt[s]) * sw, rcond=None)[0]
        resid = y - icpt[s] - X @ coef[s]
        sq[s] = np.sum(w[:, s] * resid ** 2)
    if cfg.tie_variance:
        var = np.full(S, sq.sum() / w.sum())
    else:
        var = sq / w.sum(axis=0)
    var = var + cfg.covariance_floor
    return AutoregressiveEmission(coef, var, icpt, em.initial_law)


def _update_gmm(em: GaussianMixtureEmission, series: TimeSeries, gamma_joint, cfg: EMConfig):
    v = series.data
    S, M, D = em.S, em.M, em.D
    resp = gamma_joint.sum(axis=0)  # (S, M)
    _check_starvation(resp.sum(axis=1), cfg.starvation_threshold)
    if np.any(resp < cfg.starvation_threshold):
        s, m = np.argwhere(resp < cfg.starvation_threshold)[0]
        raise RegimeStarvationError(f"mixture component ({s},{m}) received total responsibility {resp[s, m]:.3g}")
    means = np.einsum("tsm,td->smd", gamma_joint, v) / resp[..., None]
    covs = np.empty((S, M, D, D))
    for s in range(S):
        for m in range(M):
            diff = v - means[s, m]
            covs[s, m] = (gamma_joint[:, s, m, None] * diff).T @ diff / resp[s, m]
            covs[s, m] = 0.5 * (covs[s, m] + covs[s, m].T) + cfg.covariance_floor * np.eye(D)
    weights = resp / resp.sum(axis=1, keepdims=True)
    return GaussianMixtureEmission(weights, means, covs, em.mixture_transition)


def _e_step(model: SwitchingModel, series: TimeSeries):
    """Posterior statistics for one EM iteration: (ll, gamma, gamma_joint, pair_counts)."""
    if model.kind == "hmm":
        if isinstance(model.emission, GaussianMixtureEmission):
            post = smooth_gmm(model, series)
            log_obs = emission_loglik(model.emission, series)
            log_alpha_s = logsumexp(post.log_alpha, axis=2)
        else:
            post = smooth_parallel(model, series)
            log_obs = emission_loglik(model.emission, series)
            log_alpha_s = post.log_alpha
        pairs = _pairwise_counts(log_alpha_s, post.log_beta, log_obs, _log(model.transition.switch),
                                 post.log_likelihood)
        return post.log_likelihood, post.gamma, post.gamma_joint, pairs
    from switchseg import duration
    if model.kind == "dc":
        tables = duration.dc_smooth(model, series)
    elif model.kind == "ic":
        tables = duration.ic_smooth(model, series)
    else:
        raise ValueError(f"EM is not available for model kind {model.kind!r}")
    return tables.log_likelihood, tables.gamma_s, None, None


def em_fit(model_init: SwitchingModel, series, config: Optional[EMConfig] = None) -> EMResult:
    """Expectation-maximization for switching AR / Gaussian-mixture models.

    Plain switching models update the initial law, the switch matrix and the
    emission; duration models (``dc``/``ic``) keep their discrete parameters
    fixed and update the emission only. The trace holds the log-likelihood of
    every visited parameter set, starting with ``model_init``.
    """
    cfg = config or EMConfig()
    series = as_series(series)
    model = model_init.require_valid()
    _check_order(model, cfg.order_k)
    if series.T <= model.emission.order:
        raise ValueError("series must be longer than the AR order")
    if model.kind != "hmm" and set(cfg.update) - {"emission"}:
        raise ValueError(f"{model.kind} models only support emission updates")

    ll, gamma, gamma_joint, pairs = _e_step(model, series)
    result = EMResult(model=model, trace=[ll])
    for _ in range(cfg.max_iter):
        initial, switch = model.transition.initial, model.transition.switch
        if "initial" in cfg.update:
            initial = gamma[0]
        if "transition" in cfg.update and pairs is not None:
            from_counts = pairs.sum(axis=0)
            _check_starvation(from_counts + gamma[-1], cfg.starvation_threshold)
            switch = np.divide(pairs, from_counts[None, :], out=np.array(switch, copy=True),
                               where=from_counts[None, :] > 0)
        emission = model.emission
        if "emission" in cfg.update:
            if isinstance(emission, AutoregressiveEmission):
                emission = _update_ar(emission, series, gamma, cfg)
            else:
                emission = _update_gmm(emission, series, gamma_joint, cfg)
        model = model.with_transition(TransitionModel(initial, switch)).with_emission(emission)
        ll_new, gamma, gamma_joint, pairs = _e_step(model, series)
        result.trace.append(ll_new)
        result.model = model
        if abs(ll_new - ll) < cfg.tol:
            result.converged = True
            break
        ll = ll_new
    return result
