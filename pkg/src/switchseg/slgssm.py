"""
Switching linear Gaussian state-space models.

    h_t = A_s h_{t-1} + N(0, Q_s),   v_t = B_s h_t + N(0, R_s),   h_1 ~ N(mu_s, Sigma_s)

The discrete backbone depends on ``model.variant``:

``plain``        regimes only, collapsed (one Gaussian per regime) filtering.
``dc``           decreasing duration counts, ``sigma = (s, c)``; collapsed.
``dc_reset``     as ``dc`` but ``h`` restarts from ``N(mu_s, Sigma_s)`` whenever
                 a new regime begins; exact (mixture over segment starts) or collapsed.
``ic_reset``     increasing counts with restarts; exact with one Gaussian per (s, c).
``changepoint``  ``sigma = (s, c)`` with ``c = 1`` iff the regime just changed
                 (restart), ``c = 2`` otherwise; exact or collapsed.

All discrete weights are kept in the log domain; Gaussian algebra is linear.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from switchseg.discrete import _log
from switchseg.errors import ImpossibleDataError, MixtureCapError
from switchseg.kalman import (GaussianBelief, collapse, gaussian_logpdf, kalman_correct, kalman_predict,
                              regime_params, reset_correct, rts_step)
from switchseg.model import SwitchingModel, as_series

DEFAULT_CAP = 4096
CONTINUE, RESET = 0, 1


@dataclass
class SwitchBeliefState:
    """Posterior over discrete configurations with one Gaussian per configuration."""

    configs: list
    weights: np.ndarray
    beliefs: list

    def belief(self, config) -> GaussianBelief:
        return self.beliefs[self.configs.index(tuple(config))]


@dataclass
class Structure:
    """Configurations, initial log weights and incoming transitions of a variant.

    ``incoming[j]`` lists ``(i, log p(sigma_t = j | sigma_{t-1} = i), action)``
    where ``action`` says whether ``h`` continues (``CONTINUE``) or restarts.
    """

    configs: list
    log_init: np.ndarray
    incoming: list
    regime: np.ndarray


def structure(model: SwitchingModel) -> Structure:
    """Discrete transition structure for ``model.variant``."""
    S = model.S
    log_pi = _log(model.transition.switch)
    log_init = _log(model.transition.initial)
    var = model.variant
    if var == "plain":
        configs = [(s,) for s in range(S)]
        incoming = [[(i, log_pi[j, i], CONTINUE) for i in range(S)] for j in range(S)]
        return Structure(configs, log_init.copy(), incoming, np.arange(S))
    if var == "changepoint":
        configs = [(s, c) for s in range(S) for c in (1, 2)]
        idx = {cfg: n for n, cfg in enumerate(configs)}
        init = np.full(len(configs), -np.inf)
        incoming = [[] for _ in configs]
        for s in range(S):
            init[idx[(s, 1)]] = log_init[s]
            for sp in range(S):
                for cp in (1, 2):
                    if sp == s:
                        incoming[idx[(s, 2)]].append((idx[(sp, cp)], log_pi[s, sp], CONTINUE))
                    else:
                        incoming[idx[(s, 1)]].append((idx[(sp, cp)], log_pi[s, sp], RESET))
        return Structure(configs, init, incoming, np.array([c[0] for c in configs]))

    spec = model.duration
    D = spec.d_max
    configs = [(s, c) for s in range(S) for c in range(1, D + 1)]
    idx = {cfg: n for n, cfg in enumerate(configs)}
    rho = spec.regime_pmf(S)
    surv = np.flip(np.cumsum(np.flip(rho, 1), 1), 1)
    relaxed = model.boundary == "relaxed"
    init = np.full(len(configs), -np.inf)
    incoming = [[] for _ in configs]
    if var in ("dc", "dc_reset"):
        enter = RESET if var == "dc_reset" else CONTINUE
        for s in range(S):
            for c in range(1, D + 1):
                j = idx[(s, c)]
                init[j] = log_init[s] + _log(surv[s, c - 1] if relaxed else rho[s, c - 1])
                if c < D:
                    incoming[j].append((idx[(s, c + 1)], 0.0, CONTINUE))
                for sp in range(S):
                    incoming[j].append((idx[(sp, 1)], log_pi[s, sp] + _log(rho[s, c - 1]), enter))
    elif var == "ic_reset":
        lam = spec.hazard()
        lam = np.tile(lam, (S, 1)) if lam.ndim == 1 else lam
        for s in range(S):
            for c in range(1, D + 1):
                j = idx[(s, c)]
                if relaxed:
                    init[j] = log_init[s] + _log(surv[s, c - 1])
                elif c == 1:
                    init[j] = log_init[s]
                if c > 1:
                    incoming[j].append((idx[(s, c - 1)], _log(lam[s, c - 2]), CONTINUE))
                else:
                    for sp in range(S):
                        for cp in range(1, D + 1):
                            incoming[j].append((idx[(sp, cp)], log_pi[s, sp] + _log(1.0 - lam[sp, cp - 1]), RESET))
    else:
        raise ValueError(f"unknown slgssm variant {var!r}")
    return Structure(configs, init, incoming, np.array([c[0] for c in configs]))


@dataclass
class FilterResult:
    """Per-t filtered (or smoothed) configuration weights and Gaussian moments.

    ``log_weights[t, j]`` is normalized over ``j``; ``means``/``covs`` hold the
    (collapsed) Gaussian of configuration ``j``. In exact mode
    ``components[t]`` lists ``(j, reset_time, log_weight, mean, cov)`` for every
    mixture component (weights normalized over all components at t).
    """

    model: SwitchingModel
    structure: Structure
    log_weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    log_likelihood: float
    mode: str = "collapsed"
    components: Optional[list] = None
    smoothed: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def configs(self) -> list:
        return self.structure.configs

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def regime_marginals(self) -> np.ndarray:
        S = self.model.S
        out = np.zeros((self.log_weights.shape[0], S))
        for j, s in enumerate(self.structure.regime):
            out[:, s] += self.weights[:, j]
        return out

    def state(self, t: int) -> SwitchBeliefState:
        beliefs = [GaussianBelief(self.means[t, j], self.covs[t, j], self.log_weights[t, j])
                   for j in range(len(self.configs))]
        return SwitchBeliefState(list(self.configs), self.weights[t], beliefs)


def _prepare(model: SwitchingModel, series, variants):
    model.require_valid()
    if model.kind != "slgssm":
        raise ValueError(f"expected an slgssm model, got kind={model.kind!r}")
    if model.variant not in variants:
        raise ValueError(f"variant {model.variant!r} not handled here (expected one of {variants})")
    data = as_series(series).data
    if data.shape[1] != model.emission.D:
        raise ValueError(f"observation dimension {data.shape[1]} != {model.emission.D}")
    params = [regime_params(model.emission, s) for s in range(model.S)]
    return data, params, structure(model)


def _normalize(lw):
    z = logsumexp(lw)
    if not np.isfinite(z):
        raise ImpossibleDataError("all configurations have zero weight")
    return lw - z, float(z)


def _first_step(data, params, st: Structure):
    n, H = len(st.configs), params[0].A.shape[0]
    lw = np.full(n, -np.inf)
    means, covs = np.empty((n, H)), np.empty((n, H, H))
    for j in range(n):
        m, P, ll = reset_correct(params[st.regime[j]], data[0])
        means[j], covs[j] = m, P
        lw[j] = st.log_init[j] + ll
    return lw, means, covs


def _collapsed_filter(data, params, st: Structure, step_fn):
    T = data.shape[0]
    n, H = len(st.configs), params[0].A.shape[0]
    LW = np.empty((T, n))
    M = np.empty((T, n, H))
    C = np.empty((T, n, H, H))
    lw, M[0], C[0] = _first_step(data, params, st)
    LW[0], ll = _normalize(lw)
    for t in range(1, T):
        lw, M[t], C[t] = step_fn(LW[t - 1], M[t - 1], C[t - 1], data[t])
        LW[t], z = _normalize(lw)
        ll += z
    return LW, M, C, ll


def _naive_step(params, st: Structure):
    """Every target configuration collapses over all of its incoming branches."""

    def step(lw_prev, m_prev, c_prev, v):
        n = len(st.configs)
        lw = np.full(n, -np.inf)
        means, covs = m_prev.copy(), c_prev.copy()
        reset_cache = {}
        for j in range(n):
            p = params[st.regime[j]]
            bw, bm, bc = [], [], []
            for i, lt, action in st.incoming[j]:
                base = lw_prev[i] + lt
                if base == -np.inf:
                    continue
                if action == RESET:
                    if st.regime[j] not in reset_cache:
                        reset_cache[st.regime[j]] = reset_correct(p, v)
                    m, P, ll = reset_cache[st.regime[j]]
                else:
                    m, P = kalman_predict(m_prev[i], c_prev[i], p)
                    m, P, ll = kalman_correct(m, P, p, v)
                bw.append(base + ll)
                bm.append(m)
                bc.append(P)
            if bw:
                lw[j], means[j], covs[j] = collapse(bw, bm, bc)
        return lw, means, covs

    return step


def _dc_factored_step(model, params, st: Structure):
    """dc / dc_reset step with the regime-entry mixture collapsed once per regime.

    Entering ``(s, c)`` from any ``(s', 1)`` yields the same Gaussian for every
    ``c`` (only the weight ``rho_s(c)`` differs), so the ``S`` entry branches are
    collapsed once per ``s`` and reused for all counts.
    """
    S, D = model.S, model.duration.d_max
    log_pi = _log(model.transition.switch)
    log_rho = _log(model.duration.regime_pmf(S))
    reset = model.variant == "dc_reset"

    def j_of(s, c):
        return s * D + (c - 1)

    def step(lw_prev, m_prev, c_prev, v):
        n = len(st.configs)
        lw = np.full(n, -np.inf)
        means, covs = m_prev.copy(), c_prev.copy()
        for s in range(S):
            p = params[s]
            src = [j_of(sp, 1) for sp in range(S)]
            if reset:
                m_in, P_in, ll = reset_correct(p, v)
                e_w = logsumexp([lw_prev[i] + log_pi[s, sp] for sp, i in enumerate(src)]) + ll
            else:
                bw, bm, bc = [], [], []
                for sp, i in enumerate(src):
                    base = lw_prev[i] + log_pi[s, sp]
                    if base == -np.inf:
                        continue
                    m, P = kalman_predict(m_prev[i], c_prev[i], p)
                    m, P, ll = kalman_correct(m, P, p, v)
                    bw.append(base + ll)
                    bm.append(m)
                    bc.append(P)
                if bw:
                    e_w, m_in, P_in = collapse(bw, bm, bc)
                else:
                    e_w, m_in, P_in = -np.inf, None, None
            for c in range(1, D + 1):
                j = j_of(s, c)
                bw, bm, bc = [], [], []
                if e_w > -np.inf and log_rho[s, c - 1] > -np.inf:
                    bw.append(e_w + log_rho[s, c - 1])
                    bm.append(m_in)
                    bc.append(P_in)
                if c < D and lw_prev[j + 1] > -np.inf:
                    m, P = kalman_predict(m_prev[j + 1], c_prev[j + 1], p)
                    m, P, ll = kalman_correct(m, P, p, v)
                    bw.append(lw_prev[j + 1] + ll)
                    bm.append(m)
                    bc.append(P)
                if bw:
                    lw[j], means[j], covs[j] = collapse(bw, bm, bc)
        return lw, means, covs

    return step


def _result(model, st, LW, M, C, ll, mode="collapsed", components=None):
    return FilterResult(model=model, structure=st, log_weights=LW, means=M, covs=C, log_likelihood=float(ll),
                        mode=mode, components=components)


def slgssm_filter(model: SwitchingModel, series) -> FilterResult:
    """Collapsed filter for the plain regime chain: branch S x S, collapse back to S."""
    data, params, st = _prepare(model, series, ("plain",))
    return _result(model, st, *_collapsed_filter(data, params, st, _naive_step(params, st)))


def dur_filter_dc(model: SwitchingModel, series, factored: bool = True) -> FilterResult:
    """Collapsed filter over ``(s, c)`` with decreasing counts (no restart of ``h``)."""
    data, params, st = _prepare(model, series, ("dc",))
    step = _dc_factored_step(model, params, st) if factored else _naive_step(params, st)
    return _result(model, st, *_collapsed_filter(data, params, st, step))


def _exact_reset_filter(model, data, params, st: Structure, cap: int):
    """Exact mixture filter; components keyed by (configuration, last restart time)."""
    T = data.shape[0]
    n, H = len(st.configs), params[0].A.shape[0]
    comps = [dict() for _ in range(n)]  # key: restart time -> (lw, mean, cov)
    lw0, m0, c0 = _first_step(data, params, st)
    relaxed_ic = model.variant == "ic_reset"
    for j in range(n):
        if lw0[j] > -np.inf:
            tau = 2 - st.configs[j][1] if relaxed_ic else 1
            comps[j][tau] = (lw0[j], m0[j], c0[j])
    history = []
    ll = 0.0

    def record(t):
        nonlocal ll
        tot = logsumexp([c[0] for d in comps for c in d.values()]) if any(comps) else -np.inf
        if not np.isfinite(tot):
            raise ImpossibleDataError(f"all mixture components have zero weight at t={t}")
        ll += tot
        for d in comps:
            for key, (w, m, P) in list(d.items()):
                d[key] = (w - tot, m, P)
        history.append([(j, key, w, m, P) for j, d in enumerate(comps) for key, (w, m, P) in sorted(d.items())])

    record(0)
    for t in range(1, T):
        new = [dict() for _ in range(n)]
        reset_cache = {}
        totals = [logsumexp([c[0] for c in d.values()]) if d else -np.inf for d in comps]
        for j in range(n):
            p = params[st.regime[j]]
            reset_w = []
            for i, lt, action in st.incoming[j]:
                if action == RESET:
                    if totals[i] + lt > -np.inf:
                        reset_w.append(totals[i] + lt)
                    continue
                for key, (w, m, P) in comps[i].items():
                    if w + lt == -np.inf:
                        continue
                    m2, P2 = kalman_predict(m, P, p)
                    m2, P2, l = kalman_correct(m2, P2, p, data[t])
                    _merge(new[j], key, w + lt + l, m2, P2)
            if reset_w:
                if st.regime[j] not in reset_cache:
                    reset_cache[st.regime[j]] = reset_correct(p, data[t])
                m2, P2, l = reset_cache[st.regime[j]]
                _merge(new[j], t + 1, logsumexp(reset_w) + l, m2, P2)
        comps = new
        total = sum(len(d) for d in comps)
        if total > cap:
            raise MixtureCapError(f"exact mixture reached {total} components at t={t + 1} (cap {cap}); "
                                  f"use collapsed mode")
        record(t)

    LW = np.full((T, n), -np.inf)
    M = np.zeros((T, n, H))
    C = np.tile(np.eye(H), (T, n, 1, 1))
    for t, comp_list in enumerate(history):
        for j in range(n):
            mine = [c for c in comp_list if c[0] == j]
            if mine:
                LW[t, j], M[t, j], C[t, j] = collapse([c[2] for c in mine], [c[3] for c in mine],
                                                      [c[4] for c in mine])
    return LW, M, C, ll, history


def _merge(store, key, w, m, P):
    if key in store:
        w0, m0, P0 = store[key]
        tot, mm, PP = collapse([w0, w], [m0, m], [P0, P])
        store[key] = (tot, mm, PP)
    else:
        store[key] = (w, m, P)


def dur_filter_dc_reset(model: SwitchingModel, series, mode: str = "exact", cap: int = DEFAULT_CAP) -> FilterResult:
    """dc counts with restarts at regime entry; ``mode`` is ``"exact"`` or ``"collapsed"``."""
    data, params, st = _prepare(model, series, ("dc_reset",))
    if mode == "exact":
        LW, M, C, ll, hist = _exact_reset_filter(model, data, params, st, cap)
        return _result(model, st, LW, M, C, ll, mode="exact", components=hist)
    if mode != "collapsed":
        raise ValueError(f"mode must be 'exact' or 'collapsed', got {mode!r}")
    return _result(model, st, *_collapsed_filter(data, params, st, _dc_factored_step(model, params, st)))


def dur_filter_ic_reset(model: SwitchingModel, series) -> FilterResult:
    """Exact filter for increasing counts with restarts: one Gaussian per (s, c), nothing collapsed."""
    data, params, st = _prepare(model, series, ("ic_reset",))
    res = _result(model, st, *_collapsed_filter(data, params, st, _naive_step(params, st)))
    res.mode = "exact"
    return res


def changepoint_two_state(model: SwitchingModel, series, mode: str = "exact", cap: int = DEFAULT_CAP) -> FilterResult:
    """Change-point model: ``h`` restarts exactly when the regime changes."""
    data, params, st = _prepare(model, series, ("changepoint",))
    if mode == "exact":
        LW, M, C, ll, hist = _exact_reset_filter(model, data, params, st, cap)
        return _result(model, st, LW, M, C, ll, mode="exact", components=hist)
    if mode != "collapsed":
        raise ValueError(f"mode must be 'exact' or 'collapsed', got {mode!r}")
    return _result(model, st, *_collapsed_filter(data, params, st, _naive_step(params, st)))


def filter_model(model: SwitchingModel, series, mode: str = "collapsed") -> FilterResult:
    """Dispatch on ``model.variant``."""
    var = model.variant
    if var == "plain":
        return slgssm_filter(model, series)
    if var == "dc":
        return dur_filter_dc(model, series)
    if var == "dc_reset":
        return dur_filter_dc_reset(model, series, mode=mode)
    if var == "ic_reset":
        return dur_filter_ic_reset(model, series)
    return changepoint_two_state(model, series, mode=mode)


def slgssm_smooth(filtered: FilterResult, model: Optional[SwitchingModel] = None,
                  variant: Optional[str] = None) -> FilterResult:
    """Backward pass over configurations with two approximations.

    * the smoothed law of ``h_{t+1}`` given ``sigma_{t+1}`` is used regardless of
      ``sigma_t`` (``h_t`` is then recovered through the reverse dynamics);
    * ``p(sigma_t | sigma_{t+1}, v_{1:T})`` is evaluated at the smoothed mean of
      ``h_{t+1}``.

    For ``ic_reset`` both are exact: a continuing configuration has a single
    predecessor, and a restart makes ``h_{t+1}`` independent of ``sigma_t``.
    """
    model = model or filtered.model
    if variant is not None and variant != model.variant:
        raise ValueError(f"variant {variant!r} does not match the filtered model ({model.variant!r})")
    if filtered.model.variant != model.variant or filtered.smoothed:
        raise ValueError("filtered states do not come from a filter of this model")
    st = filtered.structure
    params = [regime_params(model.emission, s) for s in range(model.S)]
    LWf, Mf, Cf = filtered.log_weights, filtered.means, filtered.covs
    T, n = LWf.shape
    LW, M, C = LWf.copy(), Mf.copy(), Cf.copy()
    for t in range(T - 2, -1, -1):
        acc_w = [[] for _ in range(n)]
        acc_m = [[] for _ in range(n)]
        acc_c = [[] for _ in range(n)]
        for j in range(n):
            if LW[t + 1, j] == -np.inf:
                continue
            p = params[st.regime[j]]
            cand = []
            for i, lt, action in st.incoming[j]:
                base = LWf[t, i] + lt
                if base == -np.inf:
                    continue
                if action == RESET:
                    cand.append((i, base, Mf[t, i], Cf[t, i]))
                else:
                    mp, Pp = kalman_predict(Mf[t, i], Cf[t, i], p)
                    score = base + gaussian_logpdf(M[t + 1, j], mp, Pp)
                    m, P = rts_step(Mf[t, i], Cf[t, i], M[t + 1, j], C[t + 1, j], p)
                    cand.append((i, score, m, P))
            if not cand:
                continue
            norm = logsumexp([c[1] for c in cand])
            for i, score, m, P in cand:
                acc_w[i].append(LW[t + 1, j] + score - norm)
                acc_m[i].append(m)
                acc_c[i].append(P)
        for i in range(n):
            if acc_w[i]:
                LW[t, i], M[t, i], C[t, i] = collapse(acc_w[i], acc_m[i], acc_c[i])
            else:
                LW[t, i] = -np.inf
        LW[t] -= logsumexp(LW[t])
    out = _result(model, st, LW, M, C, filtered.log_likelihood, mode=filtered.mode)
    out.smoothed = True
    return out
