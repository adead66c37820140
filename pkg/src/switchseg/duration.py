"""
Explicit-duration inference with a single count chain.

Decreasing counts (``kind="dc"``): ``c_t`` is the number of steps left in the
current regime, ``c_t = 1`` on its last step. Increasing counts (``kind="ic"``):
``c_t`` is the number of steps spent in the regime so far, with continuation
hazard ``lambda_c``; with ``cut`` the AR context never reaches back across the
start of the regime (change-point model).

Tables are laid out ``(T, S, d_max)`` with count ``c`` at index ``c - 1``;
unreachable cells hold exactly ``-inf``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from switchseg.discrete import ViterbiResult, _log
from switchseg.emissions import count_context_loglik, emission_loglik
from switchseg.errors import ImpossibleDataError
from switchseg.model import SwitchingModel, as_series

NEG_INF = -np.inf


@dataclass
class CountIndexedTables:
    log_alpha: np.ndarray
    log_beta: np.ndarray
    gamma_sc: np.ndarray
    gamma_s: np.ndarray
    log_likelihood: float


@numba.njit(cache=True)
def _lae(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@numba.njit(cache=True)
def _lse(x):
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


# -- decreasing counts -------------------------------------------------------


@numba.njit(cache=True)
def dc_forward_kernel(log_e, log_init, log_pi, log_rho):
    """Pruned alpha: a cell is reached either from ``(s, c+1)`` or from any ``(s', 1)``.

    ``sum_{s'} pi[s, s'] alpha[s', 1]`` is formed once per ``s`` and shared
    across counts, so one step costs ``O(S (S + d_max))``.
    """
    T, S = log_e.shape
    D = log_rho.shape[1]
    la = np.full((T, S, D), -np.inf)
    for s in range(S):
        for c in range(D):
            la[0, s, c] = log_e[0, s] + log_init[s, c]
    tmp = np.empty(S)
    for t in range(1, T):
        for s in range(S):
            for sp in range(S):
                tmp[sp] = log_pi[s, sp] + la[t - 1, sp, 0]
            enter = _lse(tmp)
            for c in range(D):
                acc = log_rho[s, c] + enter
                if c + 1 < D:
                    acc = _lae(acc, la[t - 1, s, c + 1])
                la[t, s, c] = acc + log_e[t, s]
    return la


@numba.njit(cache=True)
def dc_forward_naive_kernel(log_e, log_init, log_pi, log_rho):
    """Unpruned alpha: a dense log-sum over the full ``(s', c') -> (s, c)`` transition tensor.

    Every step touches all ``(S d_max)^2`` entries, ``O(S^2 d_max^2)``.
    """
    T, S = log_e.shape
    D = log_rho.shape[1]
    # log_P[s, c, s', c'] = log p(s_t=s, c_t=c | s_{t-1}=s', c_{t-1}=c')
    log_P = np.full((S, D, S, D), -np.inf)
    for s in range(S):
        for c in range(D):
            for sp in range(S):
                log_P[s, c, sp, 0] = log_pi[s, sp] + log_rho[s, c]
            if c + 1 < D:
                log_P[s, c, s, c + 1] = 0.0
    la = np.full((T, S, D), -np.inf)
    for s in range(S):
        for c in range(D):
            la[0, s, c] = log_e[0, s] + log_init[s, c]
    for t in range(1, T):
        prev = la[t - 1]
        for s in range(S):
            for c in range(D):
                m = -np.inf
                for sp in range(S):
                    for cp in range(D):
                        v = log_P[s, c, sp, cp] + prev[sp, cp]
                        if v > m:
                            m = v
                if m == -np.inf:
                    continue
                acc = 0.0
                for sp in range(S):
                    for cp in range(D):
                        acc += np.exp(log_P[s, c, sp, cp] + prev[sp, cp] - m)
                la[t, s, c] = m + np.log(acc) + log_e[t, s]
    return la


@numba.njit(cache=True)
def dc_backward_kernel(log_e, log_pi, log_rho):
    T, S = log_e.shape
    D = log_rho.shape[1]
    lb = np.zeros((T, S, D))
    nxt = np.empty(S)
    tmp = np.empty(S)
    for t in range(T - 2, -1, -1):
        # nxt[s'] = e_{t+1}(s') + logsum_{c'} rho_{c'} beta_{t+1}(s', c')
        for sp in range(S):
            acc = -np.inf
            for cp in range(D):
                acc = _lae(acc, log_rho[sp, cp] + lb[t + 1, sp, cp])
            nxt[sp] = log_e[t + 1, sp] + acc
        for s in range(S):
            for sp in range(S):
                tmp[sp] = log_pi[sp, s] + nxt[sp]
            lb[t, s, 0] = _lse(tmp)
            for c in range(1, D):
                lb[t, s, c] = log_e[t + 1, s] + lb[t + 1, s, c - 1]
    return lb


@numba.njit(cache=True)
def dc_viterbi_kernel(log_e, log_init, log_pi, log_rho):
    """Max-product over (s, c). Ties: staying in the regime beats re-entering; then lowest s'."""
    T, S = log_e.shape
    D = log_rho.shape[1]
    delta = np.full((T, S, D), -np.inf)
    psi = np.full((T, S, D), -1, dtype=np.int64)
    for s in range(S):
        for c in range(D):
            delta[0, s, c] = log_e[0, s] + log_init[s, c]
    for t in range(1, T):
        for s in range(S):
            best_sp = 0
            best = -np.inf
            for sp in range(S):
                v = log_pi[s, sp] + delta[t - 1, sp, 0]
                if v > best:
                    best = v
                    best_sp = sp
            for c in range(D):
                val = log_rho[s, c] + best
                arg = best_sp * D
                if c + 1 < D:
                    stay = delta[t - 1, s, c + 1]
                    if stay >= val and stay > -np.inf:
                        val = stay
                        arg = s * D + c + 1
                delta[t, s, c] = val + log_e[t, s]
                psi[t, s, c] = arg
    return delta, psi


def _dc_inputs(model: SwitchingModel, series):
    model.require_valid()
    if model.kind != "dc":
        raise ValueError(f"expected a decreasing-count model, got kind={model.kind!r}")
    series = as_series(series)
    spec = model.duration
    if model.boundary == "strict" and spec.d_min > series.T:
        raise ImpossibleDataError(
            f"d_min={spec.d_min} exceeds T={series.T}: no complete regime fits under strict boundary mode")
    S = model.S
    rho = spec.regime_pmf(S)
    if model.boundary == "relaxed":
        w = np.flip(np.cumsum(np.flip(rho, 1), 1), 1)  # survival sum_{i>=c} rho_i
    else:
        w = rho
    log_init = _log(model.transition.initial)[:, None] + _log(w)
    log_e = np.ascontiguousarray(emission_loglik(model.emission, series))
    return log_e, np.ascontiguousarray(log_init), np.ascontiguousarray(_log(model.transition.switch)), \
        np.ascontiguousarray(_log(rho))


def _tables(la, lb) -> CountIndexedTables:
    T = la.shape[0]
    ll = float(np.logaddexp.reduce(la[-1].ravel()))
    if not np.isfinite(ll):
        raise ImpossibleDataError("observations have zero probability under the model")
    joint = la + lb
    with np.errstate(invalid="ignore"):
        g = np.exp(joint - np.logaddexp.reduce(joint.reshape(T, -1), axis=1)[:, None, None])
    g = np.nan_to_num(g)
    return CountIndexedTables(log_alpha=la, log_beta=lb, gamma_sc=g, gamma_s=g.sum(axis=2), log_likelihood=ll)


def dc_smooth(model: SwitchingModel, series) -> CountIndexedTables:
    """Forward-backward over ``sigma_t = (s_t, c_t)`` with decreasing counts."""
    log_e, log_init, log_pi, log_rho = _dc_inputs(model, series)
    la = dc_forward_kernel(log_e, log_init, log_pi, log_rho)
    lb = dc_backward_kernel(log_e, log_pi, log_rho)
    return _tables(la, lb)


def dc_forward_naive(model: SwitchingModel, series) -> np.ndarray:
    """Reference alpha from the full transition tensor; same cells as the pruned pass."""
    return dc_forward_naive_kernel(*_dc_inputs(model, series))


def dc_forward(model: SwitchingModel, series) -> np.ndarray:
    return dc_forward_kernel(*_dc_inputs(model, series))


def dc_viterbi(model: SwitchingModel, series) -> ViterbiResult:
    log_e, log_init, log_pi, log_rho = _dc_inputs(model, series)
    delta, psi = dc_viterbi_kernel(log_e, log_init, log_pi, log_rho)
    T, S, D = delta.shape
    flat = delta[-1].ravel()
    # final tie-break: lowest regime, then lowest count
    k = int(np.argmax(flat))
    log_joint = float(flat[k])
    if not np.isfinite(log_joint):
        raise ImpossibleDataError("observations have zero probability under the model")
    path = np.empty(T, dtype=np.int64)
    counts = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        path[t], counts[t] = divmod(k, D)
        if t > 0:
            k = int(psi[t, path[t], counts[t]])
    return ViterbiResult(path=path, log_joint=log_joint, backpointers=psi, counts=counts + 1)


# -- increasing counts -------------------------------------------------------


@numba.njit(cache=True)
def ic_forward_kernel(log_ec, log_init, log_pi, log_lam, log_end):
    T, S, D = log_ec.shape
    la = np.full((T, S, D), -np.inf)
    for s in range(S):
        for c in range(D):
            la[0, s, c] = log_ec[0, s, c] + log_init[s, c]
    leave = np.empty(S)
    tmp = np.empty(S)
    for t in range(1, T):
        for sp in range(S):
            acc = -np.inf
            for cp in range(D):
                acc = _lae(acc, log_end[sp, cp] + la[t - 1, sp, cp])
            leave[sp] = acc
        for s in range(S):
            for sp in range(S):
                tmp[sp] = log_pi[s, sp] + leave[sp]
            la[t, s, 0] = log_ec[t, s, 0] + _lse(tmp)
            for c in range(1, D):
                la[t, s, c] = log_ec[t, s, c] + log_lam[s, c - 1] + la[t - 1, s, c - 1]
    return la


@numba.njit(cache=True)
def ic_backward_kernel(log_ec, log_pi, log_lam, log_end):
    T, S, D = log_ec.shape
    lb = np.zeros((T, S, D))
    tmp = np.empty(S)
    for t in range(T - 2, -1, -1):
        for s in range(S):
            for sp in range(S):
                tmp[sp] = log_ec[t + 1, sp, 0] + log_pi[sp, s] + lb[t + 1, sp, 0]
            restart = _lse(tmp)
            for c in range(D):
                acc = log_end[s, c] + restart
                if c + 1 < D:
                    acc = _lae(acc, log_lam[s, c] + log_ec[t + 1, s, c + 1] + lb[t + 1, s, c + 1])
                lb[t, s, c] = acc
    return lb


@numba.njit(cache=True)
def ic_viterbi_kernel(log_ec, log_init, log_pi, log_lam, log_end):
    """Max-product over (s, c) with increasing counts.

    ``psi[t, s, 0]`` stores the flat predecessor ``s' * D + c'`` of a restart;
    ties go to the lowest flat index.
    """
    T, S, D = log_ec.shape
    delta = np.full((T, S, D), -np.inf)
    psi = np.full((T, S, D), -1, dtype=np.int64)
    for s in range(S):
        for c in range(D):
            delta[0, s, c] = log_ec[0, s, c] + log_init[s, c]
    for t in range(1, T):
        for s in range(S):
            best = -np.inf
            arg = 0
            for sp in range(S):
                for cp in range(D):
                    v = log_pi[s, sp] + log_end[sp, cp] + delta[t - 1, sp, cp]
                    if v > best:
                        best = v
                        arg = sp * D + cp
            delta[t, s, 0] = log_ec[t, s, 0] + best
            psi[t, s, 0] = arg
            for c in range(1, D):
                delta[t, s, c] = log_ec[t, s, c] + log_lam[s, c - 1] + delta[t - 1, s, c - 1]
                psi[t, s, c] = s * D + c - 1
    return delta, psi


def _ic_inputs(model: SwitchingModel, series):
    model.require_valid()
    if model.kind != "ic":
        raise ValueError(f"expected an increasing-count model, got kind={model.kind!r}")
    series = as_series(series)
    spec = model.duration
    S, D = model.S, spec.d_max
    lam = spec.hazard()
    lam = np.tile(lam, (S, 1)) if lam.ndim == 1 else lam
    if model.boundary == "relaxed":
        # elapsed count c at t=1 has weight prod_{i<c} lambda_i (the survival function)
        surv = np.concatenate([np.ones((S, 1)), np.cumprod(lam, axis=1)[:, :-1]], axis=1)
    else:
        if spec.d_min > series.T:
            raise ImpossibleDataError(
                f"d_min={spec.d_min} exceeds T={series.T}: no complete regime fits under strict boundary mode")
        surv = np.zeros((S, D))
        surv[:, 0] = 1.0
    log_init = _log(model.transition.initial)[:, None] + _log(surv)
    log_ec = count_context_loglik(model.emission, series, D, model.cut)
    return (np.ascontiguousarray(log_ec), np.ascontiguousarray(log_init),
            np.ascontiguousarray(_log(model.transition.switch)), np.ascontiguousarray(_log(lam)),
            np.ascontiguousarray(_log(1.0 - lam)))


def ic_smooth(model: SwitchingModel, series) -> CountIndexedTables:
    """Forward-backward over ``(s_t, c_t)`` with increasing counts and hazard ``lambda``."""
    log_ec, log_init, log_pi, log_lam, log_end = _ic_inputs(model, series)
    la = ic_forward_kernel(log_ec, log_init, log_pi, log_lam, log_end)
    lb = ic_backward_kernel(log_ec, log_pi, log_lam, log_end)
    return _tables(la, lb)


def ic_viterbi(model: SwitchingModel, series) -> ViterbiResult:
    """Most likely (regime, elapsed count) path; final tie-break lowest regime, then lowest count."""
    delta, psi = ic_viterbi_kernel(*_ic_inputs(model, series))
    T, S, D = delta.shape
    flat = delta[-1].ravel()
    k = int(np.argmax(flat))
    log_joint = float(flat[k])
    if not np.isfinite(log_joint):
        raise ImpossibleDataError("observations have zero probability under the model")
    path = np.empty(T, dtype=np.int64)
    counts = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        path[t], counts[t] = divmod(k, D)
        if t > 0:
            k = int(psi[t, path[t], counts[t]])
    return ViterbiResult(path=path, log_joint=log_joint, backpointers=psi, counts=counts + 1)


def count_viterbi(model: SwitchingModel, series) -> ViterbiResult:
    if model.kind == "dc":
        return dc_viterbi(model, series)
    if model.kind == "ic":
        return ic_viterbi(model, series)
    raise ValueError(f"no count-chain decoder for kind {model.kind!r}")


def count_smooth(model: SwitchingModel, series) -> CountIndexedTables:
    if model.kind == "dc":
        return dc_smooth(model, series)
    if model.kind == "ic":
        return ic_smooth(model, series)
    raise ValueError(f"no count-chain smoother for kind {model.kind!r}")
