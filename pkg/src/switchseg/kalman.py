"""Gaussian belief algebra: Kalman steps, moment-matching collapse, reverse dynamics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from switchseg.errors import NumericalError

LOG_2PI = np.log(2.0 * np.pi)
MAX_JITTER = 1e-9


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray
    log_weight: float = 0.0


@dataclass
class RegimeParams:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray


def regime_params(emission, s: int) -> RegimeParams:
    return RegimeParams(emission.A[s], emission.B[s], emission.Q[s], emission.R[s], emission.mu[s], emission.Sigma[s])


class JitterCounter:
    """Counts how often a factorization needed diagonal jitter."""

    def __init__(self):
        self.count = 0


_JITTER = JitterCounter()


def jitter_count() -> int:
    return _JITTER.count


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _chol(M: np.ndarray, what: str):
    try:
        return cho_factor(M, lower=True)
    except np.linalg.LinAlgError:
        pass
    jit = MAX_JITTER * max(1.0, float(np.max(np.abs(np.diag(M)))))
    try:
        c = cho_factor(M + jit * np.eye(M.shape[0]), lower=True)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what} not PD after jitter {jit:.1e}") from None
    _JITTER.count += 1
    return c


def gaussian_logpdf(x, mean, cov) -> float:
    c = _chol(cov, "covariance")
    diff = x - mean
    z = cho_solve(c, diff)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    return float(-0.5 * (len(x) * LOG_2PI + logdet + diff @ z))


def kalman_correct(mean, cov, p: RegimeParams, v):
    """Condition ``N(mean, cov)`` on ``v = B h + N(0, R)``; Joseph-form covariance.

    Returns ``(mean, cov, log p(v))`` with ``p(v) = N(v; B mean, B cov B^T + R)``.
    """
    B, R = p.B, p.R
    S = symmetrize(B @ cov @ B.T + R)
    c = _chol(S, "innovation covariance")
    resid = v - B @ mean
    K = cho_solve(c, B @ cov).T  # cov B^T S^{-1}
    new_mean = mean + K @ resid
    IKB = np.eye(len(mean)) - K @ B
    new_cov = symmetrize(IKB @ cov @ IKB.T + K @ R @ K.T)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    ll = -0.5 * (len(v) * LOG_2PI + logdet + resid @ cho_solve(c, resid))
    return new_mean, new_cov, float(ll)


def kalman_predict(mean, cov, p: RegimeParams):
    return p.A @ mean, symmetrize(p.A @ cov @ p.A.T + p.Q)


def kalman_predict_correct(belief: GaussianBelief, params: RegimeParams, v) -> tuple:
    """One predict + correct step. Returns ``(GaussianBelief, log p(v_t | past))``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape[0] != params.B.shape[0]:
        raise ValueError(f"observation dimension {v.shape[0]} != {params.B.shape[0]}")
    m, P = kalman_predict(belief.mean, belief.cov, params)
    m, P, ll = kalman_correct(m, P, params, v)
    return GaussianBelief(m, P, belief.log_weight + ll), ll


def reset_correct(params: RegimeParams, v):
    """Fresh start ``h_t ~ N(mu, Sigma)`` conditioned on ``v_t``."""
    return kalman_correct(params.mu, params.Sigma, params, np.atleast_1d(v))


def collapse(log_weights, means, covs):
    """Moment-match a Gaussian mixture. Returns ``(log total weight, mean, cov)``.

    Components with ``-inf`` weight are ignored; an all-``-inf`` input returns
    ``-inf`` with the first component's moments.
    """
    lw = np.asarray(log_weights, dtype=float)
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    top = np.max(lw) if lw.size else -np.inf
    if not np.isfinite(top):
        return -np.inf, means[0].copy(), covs[0].copy()
    w = np.exp(lw - top)
    tot = w.sum()
    w = w / tot
    mean = w @ means
    diff = means - mean
    cov = np.einsum("k,kij->ij", w, covs) + np.einsum("k,ki,kj->ij", w, diff, diff)
    return float(top + np.log(tot)), mean, symmetrize(cov)


def reverse_dynamics(mean, cov, p: RegimeParams):
    """Parameters of ``h_t = A_hat h_{t+1} + m_hat + eta_hat`` given filtered ``N(mean, cov)`` at t.

    Returns ``(A_hat, m_hat, cov_hat)``, where ``cov_hat`` is the covariance of
    ``eta_hat``.
    """
    m_pred, P_pred = kalman_predict(mean, cov, p)
    c = _chol(P_pred, "predicted covariance")
    A_hat = cho_solve(c, p.A @ cov).T  # cov A^T P_pred^{-1}
    m_hat = mean - A_hat @ m_pred
    cov_hat = symmetrize(cov - A_hat @ p.A @ cov)
    return A_hat, m_hat, cov_hat


def rts_step(filt_mean, filt_cov, smooth_next_mean, smooth_next_cov, p: RegimeParams):
    """One backward (Rauch-Tung-Striebel) step through the reverse dynamics."""
    A_hat, m_hat, cov_hat = reverse_dynamics(filt_mean, filt_cov, p)
    mean = A_hat @ smooth_next_mean + m_hat
    cov = symmetrize(A_hat @ smooth_next_cov @ A_hat.T + cov_hat)
    return mean, cov


def kalman_filter(params: RegimeParams, data) -> tuple:
    """Single-regime filter from ``h_1 ~ N(mu, Sigma)``; returns (means, covs, loglik)."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    T, H = data.shape[0], params.A.shape[0]
    means, covs = np.empty((T, H)), np.empty((T, H, H))
    m, P, ll = reset_correct(params, data[0])
    means[0], covs[0] = m, P
    for t in range(1, T):
        b, step = kalman_predict_correct(GaussianBelief(m, P), params, data[t])
        m, P = b.mean, b.cov
        ll += step
        means[t], covs[t] = m, P
    return means, covs, ll


def rts_smoother(params: RegimeParams, data) -> tuple:
    fm, fc, ll = kalman_filter(params, data)
    sm, sc = fm.copy(), fc.copy()
    for t in range(len(fm) - 2, -1, -1):
        sm[t], sc[t] = rts_step(fm[t], fc[t], sm[t + 1], sc[t + 1], params)
    return sm, sc, ll
