"""Observation log-likelihood tables for the discrete-state models."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from switchseg.model import AutoregressiveEmission, GaussianMixtureEmission, TimeSeries

LOG_2PI = np.log(2.0 * np.pi)


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Row-wise multivariate normal log density of ``x`` (shape ``(T, D)``)."""
    chol = np.linalg.cholesky(cov)
    diff = x - mean
    z = np.linalg.solve(chol, diff.T)
    maha = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (x.shape[1] * LOG_2PI + logdet + maha)


def gmm_component_loglik(em: GaussianMixtureEmission, series: TimeSeries) -> np.ndarray:
    """``log p(v_t | s, m)`` with shape ``(T, S, M)``."""
    out = np.empty((series.T, em.S, em.M))
    for s in range(em.S):
        for m in range(em.M):
            out[:, s, m] = gaussian_logpdf(series.data, em.means[s, m], em.covs[s, m])
    return out


def ar_design(values: np.ndarray, order: int) -> np.ndarray:
    """Lag matrix ``X[t, i] = v_{t-1-i}``, zero where the lag precedes the series."""
    T = values.shape[0]
    X = np.zeros((T, order))
    for i in range(order):
        X[i + 1:, i] = values[: T - i - 1]
    return X


def ar_context_loglik(em: AutoregressiveEmission, series: TimeSeries) -> np.ndarray:
    """``log p(v_t | s, v_{t-j:t-1})`` for every context length ``j = 0..k``.

    Shape ``(T, S, k + 1)``. A context of ``j`` lags uses the first ``j``
    coefficients only (higher lags dropped). Lags that would precede the start
    of the series are handled by ``em.initial_law``: ``"ignore"`` gives rows
    ``t < k`` no likelihood at all, ``"truncate"`` caps the context at ``t``.
    """
    if series.D != 1:
        raise ValueError(f"autoregressive emission needs scalar observations, got D={series.D}")
    v = series.data[:, 0]
    T, S, k = series.T, em.S, em.order
    X = ar_design(v, k)
    out = np.empty((T, S, k + 1))
    for j in range(k + 1):
        pred = em.intercepts[None, :] + X[:, :j] @ em.coefficients[:, :j].T
        resid = v[:, None] - pred
        out[:, :, j] = -0.5 * (LOG_2PI + np.log(em.noise_variance) + resid ** 2 / em.noise_variance)
    t_idx = np.arange(T)
    if em.initial_law == "ignore":
        out[t_idx < k] = 0.0
    else:
        for t in range(min(k, T)):
            out[t, :, t + 1:] = out[t, :, t][:, None]
    return out


def context_loglik(emission, series: TimeSeries) -> np.ndarray:
    """Context-indexed table ``(T, S, k + 1)``; ``k = 0`` for mixtures."""
    if isinstance(emission, AutoregressiveEmission):
        return ar_context_loglik(emission, series)
    if isinstance(emission, GaussianMixtureEmission):
        comp = gmm_component_loglik(emission, series)
        return logsumexp(comp + np.log(emission.weights)[None], axis=2)[:, :, None]
    raise TypeError(f"no discrete-state likelihood for {type(emission).__name__}")


def emission_loglik(emission, series: TimeSeries) -> np.ndarray:
    """``log p(v_t | s_t, v_{t-k:t-1})`` with full available context, shape ``(T, S)``."""
    table = context_loglik(emission, series)
    k = table.shape[2] - 1
    ctx = np.minimum(np.arange(series.T), k)
    return table[np.arange(series.T), :, ctx]


def count_context_loglik(emission, series: TimeSeries, d_max: int, cut: bool) -> np.ndarray:
    """Emission indexed by count: ``(T, S, d_max)``.

    With ``cut`` the context at increasing count ``c`` is limited to the
    ``c - 1`` observations of the current regime; otherwise every count sees
    the full context.
    """
    table = context_loglik(emission, series)
    T, S, kp1 = table.shape
    k = kp1 - 1
    t_idx = np.arange(T)[:, None]
    c = np.arange(1, d_max + 1)[None, :]
    ctx = np.minimum(t_idx, k) if not cut else np.minimum(np.minimum(c - 1, k), t_idx)
    ctx = np.broadcast_to(ctx, (T, d_max))
    out = table[t_idx, :, ctx]  # (T, d_max, S)
    return np.ascontiguousarray(np.swapaxes(out, 1, 2))
