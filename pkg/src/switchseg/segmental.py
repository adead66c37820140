"""
Segment-level inference for the two-set (duration + count) switching model.

A segment of regime ``s`` and duration ``d`` ending at (1-based) time ``tau``
covers ``a..tau`` with ``a = tau - d + 1``. Observations inside a segment may
depend on each other arbitrarily (through the segment-likelihood provider);
segments are independent given their regimes.

Tables are indexed by segment end ``tau = 1..T + d_max - 1`` (row ``tau - 1``).
Ends beyond ``T`` are virtual: the segment is cut off by the observation
window and only ``v_a..v_T`` is scored. In ``boundary="relaxed"`` mode the
first segment may likewise have started before ``t = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from switchseg.discrete import ViterbiResult, _log
from switchseg.emissions import context_loglik
from switchseg.errors import ImpossibleDataError
from switchseg.model import SwitchingModel, as_series


class SegmentLikelihood:
    """Default provider: ``log p(v[start:end] | s)`` with context cut at ``start``.

    Indices are 0-based and half-open. Within the segment, step ``j`` uses the
    ``min(j, k)`` preceding observations of the same segment. Results are
    memoized by ``(start, end, s)`` unless ``cache=False``.
    """

    def __init__(self, emission, series, cache: bool = True):
        self.series = as_series(series)
        self.T = self.series.T
        ctx = context_loglik(emission, self.series)
        self.k = ctx.shape[2] - 1
        self._ctx = ctx
        self._cum = np.vstack([np.zeros((1, ctx.shape[1])), np.cumsum(ctx[:, :, self.k], axis=0)])
        self._memo = {} if cache else None

    def __call__(self, start: int, end: int, s: int) -> float:
        key = (start, end, s)
        if self._memo is not None and key in self._memo:
            return self._memo[key]
        head = min(end - start, self.k)
        val = sum(self._ctx[start + j, s, j] for j in range(head))
        val += self._cum[end, s] - self._cum[start + head, s]
        val = float(val)
        if self._memo is not None:
            self._memo[key] = val
        return val

    def table(self, d_max: int) -> np.ndarray:
        """Vectorized ``L[tau - 1, s, d - 1]`` for every segment end (virtual ends included)."""
        T, k = self.T, self.k
        n_tau = T + d_max - 1
        tau = np.arange(1, n_tau + 1)[:, None]
        d = np.arange(1, d_max + 1)[None, :]
        start = np.maximum(tau - d, 0)
        end = np.minimum(tau, T)
        valid = start < end
        start_c = np.where(valid, start, 0)
        end_c = np.where(valid, end, 0)
        length = end_c - start_c
        head = np.minimum(length, k)
        out = self._cum[end_c] - self._cum[start_c + head]  # (n_tau, d_max, S)
        for j in range(k):
            use = (j < head)[..., None]
            t_idx = np.minimum(start_c + j, T - 1)
            out = out + np.where(use, self._ctx[t_idx, :, j], 0.0)
        out = np.where(valid[..., None], out, -np.inf)
        return np.ascontiguousarray(np.swapaxes(out, 1, 2))


def _provider_table(provider, T: int, S: int, d_max: int) -> np.ndarray:
    if isinstance(provider, SegmentLikelihood):
        return provider.table(d_max)
    L = np.full((T + d_max - 1, S, d_max), -np.inf)
    for tau in range(1, T + d_max):
        for d in range(1, d_max + 1):
            start, end = max(tau - d, 0), min(tau, T)
            if start >= end:
                continue
            for s in range(S):
                val = provider(start, end, s)
                if np.isnan(val):
                    raise ValueError(f"segment likelihood is NaN for (start={start}, end={end}, s={s})")
                L[tau - 1, s, d - 1] = val
    return L


@dataclass
class SegmentTables:
    """Forward/backward tables; see the module docstring for the indexing."""

    model: SwitchingModel
    T: int
    seg_loglik: np.ndarray
    log_alpha_sd1: np.ndarray
    log_alpha_hat: np.ndarray
    log_alpha_tilde: np.ndarray
    log_beta_s1: Optional[np.ndarray] = None

    @property
    def d_max(self) -> int:
        return self.log_alpha_sd1.shape[2]

    def final_ends(self) -> range:
        """1-based segment ends that may close the last segment."""
        if self.model.end_boundary == "relaxed":
            return range(self.T, self.T + self.d_max)
        return range(self.T, self.T + 1)

    @property
    def log_likelihood(self) -> float:
        rows = [self.log_alpha_sd1[tau - 1].ravel() for tau in self.final_ends()]
        return float(logsumexp(np.concatenate(rows)))

    @property
    def log_likelihood_end_at_T(self) -> float:
        """Normalizer restricted to a segment closing exactly at ``T``."""
        return float(logsumexp(self.log_alpha_sd1[self.T - 1]))


def _check_composable(model: SwitchingModel, T: int) -> None:
    if model.boundary != "strict" or model.end_boundary != "strict":
        return
    rho = model.duration.regime_pmf(model.S)
    lengths = np.flatnonzero(rho.sum(axis=0) > 0) + 1
    reach = np.zeros(T + 1, bool)
    reach[0] = True
    for t in range(1, T + 1):
        reach[t] = any(reach[t - d] for d in lengths if d <= t)
    if not reach[T]:
        raise ImpossibleDataError(f"no composition of T={T} into admissible durations {lengths.tolist()}")


def _setup(model: SwitchingModel, series=None, provider: Optional[Callable] = None):
    model.require_valid()
    if model.kind != "segmental":
        raise ValueError(f"expected a segmental model, got kind={model.kind!r}")
    if provider is None:
        if series is None:
            raise ValueError("need either a series or a segment-likelihood provider")
        provider = SegmentLikelihood(model.emission, series)
    T = provider.T if series is None else as_series(series).T
    _check_composable(model, T)
    L = _provider_table(provider, T, model.S, model.duration.d_max)
    if np.any(np.isnan(L)):
        tau, s, d = np.argwhere(np.isnan(L))[0]
        raise ValueError(f"segment likelihood is NaN for (start={max(tau + 1 - (d + 1), 0)}, "
                         f"end={min(tau + 1, T)}, s={s})")
    return provider, T, L


def _first_segment_mask(T: int, d_max: int, relaxed: bool):
    """(n_tau, d_max) masks: segment starts at t=1 exactly / before t=1 / after t=1."""
    tau = np.arange(1, T + d_max)[:, None]
    a = tau - np.arange(1, d_max + 1)[None, :] + 1
    at_one = a == 1
    before = (a < 1) if relaxed else np.zeros_like(at_one)
    return a, at_one, before


def seg_forward(model: SwitchingModel, series=None, provider=None, maximize: bool = False) -> SegmentTables:
    """alpha[tau, s, d] = L(a..tau | s) rho_s(d) alpha_tilde[a - 1, s], with ``alpha_tilde`` precomputed.

    One step costs ``O(S (S + d_max))`` beyond the provider lookups.
    ``maximize=True`` replaces sums with maxima (the Viterbi delta tables).
    """
    provider, T, L = _setup(model, series, provider)
    S, d_max = model.S, model.duration.d_max
    n_tau = T + d_max - 1
    log_rho = _log(model.duration.regime_pmf(S))
    log_pi = _log(model.transition.switch)
    log_init = _log(model.transition.initial)
    red = np.max if maximize else logsumexp
    a, at_one, before = _first_segment_mask(T, d_max, model.boundary == "relaxed")
    first = at_one | before

    la = np.full((n_tau, S, d_max), -np.inf)
    ahat = np.full((n_tau, S), -np.inf)
    atil = np.full((n_tau, S), -np.inf)
    for tau in range(1, n_tau + 1):
        row = np.full((S, d_max), -np.inf)
        for di in range(d_max):
            start = a[tau - 1, di]
            if start > T:
                continue
            if first[tau - 1, di]:
                prev = log_init
            elif start >= 2:
                prev = atil[start - 2]
            else:
                continue
            row[:, di] = L[tau - 1, :, di] + log_rho[:, di] + prev
        la[tau - 1] = row
        ahat[tau - 1] = red(row, axis=1)
        atil[tau - 1] = red(log_pi + ahat[tau - 1][None, :], axis=1)
    return SegmentTables(model=model, T=T, seg_loglik=L, log_alpha_sd1=la, log_alpha_hat=ahat, log_alpha_tilde=atil)


def seg_forward_naive(model: SwitchingModel, series=None, provider=None) -> np.ndarray:
    """Double sum over the previous segment's (s', d'); ``O(S^2 d_max^2)`` per step."""
    provider, T, L = _setup(model, series, provider)
    S, d_max = model.S, model.duration.d_max
    n_tau = T + d_max - 1
    rho = model.duration.regime_pmf(S)
    pi = model.transition.switch
    a, at_one, before = _first_segment_mask(T, d_max, model.boundary == "relaxed")
    la = np.full((n_tau, S, d_max), -np.inf)
    for tau in range(1, n_tau + 1):
        for s in range(S):
            for di in range(d_max):
                start = a[tau - 1, di]
                if start > T:
                    continue
                if at_one[tau - 1, di] or before[tau - 1, di]:
                    terms = [_log(model.transition.initial[s])]
                elif start >= 2:
                    terms = [_log(pi[s, sp]) + la[start - 2, sp, dp]
                             for sp in range(S) for dp in range(d_max)]
                else:
                    continue
                la[tau - 1, s, di] = L[tau - 1, s, di] + _log(rho[s, di]) + logsumexp(terms)
    return la


def seg_backward(model: SwitchingModel, series=None, provider=None, tables: Optional[SegmentTables] = None):
    """beta[t, s] = p(v_{t+1:T} | a segment of regime s ends at t), ``beta_T = 1``.

    Returns ``(T, S)`` log table. When ``tables`` is passed its provider
    table is reused and ``tables.log_beta_s1`` is filled in.
    """
    if tables is not None:
        model, T, L = tables.model, tables.T, tables.seg_loglik
    else:
        provider, T, L = _setup(model, series, provider)
    S, d_max = model.S, model.duration.d_max
    log_rho = _log(model.duration.regime_pmf(S))
    log_pi = _log(model.transition.switch)
    tail = 0.0 if model.end_boundary == "relaxed" else -np.inf
    lb = np.zeros((T, S))
    for t in range(T - 1, 0, -1):
        # inner[s', k] = rho_{s'}(k) L(t+1..t+k | s') beta_{t+k}(s')
        inner = np.full((S, d_max), -np.inf)
        for k in range(1, d_max + 1):
            after = lb[t + k - 1] if t + k <= T else np.full(S, tail)
            inner[:, k - 1] = log_rho[:, k - 1] + L[t + k - 1, :, k - 1] + after
        nxt = logsumexp(inner, axis=1)
        lb[t - 1] = logsumexp(log_pi + nxt[:, None], axis=0)
    if tables is not None:
        tables.log_beta_s1 = lb
    return lb


def seg_smooth(model: SwitchingModel, series=None, provider=None) -> SegmentTables:
    tables = seg_forward(model, series, provider)
    seg_backward(model, tables=tables)
    return tables


def _extended_beta(tables: SegmentTables) -> np.ndarray:
    """beta over every segment end, virtual ends included (1 in relaxed mode, 0 in strict)."""
    T, S, d_max = tables.T, tables.model.S, tables.d_max
    tail = 0.0 if tables.model.end_boundary == "relaxed" else -np.inf
    ext = np.full((T + d_max - 1, S), tail)
    ext[:T] = tables.log_beta_s1
    return ext


@dataclass
class SegmentPosteriors:
    state: np.ndarray            # p(s_t | v), (T, S)
    state_count: np.ndarray      # p(s_t, c_t | v), c = steps left in segment, (T, S, d_max)
    state_duration: np.ndarray   # p(s_t, d_t | v), (T, S, d_max)
    log_normalizers: np.ndarray  # per-t normalizer of the sums above


def seg_posteriors(tables: SegmentTables) -> SegmentPosteriors:
    """p(s_t, c_t | v) = sum_{d >= c} alpha[t + c - 1, s, d] beta[t + c - 1, s] / Z."""
    if tables.log_beta_s1 is None:
        raise ValueError("tables lack the backward pass; call seg_backward(tables=...) first")
    if tables.log_beta_s1.shape != (tables.T, tables.model.S):
        raise ValueError("mismatched forward/backward table shapes")
    T, S, d_max = tables.T, tables.model.S, tables.d_max
    beta = _extended_beta(tables)
    joint = tables.log_alpha_sd1 + beta[:, :, None]  # (tau, s, d)
    log_sc = np.full((T, S, d_max), -np.inf)
    log_sd = np.full((T, S, d_max), -np.inf)
    for t in range(1, T + 1):
        for c in range(1, d_max + 1):
            tau = t + c - 1
            # segments covering t with c steps left: d >= c
            log_sc[t - 1, :, c - 1] = logsumexp(joint[tau - 1, :, c - 1:], axis=1)
        for d in range(1, d_max + 1):
            taus = np.arange(t, t + d)  # ends for which a segment of length d covers t
            log_sd[t - 1, :, d - 1] = logsumexp(joint[taus - 1, :, d - 1], axis=0)
    log_z_t = logsumexp(log_sc.reshape(T, -1), axis=1)
    log_z = tables.log_likelihood
    sc = np.exp(log_sc - log_z)
    sd = np.exp(log_sd - log_z)
    return SegmentPosteriors(state=sc.sum(axis=2), state_count=sc, state_duration=sd, log_normalizers=log_z_t)


def seg_posterior_state_piizero(tables: SegmentTables) -> np.ndarray:
    """p(s_t | v) from segment start/end probabilities; requires ``pi_ii = 0``.

    With no self-transitions a regime run is a single segment, so
    ``p(s_t = s) = sum_{a <= t} P(start of s at a) - sum_{tau < t} P(end of s at tau)``.
    Starts come from the aggregated ``alpha_tilde`` table, ends from
    ``alpha_hat * beta``.
    """
    model = tables.model
    if model.S < 2:
        raise ValueError("pi_ii = 0 route needs S >= 2")
    if np.any(np.diag(model.transition.switch) != 0):
        raise ValueError("pi_ii = 0 route called with a nonzero self-transition")
    if tables.log_beta_s1 is None:
        raise ValueError("tables lack the backward pass")
    T, S, d_max = tables.T, model.S, tables.d_max
    log_z = tables.log_likelihood
    beta = _extended_beta(tables)
    log_rho = _log(model.duration.regime_pmf(S))
    L = tables.seg_loglik
    end = np.exp(tables.log_alpha_hat[:T] + tables.log_beta_s1 - log_z)  # segment of s ends at t
    start = np.zeros((T, S))
    # segments already running at t=1 (start at or before 1)
    a, at_one, before = _first_segment_mask(T, d_max, model.boundary == "relaxed")
    first = at_one | before
    w = np.where(first[:, None, :], tables.log_alpha_sd1 + beta[:, :, None], -np.inf)
    start[0] = np.exp(logsumexp(w, axis=(0, 2)) - log_z)
    for t in range(2, T + 1):
        # enter s at t: alpha_tilde[t-1, s] * sum_d rho_d L(t..t+d-1) beta_{t+d-1}
        taus = t + np.arange(d_max) - 1
        inner = log_rho + L[taus, :, np.arange(d_max)].T + beta[taus].T
        start[t - 1] = np.exp(tables.log_alpha_tilde[t - 2] + logsumexp(inner, axis=1) - log_z)
    post = np.cumsum(start, axis=0)
    post[1:] -= np.cumsum(end, axis=0)[:-1]
    return np.clip(post, 0.0, None)


def seg_viterbi(model: SwitchingModel, series=None, provider=None) -> ViterbiResult:
    """Most likely segmentation with per-step regime, duration and count.

    Ties: the longer segment (earlier boundary) wins, then the lower regime.
    """
    tables = seg_forward(model, series, provider, maximize=True)
    T, S, d_max = tables.T, model.S, tables.d_max
    delta = tables.log_alpha_sd1
    log_pi = _log(model.transition.switch)

    def best_d(row):  # row over d; ties -> largest d
        return d_max - 1 - int(np.argmax(row[::-1]))

    # final segment
    best = (-np.inf, None)
    for tau in tables.final_ends():
        for s in range(S):
            di = best_d(delta[tau - 1, s])
            val = delta[tau - 1, s, di]
            cur = best[1]
            if val > best[0] or (val == best[0] and cur is not None and (di > cur[2] or (di == cur[2] and s < cur[1]))):
                best = (val, (tau, s, di))
    log_joint, cell = best
    if cell is None or not np.isfinite(log_joint):
        raise ImpossibleDataError("observations have zero probability under the model")
    path = np.empty(T, dtype=np.int64)
    durs = np.empty(T, dtype=np.int64)
    counts = np.empty(T, dtype=np.int64)
    tau, s, di = cell
    while True:
        d = di + 1
        a = tau - d + 1
        for t in range(max(a, 1), min(tau, T) + 1):
            path[t - 1], durs[t - 1], counts[t - 1] = s, d, tau - t + 1
        if a <= 1:
            break
        prev = a - 1
        sp = int(np.argmax(log_pi[s] + tables.log_alpha_hat[prev - 1]))
        tau, s, di = prev, sp, best_d(delta[prev - 1, sp])
    return ViterbiResult(path=path, log_joint=float(log_joint), durations=durs, counts=counts)


@dataclass
class SampledPath:
    regimes: np.ndarray
    durations: np.ndarray
    counts: np.ndarray
    segments: tuple  # ((start, end, s), ...) 0-based half-open, clipped to the window


def seg_sample_path(tables: SegmentTables, rng_seed=None) -> SampledPath:
    """Draw one segmentation from the posterior by backward sampling on alpha.

    ``rng_seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    model = tables.model
    T, S, d_max = tables.T, model.S, tables.d_max
    la = tables.log_alpha_sd1
    log_pi = _log(model.transition.switch)

    def draw(logw):
        logw = np.asarray(logw, float).ravel()
        p = np.exp(logw - logsumexp(logw))
        return int(rng.choice(p.size, p=p / p.sum()))

    ends = list(tables.final_ends())
    idx = draw(np.stack([la[tau - 1] for tau in ends]))
    ti, rest = divmod(idx, S * d_max)
    s, di = divmod(rest, d_max)
    tau = ends[ti]
    regimes = np.empty(T, dtype=np.int64)
    durs = np.empty(T, dtype=np.int64)
    counts = np.empty(T, dtype=np.int64)
    segs = []
    while True:
        d = di + 1
        a = tau - d + 1
        for t in range(max(a, 1), min(tau, T) + 1):
            regimes[t - 1], durs[t - 1], counts[t - 1] = s, d, tau - t + 1
        segs.append((max(a, 1) - 1, min(tau, T), s))
        if a <= 1:
            break
        tau = a - 1
        idx = draw(log_pi[s][:, None] + la[tau - 1])
        s, di = divmod(idx, d_max)
    return SampledPath(regimes=regimes, durations=durs, counts=counts, segments=tuple(reversed(segs)))
