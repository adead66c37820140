"""
Brute-force reference implementations.

Everything here is intentionally slow and self-contained: joint densities
are evaluated path by path with plain Python arithmetic, so results do not
share code with the recursions they are used to check.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from switchseg.errors import EnumerationGuardError, MixtureCapError
from switchseg.model import (AutoregressiveEmission, GaussianMixtureEmission, SwitchingModel, as_series)

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_GUARD = 10 ** 7


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _logsumexp(values) -> float:
    values = list(values)
    m = max(values, default=-math.inf)
    if m == -math.inf:
        return m
    return m + math.log(sum(math.exp(v - m) for v in values))


def _mvn_logpdf(x, mean, cov) -> float:
    """Gaussian log density via a hand-rolled Cholesky (lists only)."""
    n = len(x)
    L = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            acc = cov[i][j] - sum(L[i][k] * L[j][k] for k in range(j))
            if i == j:
                L[i][i] = math.sqrt(acc)
            else:
                L[i][j] = acc / L[j][j]
    diff = [x[i] - mean[i] for i in range(n)]
    z = []
    for i in range(n):
        z.append((diff[i] - sum(L[i][k] * z[k] for k in range(i))) / L[i][i])
    logdet = 2.0 * sum(math.log(L[i][i]) for i in range(n))
    return -0.5 * (n * LOG_2PI + logdet + sum(zi * zi for zi in z))


class _Emission:
    """Per-step observation log density with an explicit context length."""

    def __init__(self, emission, data):
        self.em = emission
        self.v = [list(map(float, row)) for row in np.asarray(data)]
        self.T = len(self.v)

    @property
    def k(self) -> int:
        return self.em.order

    def ar(self, t: int, s: int, ctx: int) -> float:
        em = self.em
        if em.initial_law == "ignore" and t < em.order:
            return 0.0
        ctx = min(ctx, t, em.order)
        pred = float(em.intercepts[s])
        for i in range(ctx):
            pred += float(em.coefficients[s, i]) * self.v[t - 1 - i][0]
        var = float(em.noise_variance[s])
        r = self.v[t][0] - pred
        return -0.5 * (LOG_2PI + math.log(var) + r * r / var)

    def component(self, t: int, s: int, m: int) -> float:
        em = self.em
        return _mvn_logpdf(self.v[t], em.means[s, m].tolist(), em.covs[s, m].tolist())

    def regime(self, t: int, s: int, ctx: Optional[int] = None) -> float:
        if isinstance(self.em, AutoregressiveEmission):
            return self.ar(t, s, self.k if ctx is None else ctx)
        if isinstance(self.em, GaussianMixtureEmission):
            return _logsumexp(_log(float(self.em.weights[s, m])) + self.component(t, s, m)
                              for m in range(self.em.M))
        raise TypeError(type(self.em).__name__)


@dataclass
class EnumerationReport:
    """Exact posterior summaries from summing the joint over every path.

    ``marginals`` maps a hidden-space label (``"s"``, ``"s,m"``, ``"s,c"``,
    ``"s,d"``) to a ``(T, ...)`` array. ``path_log_joint`` maps each hidden
    label path (tuple of per-t tuples) to its log joint with the data.
    """

    hidden_space: str
    log_normalizer: float
    log_normalizer_fsum: float
    marginals: dict
    argmax_path: tuple
    argmax_log_joint: float
    ties: list
    path_log_joint: dict = field(repr=False, default_factory=dict)
    segmentations: dict = field(repr=False, default_factory=dict)
    n_paths: int = 0

    def compare(self, name: str, candidate) -> float:
        """Max absolute deviation of ``candidate`` from the exact marginal ``name``."""
        return float(np.max(np.abs(np.asarray(candidate) - self.marginals[name])))


def _hidden_space(model: SwitchingModel) -> str:
    return {"hmm": "s", "dc": "s,c", "ic": "s,c", "segmental": "s,d,c"}[model.kind]


def _guard_step(count, guard):
    if count > guard:
        raise EnumerationGuardError(f"enumeration exceeded {guard} hidden paths")


def _hmm_paths(model, obs, hidden_space, guard):
    S, T = model.S, obs.T
    init = [float(x) for x in model.transition.initial]
    pi = model.transition.switch.tolist()
    em = model.emission
    if hidden_space == "s":
        if S ** T > guard:
            raise EnumerationGuardError(f"S^T={S ** T} exceeds guard {guard}")
        e = [[obs.regime(t, s) for s in range(S)] for t in range(T)]
        for path in itertools.product(range(S), repeat=T):
            lj = _log(init[path[0]]) + e[0][path[0]]
            for t in range(1, T):
                lj += _log(pi[path[t]][path[t - 1]]) + e[t][path[t]]
            yield tuple((s,) for s in path), lj, None
        return
    # (s, m) paths, independent or chained indicators
    M = em.M
    if (S * M) ** T > guard:
        raise EnumerationGuardError(f"(SM)^T={(S * M) ** T} exceeds guard {guard}")
    comp = [[[obs.component(t, s, m) for m in range(M)] for s in range(S)] for t in range(T)]
    w = em.weights.tolist()
    W = None if hidden_space == "s,m" else em.mixture_transition.tolist()
    for path in itertools.product(itertools.product(range(S), range(M)), repeat=T):
        s0, m0 = path[0]
        lj = _log(init[s0]) + _log(w[s0][m0]) + comp[0][s0][m0]
        for t in range(1, T):
            (sp, mp), (s, m) = path[t - 1], path[t]
            lm = _log(w[s][m]) if W is None else _log(W[s][m][mp])
            lj += _log(pi[s][sp]) + lm + comp[t][s][m]
        yield tuple(path), lj, None


def _segment_paths(model, obs, guard):
    """Yield every segmentation as a list of (regime, duration, offset, start, end)."""
    S, T = model.S, obs.T
    rho = model.duration.regime_pmf(S).tolist()
    d_max = model.duration.d_max
    relaxed_start = model.boundary == "relaxed"
    # dc / ic keep beta_T = 1, so a final segment may always overrun T
    relaxed_end = model.kind != "segmental" or model.end_boundary == "relaxed"
    count = [0]

    def rec(start, prev, acc):
        if start == T:
            count[0] += 1
            _guard_step(count[0], guard)
            yield list(acc)
            return
        for s in range(S):
            for d in range(1, d_max + 1):
                if rho[s][d - 1] <= 0:
                    continue
                offsets = range(d) if (start == 0 and relaxed_start) else (0,)
                for o in offsets:
                    end = start + d - o
                    if end > T and not relaxed_end:
                        continue
                    acc.append((s, d, o, start, min(end, T), prev))
                    yield from rec(min(end, T), s, acc)
                    acc.pop()

    yield from rec(0, None, [])


def _duration_paths(model, obs, guard):
    S = model.S
    init = [float(x) for x in model.transition.initial]
    pi = model.transition.switch.tolist()
    rho = model.duration.regime_pmf(S).tolist()
    cut = model.kind == "segmental" or (model.kind == "ic" and model.cut)
    for segs in _segment_paths(model, obs, guard):
        lj = 0.0
        labels = []
        seg_key = []
        for s, d, o, start, end, prev in segs:
            lj += _log(rho[s][d - 1]) + (_log(init[s]) if prev is None else _log(pi[s][prev]))
            for t in range(start, end):
                pos = o + (t - start)  # steps already spent in the regime before t
                ctx = (t - start) if cut else obs.k
                lj += obs.regime(t, s, ctx)
                if model.kind == "dc":
                    labels.append((s, d - pos))
                elif model.kind == "ic":
                    labels.append((s, pos + 1))
                else:
                    labels.append((s, d, d - pos))
            seg_key.append((start, end, s))
        yield tuple(labels), lj, tuple(seg_key)


def enumerate_discrete(model: SwitchingModel, series, hidden_space: Optional[str] = None,
                       order_k: Optional[int] = None, guard: int = DEFAULT_GUARD) -> EnumerationReport:
    """Exact marginals, normalizer and argmax by summing the joint over all hidden paths.

    ``hidden_space`` is ``"s"`` (plain switching), ``"s,m"`` / ``"s,m,chained"``
    (mixture indicators), ``"s,c"`` (dc / ic count chains) or ``"s,d,c"``
    (segmental). Paths that differ only in unobservable detail (the offset and
    total duration of a regime already running at t=1, or the duration of a
    regime cut off at T) are merged, matching the label space of each model.
    """
    obs = _Emission(model.emission, as_series(series).data)
    if order_k is not None and order_k != model.emission.order:
        raise ValueError("order_k does not match the emission order")
    hidden_space = hidden_space or _hidden_space(model)
    T, S = obs.T, model.S

    if model.kind == "hmm":
        gen = _hmm_paths(model, obs, hidden_space, guard)
    else:
        gen = _duration_paths(model, obs, guard)

    by_label: dict = {}
    by_segmentation: dict = {}
    n_paths = 0
    for labels, lj, seg_key in gen:
        n_paths += 1
        if lj == -math.inf:
            continue
        by_label.setdefault(labels, []).append(lj)
        if seg_key is not None:
            by_segmentation.setdefault(seg_key, []).append(lj)
    path_lj = {lab: _logsumexp(v) for lab, v in by_label.items()}
    if not path_lj:
        raise ValueError("every hidden path has zero probability")
    log_z = _logsumexp(path_lj.values())
    # second evaluation: shifted exponentials summed with math.fsum in sorted order
    ref = max(path_lj.values())
    log_z_fsum = ref + math.log(math.fsum(sorted(math.exp(v - ref) for v in path_lj.values())))

    d_max = model.duration.d_max if model.duration is not None else 1
    marg_s = np.zeros((T, S))
    marg_c = np.zeros((T, S, d_max))
    marg_d = np.zeros((T, S, d_max))
    M = getattr(model.emission, "M", 1)
    marg_m = np.zeros((T, S, M))
    for lab, lj in path_lj.items():
        p = math.exp(lj - log_z)
        for t, cell in enumerate(lab):
            marg_s[t, cell[0]] += p
            if hidden_space.startswith("s,m"):
                marg_m[t, cell[0], cell[1]] += p
            elif hidden_space == "s,c":
                marg_c[t, cell[0], cell[1] - 1] += p
            elif hidden_space == "s,d,c":
                marg_d[t, cell[0], cell[1] - 1] += p
                marg_c[t, cell[0], cell[2] - 1] += p
    marginals = {"s": marg_s}
    if hidden_space.startswith("s,m"):
        marginals["s,m"] = marg_m
    if hidden_space in ("s,c", "s,d,c"):
        marginals["s,c"] = marg_c
    if hidden_space == "s,d,c":
        marginals["s,d"] = marg_d

    best = max(path_lj.values())
    ties = sorted(lab for lab, v in path_lj.items() if v >= best - 1e-12 * max(1.0, abs(best)))
    segs = {k: math.exp(_logsumexp(v) - log_z) for k, v in by_segmentation.items()}
    return EnumerationReport(hidden_space=hidden_space, log_normalizer=log_z, log_normalizer_fsum=log_z_fsum,
                             marginals=marginals, argmax_path=ties[0], argmax_log_joint=best, ties=ties,
                             path_log_joint=path_lj, segmentations=segs, n_paths=n_paths)


# ---------------------------------------------------------------------------
# switching linear Gaussian state-space models


def _slgssm_configs(model):
    S = model.S
    if model.variant == "plain":
        return [(s,) for s in range(S)]
    if model.variant == "changepoint":
        return [(s, c) for s in range(S) for c in (1, 2)]
    return [(s, c) for s in range(S) for c in range(1, model.duration.d_max + 1)]


def _rho(model, s, d):
    full = model.duration.regime_pmf(model.S)
    return float(full[s, d - 1]) if 1 <= d <= full.shape[1] else 0.0


def _surv(model, s, c):
    return sum(_rho(model, s, d) for d in range(c, model.duration.d_max + 1))


def _slgssm_init(model, cfg) -> float:
    s = cfg[0]
    p = float(model.transition.initial[s])
    var = model.variant
    if var == "plain":
        return p
    if var == "changepoint":
        return p if cfg[1] == 1 else 0.0
    c = cfg[1]
    if model.boundary == "relaxed":
        return p * _surv(model, s, c)
    if var == "ic_reset":
        return p if c == 1 else 0.0
    return p * _rho(model, s, c)


def _slgssm_trans(model, prev, cfg):
    """(probability, restart flag) for ``sigma_{t-1} = prev -> sigma_t = cfg``."""
    pi = model.transition.switch
    var = model.variant
    s, sp = cfg[0], prev[0]
    if var == "plain":
        return float(pi[s, sp]), False
    c, cp = cfg[1], prev[1]
    if var == "changepoint":
        if c == 1:
            return (float(pi[s, sp]), True) if s != sp else (0.0, True)
        return (float(pi[s, s]), False) if s == sp else (0.0, False)
    if var in ("dc", "dc_reset"):
        if cp > 1:
            return (1.0 if (s == sp and c == cp - 1) else 0.0), False
        return float(pi[s, sp]) * _rho(model, s, c), var == "dc_reset"
    # ic_reset: hazard lambda_c = 1 - rho_c / sum_{i >= c} rho_i
    sv = _surv(model, sp, cp)
    lam = 0.0 if (sv <= 0 or cp == model.duration.d_max) else 1.0 - _rho(model, sp, cp) / sv
    if c == 1:
        return float(pi[s, sp]) * (1.0 - lam), True
    return (lam if (s == sp and c == cp + 1) else 0.0), False


def _kf_correct(mean, cov, B, R, v):
    """Textbook (non-Joseph) Kalman correction."""
    Sx = B @ cov @ B.T + R
    K = cov @ B.T @ np.linalg.inv(Sx)
    r = v - B @ mean
    ll = -0.5 * (len(v) * LOG_2PI + np.linalg.slogdet(Sx)[1] + r @ np.linalg.solve(Sx, r))
    return mean + K @ r, cov - K @ B @ cov, float(ll)


def _kf_step(mean, cov, em, s, v, restart):
    if restart:
        m, P = em.mu[s], em.Sigma[s]
    else:
        m, P = em.A[s] @ mean, em.A[s] @ cov @ em.A[s].T + em.Q[s]
    return _kf_correct(m, P, em.B[s], em.R[s], v)


def _moments(weights, means, covs):
    w = np.asarray(weights, float)
    w = w / w.sum()
    mean = np.einsum("k,ki->i", w, np.asarray(means))
    d = np.asarray(means) - mean
    cov = np.einsum("k,kij->ij", w, np.asarray(covs)) + np.einsum("k,ki,kj->ij", w, d, d)
    return mean, cov


@dataclass
class ExactMixture:
    """Exact filtered mixtures per t, plus grouped views used for comparisons.

    ``components[t]`` holds ``(config, restart_time, weight, mean, cov)`` with
    weights summing to one over all components at ``t``.
    """

    configs: list
    components: list
    log_likelihood: float
    smoothed_weights: Optional[np.ndarray] = None
    smoothed_means: Optional[np.ndarray] = None
    smoothed_covs: Optional[np.ndarray] = None

    def config_moments(self, t: int):
        """``(weights, means, covs)`` per configuration, mixtures collapsed to two moments."""
        n = len(self.configs)
        H = self.components[t][0][3].shape[0]
        w, m, C = np.zeros(n), np.zeros((n, H)), np.zeros((n, H, H))
        for j, cfg in enumerate(self.configs):
            mine = [c for c in self.components[t] if c[0] == cfg]
            if mine:
                w[j] = sum(c[2] for c in mine)
                if w[j] > 0:
                    m[j], C[j] = _moments([c[2] for c in mine], [c[3] for c in mine], [c[4] for c in mine])
        return w, m, C

    def keyed(self, t: int) -> dict:
        """Components merged by (config, restart time): key -> (weight, mean, cov, spread).

        ``spread`` is the largest mean deviation among merged paths; it is zero
        whenever the key determines the Gaussian (restart models).
        """
        groups = {}
        for cfg, tau, w, m, P in self.components[t]:
            groups.setdefault((cfg, tau), []).append((w, m, P))
        out = {}
        for key, items in groups.items():
            ws = [i[0] for i in items]
            mean, cov = _moments(ws, [i[1] for i in items], [i[2] for i in items]) if sum(ws) > 0 else (
                items[0][1], items[0][2])
            spread = max(float(np.max(np.abs(i[1] - items[0][1]))) for i in items)
            out[key] = (sum(ws), mean, cov, spread)
        return out

    def distinct_gaussians(self, t: int) -> int:
        """Number of distinct (regime, last restart) pairs carrying weight at ``t``."""
        return len({(cfg[0], tau) for cfg, tau, w, _, _ in self.components[t] if w > 0})


def exact_mixture_filter(model: SwitchingModel, series, guard: int = 10 ** 5, smooth: bool = False) -> ExactMixture:
    """Propagate every discrete path with its own Kalman filter; optionally smooth each path.

    With ``smooth=True`` each complete path also gets a fixed-interval
    smoother (restarts cut the backward pass), and per-configuration smoothed
    weights and moments are returned.
    """
    em = model.emission
    data = np.asarray(as_series(series).data, float)
    T = data.shape[0]
    configs = _slgssm_configs(model)
    ic = model.variant == "ic_reset"
    # path: (history of configs, restart flags, log weight, filtered means, covs, last restart)
    paths = []
    for cfg in configs:
        p0 = _slgssm_init(model, cfg)
        if p0 <= 0:
            continue
        m, P, ll = _kf_correct(em.mu[cfg[0]], em.Sigma[cfg[0]], em.B[cfg[0]], em.R[cfg[0]], data[0])
        tau = (2 - cfg[1]) if ic else 1
        paths.append(([cfg], [True], math.log(p0) + ll, [m], [P], tau))
    comps, log_z = [], 0.0

    def snapshot():
        lz = _logsumexp(p[2] for p in paths)
        comps.append([(p[0][-1], p[5], math.exp(p[2] - lz), p[3][-1], p[4][-1]) for p in paths])
        return lz

    log_z = snapshot()
    for t in range(1, T):
        nxt = []
        for hist, flags, lw, ms, Ps, tau in paths:
            for cfg in configs:
                pr, restart = _slgssm_trans(model, hist[-1], cfg)
                if pr <= 0:
                    continue
                m, P, ll = _kf_step(ms[-1], Ps[-1], em, cfg[0], data[t], restart)
                nxt.append((hist + [cfg], flags + [restart], lw + math.log(pr) + ll, ms + [m], Ps + [P],
                            t + 1 if restart else tau))
                if len(nxt) > guard:
                    raise MixtureCapError(f"exact mixture exceeded guard of {guard} branches")
        paths = nxt
        log_z = snapshot()
    result = ExactMixture(configs=configs, components=comps, log_likelihood=log_z)
    if smooth:
        n, H = len(configs), em.H
        W = np.zeros((T, n))
        acc = [[[] for _ in range(n)] for _ in range(T)]
        lz = _logsumexp(p[2] for p in paths)
        for hist, flags, lw, ms, Ps, tau in paths:
            w = math.exp(lw - lz)
            sm, sP = [None] * T, [None] * T
            sm[-1], sP[-1] = ms[-1], Ps[-1]
            for t in range(T - 2, -1, -1):
                if flags[t + 1]:
                    sm[t], sP[t] = ms[t], Ps[t]
                    continue
                A, Q = em.A[hist[t + 1][0]], em.Q[hist[t + 1][0]]
                Pp = A @ Ps[t] @ A.T + Q
                J = Ps[t] @ A.T @ np.linalg.inv(Pp)
                sm[t] = ms[t] + J @ (sm[t + 1] - A @ ms[t])
                sP[t] = Ps[t] + J @ (sP[t + 1] - Pp) @ J.T
            for t in range(T):
                j = configs.index(hist[t])
                W[t, j] += w
                acc[t][j].append((w, sm[t], sP[t]))
        M = np.zeros((T, n, H))
        C = np.zeros((T, n, H, H))
        for t in range(T):
            for j in range(n):
                if acc[t][j]:
                    M[t, j], C[t, j] = _moments(*zip(*acc[t][j]))
        result.smoothed_weights, result.smoothed_means, result.smoothed_covs = W, M, C
    return result


def collapsed_filter_reference(model: SwitchingModel, series):
    """Branch every configuration into every successor, then collapse per successor.

    Returns ``(weights (T, n), means (T, n, H), covs (T, n, H, H))``.
    """
    em = model.emission
    data = np.asarray(as_series(series).data, float)
    T, H = data.shape[0], em.H
    configs = _slgssm_configs(model)
    n = len(configs)
    W, M, C = np.zeros((T, n)), np.zeros((T, n, H)), np.zeros((T, n, H, H))
    lw = np.full(n, -math.inf)
    for j, cfg in enumerate(configs):
        p0 = _slgssm_init(model, cfg)
        M[0, j], C[0, j], ll = _kf_correct(em.mu[cfg[0]], em.Sigma[cfg[0]], em.B[cfg[0]], em.R[cfg[0]], data[0])
        lw[j] = _log(p0) + ll
    W[0] = np.exp(lw - _logsumexp(lw))
    for t in range(1, T):
        lw = np.full(n, -math.inf)
        for j, cfg in enumerate(configs):
            branches = []
            for i, prev in enumerate(configs):
                pr, restart = _slgssm_trans(model, prev, cfg)
                if pr <= 0 or W[t - 1, i] <= 0:
                    continue
                m, P, ll = _kf_step(M[t - 1, i], C[t - 1, i], em, cfg[0], data[t], restart)
                branches.append((math.log(W[t - 1, i]) + math.log(pr) + ll, m, P))
            if branches:
                lw[j] = _logsumexp(b[0] for b in branches)
                ws = [math.exp(b[0] - lw[j]) for b in branches]
                M[t, j], C[t, j] = _moments(ws, [b[1] for b in branches], [b[2] for b in branches])
        W[t] = np.exp(lw - _logsumexp(lw))
    return W, M, C


def collapsed_smoother_reference(model: SwitchingModel, series, filtered=None):
    """Backward pass matching the collapsed smoother's two approximations, written independently.

    ``filtered`` is ``(W, M, C)`` from :func:`collapsed_filter_reference`
    (computed when omitted). For each successor configuration ``j`` the
    smoothed ``h_{t+1}`` law is shared by all predecessors, and
    ``p(sigma_t = i | sigma_{t+1} = j, v_{1:T})`` is proportional to the
    filtered weight times the transition times the predicted density at the
    smoothed mean (restarting transitions drop that density). Gains use the
    textbook form ``J = P A' (A P A' + Q)^{-1}``.
    """
    em = model.emission
    Wf, Mf, Cf = filtered if filtered is not None else collapsed_filter_reference(model, series)
    T, n = Wf.shape
    configs = _slgssm_configs(model)
    W, M, C = Wf.copy(), Mf.copy(), Cf.copy()
    for t in range(T - 2, -1, -1):
        parts = [[] for _ in range(n)]
        for j, cfg in enumerate(configs):
            if W[t + 1, j] <= 0:
                continue
            s = cfg[0]
            A, Q = em.A[s], em.Q[s]
            cand = []
            for i, prev in enumerate(configs):
                pr, restart = _slgssm_trans(model, prev, cfg)
                if pr <= 0 or Wf[t, i] <= 0:
                    continue
                if restart:
                    cand.append((i, Wf[t, i] * pr, Mf[t, i], Cf[t, i]))
                    continue
                mp = A @ Mf[t, i]
                Pp = A @ Cf[t, i] @ A.T + Q
                dens = math.exp(_mvn_logpdf(M[t + 1, j].tolist(), mp.tolist(), Pp.tolist()))
                J = Cf[t, i] @ A.T @ np.linalg.inv(Pp)
                m = Mf[t, i] + J @ (M[t + 1, j] - mp)
                P = Cf[t, i] + J @ (C[t + 1, j] - Pp) @ J.T
                cand.append((i, Wf[t, i] * pr * dens, m, P))
            tot = math.fsum(c[1] for c in cand)
            for i, sc, m, P in cand:
                parts[i].append((W[t + 1, j] * sc / tot, m, P))
        for i in range(n):
            ws = [p[0] for p in parts[i]]
            W[t, i] = math.fsum(ws)
            if W[t, i] > 0:
                M[t, i], C[t, i] = _moments(ws, [p[1] for p in parts[i]], [p[2] for p in parts[i]])
        W[t] /= W[t].sum()
    return W, M, C
