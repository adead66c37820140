"""Randomized oracle comparisons shared by module tests and the acceptance suite.

Each ``check_*`` draws one random instance and returns the largest deviation
from brute-force enumeration (marginals and log normalizer) and whether the
decoded path is one of the enumeration's maximizers.
"""
import numpy as np

from conftest import rand_ar, rand_duration, rand_gmm, rand_transition
from switchseg import discrete, duration, segmental
from switchseg.model import SwitchingModel
from switchseg.oracle import enumerate_discrete


def _result(dev, vit_dev, path_ok):
    return {"dev": float(dev), "viterbi_dev": float(vit_dev), "argmax_ok": bool(path_ok)}


def check_hmm(rng, k):
    S = int(rng.integers(1, 4))
    T = int(rng.integers(k + 1, 9))
    m = SwitchingModel("hmm", rand_transition(rng, S), rand_ar(rng, S, k))
    v = rng.normal(size=T)
    r = enumerate_discrete(m, v)
    par = discrete.smooth_parallel(m, v)
    seq = discrete.smooth_sequential(m, v)
    vt = discrete.viterbi(m, v)
    dev = max(r.compare("s", par.gamma), r.compare("s", seq.gamma), abs(par.log_likelihood - r.log_normalizer),
              abs(seq.log_likelihood - r.log_normalizer))
    return _result(dev, abs(vt.log_joint - r.argmax_log_joint), tuple((int(s),) for s in vt.path) in r.ties)


def check_gmm(rng, chained=False):
    S = int(rng.integers(1, 4))
    M = int(rng.integers(1, 3))
    D = int(rng.integers(1, 3))
    T_max = {1: 8, 2: 7, 3: 6, 4: 5, 6: 5}[S * M]
    T = int(rng.integers(2, T_max + 1))
    m = SwitchingModel("hmm", rand_transition(rng, S), rand_gmm(rng, S, M, D, chained=chained))
    v = rng.normal(0, 1.5, size=(T, D))
    r = enumerate_discrete(m, v, hidden_space="s,m,chained" if chained else "s,m")
    post = discrete.smooth_gmm_chained(m, v) if chained else discrete.smooth_gmm(m, v)
    dev = max(r.compare("s", post.gamma), r.compare("s,m", post.gamma_joint),
              abs(post.log_likelihood - r.log_normalizer))
    vt = discrete.viterbi_gmm(m, v)
    ok = tuple(zip(vt.path.tolist(), vt.components.tolist())) in r.ties
    vit_dev = abs(vt.log_joint - r.argmax_log_joint)
    if not chained:
        # regime-only decoding with the mixture summed out
        rs = enumerate_discrete(m, v, hidden_space="s")
        vs = discrete.viterbi(m, v)
        ok = ok and tuple((int(s),) for s in vs.path) in rs.ties
        vit_dev = max(vit_dev, abs(vs.log_joint - rs.argmax_log_joint))
    return _result(dev, vit_dev, ok)


def _duration_sizes(rng):
    S = int(rng.integers(1, 4))
    d_max = int(rng.integers(1, 5))
    d_min = int(rng.integers(1, d_max + 1))
    T_max = 8 if S < 3 or d_max < 3 else 6
    return S, d_min, d_max, int(rng.integers(1, T_max + 1))


def check_dc(rng):
    S, d_min, d_max, T = _duration_sizes(rng)
    boundary = str(rng.choice(["relaxed", "strict"]))
    if boundary == "strict":
        d_min = min(d_min, T)
    k = int(rng.integers(0, 3))
    m = SwitchingModel("dc", rand_transition(rng, S), rand_ar(rng, S, k), rand_duration(rng, d_min, d_max),
                       boundary=boundary)
    v = rng.normal(size=T)
    r = enumerate_discrete(m, v)
    tab = duration.dc_smooth(m, v)
    vt = duration.dc_viterbi(m, v)
    dev = max(r.compare("s,c", tab.gamma_sc), r.compare("s", tab.gamma_s), abs(tab.log_likelihood - r.log_normalizer))
    ok = tuple(zip(vt.path.tolist(), vt.counts.tolist())) in r.ties
    return _result(dev, abs(vt.log_joint - r.argmax_log_joint), ok)


def check_ic(rng, cut):
    S, d_min, d_max, T = _duration_sizes(rng)
    boundary = str(rng.choice(["relaxed", "strict"]))
    if boundary == "strict":
        d_min = min(d_min, T)
    k = int(rng.integers(0, 3))
    m = SwitchingModel("ic", rand_transition(rng, S), rand_ar(rng, S, k), rand_duration(rng, d_min, d_max),
                       boundary=boundary, cut=cut)
    v = rng.normal(size=T)
    r = enumerate_discrete(m, v)
    tab = duration.ic_smooth(m, v)
    vt = duration.ic_viterbi(m, v)
    dev = max(r.compare("s,c", tab.gamma_sc), r.compare("s", tab.gamma_s), abs(tab.log_likelihood - r.log_normalizer))
    ok = tuple(zip(vt.path.tolist(), vt.counts.tolist())) in r.ties
    return _result(dev, abs(vt.log_joint - r.argmax_log_joint), ok)


def check_segmental(rng):
    S, d_min, d_max, T = _duration_sizes(rng)
    b, e = (str(x) for x in rng.choice(["relaxed", "strict"], size=2))
    no_self = S > 1 and rng.random() < 0.3
    if b == "strict" and e == "strict":
        d_min = 1
    k = int(rng.integers(0, 3))
    m = SwitchingModel("segmental", rand_transition(rng, S, no_self=no_self), rand_ar(rng, S, k),
                       rand_duration(rng, d_min, d_max), boundary=b, end_boundary=e)
    v = rng.normal(size=T)
    r = enumerate_discrete(m, v)
    tab = segmental.seg_smooth(m, v)
    post = segmental.seg_posteriors(tab)
    dev = max(r.compare("s", post.state), r.compare("s,c", post.state_count), r.compare("s,d", post.state_duration),
              abs(tab.log_likelihood - r.log_normalizer))
    if no_self:
        dev = max(dev, float(np.abs(segmental.seg_posterior_state_piizero(tab) - r.marginals["s"]).max()))
    vt = segmental.seg_viterbi(m, v)
    ok = tuple(zip(vt.path.tolist(), vt.durations.tolist(), vt.counts.tolist())) in r.ties
    return _result(dev, abs(vt.log_joint - r.argmax_log_joint), ok)


FAMILIES = {
    "hmm_k0": lambda rng: check_hmm(rng, 0),
    "hmm_k1": lambda rng: check_hmm(rng, 1),
    "hmm_k2": lambda rng: check_hmm(rng, 2),
    "gmm": lambda rng: check_gmm(rng),
    "gmm_chained": lambda rng: check_gmm(rng, chained=True),
    "dc": check_dc,
    "ic": lambda rng: check_ic(rng, False),
    "ic_cut": lambda rng: check_ic(rng, True),
    "segmental": check_segmental,
}


# -- switching linear Gaussian state-space -----------------------------------------

def _masked_max(diff, weights, thresh=1e-12):
    mask = weights > thresh
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(diff)[mask]))


def check_slgssm_exact(rng, variant):
    """Exact modes vs full path enumeration: per-(config, restart) components and conditionals."""
    from conftest import rand_slgssm
    from switchseg.oracle import exact_mixture_filter
    from switchseg.slgssm import filter_model, slgssm_smooth
    H = int(rng.integers(1, 3))
    T = int(rng.integers(2, 6))
    d_max = int(rng.integers(1, 4))
    m = rand_slgssm(rng, variant, H=H, D=int(rng.integers(1, 3)), d_max=d_max,
                    boundary=str(rng.choice(["relaxed", "strict"])) if variant == "ic_reset" else "relaxed")
    v = rng.normal(size=(T, m.emission.D))
    ex = exact_mixture_filter(m, v, smooth=variant == "ic_reset")
    f = filter_model(m, v, mode="exact")
    dev = abs(f.log_likelihood - ex.log_likelihood)
    for t in range(T):
        w, mm, cc = ex.config_moments(t)
        dev = max(dev, float(np.abs(w - f.weights[t]).max()), _masked_max(mm - f.means[t], w),
                  _masked_max(cc - f.covs[t], w))
        if f.components is not None:
            keyed = ex.keyed(t)
            mine = {}
            for j, tau, lw, mean, cov in f.components[t]:
                mine[(f.configs[j], tau)] = (np.exp(lw), mean, cov)
            nz = {k: val for k, val in keyed.items() if val[0] > 1e-300}
            if set(nz) != {k for k, val in mine.items() if val[0] > 1e-300}:
                return {"dev": float("inf")}
            for k, (w0, m0, c0, _) in nz.items():
                w1, m1, c1 = mine[k]
                dev = max(dev, abs(w0 - w1), float(np.abs(m0 - m1).max()), float(np.abs(c0 - c1).max()))
    if variant == "ic_reset":
        sm = slgssm_smooth(f)
        dev = max(dev, float(np.abs(sm.weights - ex.smoothed_weights).max()),
                  _masked_max(sm.means - ex.smoothed_means, ex.smoothed_weights))
    return {"dev": float(dev)}


def check_slgssm_collapsed(rng, variant):
    """Collapsed filter/smoother vs independent references; exact agreement at the second step."""
    from conftest import rand_slgssm
    from switchseg.oracle import collapsed_filter_reference, collapsed_smoother_reference, exact_mixture_filter
    from switchseg.slgssm import filter_model, slgssm_smooth
    H = int(rng.integers(1, 3))
    T = int(rng.integers(2, 6))
    m = rand_slgssm(rng, variant, H=H, D=int(rng.integers(1, 3)), d_max=int(rng.integers(1, 4)))
    v = rng.normal(size=(T, m.emission.D))
    f = filter_model(m, v, mode="collapsed")
    W, M, C = collapsed_filter_reference(m, v)
    moment_dev = max(_masked_max(f.means - M, W), _masked_max(f.covs - C, W))
    weight_dev = float(np.abs(f.weights - W).max())
    # through t = 2 nothing has been collapsed yet, so the exact mixture must agree
    ex = exact_mixture_filter(m, v[:2])
    for t in range(min(T, 2)):
        w, mm, cc = ex.config_moments(t)
        weight_dev = max(weight_dev, float(np.abs(w - f.weights[t]).max()))
        moment_dev = max(moment_dev, _masked_max(mm - f.means[t], w), _masked_max(cc - f.covs[t], w))
    sm = slgssm_smooth(f)
    Ws, Ms, Cs = collapsed_smoother_reference(m, v, (W, M, C))
    smooth_dev = max(float(np.abs(sm.weights - Ws).max()), _masked_max(sm.means - Ms, Ws))
    return {"moment_dev": moment_dev, "weight_dev": weight_dev, "smooth_dev": smooth_dev}


EXACT_VARIANTS = ("ic_reset", "dc_reset", "changepoint")
COLLAPSED_VARIANTS = ("plain", "dc", "dc_reset", "changepoint")
