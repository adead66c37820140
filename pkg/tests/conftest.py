import numpy as np
import pytest

from switchseg.model import (AutoregressiveEmission, DurationSpec, GaussianMixtureEmission, LinearGaussianEmission,
                             SwitchingModel, TransitionModel)


def rand_transition(rng, S, no_self=False):
    init = rng.dirichlet(np.ones(S))
    if no_self and S > 1:
        sw = np.zeros((S, S))
        for i in range(S):
            others = [j for j in range(S) if j != i]
            sw[others, i] = rng.dirichlet(np.ones(S - 1))
    else:
        sw = rng.dirichlet(np.ones(S), size=S).T
    return TransitionModel(init, sw)


def rand_ar(rng, S, k, intercepts=True):
    return AutoregressiveEmission(rng.normal(0, 0.5, (S, k)), rng.uniform(0.5, 2.0, S),
                                  rng.normal(0, 1, S) if intercepts else None,
                                  initial_law=str(rng.choice(["ignore", "truncate"])))


def rand_gmm(rng, S, M, D=1, chained=False):
    X = rng.normal(size=(S, M, D, D))
    covs = X @ np.swapaxes(X, -1, -2) + 0.5 * np.eye(D)
    W = rng.dirichlet(np.ones(M), size=(S, M)).transpose(0, 2, 1) if chained else None
    return GaussianMixtureEmission(rng.dirichlet(np.ones(M), size=S), rng.normal(0, 1.5, (S, M, D)), covs, W)


def rand_duration(rng, d_min, d_max):
    return DurationSpec(d_min, d_max, rng.dirichlet(np.ones(d_max - d_min + 1)))


def rand_lg(rng, S, H, D):
    def spd(n):
        X = rng.normal(size=(S, n, n))
        return X @ X.transpose(0, 2, 1) + 0.3 * np.eye(n)
    return LinearGaussianEmission(rng.normal(0, 0.7, (S, H, H)), rng.normal(0, 1, (S, D, H)), spd(H), spd(D),
                                  rng.normal(0, 1, (S, H)), spd(H))


def rand_slgssm(rng, variant, S=2, H=1, D=1, d_max=3, boundary="relaxed"):
    dur = None if variant in ("plain", "changepoint") else rand_duration(rng, 1, d_max)
    return SwitchingModel("slgssm", rand_transition(rng, S), rand_lg(rng, S, H, D), dur, boundary=boundary,
                          variant=variant)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
