"""
Parameter containers for hidden Markov switching models.

Conventions used throughout the package:

* Regimes are 0-based integers ``0..S-1``.
* The switch matrix is column-stochastic: ``switch[j, i] = p(s_t = j | s_{t-1} = i)``.
* Duration counts are 1-based (``c = 1`` means "last step of the regime" for
  decreasing counts and "first step of the regime" for increasing counts).
  Arrays indexed by count use position ``c - 1``.

Containers are frozen dataclasses holding read-only numpy arrays. They accept
anything array-like and do *not* raise on invariant violations at construction;
call :func:`validate_model` (or ``model.require_valid()``) to get a report.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from switchseg.errors import ModelValidationError

PROB_TOL = 1e-12
PD_TOL = 1e-10

KINDS = ("hmm", "dc", "ic", "segmental", "slgssm")
SLGSSM_VARIANTS = ("plain", "dc", "dc_reset", "ic_reset", "changepoint")


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TransitionModel:
    """Initial regime distribution and column-stochastic switch matrix."""

    initial: np.ndarray
    switch: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "initial", _frozen(self.initial))
        object.__setattr__(self, "switch", _frozen(np.atleast_2d(self.switch)))

    @property
    def S(self) -> int:
        return int(self.initial.shape[0])

    @classmethod
    def uniform(cls, S: int, stay: Optional[float] = None) -> "TransitionModel":
        """Uniform initial law; ``stay`` on the diagonal, rest spread evenly."""
        if stay is None:
            switch = np.full((S, S), 1.0 / S)
        elif S == 1:
            switch = np.ones((1, 1))
        else:
            switch = np.full((S, S), (1.0 - stay) / (S - 1))
            np.fill_diagonal(switch, stay)
        return cls(np.full(S, 1.0 / S), switch)


@dataclass(frozen=True)
class DurationSpec:
    """Explicit regime-duration law on ``{d_min, ..., d_max}``.

    ``pmf`` holds the probabilities of durations ``d_min..d_max`` in order, either
    shared (1-D) or one row per regime (2-D, shape ``(S, d_max - d_min + 1)``).
    """

    d_min: int
    d_max: int
    pmf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d_min", int(self.d_min))
        object.__setattr__(self, "d_max", int(self.d_max))
        object.__setattr__(self, "pmf", _frozen(self.pmf))

    @property
    def per_regime(self) -> bool:
        return self.pmf.ndim == 2

    @property
    def width(self) -> int:
        return self.d_max - self.d_min + 1

    def full_pmf(self) -> np.ndarray:
        """pmf padded with zeros to durations ``1..d_max`` (last axis index ``d - 1``)."""
        lead = self.pmf.shape[:-1]
        out = np.zeros(lead + (self.d_max,))
        out[..., self.d_min - 1:] = self.pmf
        return out

    def regime_pmf(self, S: int) -> np.ndarray:
        """``(S, d_max)`` matrix of per-regime duration probabilities."""
        full = self.full_pmf()
        if full.ndim == 1:
            return np.tile(full, (S, 1))
        if full.shape[0] != S:
            raise ValueError(f"per-regime pmf has {full.shape[0]} rows, model has {S} regimes")
        return full

    def survival(self) -> np.ndarray:
        """``p(duration >= c)`` for ``c = 1..d_max``."""
        full = self.full_pmf()
        return np.flip(np.cumsum(np.flip(full, -1), -1), -1)

    def hazard(self) -> np.ndarray:
        return pmf_to_hazard(self)

    @classmethod
    def uniform(cls, d_min: int, d_max: int) -> "DurationSpec":
        n = d_max - d_min + 1
        return cls(d_min, d_max, np.full(n, 1.0 / n))

    @classmethod
    def point(cls, d: int, d_max: Optional[int] = None) -> "DurationSpec":
        """All mass on duration ``d`` (support padded up to ``d_max``)."""
        d_max = d if d_max is None else d_max
        pmf = np.zeros(d_max - d + 1)
        pmf[0] = 1.0
        return cls(d, d_max, pmf)

    @classmethod
    def geometric(cls, stay: float, d_max: int) -> "DurationSpec":
        """Geometric law ``stay**(d-1) (1-stay)`` truncated at ``d_max`` (tail folded into d_max)."""
        d = np.arange(1, d_max + 1)
        pmf = stay ** (d - 1) * (1.0 - stay)
        pmf[-1] = stay ** (d_max - 1)
        return cls(1, d_max, pmf)


@dataclass(frozen=True)
class GaussianMixtureEmission:
    """Per-regime Gaussian mixture ``p(v | s) = sum_m p(m | s) N(v; mu_sm, Sigma_sm)``.

    ``mixture_transition[s, m, m_prev] = p(m_t = m | m_{t-1} = m_prev, s_t = s)``
    switches on the chained-indicator variant.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    mixture_transition: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(np.atleast_2d(self.weights)))
        means = np.asarray(self.means, dtype=float)
        if means.ndim == 2:
            means = means[..., None]
        object.__setattr__(self, "means", _frozen(means))
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[..., None, None]
        object.__setattr__(self, "covs", _frozen(covs))
        if self.mixture_transition is not None:
            object.__setattr__(self, "mixture_transition", _frozen(self.mixture_transition))

    order = 0

    @property
    def S(self) -> int:
        return self.weights.shape[0]

    @property
    def M(self) -> int:
        return self.weights.shape[1]

    @property
    def D(self) -> int:
        return self.means.shape[2]


@dataclass(frozen=True)
class AutoregressiveEmission:
    """Scalar switching AR(k): ``v_t = b_s + sum_i a^s_i v_{t-i} + eta_t``, ``eta_t ~ N(0, var_s)``.

    ``initial_law`` handles the first ``k`` observations, whose full lag context
    does not exist: ``"ignore"`` gives them no likelihood term (conditional
    likelihood); ``"truncate"`` scores them with the available lags only.
    """

    coefficients: np.ndarray
    noise_variance: np.ndarray
    intercepts: Optional[np.ndarray] = None
    initial_law: str = "ignore"

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        if coef.ndim == 1:
            coef = coef[:, None] if coef.size else coef.reshape(0, 0)
        object.__setattr__(self, "coefficients", _frozen(coef))
        S = coef.shape[0]
        var = np.broadcast_to(np.asarray(self.noise_variance, dtype=float), (S,))
        object.__setattr__(self, "noise_variance", _frozen(var))
        icpt = np.zeros(S) if self.intercepts is None else np.broadcast_to(
            np.asarray(self.intercepts, dtype=float), (S,))
        object.__setattr__(self, "intercepts", _frozen(icpt))

    @property
    def S(self) -> int:
        return self.coefficients.shape[0]

    @property
    def order(self) -> int:
        return self.coefficients.shape[1]

    D = 1


@dataclass(frozen=True)
class LinearGaussianEmission:
    """Per-regime linear Gaussian state-space parameters.

    ``h_t = A_s h_{t-1} + N(0, Q_s)``, ``v_t = B_s h_t + N(0, R_s)``, and the
    reset/initial law ``h ~ N(mu_s, Sigma_s)``.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        S = A.shape[0]
        if A.ndim == 1:
            A = A[:, None, None]
        H = A.shape[1]
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None, None]
        D = B.shape[1]
        for name, shape in (("A", (S, H, H)), ("B", (S, D, H)), ("Q", (S, H, H)),
                            ("R", (S, D, D)), ("mu", (S, H)), ("Sigma", (S, H, H))):
            val = {"A": A, "B": B}.get(name, getattr(self, name))
            val = np.asarray(val, dtype=float).reshape(shape)
            object.__setattr__(self, name, _frozen(val))

    @property
    def S(self) -> int:
        return self.A.shape[0]

    @property
    def H(self) -> int:
        return self.A.shape[1]

    @property
    def D(self) -> int:
        return self.B.shape[1]

    order = 0


Emission = Union[GaussianMixtureEmission, AutoregressiveEmission, LinearGaussianEmission]


@dataclass(frozen=True)
class TimeSeries:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def D(self) -> int:
        return self.data.shape[1]


def as_series(x) -> TimeSeries:
    return x if isinstance(x, TimeSeries) else TimeSeries(x)


@dataclass(frozen=True)
class SwitchingModel:
    """A complete hidden Markov switching model.

    ``kind`` selects the discrete backbone: ``"hmm"`` (plain switching),
    ``"dc"``/``"ic"`` (one decreasing/increasing duration-count chain),
    ``"segmental"`` (duration + count) or ``"slgssm"``.
    ``boundary`` is ``"relaxed"`` (the first regime may have started before
    t=1) or ``"strict"``; ``end_boundary`` plays the same role at t=T for the
    segmental model. ``cut`` drops observation context across regime
    boundaries (increasing-count and segmental models).
    """

    kind: str
    transition: TransitionModel
    emission: Emission
    duration: Optional[DurationSpec] = None
    boundary: str = "relaxed"
    end_boundary: str = "relaxed"
    cut: bool = False
    variant: str = "plain"

    @property
    def S(self) -> int:
        return self.transition.S

    def require_valid(self) -> "SwitchingModel":
        report = validate_model(self)
        if not report.ok:
            raise ModelValidationError(report)
        return self

    def with_emission(self, emission: Emission) -> "SwitchingModel":
        return _replace(self, emission=emission)

    def with_transition(self, transition: TransitionModel) -> "SwitchingModel":
        return _replace(self, transition=transition)


def _replace(obj, **changes):
    from dataclasses import replace
    return replace(obj, **changes)


@dataclass
class ValidationReport:
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def fail(self, msg: str) -> None:
        self.failures.append(msg)

    def __bool__(self) -> bool:
        return self.ok


def _check_prob_vector(vec, name, report, tol=PROB_TOL):
    vec = np.asarray(vec)
    if not np.all(np.isfinite(vec)):
        report.fail(f"{name} has non-finite entries")
        return
    if np.any(vec < 0):
        report.fail(f"{name} has negative entries")
    if abs(vec.sum() - 1.0) > tol:
        report.fail(f"{name} not normalized (sum={vec.sum():.15g})")


def _check_pd(mat, name, report):
    mat = np.asarray(mat)
    if not np.all(np.isfinite(mat)):
        report.fail(f"{name} has non-finite entries")
        return
    if not np.allclose(mat, np.swapaxes(mat, -1, -2), atol=1e-12, rtol=0):
        report.fail(f"{name} covariance not symmetric")
        return
    if np.min(np.linalg.eigvalsh(mat)) <= PD_TOL:
        report.fail(f"{name} covariance not PD")


def validate_transition(tm: TransitionModel, report: ValidationReport) -> None:
    S = tm.S
    if S < 1:
        report.fail("need at least one regime")
        return
    if tm.switch.shape != (S, S):
        report.fail(f"switch matrix shape {tm.switch.shape} != ({S}, {S})")
        return
    _check_prob_vector(tm.initial, "initial distribution", report)
    if np.any(tm.switch < 0) or not np.all(np.isfinite(tm.switch)):
        report.fail("switch matrix has negative or non-finite entries")
    for i in range(S):
        if abs(tm.switch[:, i].sum() - 1.0) > PROB_TOL:
            report.fail(f"column {i} not stochastic")


def validate_duration(spec: DurationSpec, S: int, report: ValidationReport) -> None:
    if not (1 <= spec.d_min <= spec.d_max):
        report.fail(f"need 1 <= d_min <= d_max, got d_min={spec.d_min}, d_max={spec.d_max}")
        return
    if spec.pmf.shape[-1] != spec.width:
        report.fail(f"duration pmf length {spec.pmf.shape[-1]} != d_max - d_min + 1 = {spec.width}")
        return
    if spec.per_regime:
        if spec.pmf.shape[0] != S:
            report.fail(f"per-regime duration pmf has {spec.pmf.shape[0]} rows for {S} regimes")
        for s, row in enumerate(spec.pmf):
            _check_prob_vector(row, f"duration pmf of regime {s}", report)
    else:
        _check_prob_vector(spec.pmf, "duration pmf", report)


def validate_emission(em, S: int, report: ValidationReport) -> None:
    if em.S != S:
        report.fail(f"emission has {em.S} regimes, transition has {S}")
        return
    if isinstance(em, GaussianMixtureEmission):
        for s in range(S):
            _check_prob_vector(em.weights[s], f"mixture weights of regime {s}", report)
        if em.means.shape[:2] != em.weights.shape:
            report.fail("mixture means do not match weights shape")
        for s in range(S):
            for m in range(em.M):
                _check_pd(em.covs[s, m], f"Sigma[{s},{m}]", report)
        if em.mixture_transition is not None:
            W = em.mixture_transition
            if W.shape != (S, em.M, em.M):
                report.fail(f"mixture transition shape {W.shape} != {(S, em.M, em.M)}")
            else:
                for s in range(S):
                    for mp in range(em.M):
                        _check_prob_vector(W[s, :, mp], f"mixture transition column ({s},{mp})", report)
    elif isinstance(em, AutoregressiveEmission):
        if em.order < 0:
            report.fail("AR order must be >= 0")
        if np.any(em.noise_variance <= 0):
            report.fail("AR noise variance not PD")
        if em.initial_law not in ("ignore", "truncate"):
            report.fail(f"unknown AR initial law {em.initial_law!r}")
        if not (np.all(np.isfinite(em.coefficients)) and np.all(np.isfinite(em.intercepts))):
            report.fail("AR parameters not finite")
    elif isinstance(em, LinearGaussianEmission):
        for s in range(S):
            _check_pd(em.Q[s], f"Sigma_H[{s}]", report)
            _check_pd(em.R[s], f"Sigma_V[{s}]", report)
            _check_pd(em.Sigma[s], f"Sigma[{s}] (reset)", report)
    else:
        report.fail(f"unsupported emission type {type(em).__name__}")


def validate_model(model: SwitchingModel) -> ValidationReport:
    """Check every structural and probabilistic invariant of ``model``."""
    report = ValidationReport()
    if model.kind not in KINDS:
        report.fail(f"unknown model kind {model.kind!r}")
        return report
    validate_transition(model.transition, report)
    if not report.ok:
        return report
    validate_emission(model.emission, model.S, report)
    if model.kind in ("dc", "ic", "segmental") and model.duration is None:
        report.fail(f"{model.kind} model needs a duration spec")
    if model.duration is not None:
        validate_duration(model.duration, model.S, report)
    if model.boundary not in ("relaxed", "strict") or model.end_boundary not in ("relaxed", "strict"):
        report.fail("boundary modes must be 'relaxed' or 'strict'")
    if model.kind == "slgssm":
        if not isinstance(model.emission, LinearGaussianEmission):
            report.fail("slgssm model needs a linear Gaussian emission")
        if model.variant not in SLGSSM_VARIANTS:
            report.fail(f"unknown slgssm variant {model.variant!r}")
        elif model.variant in ("dc", "dc_reset", "ic_reset") and model.duration is None:
            report.fail(f"slgssm variant {model.variant} needs a duration spec")
    elif isinstance(model.emission, LinearGaussianEmission):
        report.fail("linear Gaussian emission only valid for slgssm models")
    return report


def geometric_duration_pmf(pi_ii: float, d: int) -> float:
    """Implicit regime-duration pmf of a plain HMM: ``pi_ii**(d-1) * (1 - pi_ii)``."""
    if not 0.0 <= pi_ii < 1.0:
        raise ValueError(f"self-transition must satisfy 0 <= pi_ii < 1, got {pi_ii}")
    if d < 1:
        raise ValueError(f"duration must be >= 1, got {d}")
    return pi_ii ** (d - 1) * (1.0 - pi_ii)


def pmf_to_hazard(spec: DurationSpec) -> np.ndarray:
    """Continuation probabilities ``lambda_c = p(duration > c | duration >= c)``.

    Returned over ``c = 1..d_max`` (index ``c - 1``; entries below ``d_min`` are 1).
    Unreachable counts (zero survival) get hazard 0.
    """
    full = spec.full_pmf()
    surv = np.flip(np.cumsum(np.flip(full, -1), -1), -1)
    if np.any(full < 0):
        raise ValueError("malformed duration pmf: negative mass")
    lam = np.zeros_like(full)
    ok = surv > 0
    lam[ok] = 1.0 - full[ok] / surv[ok]
    lam[..., -1] = 0.0
    return np.clip(lam, 0.0, 1.0)


def hazard_to_pmf(hazard: np.ndarray, d_min: int = 1) -> DurationSpec:
    """Inverse of :func:`pmf_to_hazard`: ``rho_d = (1 - lambda_d) prod_{i<d} lambda_i``."""
    lam = np.asarray(hazard, dtype=float)
    surv = np.concatenate([np.ones(lam.shape[:-1] + (1,)), np.cumprod(lam, -1)[..., :-1]], -1)
    full = (1.0 - lam) * surv
    d_max = lam.shape[-1]
    return DurationSpec(d_min, d_max, full[..., d_min - 1:])
