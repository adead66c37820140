"""Synthetic switching series and the segmentation-error metric."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from switchseg.model import DurationSpec, TimeSeries

# three-regime AR(3) used by the explicit-duration experiment
REFERENCE_AR_COEFFICIENTS = np.array([
    [1.8, -0.99, 0.0],
    [1.65, -0.9, 0.1],
    [1.8, -0.85, 0.0],
])
REFERENCE_NOISE_VARIANCE = 1.0
REFERENCE_DURATION = (30, 50)
REFERENCE_SEGMENTS = 100


@dataclass
class LabeledSeries:
    series: TimeSeries
    true_regimes: np.ndarray
    true_boundaries: np.ndarray
    seed: Optional[int] = None

    @property
    def T(self) -> int:
        return self.series.T


def boundaries_from_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    return np.concatenate([[0], np.flatnonzero(labels[1:] != labels[:-1]) + 1]).astype(np.int64)


def gen_sarm_switching(coefficients=REFERENCE_AR_COEFFICIENTS, noise_variance=REFERENCE_NOISE_VARIANCE,
                       duration_law: Optional[DurationSpec] = None, n_switches: int = REFERENCE_SEGMENTS - 1,
                       seed: Optional[int] = None) -> LabeledSeries:
    """Scalar switching AR series with explicit segment durations.

    ``n_switches + 1`` segments are drawn; the first regime is uniform and each
    later one is uniform over the other regimes. Durations follow
    ``duration_law`` (default uniform on 30..50). The first ``k`` samples are
    i.i.d. N(0, 1) warmup values and count towards the first segment.
    """
    coef = np.atleast_2d(np.asarray(coefficients, dtype=float))
    S, k = coef.shape
    var = np.broadcast_to(np.asarray(noise_variance, dtype=float), (S,))
    law = duration_law or DurationSpec.uniform(*REFERENCE_DURATION)
    rng = np.random.default_rng(seed)
    support = np.arange(law.d_min, law.d_max + 1)

    regimes = [int(rng.integers(S))]
    for _ in range(n_switches):
        others = [s for s in range(S) if s != regimes[-1]] or [regimes[-1]]
        regimes.append(int(others[rng.integers(len(others))]))
    pmf = law.pmf if not law.per_regime else None
    durs = [int(rng.choice(support, p=pmf if pmf is not None else law.pmf[s])) for s in regimes]
    labels = np.repeat(regimes, durs).astype(np.int64)
    T = labels.size
    v = np.zeros(T)
    v[:min(k, T)] = rng.standard_normal(min(k, T))
    noise = rng.standard_normal(T) * np.sqrt(var[labels])
    for t in range(k, T):
        s = labels[t]
        with np.errstate(over="ignore", invalid="ignore"):
            v[t] = coef[s] @ v[t - k:t][::-1] + noise[t]
        if not np.isfinite(v[t]):
            raise FloatingPointError(f"non-finite sample at t={t} (regime {s}); AR parameters unstable")
    return LabeledSeries(TimeSeries(v), labels, boundaries_from_labels(labels), seed)


def gen_switching_sinusoid(seed: Optional[int] = None, T: int = 200, switch_at: int = 100,
                           periods=(20.0, 8.0), amplitude: float = 1.0, noise: float = 0.05) -> LabeledSeries:
    """Sinusoid whose period changes at ``switch_at`` (phase kept continuous) plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    omega = np.where(np.arange(T) < switch_at, 2 * np.pi / periods[0], 2 * np.pi / periods[1])
    phase0 = rng.uniform(0, 2 * np.pi)
    phase = phase0 + np.concatenate([[0.0], np.cumsum(omega[1:])])
    v = amplitude * np.sin(phase) + noise * rng.standard_normal(T)
    labels = (np.arange(T) >= switch_at).astype(np.int64)
    return LabeledSeries(TimeSeries(v), labels, boundaries_from_labels(labels), seed)


def segmentation_error(estimated, truth, permute: bool = False) -> float:
    """Fraction of time steps whose regime label differs from the truth.

    ``permute=True`` scores the best relabelling of the estimate (for fitted
    models whose regime indices are arbitrary).
    """
    est, tru = np.asarray(estimated), np.asarray(truth)
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {tru.shape}")
    if est.size == 0:
        return 0.0
    if not permute:
        return float(np.mean(est != tru))
    labels = sorted(set(est.tolist()) | set(tru.tolist()))
    best = 1.0
    for perm in itertools.permutations(labels):
        mapping = dict(zip(labels, perm))
        best = min(best, float(np.mean(np.vectorize(mapping.get)(est) != tru)))
    return best


def write_labeled_csv(path, data: LabeledSeries) -> None:
    """CSV with columns t, v (or v_1..v_D), regime; floats use shortest round-trip repr."""
    vals = data.series.data
    D = vals.shape[1]
    head = ["t"] + (["v"] if D == 1 else [f"v_{i + 1}" for i in range(D)]) + ["regime"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for t in range(vals.shape[0]):
            w.writerow([t] + [repr(float(x)) for x in vals[t]] + [int(data.true_regimes[t])])


def read_series_csv(path):
    """Read a series CSV. Returns ``(TimeSeries, labels or None)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    head, body = rows[0], rows[1:]
    vcols = [i for i, h in enumerate(head) if h == "v" or h.startswith("v_")]
    if not vcols:
        raise ValueError(f"{path}: no 'v' or 'v_i' column in header {head}")
    data = np.array([[float(r[i]) for i in vcols] for r in body], dtype=float)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite observation")
    labels = None
    if "regime" in head:
        j = head.index("regime")
        labels = np.array([int(r[j]) for r in body], dtype=np.int64)
    return TimeSeries(data), labels
