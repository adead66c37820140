"""Wall-time scaling of the decreasing-count forward pass: pruned vs full transition tensor."""
from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field

import numpy as np

from switchseg.duration import dc_forward_kernel, dc_forward_naive_kernel


@dataclass
class BenchConfig:
    T: int = 2000
    S: int = 4
    d_max_sweep: tuple = (8, 16, 32, 64, 128)
    S_sweep: tuple = (2, 4, 8, 16)
    S_sweep_d_max: int = 32
    repeats: int = 3
    seed: int = 0
    naive: bool = True
    extra: dict = field(default_factory=dict)


def _inputs(rng, T, S, D):
    log_e = rng.normal(size=(T, S))
    pi = rng.dirichlet(np.ones(S), size=S).T
    rho = rng.dirichlet(np.ones(D), size=S)
    log_init = np.log(np.full(S, 1.0 / S))[:, None] + np.log(np.flip(np.cumsum(np.flip(rho, 1), 1), 1))
    return (np.ascontiguousarray(log_e), np.ascontiguousarray(log_init), np.ascontiguousarray(np.log(pi)),
            np.ascontiguousarray(np.log(rho)))


def _warmup(rng):
    args = _inputs(rng, 8, 2, 3)
    dc_forward_kernel(*args)
    dc_forward_naive_kernel(*args)


def _best_time(fn, args, repeats):
    """Fastest of ``repeats`` calls (JIT compiled beforehand), and the last result."""
    best, out = np.inf, None
    for _ in range(max(repeats, 1)):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def relative_difference(a, b) -> float:
    """Largest ``|a - b| / max(1, |a|)`` over finite cells; ``inf`` if the -inf patterns differ."""
    fin = np.isfinite(a)
    if not np.array_equal(fin, np.isfinite(b)):
        return float("inf")
    return float(np.max(np.abs(a[fin] - b[fin]) / np.maximum(1.0, np.abs(a[fin])), initial=0.0))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _sweep(cfg: BenchConfig, rng, sizes, make):
    rows, max_diff = [], 0.0
    for n in sizes:
        args = make(n)
        red, a = _best_time(dc_forward_kernel, args, cfg.repeats)
        row = {"size": int(n), "reduced_seconds": red}
        if cfg.naive:
            nai, b = _best_time(dc_forward_naive_kernel, args, cfg.repeats)
            max_diff = max(max_diff, relative_difference(a, b))
            row.update(naive_seconds=nai, speedup=nai / red)
        rows.append(row)
    out = {"rows": rows, "reduced_slope": loglog_slope(sizes, [r["reduced_seconds"] for r in rows])}
    if cfg.naive:
        out["naive_slope"] = loglog_slope(sizes, [r["naive_seconds"] for r in rows])
        out["max_rel_diff"] = max_diff
    return out


def run_bench(cfg: BenchConfig | None = None) -> dict:
    """JSON-ready report. Timing fields end in ``_seconds``, ``speedup`` or ``_slope``."""
    cfg = cfg or BenchConfig()
    rng = np.random.default_rng(cfg.seed)
    _warmup(np.random.default_rng(cfg.seed))
    d_sweep = _sweep(cfg, rng, list(cfg.d_max_sweep), lambda d: _inputs(rng, cfg.T, cfg.S, d))
    s_sweep = _sweep(cfg, rng, list(cfg.S_sweep), lambda s: _inputs(rng, cfg.T, s, cfg.S_sweep_d_max)) \
        if cfg.S_sweep else None
    report = {
        "config": {"T": cfg.T, "S": cfg.S, "d_max_sweep": list(cfg.d_max_sweep), "S_sweep": list(cfg.S_sweep),
                   "S_sweep_d_max": cfg.S_sweep_d_max, "repeats": cfg.repeats, "seed": cfg.seed},
        "d_max_sweep": d_sweep,
        "machine": {"python": platform.python_version(), "processor": platform.machine()},
    }
    if s_sweep is not None:
        report["S_sweep"] = s_sweep
    return report


TIMING_SUFFIXES = ("_seconds", "speedup", "_slope")


def strip_timing(obj):
    """Copy of a report without timing-dependent fields (for determinism checks)."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if not k.endswith(TIMING_SUFFIXES)}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj
