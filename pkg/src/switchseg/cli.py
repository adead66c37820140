"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from switchseg import discrete, duration, io, segmental, slgssm
from switchseg.errors import (EnumerationGuardError, ImpossibleDataError, MixtureCapError, ModelValidationError,
                              NumericalError, RegimeStarvationError)
from switchseg.model import AutoregressiveEmission, GaussianMixtureEmission
from switchseg.synth import (REFERENCE_AR_COEFFICIENTS, REFERENCE_NOISE_VARIANCE, REFERENCE_SEGMENTS,
                             gen_sarm_switching, gen_switching_sinusoid, read_series_csv, segmentation_error, write_labeled_csv)

NUMERICAL_ERRORS = (NumericalError, ImpossibleDataError, RegimeStarvationError, MixtureCapError,
                    FloatingPointError, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _threads() -> int:
    raw = os.environ.get("SWITCHSEG_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"SWITCHSEG_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise UsageError(f"SWITCHSEG_THREADS must be a positive integer, got {raw!r}")
    return n


def _out_dir(path) -> Path:
    out = Path(path).resolve()
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- generate ------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = _out_dir(args.out)
    if args.model == "sarm-paper":
        from switchseg.experiments import gsarm_model, usarm_model
        n_sw = REFERENCE_SEGMENTS - 1 if args.n_switches is None else args.n_switches
        data = gen_sarm_switching(n_switches=n_sw, seed=args.seed)
        em = AutoregressiveEmission(REFERENCE_AR_COEFFICIENTS, REFERENCE_NOISE_VARIANCE)
        io.save_model(out / "usarm.json", usarm_model(em))
        io.save_model(out / "gsarm.json", gsarm_model(em, data.true_regimes))
    else:
        data = gen_switching_sinusoid(seed=args.seed)
    write_labeled_csv(out / "series.csv", data)
    io.write_segmentation_csv(out / "truth.csv", data.true_regimes)
    print(f"wrote {data.T} samples to {out / 'series.csv'}")
    return 0


# -- fit -------------------------------------------------------------------------

def cmd_fit(args) -> int:
    model = io.load_model(args.model)
    series, _ = read_series_csv(args.data)
    update = tuple(args.update.split(",")) if args.update else (
        ("initial", "transition", "emission") if model.kind == "hmm" else ("emission",))
    cfg = discrete.EMConfig(max_iter=args.max_iter, tol=args.tol, update=update, order_k=args.order_k)
    fit = discrete.em_fit(model, series, cfg)
    out = _out_dir(args.out)
    io.save_model(out / "fitted.json", fit.model)
    io.write_json(out / "fit_trace.json", {"log_likelihood": fit.trace, "converged": fit.converged,
                                           "iterations": len(fit.trace) - 1})
    print(f"EM: {len(fit.trace) - 1} iterations, log-likelihood {fit.trace[-1]:.6f}, converged={fit.converged}")
    return 0


# -- inference -------------------------------------------------------------------

def _smooth(model, series, mode):
    """Regime posterior (T, S) and log-likelihood."""
    if model.kind == "hmm":
        em = model.emission
        if isinstance(em, GaussianMixtureEmission):
            post = discrete.smooth_gmm_chained(model, series) if em.mixture_transition is not None \
                else discrete.smooth_gmm(model, series)
        else:
            post = discrete.smooth_parallel(model, series)
        return post.gamma, post.log_likelihood
    if model.kind in ("dc", "ic"):
        tab = duration.count_smooth(model, series)
        return tab.gamma_s, tab.log_likelihood
    if model.kind == "segmental":
        tab = segmental.seg_smooth(model, series)
        return segmental.seg_posteriors(tab).state, tab.log_likelihood
    filt = slgssm.filter_model(model, series, mode=mode)
    sm = slgssm.slgssm_smooth(filt, model)
    return sm.regime_marginals(), filt.log_likelihood


def _viterbi(model, series):
    if model.kind == "hmm":
        return discrete.viterbi(model, series)
    if model.kind in ("dc", "ic"):
        return duration.count_viterbi(model, series)
    if model.kind == "segmental":
        return segmental.seg_viterbi(model, series)
    raise UsageError("viterbi is not available for slgssm models")


def _infer_one(command, model, data_path: Path, out: Path, args, seed) -> dict:
    series, truth = read_series_csv(data_path)
    stem = data_path.stem
    summary = {"data": data_path.name, "model_type": io.model_type_of(model), "command": command, "T": series.T}
    gamma = None
    counts = None
    if command == "smooth":
        gamma, ll = _smooth(model, series, args.mode)
        labels = np.argmax(gamma, axis=1)
        io.write_posterior_csv(out / f"{stem}_posterior.csv", gamma)
        summary["log_likelihood"] = ll
    elif command == "viterbi":
        res = _viterbi(model, series)
        labels, counts = res.path, res.counts
        summary["log_joint"] = res.log_joint
    else:
        if model.kind != "segmental":
            raise UsageError("sample needs a segmental model")
        tab = segmental.seg_smooth(model, series)
        res = segmental.seg_sample_path(tab, rng_seed=seed)
        labels, counts = res.regimes, res.counts
        summary["seed"] = int(seed)
        summary["segments"] = [[int(a), int(b), int(s)] for a, b, s in res.segments]
    io.write_segmentation_csv(out / f"{stem}_segmentation.csv", labels, counts)
    if truth is not None:
        summary["segmentation_error"] = segmentation_error(labels, truth)
    if not args.no_plot:
        from switchseg.plotting import timeline_svg
        timeline_svg(out / f"{stem}_timeline.svg", series.data, labels, gamma, truth,
                     title=f"{stem}: {io.model_type_of(model)} {command}")
    io.write_json(out / f"{stem}_{command}.json", summary)
    return summary


def cmd_infer(args) -> int:
    model = io.load_model(args.model)
    if args.order_k is not None and model.emission.order != args.order_k:
        raise UsageError(f"--order-k {args.order_k} does not match the model's AR order {model.emission.order}")
    out = _out_dir(args.out)
    paths = [Path(p).resolve() for p in args.data]
    stems = [p.stem for p in paths]
    if len(set(stems)) != len(stems):
        raise UsageError("data files must have distinct names")
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(args.seed).spawn(len(paths))]
    jobs = [(p, sd) for p, sd in zip(paths, seeds)]
    n = min(_threads(), len(jobs))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(lambda j: _infer_one(args.command, model, j[0], out, args, j[1]), jobs))
    else:
        results = [_infer_one(args.command, model, p, out, args, sd) for p, sd in jobs]
    for r in results:
        extra = f", error {r['segmentation_error']:.4%}" if "segmentation_error" in r else ""
        print(f"{r['data']}: {args.command} done{extra}")
    return 0


# -- eval ------------------------------------------------------------------------

def _labels(path):
    path = Path(path)
    with open(path) as fh:
        head = fh.readline().strip().split(",")
    if any(h == "v" or h.startswith("v_") for h in head):
        _, lab = read_series_csv(path)
        if lab is None:
            raise UsageError(f"{path} has no regime column")
        return lab
    return io.read_segmentation_csv(path)


def cmd_eval(args) -> int:
    est, truth = _labels(args.estimate), _labels(args.truth)
    report = {"estimate": Path(args.estimate).name, "truth": Path(args.truth).name, "T": int(truth.size),
              "segmentation_error": segmentation_error(est, truth),
              "segmentation_error_best_permutation": segmentation_error(est, truth, permute=True)}
    text = io.json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).resolve().parent.mkdir(parents=True, exist_ok=True)
        io.write_json(args.out, report)
    print(text)
    return 0


# -- bench / experiment ------------------------------------------------------------

def cmd_bench(args) -> int:
    from switchseg.bench import BenchConfig, run_bench
    import numba
    numba.set_num_threads(1)  # stable timings
    cfg = BenchConfig(T=args.T, S=args.S, d_max_sweep=tuple(args.d_max), repeats=args.repeats, seed=args.seed,
                      S_sweep=() if args.no_s_sweep else (2, 4, 8, 16))
    report = run_bench(cfg)
    if args.out:
        Path(args.out).resolve().parent.mkdir(parents=True, exist_ok=True)
        io.write_json(args.out, report)
    d = report["d_max_sweep"]
    print(f"d_max slope: reduced {d['reduced_slope']:.3f}, naive {d['naive_slope']:.3f}; "
          f"max relative difference {d['max_rel_diff']:.2e}")
    return 0


def _seed_list(text: str):
    if "-" in text:
        a, b = text.split("-")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",")]


def cmd_experiment(args) -> int:
    from switchseg import experiments
    fn = {"known": experiments.known_parameter_run, "em": experiments.em_fitted_run,
          "sinusoid": experiments.sinusoid_run}[args.name]
    try:
        seeds = _seed_list(args.seeds)
    except ValueError:
        raise UsageError(f"bad --seeds {args.seeds!r}; use e.g. 0-9 or 1,4,7")
    n = min(_threads(), len(seeds))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(fn, seeds))
    else:
        rows = [fn(s) for s in seeds]
    report = {"experiment": args.name, "runs": rows}
    if args.out:
        Path(args.out).resolve().parent.mkdir(parents=True, exist_ok=True)
        io.write_json(args.out, report)
    for r in rows:
        print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="switchseg", description="Hidden Markov switching model segmentation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="synthetic labelled series")
    g.add_argument("--model", required=True, choices=["sarm-paper", "sinusoid"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--n-switches", type=int, default=None, help="sarm-paper only (default 99)")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="EM parameter estimation")
    f.add_argument("--model", required=True, help="initial model JSON")
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--max-iter", type=int, default=100)
    f.add_argument("--tol", type=float, default=1e-6)
    f.add_argument("--update", default=None, help="comma list of initial,transition,emission")
    f.add_argument("--order-k", type=int, default=None)
    f.set_defaults(func=cmd_fit)

    for name, text in (("smooth", "posterior regime marginals"), ("viterbi", "most likely regime path"),
                       ("sample", "posterior path sample (segmental models)")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--model", required=True)
        s.add_argument("--data", required=True, nargs="+")
        s.add_argument("--out", default=".")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--mode", choices=["exact", "collapsed"], default="collapsed",
                       help="slgssm reset variants: exact mixture or collapsed filter")
        s.add_argument("--order-k", type=int, default=None)
        s.add_argument("--no-plot", action="store_true")
        s.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="segmentation error report")
    e.add_argument("--estimate", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="complexity scaling of the duration-count forward pass")
    b.add_argument("--out", default=None)
    b.add_argument("--T", type=int, default=2000)
    b.add_argument("--S", type=int, default=4)
    b.add_argument("--d-max", type=int, nargs="+", default=[8, 16, 32, 64, 128])
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--no-s-sweep", action="store_true")
    b.set_defaults(func=cmd_bench)

    x = sub.add_parser("experiment", help="rerun a reference experiment over seeds")
    x.add_argument("name", choices=["known", "em", "sinusoid"])
    x.add_argument("--seeds", default="0-9")
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    except (ModelValidationError, io.ModelFileError, EnumerationGuardError, OSError, ValueError) as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
