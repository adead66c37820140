"""JSON model files and CSV posterior/segmentation files.

Model file layout (all matrices are row-major nested lists)::

    {
      "model_type": "hmm_gmm" | "sarm" | "duration_dc" | "duration_ic" | "segmental" | "slgssm",
      "transition": {"initial": [...], "switch": [[...], ...]},   # switch[j][i] = p(j | i)
      "emission": {...},
      "duration": {"d_min": 30, "d_max": 50, "pmf": [...]},     # duration models, optional for slgssm
      "boundary": "relaxed", "end_boundary": "relaxed", "cut": false, "variant": "plain"
    }

Emission blocks carry an ``"type"`` tag: ``"gmm"`` (weights [S][M], means
[S][M][D], covs [S][M][D][D], optional mixture_transition [S][M][M]), ``"ar"``
(coefficients [S][k], noise_variance [S], optional intercepts [S],
initial_law) or ``"lgssm"`` (A, B, Q, R, mu, Sigma stacked over regimes).
``hmm_gmm`` and ``sarm`` files may omit the tag. Unknown keys anywhere are
rejected. Probability vectors are checked at 1e-12 and then renormalized once.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from switchseg.errors import ModelValidationError, SwitchsegError
from switchseg.model import (AutoregressiveEmission, DurationSpec, GaussianMixtureEmission, LinearGaussianEmission,
                             SwitchingModel, TransitionModel, validate_model)

MODEL_TYPES = {
    "hmm_gmm": "hmm",
    "sarm": "hmm",
    "duration_dc": "dc",
    "duration_ic": "ic",
    "segmental": "segmental",
    "slgssm": "slgssm",
}
_TOP_KEYS = {"model_type", "transition", "emission", "duration", "boundary", "end_boundary", "cut", "variant"}
_EMISSION_KEYS = {
    "gmm": ({"weights", "means", "covs"}, {"type", "mixture_transition"}),
    "ar": ({"coefficients", "noise_variance"}, {"type", "intercepts", "initial_law"}),
    "lgssm": ({"A", "B", "Q", "R", "mu", "Sigma"}, {"type"}),
}


class ModelFileError(SwitchsegError, ValueError):
    """Malformed model document (unknown keys, missing fields, wrong shapes)."""


def _check_keys(doc: dict, required: set, optional: set, where: str) -> None:
    if not isinstance(doc, dict):
        raise ModelFileError(f"{where}: expected an object, got {type(doc).__name__}")
    unknown = set(doc) - required - optional
    if unknown:
        raise ModelFileError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ModelFileError(f"{where}: missing keys {sorted(missing)}")


def _renorm(x, axis):
    x = np.asarray(x, dtype=float)
    return x / x.sum(axis=axis, keepdims=True)


def _emission_from_dict(doc: dict, model_type: str):
    tag = doc.get("type") if isinstance(doc, dict) else None
    if tag is None:
        tag = {"hmm_gmm": "gmm", "sarm": "ar", "slgssm": "lgssm"}.get(model_type)
    if tag not in _EMISSION_KEYS:
        raise ModelFileError(f"emission: unknown or missing type {tag!r}")
    _check_keys(doc, *_EMISSION_KEYS[tag], where="emission")
    expected = {"hmm_gmm": "gmm", "sarm": "ar", "slgssm": "lgssm"}.get(model_type)
    if expected and tag != expected:
        raise ModelFileError(f"model_type {model_type!r} requires a {expected!r} emission, got {tag!r}")
    if model_type != "slgssm" and tag == "lgssm":
        raise ModelFileError(f"model_type {model_type!r} cannot use a linear-Gaussian emission")
    if tag == "gmm":
        return GaussianMixtureEmission(doc["weights"], doc["means"], doc["covs"], doc.get("mixture_transition"))
    if tag == "ar":
        return AutoregressiveEmission(doc["coefficients"], doc["noise_variance"], doc.get("intercepts"),
                                      doc.get("initial_law", "ignore"))
    return LinearGaussianEmission(*(doc[k] for k in ("A", "B", "Q", "R", "mu", "Sigma")))


def _renormalized(model: SwitchingModel) -> SwitchingModel:
    tr = TransitionModel(_renorm(model.transition.initial, 0), _renorm(model.transition.switch, 0))
    em = model.emission
    if isinstance(em, GaussianMixtureEmission):
        mt = None if em.mixture_transition is None else _renorm(em.mixture_transition, 1)
        em = GaussianMixtureEmission(_renorm(em.weights, 1), em.means, em.covs, mt)
    dur = model.duration
    if dur is not None:
        dur = DurationSpec(dur.d_min, dur.d_max, _renorm(dur.pmf, -1))
    from dataclasses import replace
    return replace(model, transition=tr, emission=em, duration=dur)


def model_from_dict(doc: dict) -> SwitchingModel:
    """Build and validate a model from a parsed JSON document."""
    _check_keys(doc, {"model_type", "transition", "emission"}, _TOP_KEYS, "model")
    mtype = doc["model_type"]
    if mtype not in MODEL_TYPES:
        raise ModelFileError(f"unknown model_type {mtype!r}; expected one of {sorted(MODEL_TYPES)}")
    _check_keys(doc["transition"], {"initial", "switch"}, set(), "transition")
    transition = TransitionModel(doc["transition"]["initial"], doc["transition"]["switch"])
    try:
        emission = _emission_from_dict(doc["emission"], mtype)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(f"emission: malformed arrays ({exc})") from exc
    duration = None
    if "duration" in doc:
        _check_keys(doc["duration"], {"d_min", "d_max", "pmf"}, set(), "duration")
        d = doc["duration"]
        duration = DurationSpec(int(d["d_min"]), int(d["d_max"]), d["pmf"])
    elif MODEL_TYPES[mtype] in ("dc", "ic", "segmental"):
        raise ModelFileError(f"model_type {mtype!r} needs a duration block")
    if MODEL_TYPES[mtype] == "slgssm" and doc.get("variant", "plain") != "plain" and duration is None:
        raise ModelFileError(f"slgssm variant {doc['variant']!r} needs a duration block")
    model = SwitchingModel(
        MODEL_TYPES[mtype], transition, emission, duration,
        boundary=doc.get("boundary", "relaxed"), end_boundary=doc.get("end_boundary", "relaxed"),
        cut=bool(doc.get("cut", False)), variant=doc.get("variant", "plain"))
    report = validate_model(model)
    if not report.ok:
        raise ModelValidationError(report)
    return _renormalized(model)


def model_type_of(model: SwitchingModel) -> str:
    if model.kind == "hmm":
        return "sarm" if isinstance(model.emission, AutoregressiveEmission) else "hmm_gmm"
    return {"dc": "duration_dc", "ic": "duration_ic"}.get(model.kind, model.kind)


def model_to_dict(model: SwitchingModel) -> dict:
    em = model.emission
    if isinstance(em, GaussianMixtureEmission):
        edoc = {"type": "gmm", "weights": em.weights.tolist(), "means": em.means.tolist(), "covs": em.covs.tolist()}
        if em.mixture_transition is not None:
            edoc["mixture_transition"] = em.mixture_transition.tolist()
    elif isinstance(em, AutoregressiveEmission):
        edoc = {"type": "ar", "coefficients": em.coefficients.tolist(),
                "noise_variance": em.noise_variance.tolist(), "intercepts": em.intercepts.tolist(),
                "initial_law": em.initial_law}
    else:
        edoc = {"type": "lgssm", **{k: getattr(em, k).tolist() for k in ("A", "B", "Q", "R", "mu", "Sigma")}}
    doc = {
        "model_type": model_type_of(model),
        "transition": {"initial": model.transition.initial.tolist(), "switch": model.transition.switch.tolist()},
        "emission": edoc,
    }
    if model.duration is not None:
        d = model.duration
        doc["duration"] = {"d_min": int(d.d_min), "d_max": int(d.d_max), "pmf": d.pmf.tolist()}
    doc.update(boundary=model.boundary, end_boundary=model.end_boundary, cut=bool(model.cut),
               variant=model.variant)
    return doc


def load_model(path) -> SwitchingModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_dict(doc)


def save_model(path, model: SwitchingModel) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- CSV ---------------------------------------------------------------------

def write_posterior_csv(path, gamma: np.ndarray) -> None:
    """Columns ``t, p_0..p_{S-1}``; floats in shortest round-trip form."""
    gamma = np.asarray(gamma, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"p_{s}" for s in range(gamma.shape[1])])
        for t, row in enumerate(gamma):
            w.writerow([t] + [repr(float(x)) for x in row])


def read_posterior_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=float)


def write_segmentation_csv(path, labels, counts=None) -> None:
    """Columns ``t, regime`` (plus ``count`` for duration-count decodings)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "regime"] + (["count"] if counts is not None else []))
        for t, s in enumerate(labels):
            w.writerow([t, int(s)] + ([int(counts[t])] if counts is not None else []))


def read_segmentation_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    j = rows[0].index("regime")
    return np.array([int(r[j]) for r in rows[1:]], dtype=np.int64)
