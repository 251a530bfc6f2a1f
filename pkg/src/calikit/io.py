"""Prediction CSV files and versioned JSON model files."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .calibrators import OvRModel
from .core import CalibrationError, FittedCalibrator
from .flat_iso import FIRModel, NAFIRHyper, NAFIRModel
from .pava import StepFunction
from .scaling import TSModel, VSModel
from .scir import CumulativeSet, SCIRModel

FORMAT_VERSION = 1


class CSVFormatError(CalibrationError):
    pass


class ModelFormatError(CalibrationError):
    pass


# ------------------------------------------------------------------------ CSV


def read_matrix_csv(path, prefix: str = "p", label: str = "optional"):
    """Read a ``p0,...,p{k-1}[,label]`` file. ``label`` is optional|required|forbidden.

    Returns ``(matrix, labels_or_None)``. Error rows are reported as 1-based
    file lines.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CSVFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_label = bool(header) and header[-1] == "label"
    cols = header[:-1] if has_label else header
    if cols != [f"{prefix}{i}" for i in range(len(cols))] or len(cols) < 2:
        raise CSVFormatError(f"{path}: header must be {prefix}0,{prefix}1,...[,label]")
    if label == "required" and not has_label:
        raise CSVFormatError(f"{path}: missing label column")
    if label == "forbidden" and has_label:
        raise CSVFormatError(f"{path}: unexpected label column")
    width = len(header)
    body = rows[1:]
    mat = np.empty((len(body), len(cols)))
    labels = np.empty(len(body), dtype=np.int64) if has_label else None
    for n, row in enumerate(body):
        line = n + 2
        if len(row) != width:
            raise CSVFormatError(f"{path}: line {line} has {len(row)} fields, expected {width}",
                                 row=n)
        try:
            mat[n] = [float(v) for v in row[:len(cols)]]
            if has_label:
                lab = float(row[-1])
                if lab != int(lab):
                    raise ValueError(row[-1])
                labels[n] = int(lab)
        except (ValueError, OverflowError) as exc:
            raise CSVFormatError(f"{path}: line {line}: unparseable value {exc}", row=n) from exc
    return mat, labels


def write_matrix_csv(path, matrix: np.ndarray, labels: Optional[np.ndarray] = None,
                     prefix: str = "p") -> None:
    k = matrix.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join([f"{prefix}{i}" for i in range(k)]
                          + (["label"] if labels is not None else [])) + "\n")
        for i, row in enumerate(matrix):
            cells = [format(float(v), ".17g") for v in row]
            if labels is not None:
                cells.append(str(int(labels[i])))
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------- models


def _step_to_dict(s: StepFunction) -> dict:
    return {
        "lower": s.lower.tolist(), "upper": s.upper.tolist(), "fits": s.fits.tolist(),
        "weights": np.asarray(s.weights, dtype=float).tolist(),
        "counts": np.asarray(s.counts, dtype=np.int64).tolist(),
        "floor_value": s.floor_value,
    }


def _step_from_dict(d: dict) -> StepFunction:
    return StepFunction(
        np.array(d["lower"], dtype=float), np.array(d["upper"], dtype=float),
        np.array(d["fits"], dtype=float), np.array(d["weights"], dtype=float),
        np.array(d["counts"], dtype=np.int64), d.get("floor_value"),
    )


def model_to_dict(cal: FittedCalibrator) -> dict:
    p = cal.payload
    if cal.tag == "fir":
        payload = _step_to_dict(p.step)
    elif cal.tag == "na-fir":
        payload = _step_to_dict(p.step)
        payload.update(objective=p.objective, initial_objective=p.initial_objective,
                       iterations_run=p.iterations_run, accepted=p.accepted)
    elif cal.tag == "scir":
        pts = p.points
        payload = {"q": pts.q.tolist(), "r": pts.r.tolist(), "w": pts.w.tolist(),
                   "y": pts.y.tolist(), "fits": p.fits.tolist(), "eps": p.eps}
    elif cal.tag == "ts":
        payload = {"T": p.T}
    elif cal.tag == "vs":
        payload = {"scale": p.scale.tolist(), "bias": p.bias.tolist()}
    else:
        payload = {"steps": [_step_to_dict(s) for s in p.steps]}
    return {
        "format_version": FORMAT_VERSION,
        "method": cal.tag,
        "k": cal.k,
        "hyperparameters": cal.metadata.get("hyperparameters", {}),
        "metadata": {k: v for k, v in cal.metadata.items() if k != "hyperparameters"},
        "payload": payload,
    }


def model_from_dict(doc: dict) -> FittedCalibrator:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format {doc.get('format_version')!r}")
    tag, k, p = doc["method"], int(doc["k"]), doc["payload"]
    hyper = doc.get("hyperparameters", {})
    meta = dict(doc.get("metadata", {}), hyperparameters=hyper)
    if tag == "fir":
        payload = FIRModel(_step_from_dict(p))
    elif tag == "na-fir":
        payload = NAFIRModel(step=_step_from_dict(p), hyper=NAFIRHyper(**hyper),
                             seed=meta.get("seed"), objective=p["objective"],
                             initial_objective=p["initial_objective"],
                             iterations_run=p["iterations_run"], accepted=p["accepted"])
    elif tag == "scir":
        pts = CumulativeSet(np.array(p["q"], dtype=float), np.array(p["r"], dtype=np.int64),
                            np.array(p["y"], dtype=float), np.array(p["w"], dtype=float))
        payload = SCIRModel.build(pts, np.array(p["fits"], dtype=float), k, float(p["eps"]))
    elif tag == "ts":
        payload = TSModel(float(p["T"]))
    elif tag == "vs":
        payload = VSModel(np.array(p["scale"], dtype=float), np.array(p["bias"], dtype=float))
    elif tag == "ir-ovr":
        payload = OvRModel(tuple(_step_from_dict(s) for s in p["steps"]))
    else:
        raise ModelFormatError(f"unknown method {tag!r} in model file")
    return FittedCalibrator(tag, payload, k, meta)


def save_model(cal: FittedCalibrator, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(cal)))


def load_model(path) -> FittedCalibrator:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a JSON model file") from exc
    return model_from_dict(doc)
