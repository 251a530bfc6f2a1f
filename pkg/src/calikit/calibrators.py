"""Uniform fit/predict entry points over all calibration methods, plus IR-OvR."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import (
    CalibrationDataset,
    FittedCalibrator,
    ShapeMismatch,
    check_matrix,
    logits_from_probs,
    normalize_rows,
    probs_from_logits,
)
from .flat_iso import NAFIRHyper, fit_fir, fit_nafir, predict_fir, predict_nafir
from .pava import IsotonicInstance, StepFunction, pava_fit
from .scaling import fit_temperature, fit_vector_scaling, predict_scaled
from .scir import fit_scir, predict_scir


@dataclass(frozen=True, eq=False)
class OvRModel:
    steps: tuple[StepFunction, ...]


def fit_ir_ovr(dataset: CalibrationDataset) -> OvRModel:
    return OvRModel(tuple(
        pava_fit(IsotonicInstance.make(dataset.probs[:, l], dataset.labels == l))
        for l in range(dataset.k)
    ))


def predict_ir_ovr(model: OvRModel, probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape[1] != len(model.steps):
        raise ShapeMismatch(f"model has k={len(model.steps)}, got k={probs.shape[1]}")
    raw = np.column_stack([s(probs[:, l]) for l, s in enumerate(model.steps)])
    return normalize_rows(raw)


def fit(method: str, dataset: CalibrationDataset, seed: Optional[int] = 0,
        nafir: Optional[NAFIRHyper] = None, scir_eps: float = 1e-6,
        vs_lr: float = 0.01, vs_iters: int = 2000) -> FittedCalibrator:
    t0 = time.perf_counter()
    hyper: dict = {}
    if method == "fir":
        payload = fit_fir(dataset)
    elif method == "na-fir":
        h = nafir or NAFIRHyper()
        payload = fit_nafir(dataset, h, seed=seed)
        hyper = asdict(h)
    elif method == "scir":
        payload = fit_scir(dataset, eps=scir_eps)
        hyper = {"eps": scir_eps}
    elif method == "ts":
        payload = fit_temperature(dataset)
    elif method == "vs":
        payload = fit_vector_scaling(dataset, lr=vs_lr, iters=vs_iters)
        hyper = {"lr": vs_lr, "iters": vs_iters}
    elif method == "ir-ovr":
        payload = fit_ir_ovr(dataset)
    else:
        raise KeyError(f"unknown method {method!r}")
    meta = {"seed": seed, "hyperparameters": hyper,
            "fit_seconds": time.perf_counter() - t0}
    return FittedCalibrator(method, payload, dataset.k, meta)


def predict(cal: FittedCalibrator, probs=None, logits=None) -> np.ndarray:
    """Calibrated probabilities. Scaling methods use ``logits`` when given, else log-probs."""
    if probs is None and logits is None:
        raise ValueError("need probs or logits")
    if probs is not None:
        probs = check_matrix(probs, "probs")
        cal.check_k(probs.shape[1])
    if logits is not None:
        logits = check_matrix(logits, "logits")
        cal.check_k(logits.shape[1])
    if cal.tag in ("ts", "vs"):
        z = logits if logits is not None else logits_from_probs(probs)
        return predict_scaled(cal.payload, z, cal.k)
    if probs is None:
        probs = probs_from_logits(logits)
    if cal.tag == "fir":
        return predict_fir(cal.payload, probs, cal.k)
    if cal.tag == "na-fir":
        return predict_nafir(cal.payload, probs, cal.k)
    if cal.tag == "scir":
        return predict_scir(cal.payload, probs)
    return predict_ir_ovr(cal.payload, probs)
