"""Temperature scaling and vector scaling baselines."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import log_softmax

from .core import (
    CalibrationDataset,
    NonPositiveT,
    ShapeMismatch,
    check_matrix,
    dataset_logits,
    probs_from_logits,
)

log = logging.getLogger(__name__)

T_BOUNDS = (0.05, 20.0)
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TSModel:
    T: float


@dataclass(frozen=True, eq=False)
class VSModel:
    scale: np.ndarray
    bias: np.ndarray


def ts_nll(logits, labels, T: float) -> float:
    if not T > 0:
        raise NonPositiveT(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=float) / T
    lp = log_softmax(z, axis=1)
    return float(-lp[np.arange(len(labels)), labels].mean())


def golden_section(f, lo: float, hi: float, tol: float = 1e-4) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    # keep the bound itself when the objective is monotone toward it
    cands = [(f(x), x), (f(lo), lo), (f(hi), hi)]
    return min(cands, key=lambda t: t[0])[1]


def grid_scan_temperature(logits, labels, n: int = 400,
                          bounds: tuple[float, float] = T_BOUNDS) -> tuple[float, float]:
    """Best (T, nll) over a log-spaced grid; a cross-check for :func:`fit_temperature`."""
    grid = np.geomspace(bounds[0], bounds[1], n)
    vals = [ts_nll(logits, labels, t) for t in grid]
    i = int(np.argmin(vals))
    return float(grid[i]), float(vals[i])


def fit_temperature(dataset: CalibrationDataset, tol: float = 1e-4) -> TSModel:
    z = dataset_logits(dataset)
    T = golden_section(lambda t: ts_nll(z, dataset.labels, t), *T_BOUNDS, tol=tol)
    return TSModel(float(T))


# ------------------------------------------------------------- vector scaling


def vs_loss_grad(z: np.ndarray, labels: np.ndarray, scale: np.ndarray, bias: np.ndarray):
    """Mean NLL of softmax(scale * z + bias) and its gradients."""
    m = z.shape[0]
    lp = log_softmax(z * scale + bias, axis=1)
    loss = -lp[np.arange(m), labels].mean()
    resid = np.exp(lp)
    resid[np.arange(m), labels] -= 1.0
    resid /= m
    return float(loss), (resid * z).sum(axis=0), resid.sum(axis=0)


def fit_vector_scaling(dataset: CalibrationDataset, lr: float = 0.01,
                       iters: int = 2000) -> VSModel:
    """Full-batch gradient descent from the identity map, halving the step on any increase."""
    z = dataset_logits(dataset)
    k = dataset.k
    if dataset.m < k:
        log.warning("vector scaling with m=%d < k=%d is poorly determined", dataset.m, k)
    scale, bias = np.ones(k), np.zeros(k)
    loss, gs, gb = vs_loss_grad(z, dataset.labels, scale, bias)
    step = lr
    for _ in range(iters):
        s_new, b_new = scale - step * gs, bias - step * gb
        new_loss, new_gs, new_gb = vs_loss_grad(z, dataset.labels, s_new, b_new)
        if new_loss > loss:
            step *= 0.5
            if step < 1e-12:
                break
            continue
        scale, bias, loss, gs, gb = s_new, b_new, new_loss, new_gs, new_gb
    return VSModel(scale, bias)


def predict_scaled(model: Union[TSModel, VSModel], logits,
                   k: Optional[int] = None) -> np.ndarray:
    z = check_matrix(logits, "logits")
    if k is not None and z.shape[1] != k:
        raise ShapeMismatch(f"model fitted with k={k}, got k={z.shape[1]}")
    if isinstance(model, TSModel):
        return probs_from_logits(z / model.T)
    if z.shape[1] != len(model.scale):
        raise ShapeMismatch(f"model has k={len(model.scale)}, got k={z.shape[1]}")
    return probs_from_logits(z * model.scale + model.bias)
