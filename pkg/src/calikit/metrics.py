"""Scoring rules, binned calibration errors and the consistency-resampling test.

Conventions: 15 bins; equal-width bins are right-closed ``(lo, hi]`` with the
first bin ``[0, hi]``; argmax ties go to the lowest class index; Brier score
is averaged over all m*k entries.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import PROB_CLAMP, InvalidResampleCount, ShapeMismatch, onehot

N_BINS = 15


@dataclass(frozen=True)
class ReliabilityRow:
    lower: float
    upper: float
    mean_confidence: Optional[float]
    accuracy: Optional[float]
    count: int


def _check(probs, labels):
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.ndim != 1 or probs.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"probs {probs.shape} and labels {labels.shape} disagree")
    return probs, labels


def nll(probs, labels) -> float:
    probs, labels = _check(probs, labels)
    pt = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(pt, PROB_CLAMP)).mean())


def brier(probs, labels) -> float:
    probs, labels = _check(probs, labels)
    return float(((probs - onehot(labels, probs.shape[1])) ** 2).mean())


def accuracy(probs, labels) -> float:
    probs, labels = _check(probs, labels)
    return float((probs.argmax(axis=1) == labels).mean())


def bin_edges(n_bins: int = N_BINS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_bins + 1)


def bin_index(values: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Equal-width bin of each value under the ``(lo, hi]`` convention."""
    interior = bin_edges(n_bins)[1:-1]
    return np.searchsorted(interior, values, side="left")


def binary_ece(conf: np.ndarray, hit: np.ndarray, n_bins: int = N_BINS) -> float:
    if len(conf) == 0:
        return 0.0
    idx = bin_index(conf, n_bins)
    cnt = np.bincount(idx, minlength=n_bins)
    sc = np.bincount(idx, weights=conf, minlength=n_bins)
    sh = np.bincount(idx, weights=hit.astype(float), minlength=n_bins)
    occ = cnt > 0
    return float(np.abs(sh[occ] - sc[occ]).sum() / len(conf))


def confidence(probs: np.ndarray, labels: np.ndarray):
    top = probs.argmax(axis=1)
    return probs[np.arange(len(labels)), top], (top == labels)


def conf_ece(probs, labels, n_bins: int = N_BINS) -> float:
    probs, labels = _check(probs, labels)
    conf, hit = confidence(probs, labels)
    return binary_ece(conf, hit, n_bins)


def cw_ece(probs, labels, n_bins: int = N_BINS) -> float:
    probs, labels = _check(probs, labels)
    k = probs.shape[1]
    return float(np.mean([binary_ece(probs[:, l], labels == l, n_bins) for l in range(k)]))


def equal_mass_ece(conf: np.ndarray, hit: np.ndarray, n_bins: int = N_BINS) -> float:
    """ECE over equal-count bins of the sorted values; leading bins take the remainder."""
    n = len(conf)
    order = np.argsort(conf, kind="stable")
    c, h = conf[order], hit[order].astype(float)
    base, rem = divmod(n, n_bins)
    sizes = np.array([base + (1 if b < rem else 0) for b in range(n_bins)])
    total = 0.0
    start = 0
    for s in sizes:
        if s:
            total += abs(h[start:start + s].sum() - c[start:start + s].sum())
        start += s
    return total / n


def tece(probs, labels, n_bins: int = N_BINS, threshold: Optional[float] = None) -> float:
    """Thresholded equal-mass class-wise ECE; classes with no survivors are skipped."""
    probs, labels = _check(probs, labels)
    k = probs.shape[1]
    thr = 1.0 / k if threshold is None else threshold
    errs = []
    for l in range(k):
        keep = probs[:, l] > thr
        if keep.any():
            errs.append(equal_mass_ece(probs[keep, l], labels[keep] == l, n_bins))
    if not errs:
        warnings.warn("TECE: no probability exceeds the threshold; returning 0", RuntimeWarning)
        return 0.0
    return float(np.mean(errs))


def reliability_table(probs, labels, n_bins: int = N_BINS) -> list[ReliabilityRow]:
    probs, labels = _check(probs, labels)
    conf, hit = confidence(probs, labels)
    idx = bin_index(conf, n_bins)
    edges = bin_edges(n_bins)
    rows = []
    for b in range(n_bins):
        sel = idx == b
        n = int(sel.sum())
        rows.append(ReliabilityRow(
            float(edges[b]), float(edges[b + 1]),
            float(conf[sel].mean()) if n else None,
            float(hit[sel].mean()) if n else None,
            n,
        ))
    return rows


def ece_from_table(rows: list[ReliabilityRow]) -> float:
    m = sum(r.count for r in rows)
    return float(sum(r.count * abs(r.accuracy - r.mean_confidence)
                     for r in rows if r.count) / m)


def resample_labels(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cum[:, -1]
    lab = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(lab, probs.shape[1] - 1)


def consistency_pvalue(probs, labels, statistic: Callable = conf_ece,
                       B: int = 1000, seed: Optional[int] = 0) -> float:
    """Resampling p-value of ``statistic`` under the null that ``probs`` is calibrated."""
    if B < 1:
        raise InvalidResampleCount(f"need at least one resample, got B={B}")
    probs, labels = _check(probs, labels)
    observed = statistic(probs, labels)
    children = np.random.SeedSequence(seed).spawn(B)
    exceed = 0
    for ss in children:
        fake = resample_labels(probs, np.random.Generator(np.random.PCG64(ss)))
        if statistic(probs, fake) >= observed:
            exceed += 1
    return (1 + exceed) / (B + 1)


METRICS: dict[str, Callable] = {
    "accuracy": accuracy,
    "nll": nll,
    "brier": brier,
    "conf-ece": conf_ece,
    "cw-ece": cw_ece,
    "tece": tece,
}


def evaluate(probs, labels, names=("nll", "brier", "conf-ece", "cw-ece", "tece"),
             n_bins: int = N_BINS, pvalue_B: int = 1000, seed: Optional[int] = 0) -> dict:
    out = {}
    for name in names:
        if name == "pvalue":
            out[name] = consistency_pvalue(probs, labels, lambda p, y: conf_ece(p, y, n_bins),
                                           B=pvalue_B, seed=seed)
        elif name in ("conf-ece", "cw-ece", "tece"):
            out[name] = METRICS[name](probs, labels, n_bins)
        elif name in METRICS:
            out[name] = METRICS[name](probs, labels)
        else:
            raise KeyError(f"unknown metric {name!r}")
    return out
