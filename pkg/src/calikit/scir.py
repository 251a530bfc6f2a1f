"""Sorted cumulative isotonic regression (SCIR).

Every calibration row contributes k-1 points ``(q, r, y)``: the cumulative
probability of its top-``r`` classes, the rank ``r``, and whether the true
label is among those top ``r``. A bivariate isotonic fit over the coordinate
order ``(q, r) <= (s, t)`` gives a cumulative calibration map; class
probabilities are its successive differences.

The bivariate fit uses the recursive maximal-upper-set partition: find the
upper set maximizing ``sum w (y - mean)``, split there (the split is a
projection pair, so both halves can be solved independently) and stop when
no upper set has positive weight, assigning the mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .core import CalibrationDataset, RecursionDepthExceeded, ShapeMismatch

# cumulative sums closer than this are treated as the same grid coordinate
Q_DECIMALS = 12


@dataclass(frozen=True, eq=False)
class CumulativeSet:
    """Canonical cumulative points, sorted by (q, r) with duplicates merged."""

    q: np.ndarray
    r: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __len__(self) -> int:
        return len(self.q)

    @classmethod
    def canonical(cls, q, r, y, w=None) -> "CumulativeSet":
        q = np.round(np.asarray(q, dtype=float), Q_DECIMALS)
        r = np.asarray(r, dtype=np.int64)
        y = np.asarray(y, dtype=float)
        w = np.ones_like(q) if w is None else np.asarray(w, dtype=float)
        order = np.lexsort((r, q))
        q, r, y, w = q[order], r[order], y[order], w[order]
        new = np.ones(len(q), dtype=bool)
        new[1:] = (q[1:] != q[:-1]) | (r[1:] != r[:-1])
        starts = np.nonzero(new)[0]
        ws = np.add.reduceat(w, starts)
        ys = np.add.reduceat(w * y, starts) / ws
        return cls(q[starts], r[starts], ys, ws)


def sorted_cumulative(probs: np.ndarray):
    """Per-row descending order (ties by class index) and cumulative sums."""
    order = np.argsort(-probs, axis=1, kind="stable")
    cums = np.cumsum(np.take_along_axis(probs, order, axis=1), axis=1)
    return order, cums


def build_cumulative_set(dataset: CalibrationDataset) -> CumulativeSet:
    m, k = dataset.probs.shape
    order, cums = sorted_cumulative(dataset.probs)
    hits = np.cumsum(order == dataset.labels[:, None], axis=1)
    ranks = np.broadcast_to(np.arange(1, k), (m, k - 1))
    return CumulativeSet.canonical(
        cums[:, :k - 1].ravel(), ranks.ravel(), hits[:, :k - 1].ravel().astype(float)
    )


# ---------------------------------------------------------------- upper-set DP


@numba.njit(cache=True)
def _upper_set_dp(ranks, y, w, c, include):
    """Fill ``include`` and return max H over upper sets of the (index, rank) grid.

    Column ``c + 1`` is the unconstrained state (no point is forced in), so the
    trace starts there.
    """
    n = ranks.shape[0]
    tw = 0.0
    twy = 0.0
    for i in range(n):
        tw += w[i]
        twy += w[i] * y[i]
    b = twy / tw
    nxt = np.zeros(c + 2)
    cur = np.zeros(c + 2)
    for i in range(n - 1, -1, -1):
        v = w[i] * (y[i] - b)
        l = ranks[i]
        for j in range(1, c + 2):
            if j <= l:
                cur[j] = nxt[j] + v
                include[i, j] = True
            else:
                alt = nxt[l] + v
                if alt > nxt[j]:
                    cur[j] = alt
                    include[i, j] = True
                else:
                    cur[j] = nxt[j]
                    include[i, j] = False
        for j in range(1, c + 2):
            nxt[j] = cur[j]
    return nxt[c + 1]


@numba.njit(cache=True)
def _trace(ranks, include, c, out):
    j = c + 1
    for i in range(ranks.shape[0]):
        if include[i, j]:
            out[i] = True
            if j > ranks[i]:
                j = ranks[i]
        else:
            out[i] = False


def maximal_upper_set(ranks, y, w=None, c: Optional[int] = None):
    """Upper set of the grid maximizing ``sum_{i in U} w_i (y_i - mean)``.

    Points must be in canonical (q, r) order; only their positions and ranks
    matter. Returns ``(mask, max_h)``.
    """
    ranks = np.asarray(ranks, dtype=np.int64)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    c = int(ranks.max()) if c is None else int(c)
    include = np.zeros((len(ranks), c + 2), dtype=np.bool_)
    h = _upper_set_dp(ranks, y, w, c, include)
    mask = np.zeros(len(ranks), dtype=np.bool_)
    _trace(ranks, include, c, mask)
    return mask, float(h)


@numba.njit(cache=True)
def _solve(ranks, y, w, c, tol, fits):
    n = ranks.shape[0]
    idx = np.arange(n)
    buf = np.empty(n, dtype=np.int64)
    stack_lo = np.empty(n + 1, dtype=np.int64)
    stack_hi = np.empty(n + 1, dtype=np.int64)
    top = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    top = 1
    calls = 0
    while top > 0:
        top -= 1
        lo = stack_lo[top]
        hi = stack_hi[top]
        calls += 1
        if calls > 2 * n + 1:
            return -1
        sub = idx[lo:hi]
        sr = ranks[sub]
        sy = y[sub]
        sw = w[sub]
        tw = 0.0
        twy = 0.0
        for t in range(sub.shape[0]):
            tw += sw[t]
            twy += sw[t] * sy[t]
        avg = twy / tw
        split = False
        mask = np.zeros(sub.shape[0], dtype=np.bool_)
        if sub.shape[0] > 1:
            include = np.zeros((sub.shape[0], c + 2), dtype=np.bool_)
            h = _upper_set_dp(sr, sy, sw, c, include)
            if h > tol * tw:
                _trace(sr, include, c, mask)
                nu = 0
                for t in range(mask.shape[0]):
                    if mask[t]:
                        nu += 1
                split = 0 < nu < mask.shape[0]
        if not split:
            for t in range(sub.shape[0]):
                fits[sub[t]] = avg
            continue
        # stable partition: lower set first, then the upper set
        p = 0
        for t in range(sub.shape[0]):
            if not mask[t]:
                buf[p] = sub[t]
                p += 1
        mid = lo + p
        for t in range(sub.shape[0]):
            if mask[t]:
                buf[p] = sub[t]
                p += 1
        for t in range(sub.shape[0]):
            idx[lo + t] = buf[t]
        stack_lo[top] = lo
        stack_hi[top] = mid
        top += 1
        stack_lo[top] = mid
        stack_hi[top] = hi
        top += 1
    return calls


def fit_bivariate_isotonic(points: CumulativeSet, tol: float = 1e-12) -> np.ndarray:
    """Weighted least-squares isotonic fit under the (q, r) coordinate order."""
    n = len(points)
    fits = np.empty(n)
    if n == 0:
        return fits
    c = int(points.r.max())
    calls = _solve(points.r.astype(np.int64), points.y.astype(float),
                   points.w.astype(float), c, tol, fits)
    if calls < 0:
        raise RecursionDepthExceeded("partition recursion exceeded its bound")
    return fits


# --------------------------------------------------------------- prediction grid


def build_prediction_grid(points: CumulativeSet, fits: np.ndarray, c: int) -> np.ndarray:
    """Table ``S`` of shape (N+1, c): S[i, j-1] = max fit over points 1..i of rank <= j.

    Row 0 holds the minimum fit, used for queries dominating no training point.
    """
    fits = np.asarray(fits, dtype=float)
    lo = fits.min()
    ranks = np.arange(1, c + 1)
    vals = np.where(points.r[:, None] <= ranks[None, :], fits[:, None], lo)
    grid = np.empty((len(fits) + 1, c))
    grid[0] = lo
    grid[1:] = np.maximum.accumulate(vals, axis=0)
    return grid


def grid_lookup(q_train: np.ndarray, grid: np.ndarray, q, r) -> np.ndarray:
    """Evaluate the fitted cumulative map at query points ``(q, r)``."""
    i = np.searchsorted(q_train, np.asarray(q, dtype=float), side="right")
    return grid[i, np.asarray(r) - 1]


# ------------------------------------------------------------------------ model


@dataclass(frozen=True, eq=False)
class SCIRModel:
    points: CumulativeSet
    fits: np.ndarray
    k: int
    eps: float = 1e-6
    grid: Optional[np.ndarray] = None

    @classmethod
    def build(cls, points: CumulativeSet, fits, k: int, eps: float = 1e-6) -> "SCIRModel":
        fits = np.asarray(fits, dtype=float)
        return cls(points, fits, k, eps, build_prediction_grid(points, fits, k - 1))

    def cumulative(self, q, r) -> np.ndarray:
        # queries get the same rounding as the training coordinates
        q = np.round(np.asarray(q, dtype=float), Q_DECIMALS)
        return grid_lookup(self.points.q, self.grid, q, r)


def fit_scir(dataset: CalibrationDataset, eps: float = 1e-6) -> SCIRModel:
    pts = build_cumulative_set(dataset)
    return SCIRModel.build(pts, fit_bivariate_isotonic(pts), dataset.k, eps)


def cumulative_profile(model: SCIRModel, probs: np.ndarray):
    """Sorted order and the monotone cumulative fits G[:, r-1] for r = 1..k-1."""
    k = model.k
    order, cums = sorted_cumulative(probs)
    G = np.empty((probs.shape[0], k - 1))
    for r in range(1, k):
        G[:, r - 1] = model.cumulative(cums[:, r - 1], r)
    G = np.maximum.accumulate(np.clip(G, 0.0, 1.0), axis=1)
    return order, G


def predict_scir(model: SCIRModel, probs: np.ndarray, raw: bool = False) -> np.ndarray:
    """Calibrated probabilities from differences of the cumulative fit.

    With ``raw=True`` the epsilon floor and renormalization are skipped.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[1] != model.k:
        raise ShapeMismatch(f"model fitted with k={model.k}, got shape {probs.shape}")
    m = probs.shape[0]
    order, G = cumulative_profile(model, probs)
    full = np.concatenate([np.zeros((m, 1)), G, np.ones((m, 1))], axis=1)
    diffs = np.diff(full, axis=1)
    out = np.empty_like(diffs)
    np.put_along_axis(out, order, diffs, axis=1)
    if raw:
        return out
    out = out + model.eps
    return out / out.sum(axis=1, keepdims=True)
