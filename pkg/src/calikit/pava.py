"""Weighted 1-D isotonic regression (pool adjacent violators) and a min-max oracle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import EmptyInstance, ShapeMismatch


@dataclass(frozen=True, eq=False)
class IsotonicInstance:
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray

    @classmethod
    def make(cls, x, y, w=None) -> "IsotonicInstance":
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        w = np.ones_like(x) if w is None else np.asarray(w, dtype=float).ravel()
        if not (len(x) == len(y) == len(w)):
            raise ShapeMismatch(f"x, y, w lengths differ: {len(x)}, {len(y)}, {len(w)}")
        if len(x) == 0:
            raise EmptyInstance("isotonic instance has no points")
        if (w <= 0).any():
            raise ValueError("weights must be positive")
        return cls(x, y, w)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Monotone piecewise-constant map stored as ordered blocks.

    Block ``b`` covers ``[lower[b], upper[b]]``; a point in the gap between two
    blocks takes the fit of the block to its left.
    """

    lower: np.ndarray
    upper: np.ndarray
    fits: np.ndarray
    weights: np.ndarray
    counts: np.ndarray
    floor_value: Optional[float] = None

    def __post_init__(self):
        n = len(self.fits)
        if n == 0:
            raise EmptyInstance("step function needs at least one block")
        for arr in (self.lower, self.upper, self.weights, self.counts):
            if len(arr) != n:
                raise ShapeMismatch("block arrays must have equal length")
        if (self.upper < self.lower).any():
            raise ValueError("block upper edge below lower edge")
        if n > 1 and (self.lower[1:] < self.upper[:-1]).any():
            raise ValueError("blocks overlap or are out of order")
        if n > 1 and (np.diff(self.fits) < 0).any():
            raise ValueError("block fits must be non-decreasing")

    @property
    def n_blocks(self) -> int:
        return len(self.fits)

    @property
    def floor(self) -> float:
        return float(self.fits[0]) if self.floor_value is None else float(self.floor_value)

    def block_index(self, x) -> np.ndarray:
        """Index of the block with the largest lower edge <= x; -1 below the first."""
        return np.searchsorted(self.lower, np.asarray(x, dtype=float), side="right") - 1

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = self.block_index(x)
        out = self.fits[np.clip(idx, 0, None)]
        return np.where(idx < 0, self.floor, out)

    def with_fits(self, fits) -> "StepFunction":
        return StepFunction(self.lower, self.upper, np.asarray(fits, dtype=float),
                            self.weights, self.counts, self.floor_value)


def step_eval(f: StepFunction, x) -> float | np.ndarray:
    out = f(x)
    return float(out) if np.ndim(out) == 0 else out


def pool_ties(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Sort by x and merge equal x values into single weighted points."""
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    ux, start, counts = np.unique(xs, return_index=True, return_counts=True)
    wsum = np.add.reduceat(ws, start)
    ysum = np.add.reduceat(ws * ys, start)
    return ux, ysum / wsum, wsum, counts


def _pava_blocks(y: np.ndarray, w: np.ndarray):
    """Stack-based PAVA on already ordered points; returns block start indices and fits."""
    starts: list[int] = []
    sums: list[float] = []
    weights: list[float] = []
    for i in range(len(y)):
        starts.append(i)
        sums.append(float(w[i] * y[i]))
        weights.append(float(w[i]))
        while len(starts) > 1 and sums[-2] * weights[-1] >= sums[-1] * weights[-2]:
            # merge when previous mean >= current mean (pools equal neighbours too)
            s, wt = sums.pop(), weights.pop()
            starts.pop()
            sums[-1] += s
            weights[-1] += wt
    sums_a = np.asarray(sums)
    weights_a = np.asarray(weights)
    return np.asarray(starts, dtype=np.int64), sums_a / weights_a, weights_a


def pava_fit(instance: IsotonicInstance, floor_value: Optional[float] = None) -> StepFunction:
    """Least-squares isotonic fit; the same fit minimizes any proper scoring rule."""
    ux, uy, uw, ucount = pool_ties(instance.x, instance.y, instance.w)
    starts, fits, weights = _pava_blocks(uy, uw)
    ends = np.append(starts[1:], len(ux)) - 1
    counts = np.add.reduceat(ucount, starts)
    # block mean must reproduce the pooled targets it absorbed
    check = np.add.reduceat(uw * uy, starts)
    if not np.allclose(check, fits * weights, rtol=1e-9, atol=1e-9):
        raise AssertionError("PAVA block fits do not match member means")
    return StepFunction(ux[starts], ux[ends], fits, weights, counts.astype(np.int64), floor_value)


def pava_values(instance: IsotonicInstance) -> np.ndarray:
    """Fitted value at each input point, in input order."""
    return pava_fit(instance)(instance.x)


def minmax_oracle(instance: IsotonicInstance) -> np.ndarray:
    """Brute-force min over right ends of max over left ends of window means.

    Points are ordered by x (stable); ties are not pooled, so use distinct x
    when comparing with :func:`pava_fit`. Values come back in input order.
    """
    order = np.argsort(instance.x, kind="stable")
    y, w = instance.y[order], instance.w[order]
    n = len(y)
    if n > 2000:
        raise ValueError("minmax_oracle is a brute-force check; n must be <= 2000")
    cw = np.concatenate([[0.0], np.cumsum(w)])
    cwy = np.concatenate([[0.0], np.cumsum(w * y)])
    out = np.empty(n)
    for i in range(n):
        best = np.inf
        for hi in range(i, n):
            worst = -np.inf
            for lo in range(i + 1):
                avg = (cwy[hi + 1] - cwy[lo]) / (cw[hi + 1] - cw[lo])
                if avg > worst:
                    worst = avg
            if worst < best:
                best = worst
        out[order[i]] = best
    return out
