"""Flattened isotonic calibration (FIR) and its normalization-aware variant (NA-FIR).

NA-FIR keeps the block structure found by PAVA on the flattened (probability,
hit) pairs and moves block values with a Metropolis chain that maximizes the
likelihood of the *normalized* outputs. The likelihood is kept in
sufficient-statistic form so that a single-block move costs O(rows touching
that block) instead of O(m * k).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy import sparse

from .core import (
    PROB_CLAMP,
    CalibrationDataset,
    NonPositiveFit,
    ShapeMismatch,
    ThresholdLargerThanBlock,
    normalize_rows,
)
from .pava import IsotonicInstance, StepFunction, pava_fit

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FlattenedSet:
    x: np.ndarray
    y: np.ndarray
    sample: np.ndarray
    cls: np.ndarray


def flatten(dataset: CalibrationDataset) -> FlattenedSet:
    m, k = dataset.probs.shape
    return FlattenedSet(
        x=dataset.probs.ravel().copy(),
        y=dataset.onehot().ravel(),
        sample=np.repeat(np.arange(m), k),
        cls=np.tile(np.arange(k), m),
    )


# --------------------------------------------------------------------------- FIR


@dataclass(frozen=True, eq=False)
class FIRModel:
    step: StepFunction


def fit_fir(dataset: CalibrationDataset) -> FIRModel:
    flat = flatten(dataset)
    return FIRModel(pava_fit(IsotonicInstance.make(flat.x, flat.y)))


def apply_step_normalized(step: StepFunction, probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    return normalize_rows(step(probs))


def predict_fir(model: FIRModel, probs: np.ndarray, k: Optional[int] = None) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if k is not None and probs.shape[1] != k:
        raise ShapeMismatch(f"model fitted with k={k}, got k={probs.shape[1]}")
    return apply_step_normalized(model.step, probs)


# ---------------------------------------------------------------- block structure


@dataclass(frozen=True, eq=False)
class BlockStructure:
    """Blocks over the sorted flattened points.

    Block ``b`` owns ``points[starts[b]:starts[b] + counts[b]]``.
    """

    lower: np.ndarray
    upper: np.ndarray
    fits: np.ndarray
    counts: np.ndarray
    starts: np.ndarray
    points: np.ndarray

    @property
    def n_blocks(self) -> int:
        return len(self.fits)

    @classmethod
    def from_step(cls, step: StepFunction, x: np.ndarray) -> "BlockStructure":
        points = np.sort(np.asarray(x, dtype=float), kind="stable")
        counts = np.asarray(step.counts, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        if counts.sum() != len(points):
            raise ShapeMismatch("step function counts do not cover the points")
        return cls(step.lower.copy(), step.upper.copy(), step.fits.astype(float).copy(),
                   counts, starts, points)

    def to_step(self, fits: Optional[np.ndarray] = None) -> StepFunction:
        fits = self.fits if fits is None else np.asarray(fits, dtype=float)
        return StepFunction(self.lower, self.upper, fits, self.counts.astype(float),
                            self.counts)


def _split_one(points: np.ndarray, pieces: int) -> list[int]:
    """Cut offsets splitting ``points`` into ``pieces`` near-equal runs.

    Leading runs absorb the remainder. Cuts never separate equal values.
    """
    n = len(points)
    base, rem = divmod(n, pieces)
    cuts = []
    pos = 0
    for p in range(pieces - 1):
        pos += base + (1 if p < rem else 0)
        c = pos
        while c < n and points[c - 1] == points[c]:
            c += 1
        if c >= n or (cuts and c <= cuts[-1]):
            continue
        cuts.append(c)
    return cuts


def split_blocks(blocks: BlockStructure, min_blocks: int,
                 split_size_threshold: int) -> BlockStructure:
    """Subdivide the largest blocks into equal-mass pieces until ``min_blocks`` exist.

    Sub-blocks inherit their parent's fit, so any objective of the fitted values
    is unchanged.
    """
    if min_blocks < 0:
        raise ValueError("min_blocks must be >= 0")
    if min_blocks == 0 or blocks.n_blocks >= min_blocks:
        return blocks
    t = max(int(split_size_threshold), 1)
    if t > blocks.counts.max():
        raise ThresholdLargerThanBlock(
            f"split threshold {t} exceeds every block population "
            f"(largest {int(blocks.counts.max())})"
        )
    segs = [[int(s), int(c), float(f)]
            for s, c, f in zip(blocks.starts, blocks.counts, blocks.fits)]
    pts = blocks.points
    unsplittable: set[int] = set()
    while len(segs) < min_blocks:
        cand = [i for i, (s, c, _) in enumerate(segs)
                if c >= 2 * t and s not in unsplittable]
        if not cand:
            log.warning("split_blocks stopped at %d blocks (asked for %d)",
                        len(segs), min_blocks)
            break
        i = max(cand, key=lambda j: (segs[j][1], -j))
        s, c, f = segs[i]
        pieces = min(c // t, min_blocks - len(segs) + 1)
        cuts = _split_one(pts[s:s + c], pieces)
        if not cuts:
            unsplittable.add(s)
            continue
        bounds = [0] + cuts + [c]
        segs[i:i + 1] = [[s + a, b - a, f] for a, b in zip(bounds[:-1], bounds[1:])]
    starts = np.array([s for s, _, _ in segs], dtype=np.int64)
    counts = np.array([c for _, c, _ in segs], dtype=np.int64)
    fits = np.array([f for _, _, f in segs])
    return BlockStructure(pts[starts], pts[starts + counts - 1], fits, counts, starts, pts)


# ----------------------------------------------------------- sufficient statistics


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Per-block hit counts ``b``, sample-by-block counts ``C`` (CSC) and row totals ``T``."""

    b: np.ndarray
    C: sparse.csc_matrix
    T: np.ndarray


def block_membership(step: StepFunction, probs: np.ndarray) -> np.ndarray:
    return np.clip(step.block_index(probs), 0, None)


def sufficient_stats(dataset: CalibrationDataset, step: StepFunction,
                     fits: Optional[np.ndarray] = None) -> SufficientStats:
    fits = step.fits if fits is None else np.asarray(fits, dtype=float)
    m, k = dataset.probs.shape
    nb = len(fits)
    blk = block_membership(step, dataset.probs)
    rows = np.repeat(np.arange(m), k)
    C = sparse.coo_matrix((np.ones(m * k, dtype=np.int64), (rows, blk.ravel())),
                          shape=(m, nb)).tocsc()
    C.sum_duplicates()
    C.sort_indices()
    b = np.bincount(blk[np.arange(m), dataset.labels], minlength=nb).astype(np.int64)
    return SufficientStats(b=b, C=C, T=C @ fits)


def nafir_objective(fits, stats: SufficientStats) -> float:
    """Log-likelihood of the normalized outputs: sum_j b_j log g_j - sum_i log T_i."""
    fits = np.asarray(fits, dtype=float)
    if (fits <= 0).any():
        raise NonPositiveFit("block fits must be strictly positive")
    T = stats.C @ fits
    hit = stats.b > 0
    return float(np.dot(stats.b[hit], np.log(fits[hit])) - np.log(T).sum())


def objective_delta(fits: np.ndarray, T: np.ndarray, stats: SufficientStats,
                    j: int, change: float) -> float:
    """Change in likelihood when block ``j`` moves by ``change``; touches column j only."""
    new = fits[j] + change
    if new <= 0:
        raise NonPositiveFit("proposed block fit is not positive")
    lo, hi = stats.C.indptr[j], stats.C.indptr[j + 1]
    rows = stats.C.indices[lo:hi]
    cnt = stats.C.data[lo:hi]
    d = -np.log1p(cnt * change / T[rows]).sum()
    if stats.b[j]:
        d += stats.b[j] * (math.log(new) - math.log(fits[j]))
    return float(d)


# ------------------------------------------------------------------------ NA-FIR


@dataclass
class NAFIRHyper:
    eps_change: float = 1e-3
    beta: float = 200.0
    num_iterations: int = 100_000
    early_stop_patience: int = 10_000
    min_blocks: int = 0
    split_size_threshold: int = 0

    def __post_init__(self):
        if self.eps_change <= 0:
            raise ValueError("eps_change must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.num_iterations < 0:
            raise ValueError("num_iterations must be >= 0")


@dataclass(eq=False)
class NAFIRModel:
    step: StepFunction
    hyper: NAFIRHyper
    seed: Optional[int]
    objective: float
    initial_objective: float
    iterations_run: int = 0
    accepted: int = 0
    drift: float = 0.0
    best_trace: Optional[np.ndarray] = field(default=None, repr=False)


@numba.njit(cache=True)
def _metropolis(fits, b, indptr, indices, data, T, L, blocks, signs, u,
                eps, beta, patience, trace):
    nb = fits.shape[0]
    best = L
    best_fits = fits.copy()
    since_best = 0
    accepted = 0
    n = blocks.shape[0]
    it = 0
    while it < n:
        j = blocks[it]
        change = eps * signs[it]
        new = fits[j] + change
        ok = new > 0.0
        if ok and j > 0 and new < fits[j - 1]:
            ok = False
        if ok and j < nb - 1 and new > fits[j + 1]:
            ok = False
        if ok:
            d = 0.0
            if b[j] > 0:
                d = b[j] * (np.log(new) - np.log(fits[j]))
            for p in range(indptr[j], indptr[j + 1]):
                d -= np.log1p(data[p] * change / T[indices[p]])
            cand = L + d
            improved = cand > best
            if improved:
                best = cand
                best_fits[:] = fits
                best_fits[j] = new
            if cand > L or u[it] < np.exp(beta * (cand - L)):
                fits[j] = new
                for p in range(indptr[j], indptr[j + 1]):
                    T[indices[p]] += data[p] * change
                L = cand
                accepted += 1
            since_best = 0 if improved else since_best + 1
        else:
            since_best += 1
        if trace.shape[0] > 0:
            trace[it] = best
        it += 1
        if patience > 0 and since_best >= patience:
            break
    return best_fits, best, L, it, accepted


def _train_nll(step: StepFunction, fits: np.ndarray, dataset: CalibrationDataset) -> float:
    pred = apply_step_normalized(step.with_fits(fits), dataset.probs)
    pt = pred[np.arange(dataset.m), dataset.labels]
    return float(-np.log(np.maximum(pt, PROB_CLAMP)).mean())


def fit_nafir(dataset: CalibrationDataset, hyper: Optional[NAFIRHyper] = None,
              seed: Optional[int] = 0, record_trace: bool = False) -> NAFIRModel:
    """Fit NA-FIR by a blockwise Metropolis search started from the FIR solution.

    The returned fits are the best visited, so the train likelihood never falls
    below that of the (zero-floored) FIR starting point.
    """
    hyper = hyper or NAFIRHyper()
    flat = flatten(dataset)
    step0 = pava_fit(IsotonicInstance.make(flat.x, flat.y))
    blocks = BlockStructure.from_step(step0, flat.x)
    blocks = split_blocks(blocks, hyper.min_blocks, hyper.split_size_threshold)
    step = blocks.to_step(np.maximum(blocks.fits, PROB_CLAMP))
    init = step.fits.copy()

    stats = sufficient_stats(dataset, step)
    L0 = nafir_objective(init, stats)

    n = int(hyper.num_iterations)
    rng = np.random.Generator(np.random.PCG64(seed))
    draws_blocks = rng.integers(0, step.n_blocks, size=n)
    signs = rng.integers(0, 2, size=n) * 2.0 - 1.0
    u = rng.random(n)
    trace = np.empty(n if record_trace else 0)

    fits = init.copy()
    T = np.asarray(stats.T, dtype=float).copy()
    best_fits, best, L_inc, ran, accepted = _metropolis(
        fits, stats.b, stats.C.indptr.astype(np.int64), stats.C.indices.astype(np.int64),
        stats.C.data.astype(np.float64), T, L0, draws_blocks.astype(np.int64), signs, u,
        float(hyper.eps_change), float(hyper.beta), int(hyper.early_stop_patience), trace,
    )
    L_full = nafir_objective(fits, stats)
    drift = abs(L_inc - L_full) / max(abs(L_full), 1e-300)

    best_obj = nafir_objective(best_fits, stats)
    # guard the keep-best guarantee against float noise in the incremental sums
    if best_obj < L0 or _train_nll(step, best_fits, dataset) > _train_nll(step, init, dataset):
        best_fits, best_obj = init, L0
    return NAFIRModel(
        step=step.with_fits(best_fits),
        hyper=hyper,
        seed=seed,
        objective=best_obj,
        initial_objective=L0,
        iterations_run=int(ran),
        accepted=int(accepted),
        drift=float(drift),
        best_trace=trace[:ran] if record_trace else None,
    )


def predict_nafir(model: NAFIRModel, probs: np.ndarray, k: Optional[int] = None) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if k is not None and probs.shape[1] != k:
        raise ShapeMismatch(f"model fitted with k={k}, got k={probs.shape[1]}")
    return apply_step_normalized(model.step, probs)
