"""Data model, validation and probability/logit conversions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

PROB_CLAMP = 1e-12
# rows already this close to stochastic are left bit-for-bit untouched
ROW_SUM_SLACK = 1e-13

METHODS = ("fir", "na-fir", "scir", "ts", "vs", "ir-ovr")


class CalibrationError(ValueError):
    """Base class for input and contract violations.

    ``row`` is the 0-based sample index the violation was found at, when known.
    """

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message)
        self.row = row

    @property
    def rule(self) -> str:
        return type(self).__name__


class NegativeProbability(CalibrationError):
    pass


class RowSumZero(CalibrationError):
    pass


class LabelOutOfRange(CalibrationError):
    pass


class ShapeMismatch(CalibrationError):
    pass


class NonFiniteEntry(CalibrationError):
    pass


class EmptyInstance(CalibrationError):
    pass


class NonPositiveFit(CalibrationError):
    pass


class NonPositiveT(CalibrationError):
    pass


class ThresholdLargerThanBlock(CalibrationError):
    pass


class InvalidResampleCount(CalibrationError):
    pass


class RecursionDepthExceeded(CalibrationError):
    pass


def _first_bad_row(mask: np.ndarray) -> int:
    rows = np.nonzero(mask.reshape(mask.shape[0], -1).any(axis=1))[0]
    return int(rows[0])


@dataclass(frozen=True, eq=False)
class CalibrationDataset:
    """Row-stochastic probabilities paired with integer labels (and optional logits)."""

    probs: np.ndarray
    labels: np.ndarray
    logits: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.probs.shape[0]

    @property
    def k(self) -> int:
        return self.probs.shape[1]

    def onehot(self) -> np.ndarray:
        return onehot(self.labels, self.k)


def onehot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def check_matrix(values: Any, name: str = "probs") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if arr.shape[1] < 2:
        raise ShapeMismatch(f"{name} needs at least 2 columns, got {arr.shape[1]}")
    bad = ~np.isfinite(arr)
    if bad.any():
        row = _first_bad_row(bad)
        raise NonFiniteEntry(f"non-finite entry in {name} row {row}", row=row)
    return arr


def validate_probs(values: Any) -> np.ndarray:
    """Check a probability matrix and renormalize its rows to sum exactly to one."""
    probs = check_matrix(values, "probs")
    neg = probs < -1e-9
    if neg.any():
        row = _first_bad_row(neg)
        raise NegativeProbability(f"negative probability in row {row}", row=row)
    probs = np.clip(probs, 0.0, None)
    sums = probs.sum(axis=1)
    if (sums <= 1e-12).any():
        row = int(np.nonzero(sums <= 1e-12)[0][0])
        raise RowSumZero(f"row {row} sums to zero", row=row)
    fix = np.abs(sums - 1.0) > ROW_SUM_SLACK
    if fix.any():
        probs = probs.copy()
        probs[fix] /= sums[fix, None]
    return np.minimum(probs, 1.0)


def validate_labels(values: Any, m: int, k: int) -> np.ndarray:
    raw = np.asarray(values)
    if raw.ndim != 1 or raw.shape[0] != m:
        raise ShapeMismatch(f"expected {m} labels, got shape {raw.shape}")
    if raw.dtype.kind == "f":
        if not np.isfinite(raw).all():
            row = int(np.nonzero(~np.isfinite(raw))[0][0])
            raise NonFiniteEntry(f"non-finite label in row {row}", row=row)
        if (raw != np.round(raw)).any():
            row = int(np.nonzero(raw != np.round(raw))[0][0])
            raise LabelOutOfRange(f"non-integer label in row {row}", row=row)
    labels = raw.astype(np.int64)
    bad = (labels < 0) | (labels >= k)
    if bad.any():
        row = int(np.nonzero(bad)[0][0])
        raise LabelOutOfRange(
            f"label {labels[row]} in row {row} outside 0..{k - 1}", row=row
        )
    return labels


def validate_dataset(probs: Any, labels: Any, logits: Any = None) -> CalibrationDataset:
    """Build a :class:`CalibrationDataset`, rejecting malformed input.

    Rows are divided by their sums, so a dataset that went through this function
    is row-stochastic to machine precision and validating it again is a no-op.
    """
    p = validate_probs(probs)
    y = validate_labels(labels, p.shape[0], p.shape[1])
    z = None
    if logits is not None:
        z = check_matrix(logits, "logits")
        if z.shape != p.shape:
            raise ShapeMismatch(f"logits shape {z.shape} != probs shape {p.shape}")
    return CalibrationDataset(probs=p, labels=y, logits=z)


def probs_from_logits(logits: Any) -> np.ndarray:
    z = check_matrix(logits, "logits")
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def logits_from_probs(probs: Any, clamp: float = PROB_CLAMP) -> np.ndarray:
    return np.log(np.maximum(np.asarray(probs, dtype=float), clamp))


def dataset_logits(dataset: CalibrationDataset) -> np.ndarray:
    """Logits of a dataset, falling back to log-probabilities."""
    if dataset.logits is not None:
        return dataset.logits
    return logits_from_probs(dataset.probs)


def normalize_rows(values: np.ndarray) -> np.ndarray:
    """Divide rows by their sums; rows summing to ~0 become uniform."""
    sums = values.sum(axis=1, keepdims=True)
    k = values.shape[1]
    out = np.empty_like(values, dtype=float)
    ok = sums[:, 0] > 1e-12
    out[ok] = values[ok] / sums[ok]
    out[~ok] = 1.0 / k
    return out


@dataclass
class FittedCalibrator:
    """A fitted calibration map of one of the supported method families."""

    tag: str
    payload: Any
    k: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in METHODS:
            raise ValueError(f"unknown calibrator tag {self.tag!r}")

    def check_k(self, k: int) -> None:
        if k != self.k:
            raise ShapeMismatch(f"calibrator fitted with k={self.k}, got k={k}")
