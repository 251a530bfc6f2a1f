"""Synthetic classifiers with known calibration, for recovery tests."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    PROB_CLAMP,
    CalibrationDataset,
    NonPositiveT,
    logits_from_probs,
    probs_from_logits,
    validate_dataset,
)


@dataclass
class SynthConfig:
    m: int = 5000
    k: int = 10
    dirichlet_alpha: Optional[Sequence[float]] = None
    distortion_T: float = 1.0
    seed: int = 0
    alpha: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 1 or self.k < 2:
            raise ValueError("need m >= 1 and k >= 2")
        if self.distortion_T <= 0:
            raise NonPositiveT("distortion_T must be positive")
        a = np.ones(self.k) if self.dirichlet_alpha is None else np.asarray(
            self.dirichlet_alpha, dtype=float)
        if a.shape != (self.k,) or (a <= 0).any():
            raise ValueError("dirichlet_alpha must be k positive values")
        self.alpha = a


def draw_true_probs(cfg: SynthConfig):
    """True class probabilities (Dirichlet via normalized gammas) and labels drawn from them."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    g = rng.standard_gamma(cfg.alpha, size=(cfg.m, cfg.k))
    q = g / g.sum(axis=1, keepdims=True)
    u = rng.random(cfg.m)
    cum = np.cumsum(q, axis=1)
    labels = np.minimum((cum <= (u * cum[:, -1])[:, None]).sum(axis=1), cfg.k - 1)
    return q, labels


def gen_calibrated(cfg: SynthConfig) -> CalibrationDataset:
    """Dataset whose reported probabilities are softmax(log q / T).

    The stored logits are the distorted ones, ``log q / T``; with T = 1 the
    predictor is calibrated by construction.
    """
    q, labels = draw_true_probs(cfg)
    z = logits_from_probs(q, PROB_CLAMP) / cfg.distortion_T
    return validate_dataset(probs_from_logits(z), labels, z)


def distort_temperature(probs, T: float) -> np.ndarray:
    if not T > 0:
        raise NonPositiveT(f"temperature must be positive, got {T}")
    return probs_from_logits(logits_from_probs(probs) / T)
