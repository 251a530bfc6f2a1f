import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from calikit.core import (
    FittedCalibrator,
    LabelOutOfRange,
    NegativeProbability,
    NonFiniteEntry,
    RowSumZero,
    ShapeMismatch,
    logits_from_probs,
    probs_from_logits,
    validate_dataset,
)


def test_validate_identity_case():
    ds = validate_dataset([[0.5, 0.5]], [0])
    assert (ds.m, ds.k) == (1, 2)
    np.testing.assert_array_equal(ds.probs, [[0.5, 0.5]])


def test_validate_renormalizes():
    ds = validate_dataset([[0.2, 0.9]], [0])
    np.testing.assert_allclose(ds.probs, [[0.2 / 1.1, 0.9 / 1.1]], rtol=0, atol=1e-15)


@pytest.mark.parametrize("probs,labels,logits,err", [
    ([[0.5, 0.5]], [2], None, LabelOutOfRange),
    ([[0.5, 0.5]], [-1], None, LabelOutOfRange),
    ([[-0.1, 1.1]], [0], None, NegativeProbability),
    ([[0.0, 0.0]], [0], None, RowSumZero),
    ([[np.nan, 1.0]], [0], None, NonFiniteEntry),
    ([[0.5, 0.5]], [0, 1], None, ShapeMismatch),
    ([0.5, 0.5], [0], None, ShapeMismatch),
    ([[0.5, 0.5]], [0], [[1.0, 2.0, 3.0]], ShapeMismatch),
    ([[0.5, 0.5]], [0], [[1.0, np.inf]], NonFiniteEntry),
])
def test_validate_rejects(probs, labels, logits, err):
    with pytest.raises(err):
        validate_dataset(probs, labels, logits)


def test_error_reports_row():
    with pytest.raises(RowSumZero) as info:
        validate_dataset([[0.5, 0.5], [0.3, 0.7], [0, 0]], [0, 1, 0])
    assert info.value.row == 2
    assert info.value.rule == "RowSumZero"


def test_softmax_examples():
    np.testing.assert_allclose(probs_from_logits([[0.0, 0.0]]), [[0.5, 0.5]])
    np.testing.assert_allclose(probs_from_logits([[math.log(3), 0.0]]), [[0.75, 0.25]],
                               atol=1e-15)
    p = probs_from_logits([[1000.0, 0.0]])
    assert np.isfinite(p).all()
    assert p[0, 0] == 1.0 and p[0, 1] < 1e-300


def test_log_examples():
    np.testing.assert_allclose(logits_from_probs([[0.5, 0.5]]), [[math.log(0.5)] * 2])
    np.testing.assert_allclose(probs_from_logits(logits_from_probs([[0.5, 0.5]])), [[0.5, 0.5]])
    np.testing.assert_allclose(logits_from_probs([[1.0, 0.0]]), [[0.0, math.log(1e-12)]])


def test_round_trip_4x5():
    rng = np.random.default_rng(3)
    p = rng.random((4, 5)) + 0.01
    p /= p.sum(axis=1, keepdims=True)
    assert p.min() >= 1e-3
    assert np.abs(probs_from_logits(logits_from_probs(p)) - p).max() <= 1e-9


stochastic_rows = hnp.arrays(
    float, st.tuples(st.integers(1, 6), st.integers(2, 6)),
    elements=st.floats(1e-3, 1.0),
).map(lambda a: a / a.sum(axis=1, keepdims=True))


@given(stochastic_rows)
def test_round_trip_property(p):
    assert np.abs(probs_from_logits(logits_from_probs(p)) - p).max() <= 1e-9


@given(hnp.arrays(float, st.tuples(st.integers(1, 5), st.integers(2, 6)),
                  elements=st.floats(-30, 30)),
       st.floats(-50, 50))
def test_softmax_shift_invariance(z, c):
    assert np.abs(probs_from_logits(z + c) - probs_from_logits(z)).max() <= 1e-12


@settings(max_examples=50)
@given(hnp.arrays(float, st.tuples(st.integers(1, 6), st.integers(2, 6)),
                  elements=st.floats(0.0, 1.0)).filter(lambda a: (a.sum(axis=1) > 1e-6).all()))
def test_validate_idempotent(raw):
    labels = np.zeros(raw.shape[0], dtype=int)
    once = validate_dataset(raw, labels)
    twice = validate_dataset(once.probs, once.labels)
    np.testing.assert_array_equal(once.probs, twice.probs)
    np.testing.assert_allclose(once.probs.sum(axis=1), 1.0, atol=1e-12)


def test_calibrator_k_check():
    cal = FittedCalibrator("ts", None, 3)
    cal.check_k(3)
    with pytest.raises(ShapeMismatch):
        cal.check_k(4)
    with pytest.raises(ValueError):
        FittedCalibrator("nope", None, 3)
