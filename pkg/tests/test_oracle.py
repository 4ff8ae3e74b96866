from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from advcomp import ThreatModel, is_feasible
from advcomp.budget import Status
from advcomp.errors import ConfigurationError
from advcomp.models import LinearModel, init_model
from advcomp.oracle import (
    ATTACKABLE, ROBUST, RobustnessVerdict, grid_oracle, linear_oracle, measure_filter_error,
)

from conftest import EPS, binary_linear, random_batch


def test_linear_examples(tm):
    model = binary_linear((1.0, -1.0))
    v = linear_oracle(model, np.array([[0.6, 0.4], [0.52, 0.48]]), np.array([0, 0]), tm)
    assert v.verdicts == [ROBUST, ATTACKABLE]
    np.testing.assert_allclose(v.worst_margin, [0.2 - 2 * EPS, 0.04 - 2 * EPS])
    np.testing.assert_allclose(v.witnesses[1], [0.52 - EPS, 0.48 + EPS])


def test_tiny_epsilon_reduces_to_misclassification(linear5, blobs):
    v = linear_oracle(linear5, blobs.data, blobs.labels, ThreatModel(1e-12))
    wrong = np.argmax(linear5.forward(blobs.data), axis=1) != blobs.labels
    np.testing.assert_array_equal(v.attackable, wrong)


def test_constant_model_is_robust(tm):
    model = LinearModel(np.zeros((3, 2)), np.array([1.0, 0.0, 0.0]))
    x = np.random.default_rng(0).uniform(size=(10, 2))
    for v in (linear_oracle(model, x, np.zeros(10, int), tm), grid_oracle(model, x, np.zeros(10, int), tm, 9)):
        assert set(v.verdicts) == {ROBUST}


def test_linear_oracle_rejects_mlp(mlp5, blobs, tm):
    with pytest.raises(ConfigurationError):
        linear_oracle(mlp5, blobs.data, blobs.labels, tm)


def test_grid_corners_agree_with_linear(tm):
    # a linear margin is minimised at a corner, and resolution 2 enumerates exactly the corners
    model = init_model("linear", 2, 3, seed=4)
    batch = random_batch(200, 2, 3, seed=8)
    a = linear_oracle(model, batch.data, batch.labels, tm)
    b = grid_oracle(model, batch.data, batch.labels, tm, 2)
    np.testing.assert_array_equal(a.attackable, b.attackable)


def test_fine_grid_agrees_with_linear(tm):
    model = init_model("linear", 2, 3, seed=5)
    batch = random_batch(200, 2, 3, seed=9)
    a = linear_oracle(model, batch.data, batch.labels, tm)
    b = grid_oracle(model, batch.data, batch.labels, tm, 65)
    np.testing.assert_array_equal(a.attackable, b.attackable)


@given(seed=st.integers(0, 10_000), r1=st.integers(2, 6), mult=st.integers(1, 4))
def test_nested_grids_are_monotone(seed, r1, mult):
    model = init_model("mlp", 2, 3, hidden=(6,), seed=seed)
    batch = random_batch(12, 2, 3, seed=seed)
    tm = ThreatModel(0.05)
    r2 = (r1 - 1) * mult + 1
    coarse = grid_oracle(model, batch.data, batch.labels, tm, r1)
    fine = grid_oracle(model, batch.data, batch.labels, tm, r2)
    assert not (coarse.attackable & ~fine.attackable).any()
    assert all(f <= c + 1e-12 for c, f in zip(coarse.worst_margin, fine.worst_margin))


def test_witnesses_are_feasible_and_misclassified(mlp5, tm):
    model = init_model("mlp", 2, 3, hidden=(8,), seed=2)
    batch = random_batch(40, 2, 3, seed=3)
    v = grid_oracle(model, batch.data, batch.labels, tm, 17)
    assert v.witnesses
    for i, w in v.witnesses.items():
        assert is_feasible(w, batch.data[i], tm)[0]
        assert np.argmax(model.forward(w[None])[0]) != batch.labels[i]


def test_grid_cap_and_resolution(tm, blobs, mlp5):
    with pytest.raises(ConfigurationError):
        grid_oracle(mlp5, blobs.data, blobs.labels, tm, 64)
    with pytest.raises(ConfigurationError):
        grid_oracle(mlp5, blobs.data[:, :2], blobs.labels, tm, 1)


def test_filter_error_counts():
    v = RobustnessVerdict([ATTACKABLE, ATTACKABLE, ROBUST, ROBUST, "unknown"])
    status = [Status.FILTERED_ROBUST, Status.SUCCEEDED, Status.FILTERED_ROBUST, Status.EXHAUSTED,
              Status.FILTERED_ROBUST]
    err = measure_filter_error(status, v)
    assert err["false_negatives"] == 1 and err["attackable"] == 2
    assert err["false_negative_rate"] == Fraction(1, 2)
    assert err["false_positives"] == 1 and err["false_positive_rate"] == Fraction(1, 2)
    with pytest.raises(ConfigurationError):
        measure_filter_error(status[:2], v)


def test_filter_error_empty_classes():
    err = measure_filter_error([Status.EXHAUSTED], RobustnessVerdict(["unknown"]))
    assert err["false_negative_rate"] == 0 and err["false_positive_rate"] == 0


def test_verdict_round_trip(tm):
    model = binary_linear((1.0, -1.0))
    v = linear_oracle(model, np.array([[0.6, 0.4], [0.52, 0.48]]), np.array([0, 0]), tm)
    back = RobustnessVerdict.from_dict(v.to_dict())
    assert back.verdicts == v.verdicts and back.worst_margin == v.worst_margin
    np.testing.assert_array_equal(back.witnesses[1], v.witnesses[1])
