"""
Tests for the multi-head negative log-likelihood.
"""

import math

import numpy as np
import pytest

from viterbi_specdec.errors import DimensionError, InfiniteLossError
from viterbi_specdec.mtp_objective import (
    HeadPredictions,
    PositionPrediction,
    factored_nll,
    joint_nll_under_independence,
)
from viterbi_specdec.reducer import StepDistributions


def _position(heads, future) -> PositionPrediction:
    return PositionPrediction(dists=StepDistributions.from_heads(heads), future=tuple(future))


def _random_predictions(rng: np.random.Generator) -> HeadPredictions:
    v = int(rng.integers(2, 12))
    n = int(rng.integers(1, 6))
    positions = []
    for _ in range(int(rng.integers(0, 6))):
        heads = rng.dirichlet(np.ones(v), size=n) * 0.9 + 0.1 / v
        heads /= heads.sum(axis=1, keepdims=True)
        positions.append(_position(heads, rng.integers(v, size=n).tolist()))
    return HeadPredictions(positions=tuple(positions))


class TestFactoredNll:
    """Tests for factored_nll."""

    def test_two_heads_by_hand(self):
        """Target probabilities 0.5 and 0.25 give log 8."""
        preds = HeadPredictions(positions=(_position([[0.5, 0.5], [0.75, 0.25]], [0, 1]),))
        assert factored_nll(preds) == pytest.approx(math.log(8), abs=1e-12)

    def test_perfect_prediction(self):
        preds = HeadPredictions(positions=(_position([[0.0, 1.0], [1.0, 0.0]], [1, 0]),))
        assert factored_nll(preds) == 0.0

    def test_single_head_is_next_token_nll(self):
        preds = HeadPredictions(positions=(_position([[0.2, 0.8]], [1]), _position([[0.6, 0.4]], [0])))
        assert factored_nll(preds) == pytest.approx(-math.log(0.8) - math.log(0.6))

    def test_zero_probability_target(self):
        preds = HeadPredictions(positions=(_position([[1.0, 0.0], [0.5, 0.5]], [1, 0]),))
        with pytest.raises(InfiniteLossError) as exc_info:
            factored_nll(preds)
        assert exc_info.value.data == {"position": 0, "head": 1}

    def test_future_length_must_match_heads(self):
        with pytest.raises(DimensionError):
            _position([[0.5, 0.5], [0.5, 0.5]], [0])

    def test_future_token_in_vocab(self):
        with pytest.raises(DimensionError):
            _position([[0.5, 0.5]], [2])


class TestJointNll:
    """Tests for joint_nll_under_independence."""

    def test_two_heads_by_hand(self):
        preds = HeadPredictions(positions=(_position([[0.5, 0.5], [0.75, 0.25]], [0, 1]),))
        assert joint_nll_under_independence(preds) == pytest.approx(math.log(8), abs=1e-12)

    def test_empty(self):
        empty = HeadPredictions(positions=())
        assert joint_nll_under_independence(empty) == 0.0
        assert factored_nll(empty) == 0.0

    def test_underflowing_product(self):
        """A product below the smallest double falls back to summed logs."""
        heads = np.full((400, 2), 0.5)
        heads[:, 0] = 1e-3
        heads[:, 1] = 1 - 1e-3
        preds = HeadPredictions(positions=(_position(heads, [0] * 400),))
        expected = -400 * math.log(1e-3)
        assert joint_nll_under_independence(preds) == pytest.approx(expected, rel=1e-12)

    def test_matches_factored_on_random_instances(self):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            preds = _random_predictions(rng)
            factored = factored_nll(preds)
            assert factored >= 0.0
            assert abs(joint_nll_under_independence(preds) - factored) <= 1e-12


class TestHeadPredictions:
    """Tests for building and combining position sets."""

    def test_from_sequence_skips_short_tail(self):
        steps = [StepDistributions.from_heads(np.full((2, 3), 1 / 3)) for _ in range(5)]
        preds = HeadPredictions.from_sequence(steps, [0, 1, 2, 0, 1])
        assert len(preds) == 3
        assert [p.future for p in preds.positions] == [(1, 2), (2, 0), (0, 1)]

    def test_additive_over_concatenation(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            a, b = _random_predictions(rng), _random_predictions(rng)
            combined = factored_nll(a + b)
            assert combined == pytest.approx(factored_nll(a) + factored_nll(b), rel=1e-12, abs=1e-12)
            assert len(a + b) == len(a) + len(b)
