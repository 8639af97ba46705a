"""
Multi-head negative log-likelihood.

Evaluation only: the factored loss sums -log P(a_{t+i} | context) over
positions t and heads i; under the independence factorization the joint
loss -sum_t log prod_i P(a_{t+i} | context) is the same number.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

from .errors import DimensionError, InfiniteLossError
from .reducer import StepDistributions
from .token_model import TokenId


@dataclass(frozen=True)
class PositionPrediction:
    """Head outputs at one context position and the n true future tokens."""

    dists: StepDistributions
    future: tuple[TokenId, ...]

    def __post_init__(self) -> None:
        if len(self.future) != self.dists.n:
            raise DimensionError(
                f"{self.dists.n} heads need {self.dists.n} future targets, got {len(self.future)}"
            )
        for token in self.future:
            if not self.dists.vocab.contains(token):
                raise DimensionError(f"target {token} outside vocabulary of size {self.dists.vocab.size}")

    def target_probs(self) -> list[float]:
        return [float(self.dists.heads[i, token]) for i, token in enumerate(self.future)]


@dataclass(frozen=True)
class HeadPredictions:
    """Positions to score; concatenating two sets concatenates their losses."""

    positions: tuple[PositionPrediction, ...]

    @classmethod
    def from_sequence(
        cls, dists: Sequence[StepDistributions], targets: Sequence[TokenId]
    ) -> "HeadPredictions":
        """
        dists[t] is emitted after seeing targets[: t + 1] and predicts
        targets[t + 1 : t + 1 + n]. Positions without n future targets are excluded.
        """
        positions = []
        for t, step in enumerate(dists):
            future = tuple(int(x) for x in targets[t + 1 : t + 1 + step.n])
            if len(future) < step.n:
                continue
            positions.append(PositionPrediction(dists=step, future=future))
        return cls(positions=tuple(positions))

    def __add__(self, other: "HeadPredictions") -> "HeadPredictions":
        return HeadPredictions(positions=self.positions + other.positions)

    def __len__(self) -> int:
        return len(self.positions)


def _checked_probs(pos_index: int, position: PositionPrediction) -> list[float]:
    probs = position.target_probs()
    for head, p in enumerate(probs):
        if p <= 0.0:
            raise InfiniteLossError(
                f"position {pos_index}, head {head + 1}: target {position.future[head]} has probability 0",
                data={"position": pos_index, "head": head + 1},
            )
    return probs


def factored_nll(preds: HeadPredictions) -> float:
    """
    -sum_t sum_i log P(a_{t+i} | context_t).

    Raises:
        InfiniteLossError: a target token has probability zero
    """
    total = 0.0
    for idx, position in enumerate(preds.positions):
        for p in _checked_probs(idx, position):
            total -= math.log(p)
    return total


def joint_nll_under_independence(preds: HeadPredictions) -> float:
    """
    -sum_t log prod_i P(a_{t+i} | context_t).

    Equal to factored_nll when the n future tokens are independent given the
    context. Falls back to a sum of logs if the product underflows.
    """
    total = 0.0
    for idx, position in enumerate(preds.positions):
        probs = _checked_probs(idx, position)
        joint = math.prod(probs)
        if joint > 0.0:
            total -= math.log(joint)
        else:
            total -= math.fsum(math.log(p) for p in probs)
    return total
