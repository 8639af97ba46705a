"""
Search-space reduction.

Each head keeps its top-k tokens, the union forms m <= k*n candidates, and the
transition matrix and head distributions are sliced down to those candidates
in log space. Slicing is a pure gather: nothing is renormalized.
"""

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .config import MaskMode
from .errors import DimensionError, ParameterError
from .logspace import DEFAULT_LOG_FLOOR, floored_log
from .token_model import TokenId, Vocabulary
from .transition import TransitionMatrix

logger = logging.getLogger(__name__)

DISTRIBUTION_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class StepDistributions:
    """The n per-head probability vectors produced by one model invocation."""

    vocab: Vocabulary
    heads: npt.NDArray[np.float64]  # shape (n, V)

    def __post_init__(self) -> None:
        if self.heads.ndim != 2 or self.heads.shape[0] < 1:
            raise ParameterError(f"expected (n, V) head matrix with n >= 1, got {self.heads.shape}")
        if self.heads.shape[1] != self.vocab.size:
            raise DimensionError(
                f"head vectors have length {self.heads.shape[1]}, vocabulary is {self.vocab.size}"
            )
        if np.isnan(self.heads).any() or (self.heads < 0).any() or (self.heads > 1).any():
            raise ParameterError("head probabilities must lie in [0, 1]")
        sums = self.heads.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > DISTRIBUTION_TOLERANCE)
        if bad.size:
            raise ParameterError(
                f"head {int(bad[0])} sums to {float(sums[bad[0]])!r}, not 1",
                data={"head": int(bad[0])},
            )
        self.heads.setflags(write=False)

    @classmethod
    def from_heads(cls, heads: npt.ArrayLike) -> "StepDistributions":
        arr = np.array(heads, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        return cls(vocab=Vocabulary(arr.shape[-1]), heads=arr)

    @property
    def n(self) -> int:
        return int(self.heads.shape[0])


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Sorted union of per-head top-k tokens."""

    tokens: npt.NDArray[np.int64]  # shape (m,), ascending, distinct
    per_head_topk: tuple[tuple[tuple[TokenId, float], ...], ...]
    k: int

    @property
    def m(self) -> int:
        return int(self.tokens.size)

    @property
    def n(self) -> int:
        return len(self.per_head_topk)

    def head_tokens(self, head: int) -> list[TokenId]:
        return [token for token, _ in self.per_head_topk[head]]


@dataclass(frozen=True, eq=False)
class ReducedProblem:
    """
    Candidate-restricted decoding problem in log space.

    reduced_q[r][c] = log Q(tokens[r], tokens[c]); reduced_s[t][c] = log S_{t+1}(tokens[c]),
    or -inf under strict masking when tokens[c] is outside head t's top-k.
    anchor, when present, is log Q(prev_committed, tokens[c]) for the first head.
    """

    candidates: CandidateSet
    reduced_q: npt.NDArray[np.float64]  # (m, m)
    reduced_s: npt.NDArray[np.float64]  # (n, m)
    anchor: npt.NDArray[np.float64] | None = None  # (m,)

    @classmethod
    def from_log_arrays(
        cls,
        reduced_q: npt.ArrayLike,
        reduced_s: npt.ArrayLike,
        anchor: npt.ArrayLike | None = None,
    ) -> "ReducedProblem":
        """
        Build a problem directly from log matrices.

        Candidate tokens are 0..m-1 and every candidate counts as in every head's
        top-m; used by the oracle suite and by callers that reduce elsewhere.
        """
        q = np.array(reduced_q, dtype=np.float64)
        s = np.array(reduced_s, dtype=np.float64)
        if s.ndim == 1:
            s = s[None, :]
        m = s.shape[1] if s.ndim == 2 else 0
        topk = tuple(
            tuple((c, float(np.exp(s[t, c]))) for c in range(m)) for t in range(s.shape[0])
        )
        cands = CandidateSet(tokens=np.arange(m, dtype=np.int64), per_head_topk=topk, k=m)
        a = None if anchor is None else np.array(anchor, dtype=np.float64)
        return cls(candidates=cands, reduced_q=q, reduced_s=s, anchor=a)

    @property
    def n(self) -> int:
        return int(self.reduced_s.shape[0])

    @property
    def m(self) -> int:
        return int(self.reduced_s.shape[1])

    @property
    def tokens(self) -> npt.NDArray[np.int64]:
        return self.candidates.tokens


def topk_per_head(dists: StepDistributions, k: int) -> CandidateSet:
    """
    Retain the k most probable tokens of every head and union them.

    Ties are broken by smaller token id; the union is sorted ascending and
    has m <= k*n elements.

    Raises:
        ParameterError: k < 1 or k > V
    """
    v = dists.vocab.size
    if k < 1 or k > v:
        raise ParameterError(f"top_k must be in [1, {v}], got {k}")

    ids = np.arange(v)
    per_head: list[tuple[tuple[TokenId, float], ...]] = []
    for probs in dists.heads:
        # lexsort: last key is primary -> descending probability, then ascending id
        order = np.lexsort((ids, -probs))[:k]
        per_head.append(tuple((int(t), float(probs[t])) for t in order))

    union = np.unique(np.fromiter((t for head in per_head for t, _ in head), dtype=np.int64))
    return CandidateSet(tokens=union, per_head_topk=tuple(per_head), k=k)


def build_reduced(
    q: TransitionMatrix,
    dists: StepDistributions,
    candidates: CandidateSet,
    mask_mode: MaskMode = MaskMode.RETAIN,
    log_floor: float = DEFAULT_LOG_FLOOR,
    prev_token: TokenId | None = None,
) -> ReducedProblem:
    """
    Gather the m x m transition block and n x m head block in log space.

    Args:
        q: Full transition matrix
        dists: Head distributions the candidates were drawn from
        candidates: Output of topk_per_head
        mask_mode: RETAIN keeps true probabilities for union tokens outside a
            head's top-k, STRICT masks them to -inf
        log_floor: Probability floor applied before log
        prev_token: Last committed token; when given, the problem is anchored

    Raises:
        DimensionError: vocabulary mismatch or candidate/prev token >= V
    """
    v = q.vocab.size
    if dists.vocab != q.vocab:
        raise DimensionError(f"head vocabulary {dists.vocab.size} != transition vocabulary {v}")
    if candidates.m == 0:
        raise ParameterError("empty candidate set")
    tokens = candidates.tokens
    if int(tokens.max()) >= v or int(tokens.min()) < 0:
        raise DimensionError(f"candidate token outside vocabulary of size {v}")
    if candidates.n != dists.n:
        raise DimensionError(f"candidate set has {candidates.n} heads, distributions have {dists.n}")

    reduced_q = floored_log(q.rows[np.ix_(tokens, tokens)], log_floor)
    reduced_s = floored_log(dists.heads[:, tokens], log_floor)

    if mask_mode == MaskMode.STRICT:
        for head in range(dists.n):
            keep = np.isin(tokens, candidates.head_tokens(head))
            reduced_s[head, ~keep] = -np.inf

    anchor = None
    if prev_token is not None:
        if not 0 <= prev_token < v:
            raise DimensionError(f"previous token {prev_token} outside vocabulary of size {v}")
        anchor = floored_log(q.rows[prev_token, tokens], log_floor)

    logger.debug(f"Reduced problem: n={dists.n}, k={candidates.k}, m={candidates.m}")
    return ReducedProblem(
        candidates=candidates, reduced_q=reduced_q, reduced_s=reduced_s, anchor=anchor
    )


def reduce_step(
    q: TransitionMatrix,
    dists: StepDistributions,
    k: int,
    mask_mode: MaskMode = MaskMode.RETAIN,
    log_floor: float = DEFAULT_LOG_FLOOR,
    prev_token: TokenId | None = None,
) -> ReducedProblem:
    """topk_per_head followed by build_reduced."""
    return build_reduced(
        q, dists, topk_per_head(dists, k), mask_mode, log_floor, prev_token=prev_token
    )
