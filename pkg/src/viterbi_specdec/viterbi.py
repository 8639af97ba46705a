"""
Path selection over the reduced problem.

All scores are log-probabilities. A path a_1..a_n scores

    first(a_1) + sum_{t=2..n} [ q(a_{t-1}, a_t) + s_t(a_t) ]

where first = s_1, or anchor + s_1 for anchored problems. Every decoder below
accumulates left to right in exactly that order, so scores for the same path
are bit-identical across decoders.

Ties: every max picks the smallest candidate index. For whole paths this
selects the optimal path with the smallest final token, then the smallest
predecessor, and so on back to the first head.
"""

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .config import DecodeMode, get_settings
from .errors import DimensionError, NumericError, OracleSizeError, ParameterError
from .logspace import has_nan
from .reducer import ReducedProblem
from .token_model import TokenId

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodedPath:
    """Selected token block with its joint log-score."""

    tokens: tuple[TokenId, ...]
    indices: tuple[int, ...]  # candidate indices into the reduced problem
    log_score: float
    backpointers_used: tuple[int, ...] = ()  # psi values followed while backtracking

    @property
    def n(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True, eq=False)
class TrellisState:
    """delta[t][j]: best score of a path ending in j at head t; psi: its argmax predecessor."""

    delta: npt.NDArray[np.float64]  # (n, m)
    psi: npt.NDArray[np.int64]  # (n, m)


def _validate(problem: ReducedProblem) -> None:
    n, m = problem.reduced_s.shape if problem.reduced_s.ndim == 2 else (0, 0)
    if n < 1:
        raise ParameterError("problem has no heads")
    if m < 1:
        raise ParameterError("empty candidate set")
    if problem.reduced_q.shape != (m, m):
        raise DimensionError(f"transition block {problem.reduced_q.shape} does not match m={m}")
    if problem.anchor is not None and problem.anchor.shape != (m,):
        raise DimensionError(f"anchor shape {problem.anchor.shape} does not match m={m}")
    if has_nan(problem.reduced_q, problem.reduced_s, problem.anchor):
        raise NumericError("NaN in decoder input")


def _first_scores(problem: ReducedProblem) -> npt.NDArray[np.float64]:
    if problem.anchor is None:
        return problem.reduced_s[0].copy()
    return problem.anchor + problem.reduced_s[0]


def _make_path(
    problem: ReducedProblem, indices: list[int], score: float, used: tuple[int, ...] = ()
) -> DecodedPath:
    tokens = problem.tokens
    return DecodedPath(
        tokens=tuple(int(tokens[i]) for i in indices),
        indices=tuple(int(i) for i in indices),
        log_score=float(score),
        backpointers_used=used,
    )


def path_log_score(problem: ReducedProblem, indices: list[int] | tuple[int, ...]) -> float:
    """Joint log-score of a path given as candidate indices."""
    if len(indices) != problem.n:
        raise DimensionError(f"path has {len(indices)} tokens, problem has {problem.n} heads")
    q, s = problem.reduced_q, problem.reduced_s
    score = _first_scores(problem)[indices[0]]
    for t in range(1, problem.n):
        score = (score + q[indices[t - 1], indices[t]]) + s[t, indices[t]]
    return float(score)


def viterbi_trellis(problem: ReducedProblem) -> TrellisState:
    """Fill delta/psi; psi[0] is all zeros."""
    _validate(problem)
    n, m = problem.n, problem.m
    q, s = problem.reduced_q, problem.reduced_s

    delta = np.empty((n, m), dtype=np.float64)
    psi = np.zeros((n, m), dtype=np.int64)
    delta[0] = _first_scores(problem)

    cols = np.arange(m)
    for t in range(1, n):
        # cand[i, j] = delta[t-1, i] + q[i, j]
        cand = delta[t - 1][:, None] + q
        psi[t] = np.argmax(cand, axis=0)
        delta[t] = cand[psi[t], cols] + s[t]

    return TrellisState(delta=delta, psi=psi)


def viterbi_decode(problem: ReducedProblem) -> DecodedPath:
    """
    Most probable path through the n heads.

    Raises:
        ParameterError: empty candidate set or no heads
        NumericError: NaN in inputs
    """
    trellis = viterbi_trellis(problem)
    n = problem.n

    last = int(np.argmax(trellis.delta[-1]))
    score = trellis.delta[-1, last]

    path = [0] * n
    path[-1] = last
    for t in range(n - 1, 0, -1):
        path[t - 1] = int(trellis.psi[t, path[t]])

    return _make_path(problem, path, score, used=tuple(path[:-1]))


def brute_force_decode(problem: ReducedProblem, limit: int | None = None) -> DecodedPath:
    """
    Score all m**n paths and return the best one.

    Uses the same accumulation order and tie rule as viterbi_decode, so the two
    agree exactly on path and score.

    limit defaults to the brute_force_limit setting.

    Raises:
        OracleSizeError: m**n exceeds limit
    """
    _validate(problem)
    n, m = problem.n, problem.m
    if limit is None:
        limit = get_settings().brute_force_limit
    if m**n > limit:
        raise OracleSizeError(f"{m}**{n} paths exceeds oracle limit {limit}", data={"m": m, "n": n})

    q, s = problem.reduced_q, problem.reduced_s
    # scores has one axis per head; axis t indexes a_{t+1}
    scores = _first_scores(problem)
    for t in range(1, n):
        scores = (scores[..., None] + q) + s[t]

    best = scores.max()
    ties = np.argwhere(scores == best)
    # lexsort's last key is primary: rank by final token first, then backwards
    chosen = [int(i) for i in ties[np.lexsort(ties.T)[0]]]
    return _make_path(problem, chosen, best, used=tuple(chosen[:-1]))


def greedy_decode(problem: ReducedProblem) -> DecodedPath:
    """Independent per-head argmax, scored with the joint formula."""
    _validate(problem)
    path = [int(np.argmax(row)) for row in problem.reduced_s]
    return _make_path(problem, path, path_log_score(problem, path))


def stochastic_decode(problem: ReducedProblem, rng: np.random.Generator) -> DecodedPath:
    """
    Sample one token per head from its renormalized top-k distribution.

    The sampled block is scored with the joint formula. This is one reading of
    "top_k sampling preserves diversity"; the deterministic modes are the default.
    """
    _validate(problem)
    tokens = problem.tokens
    path: list[int] = []
    for head in problem.candidates.per_head_topk:
        head_tokens = np.array([t for t, _ in head], dtype=np.int64)
        probs = np.array([p for _, p in head], dtype=np.float64)
        total = probs.sum()
        if total <= 0:
            raise NumericError("top-k distribution has no mass")
        choice = int(rng.choice(head_tokens, p=probs / total))
        path.append(int(np.searchsorted(tokens, choice)))
    return _make_path(problem, path, path_log_score(problem, path))


def count_viterbi_ops(n: int, m: int) -> int:
    """Inner-loop (add, max) evaluations of the recursion: (n - 1) * m**2."""
    if n < 1 or m < 1:
        raise ParameterError(f"n and m must be >= 1, got n={n}, m={m}")
    return (n - 1) * m * m


def decode(
    problem: ReducedProblem,
    mode: DecodeMode = DecodeMode.VITERBI,
    rng: np.random.Generator | None = None,
) -> DecodedPath:
    """Dispatch to the decoder for mode."""
    if mode == DecodeMode.VITERBI:
        return viterbi_decode(problem)
    if mode == DecodeMode.GREEDY:
        return greedy_decode(problem)
    if mode == DecodeMode.STOCHASTIC:
        if rng is None:
            raise ParameterError("stochastic mode requires a random generator")
        return stochastic_decode(problem, rng)
    raise ParameterError(f"unknown decode mode: {mode}")
