"""
Multi-token generation sessions.

Each invocation of a head source yields n distributions; the step is reduced,
a path is selected, and the block is appended to the context. Generating L
tokens from a prompt of length p takes exactly ceil((L - p) / n) invocations.

Replay file (text):
    n=<heads> k=<pairs per line> V=<vocab>
    <blank line>
    t:1 <token>:<prob> ...
    ...
    t:n <token>:<prob> ...
    <blank line>
    ...
Head indices are 1-based. Probabilities are the head's true values; tokens not
listed on a line share the remaining mass uniformly.
"""

import logging
import math
import time
from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .config import DecodeMode, MaskMode
from .errors import (
    DimensionError,
    InvariantViolation,
    ParameterError,
    ReplayFormatError,
    ReplayUnderrunError,
    SourceError,
    SpecDecodeError,
)
from .logspace import DEFAULT_LOG_FLOOR, floored_log_scalar
from .reducer import StepDistributions, reduce_step
from .token_model import TokenCorpus, TokenId, Vocabulary
from .transition import TransitionMatrix
from .viterbi import count_viterbi_ops, decode, greedy_decode

logger = logging.getLogger(__name__)

HeadPairs = tuple[tuple[TokenId, float], ...]


# =============================================================================
# Head Sources
# =============================================================================


class HeadSource(ABC):
    """Produces the n per-head distributions for a context. One session per instance."""

    @property
    @abstractmethod
    def n(self) -> int: ...

    @property
    @abstractmethod
    def vocab(self) -> Vocabulary: ...

    @abstractmethod
    def next_distributions(self, context: Sequence[TokenId]) -> StepDistributions: ...


class MarkovHeadSource(HeadSource):
    """
    Synthetic heads driven by a ground-truth chain.

    Head t is the t-step transition distribution from the last context token,
    flattened by temperature t**gamma so far heads lose accuracy. With an empty
    context the first token is uniform and head t is the (t-1)-step
    distribution from it.
    """

    def __init__(self, q_true: TransitionMatrix, n: int, gamma: float = 0.5):
        if n < 1:
            raise ParameterError(f"head count must be >= 1, got {n}")
        if gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {gamma}")
        self.q_true = q_true
        self.gamma = gamma
        self._n = n
        self._temperatures = np.arange(1, n + 1, dtype=np.float64) ** gamma

        v = q_true.size
        powers = [q_true.rows]
        for _ in range(n - 1):
            powers.append(powers[-1] @ q_true.rows)
        self._powers = np.stack(powers)  # powers[t] = Q^(t+1)

        uniform = np.full(v, 1.0 / v)
        cold = [uniform] + [uniform @ powers[t] for t in range(n - 1)]
        self._cold_start = self._flatten(np.stack(cold))

    @property
    def n(self) -> int:
        return self._n

    @property
    def vocab(self) -> Vocabulary:
        return self.q_true.vocab

    def _flatten(self, heads: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        if self.gamma == 0:
            out = heads / heads.sum(axis=1, keepdims=True)
        else:
            out = heads ** (1.0 / self._temperatures[:, None])
            out = out / out.sum(axis=1, keepdims=True)
        return np.clip(out, 0.0, 1.0)

    def next_distributions(self, context: Sequence[TokenId]) -> StepDistributions:
        if not context:
            heads = self._cold_start.copy()
        else:
            heads = self._flatten(self._powers[:, int(context[-1]), :])
        return StepDistributions(vocab=self.vocab, heads=heads)


@dataclass(frozen=True)
class ReplayLog:
    """Parsed replay file."""

    n: int
    k: int
    vocab: Vocabulary
    steps: tuple[tuple[HeadPairs, ...], ...]


def _format_pairs(pairs: HeadPairs) -> str:
    return " ".join(f"{token}:{prob!r}" for token, prob in pairs)


def save_replay(log: ReplayLog, path: str | Path) -> None:
    """Write a replay file; probabilities are written with round-trip precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"n={log.n} k={log.k} V={log.vocab.size}\n")
        for step in log.steps:
            fh.write("\n")
            for head_index, pairs in enumerate(step, start=1):
                fh.write(f"t:{head_index} {_format_pairs(pairs)}\n")
    logger.debug(f"Saved replay {path}: {len(log.steps)} steps")


def _parse_header(line: str) -> tuple[int, int, int]:
    try:
        fields = dict(part.split("=", 1) for part in line.split(" "))
        n, k, v = int(fields["n"]), int(fields["k"]), int(fields["V"])
    except (KeyError, ValueError) as e:
        raise ReplayFormatError(f"line 1: bad header {line!r}") from e
    if n < 1 or k < 1 or v < 2 or k > v:
        raise ReplayFormatError(f"line 1: invalid header values n={n} k={k} V={v}")
    return n, k, v


def _parse_head_line(line: str, line_number: int, expected_head: int, k: int, v: int) -> HeadPairs:
    parts = line.split(" ")
    if parts[0] != f"t:{expected_head}":
        raise ReplayFormatError(f"line {line_number}: expected head t:{expected_head}, got {parts[0]!r}")
    if len(parts) - 1 != k:
        raise ReplayFormatError(f"line {line_number}: expected {k} pairs, got {len(parts) - 1}")
    pairs: list[tuple[TokenId, float]] = []
    for part in parts[1:]:
        try:
            token_s, prob_s = part.split(":", 1)
            token, prob = int(token_s), float(prob_s)
        except ValueError as e:
            raise ReplayFormatError(f"line {line_number}: bad pair {part!r}") from e
        if not 0 <= token < v:
            raise ReplayFormatError(f"line {line_number}: token {token} outside vocabulary of size {v}")
        if not 0.0 <= prob <= 1.0:
            raise ReplayFormatError(f"line {line_number}: probability {prob} outside [0, 1]")
        pairs.append((token, prob))
    if len({t for t, _ in pairs}) != len(pairs):
        raise ReplayFormatError(f"line {line_number}: duplicate token")
    return tuple(pairs)


def load_replay(path: str | Path) -> ReplayLog:
    """
    Parse a replay file.

    Raises:
        ReplayFormatError: bad header, head index, pair count or value
    """
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ReplayFormatError(f"{path}: empty replay file")

    n, k, v = _parse_header(lines[0])
    steps: list[tuple[HeadPairs, ...]] = []
    i = 1
    while i < len(lines):
        if lines[i] != "":
            raise ReplayFormatError(f"line {i + 1}: expected blank line before step")
        block = lines[i + 1 : i + 1 + n]
        if len(block) < n:
            raise ReplayFormatError(f"line {i + 2}: truncated step, {len(block)} of {n} heads")
        steps.append(
            tuple(
                _parse_head_line(line, i + 2 + h, h + 1, k, v) for h, line in enumerate(block)
            )
        )
        i += 1 + n

    logger.info(f"Loaded replay {path}: n={n}, k={k}, V={v}, {len(steps)} steps")
    return ReplayLog(n=n, k=k, vocab=Vocabulary(v), steps=tuple(steps))


def pairs_to_distribution(pairs: HeadPairs, v: int) -> npt.NDArray[np.float64]:
    """Expand listed pairs to a length-V vector; unlisted tokens share the residual."""
    vec = np.zeros(v, dtype=np.float64)
    listed = np.array([t for t, _ in pairs], dtype=np.int64)
    vec[listed] = [p for _, p in pairs]
    unlisted = v - listed.size
    if unlisted:
        residual = max(0.0, 1.0 - float(vec.sum()))
        mask = np.ones(v, dtype=bool)
        mask[listed] = False
        vec[mask] = residual / unlisted
    return vec


def top_pairs(probs: npt.NDArray[np.float64], width: int) -> HeadPairs:
    """The width most probable (token, prob) pairs, ties by smaller id."""
    order = np.lexsort((np.arange(probs.size), -probs))[:width]
    return tuple((int(t), float(probs[t])) for t in order)


class ReplayHeadSource(HeadSource):
    """Replays recorded steps in order; running past the end is an error."""

    def __init__(self, log: ReplayLog):
        self.log = log
        self._cursor = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayHeadSource":
        return cls(load_replay(path))

    @property
    def n(self) -> int:
        return self.log.n

    @property
    def vocab(self) -> Vocabulary:
        return self.log.vocab

    @property
    def remaining(self) -> int:
        return len(self.log.steps) - self._cursor

    def next_distributions(self, context: Sequence[TokenId]) -> StepDistributions:
        if self._cursor >= len(self.log.steps):
            raise ReplayUnderrunError(
                f"replay exhausted after {len(self.log.steps)} steps",
                data={"steps": len(self.log.steps)},
            )
        step = self.log.steps[self._cursor]
        self._cursor += 1
        v = self.vocab.size
        heads = np.stack([pairs_to_distribution(pairs, v) for pairs in step])
        return StepDistributions(vocab=self.vocab, heads=heads)


class RecordingHeadSource(HeadSource):
    """Wraps a source and keeps the top-`width` pairs of every head it emits."""

    def __init__(self, inner: HeadSource, width: int):
        if not 1 <= width <= inner.vocab.size:
            raise ParameterError(f"record width must be in [1, {inner.vocab.size}], got {width}")
        self.inner = inner
        self.width = width
        self._steps: list[tuple[HeadPairs, ...]] = []

    @property
    def n(self) -> int:
        return self.inner.n

    @property
    def vocab(self) -> Vocabulary:
        return self.inner.vocab

    def next_distributions(self, context: Sequence[TokenId]) -> StepDistributions:
        dists = self.inner.next_distributions(context)
        self._steps.append(tuple(top_pairs(row, self.width) for row in dists.heads))
        return dists

    def replay_log(self) -> ReplayLog:
        return ReplayLog(n=self.n, k=self.width, vocab=self.vocab, steps=tuple(self._steps))


# =============================================================================
# Sessions
# =============================================================================


@dataclass
class SessionStats:
    """Per-step measurements of one session."""

    invocations: int = 0
    step_m: list[int] = field(default_factory=list)
    step_ops: list[int] = field(default_factory=list)
    us_source: list[int] = field(default_factory=list)
    us_reduce: list[int] = field(default_factory=list)
    us_viterbi: list[int] = field(default_factory=list)
    log_scores: list[float] = field(default_factory=list)
    greedy_log_scores: list[float] = field(default_factory=list)  # same problem, greedy path

    @property
    def viterbi_ops(self) -> int:
        return sum(self.step_ops)

    @property
    def m_mean(self) -> float:
        return float(np.mean(self.step_m)) if self.step_m else 0.0

    @property
    def total_us_source(self) -> int:
        return sum(self.us_source)

    @property
    def total_us_reduce(self) -> int:
        return sum(self.us_reduce)

    @property
    def total_us_viterbi(self) -> int:
        return sum(self.us_viterbi)

    def dominance_violations(self) -> int:
        """Steps whose selected score is below the greedy score on the same problem."""
        return sum(
            1 for s, g in zip(self.log_scores, self.greedy_log_scores, strict=True) if s < g
        )


@dataclass
class DecodeSession:
    """A growing context plus the parameters and stats of its generation."""

    context: list[TokenId]
    prompt_len: int
    target_len: int
    n: int
    k: int
    mode: DecodeMode
    stats: SessionStats = field(default_factory=SessionStats)

    @property
    def done(self) -> bool:
        return len(self.context) >= self.target_len


def expected_invocations(prompt_len: int, target_len: int, n: int) -> int:
    """ceil((L - p) / n)."""
    return math.ceil((target_len - prompt_len) / n)


def _now_us() -> int:
    return time.perf_counter_ns() // 1000


def run_session(
    source: HeadSource,
    q: TransitionMatrix,
    prompt: Sequence[TokenId],
    target_len: int,
    k: int,
    mode: DecodeMode = DecodeMode.VITERBI,
    mask_mode: MaskMode = MaskMode.RETAIN,
    anchored: bool = False,
    log_floor: float = DEFAULT_LOG_FLOOR,
    rng: np.random.Generator | None = None,
) -> tuple[list[TokenId], SessionStats]:
    """
    Generate until the context holds exactly target_len tokens.

    The final block is generated in full and truncated.

    Raises:
        ParameterError: target_len <= len(prompt), k < 1
        DimensionError: source and transition vocabularies differ
        SourceError: source emitted invalid distributions
        ReplayUnderrunError: replay source exhausted
    """
    if target_len <= len(prompt):
        raise ParameterError(f"target length {target_len} must exceed prompt length {len(prompt)}")
    if k < 1:
        raise ParameterError(f"top_k must be >= 1, got {k}")
    if source.n < 1:
        raise ParameterError(f"source head count must be >= 1, got {source.n}")
    if source.vocab != q.vocab:
        raise DimensionError(
            f"source vocabulary {source.vocab.size} != transition vocabulary {q.vocab.size}"
        )
    if any(not q.vocab.contains(int(t)) for t in prompt):
        raise DimensionError(f"prompt token outside vocabulary of size {q.vocab.size}")
    if mode == DecodeMode.STOCHASTIC and rng is None:
        rng = np.random.default_rng()

    session = DecodeSession(
        context=[int(t) for t in prompt],
        prompt_len=len(prompt),
        target_len=target_len,
        n=source.n,
        k=k,
        mode=mode,
    )
    stats = session.stats

    while not session.done:
        t0 = _now_us()
        try:
            dists = source.next_distributions(session.context)
        except ReplayUnderrunError:
            raise
        except SpecDecodeError as e:
            raise SourceError(f"head source failed at step {stats.invocations}: {e.message}") from e
        if dists.n != source.n or dists.vocab != q.vocab:
            raise SourceError(
                f"head source emitted {dists.n} heads over V={dists.vocab.size}, "
                f"expected {source.n} over V={q.vocab.size}"
            )
        t1 = _now_us()

        prev = session.context[-1] if anchored and session.context else None
        problem = reduce_step(q, dists, k, mask_mode, log_floor, prev_token=prev)
        t2 = _now_us()

        path = decode(problem, mode, rng)
        t3 = _now_us()

        baseline = path if mode == DecodeMode.GREEDY else greedy_decode(problem)
        stats.invocations += 1
        stats.step_m.append(problem.m)
        stats.step_ops.append(count_viterbi_ops(problem.n, problem.m))
        stats.us_source.append(t1 - t0)
        stats.us_reduce.append(t2 - t1)
        stats.us_viterbi.append(t3 - t2)
        stats.log_scores.append(path.log_score)
        stats.greedy_log_scores.append(baseline.log_score)

        remaining = session.target_len - len(session.context)
        session.context.extend(path.tokens[:remaining])
        logger.debug(f"Step {stats.invocations}: m={problem.m}, tokens={path.tokens}")

    expected = expected_invocations(session.prompt_len, target_len, source.n)
    if len(session.context) != target_len or stats.invocations != expected:
        raise InvariantViolation(
            f"session ended with {len(session.context)} tokens after {stats.invocations} "
            f"invocations, expected {target_len} after {expected}"
        )

    logger.info(
        f"Session done: L={target_len}, n={source.n}, k={k}, mode={mode.value}, "
        f"invocations={stats.invocations}, m_mean={stats.m_mean:.2f}"
    )
    return session.context, stats


# =============================================================================
# Synthetic data and strategy comparison
# =============================================================================


def gen_synthetic_corpus(
    q_true: TransitionMatrix, num_sequences: int, length: int, seed: int
) -> TokenCorpus:
    """
    Sample sequences from the chain with a uniform initial state.

    Deterministic per seed.
    """
    if num_sequences < 1 or length < 1:
        raise ParameterError(f"need num_sequences >= 1 and length >= 1, got {num_sequences}, {length}")
    rng = np.random.default_rng(seed)
    v = q_true.size
    cdf = np.cumsum(q_true.rows, axis=1)

    out = np.empty((num_sequences, length), dtype=np.int64)
    out[:, 0] = rng.integers(v, size=num_sequences)
    for pos in range(1, length):
        u = rng.random(num_sequences)
        nxt = (cdf[out[:, pos - 1]] <= u[:, None]).sum(axis=1)
        out[:, pos] = np.minimum(nxt, v - 1)

    return TokenCorpus.from_sequences(out.tolist(), q_true.vocab)


def sequence_log_likelihood(
    q_true: TransitionMatrix,
    tokens: Sequence[TokenId],
    context: Sequence[TokenId] = (),
    log_floor: float = DEFAULT_LOG_FLOOR,
) -> float:
    """
    Mean per-token log-likelihood of tokens under q_true, following context.

    A first token with no predecessor scores log(1 / V).
    """
    if not tokens:
        return 0.0
    prev = int(context[-1]) if context else None
    total = 0.0
    for token in tokens:
        if prev is None:
            total += -math.log(q_true.size)
        else:
            total += floored_log_scalar(float(q_true.rows[prev, int(token)]), log_floor)
        prev = int(token)
    return total / len(tokens)


@dataclass(frozen=True)
class StrategyRow:
    """One (n, mode) cell of a strategy comparison."""

    n: int
    k: int
    mode: DecodeMode
    sessions: int
    mean_log_likelihood: float
    invocations: int
    mean_viterbi_ops: float
    dominance_violations: int


def compare_strategies(
    q_true: TransitionMatrix,
    q: TransitionMatrix,
    target_len: int,
    k: int,
    n_list: Sequence[int],
    modes: Sequence[DecodeMode] = (DecodeMode.VITERBI, DecodeMode.GREEDY),
    sessions: int = 1,
    prompt_len: int = 0,
    gamma: float = 0.5,
    seed: int = 0,
    mask_mode: MaskMode = MaskMode.RETAIN,
    anchored: bool = False,
) -> list[StrategyRow]:
    """
    Compare decoding modes over identical seeded prompts.

    Session i uses the same prompt (sampled from q_true) and the same
    stochastic seed for every n and mode, so rows are paired.
    """
    if sessions < 1:
        raise ParameterError(f"sessions must be >= 1, got {sessions}")

    prompts: list[list[TokenId]] = []
    for i in range(sessions):
        if prompt_len > 0:
            corpus = gen_synthetic_corpus(q_true, 1, prompt_len, seed + i)
            prompts.append(list(corpus.sequences[0]))
        else:
            prompts.append([])

    rows: list[StrategyRow] = []
    for n in n_list:
        for mode in modes:
            ll_total = 0.0
            ops_total = 0
            violations = 0
            invocations = 0
            for i, prompt in enumerate(prompts):
                source = MarkovHeadSource(q_true, n, gamma)
                tokens, stats = run_session(
                    source,
                    q,
                    prompt,
                    target_len,
                    k,
                    mode,
                    mask_mode=mask_mode,
                    anchored=anchored,
                    rng=np.random.default_rng(seed + i),
                )
                ll_total += sequence_log_likelihood(q_true, tokens[len(prompt) :], prompt)
                ops_total += stats.viterbi_ops
                violations += stats.dominance_violations()
                invocations = stats.invocations
            rows.append(
                StrategyRow(
                    n=n,
                    k=k,
                    mode=mode,
                    sessions=sessions,
                    mean_log_likelihood=ll_total / sessions,
                    invocations=invocations,
                    mean_viterbi_ops=ops_total / sessions,
                    dominance_violations=violations,
                )
            )
            logger.debug(f"compare n={n} mode={mode.value}: ll={ll_total / sessions:.4f}")
    return rows
