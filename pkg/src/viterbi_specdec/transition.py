"""
Bigram transition estimation and persistence.

Transition file (binary, little-endian):
    magic "SDTQ" | version u32 = 1 | V u64 | alpha f64 | V*V f64 entries row-major
"""

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .errors import (
    DegenerateRowError,
    DimensionError,
    ParameterError,
    SpecDecodeError,
    TransitionFormatError,
)
from .token_model import MAX_VOCAB, TokenCorpus, Vocabulary

logger = logging.getLogger(__name__)

MAGIC = b"SDTQ"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQd")

ROW_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class BigramCounts:
    """V x V adjacent-pair counts; counts[i][j] = occurrences of (i, j)."""

    vocab: Vocabulary
    counts: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        v = self.vocab.size
        if self.counts.shape != (v, v):
            raise DimensionError(f"counts shape {self.counts.shape} does not match V={v}")
        if (self.counts < 0).any():
            raise ParameterError("bigram counts must be non-negative")
        self.counts.setflags(write=False)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> npt.NDArray[np.int64]:
        return self.counts.sum(axis=1)

    def equals(self, other: "BigramCounts") -> bool:
        return self.vocab == other.vocab and bool(np.array_equal(self.counts, other.counts))


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic bigram model Q(i, j) = P(next = j | prev = i)."""

    vocab: Vocabulary
    rows: npt.NDArray[np.float64]
    alpha: float = 0.0

    def __post_init__(self) -> None:
        v = self.vocab.size
        if self.rows.shape != (v, v):
            raise DimensionError(f"matrix shape {self.rows.shape} does not match V={v}")
        if self.alpha < 0 or np.isnan(self.alpha):
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if np.isnan(self.rows).any() or (self.rows < 0).any() or (self.rows > 1).any():
            raise ParameterError("transition entries must lie in [0, 1]")
        sums = self.rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
        if bad.size:
            raise ParameterError(
                f"row {int(bad[0])} sums to {float(sums[bad[0]])!r}, not 1",
                data={"row": int(bad[0])},
            )
        self.rows.setflags(write=False)

    @classmethod
    def from_rows(cls, rows: npt.ArrayLike, alpha: float = 0.0) -> "TransitionMatrix":
        arr = np.array(rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"transition matrix must be square, got shape {arr.shape}")
        return cls(vocab=Vocabulary(arr.shape[0]), rows=arr, alpha=float(alpha))

    @property
    def size(self) -> int:
        return self.vocab.size

    def equals(self, other: "TransitionMatrix") -> bool:
        """Bit-exact equality of every entry and of alpha."""
        return (
            self.vocab == other.vocab
            and self.rows.tobytes() == other.rows.tobytes()
            and struct.pack("<d", self.alpha) == struct.pack("<d", other.alpha)
        )


def count_bigrams(corpus: TokenCorpus) -> BigramCounts:
    """
    Count adjacent (prev, next) pairs within each sequence.

    Pairs never cross sequence boundaries.
    """
    v = corpus.vocab.size
    try:
        flat = np.zeros(v * v, dtype=np.int64)
    except MemoryError as e:
        raise DimensionError(f"cannot allocate {v}x{v} bigram counts") from e
    for arr in corpus.as_arrays():
        if arr.size < 2:
            continue
        flat += np.bincount(arr[:-1] * v + arr[1:], minlength=v * v)
    return BigramCounts(vocab=corpus.vocab, counts=flat.reshape(v, v))


def merge_counts(a: BigramCounts, b: BigramCounts) -> BigramCounts:
    """Elementwise sum of two count matrices over the same vocabulary."""
    if a.vocab != b.vocab:
        raise DimensionError(
            f"cannot merge counts over V={a.vocab.size} and V={b.vocab.size}"
        )
    return BigramCounts(vocab=a.vocab, counts=a.counts + b.counts)


def count_bigrams_sharded(corpus: TokenCorpus, shards: int = 1, workers: int = 1) -> BigramCounts:
    """
    Count over sequence-disjoint shards and merge in shard order.

    Integer counts make the result identical to count_bigrams(corpus) for any
    shard or worker count.
    """
    parts = corpus.shards(shards)
    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shard_counts = list(pool.map(count_bigrams, parts))
    else:
        shard_counts = [count_bigrams(part) for part in parts]
    logger.debug(f"Counted {len(parts)} shards with {workers} worker(s)")
    return reduce(merge_counts, shard_counts)


def estimate_transitions(counts: BigramCounts, alpha: float = 1.0) -> TransitionMatrix:
    """
    Additive (Laplace) smoothing estimator.

    Q(i, j) = (counts[i][j] + alpha) / (row_sum_i + alpha * V)

    Raises:
        ParameterError: alpha < 0
        DegenerateRowError: alpha = 0 and some row has no observations
    """
    if alpha < 0 or np.isnan(alpha):
        raise ParameterError(f"alpha must be >= 0, got {alpha}")

    v = counts.vocab.size
    row_sums = counts.row_sums()
    if alpha == 0:
        empty = np.flatnonzero(row_sums == 0)
        if empty.size:
            raise DegenerateRowError(int(empty[0]))

    numer = counts.counts.astype(np.float64) + alpha
    denom = row_sums.astype(np.float64) + alpha * v
    q = TransitionMatrix(vocab=counts.vocab, rows=numer / denom[:, None], alpha=float(alpha))
    logger.info(f"Estimated transitions: V={v}, bigrams={counts.total}, alpha={alpha}")
    return q


def save_transitions(q: TransitionMatrix, path: str | Path) -> None:
    """Write the binary transition file."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, q.size, q.alpha)
    payload = np.ascontiguousarray(q.rows, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    logger.debug(f"Saved transitions {path}: V={q.size}")


def load_transitions(path: str | Path) -> TransitionMatrix:
    """
    Read a binary transition file; entries round-trip bit-exact.

    Raises:
        TransitionFormatError: bad magic, unsupported version, dimension
            overflow, truncated or oversized payload, invalid matrix
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TransitionFormatError(f"{path}: truncated header ({len(data)} bytes)")

    magic, version, v, alpha = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TransitionFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise TransitionFormatError(f"{path}: unsupported format version {version}")
    if v < 2 or v > MAX_VOCAB:
        raise TransitionFormatError(f"{path}: dimension overflow, V={v}")

    expected = _HEADER.size + v * v * 8
    if len(data) < expected:
        raise TransitionFormatError(f"{path}: truncated payload, {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise TransitionFormatError(f"{path}: {len(data) - expected} trailing bytes")

    rows = np.frombuffer(data, dtype="<f8", count=v * v, offset=_HEADER.size)
    try:
        q = TransitionMatrix(
            vocab=Vocabulary(v),
            rows=rows.astype(np.float64).reshape(v, v),
            alpha=alpha,
        )
    except SpecDecodeError as e:
        raise TransitionFormatError(f"{path}: invalid matrix: {e.message}") from e
    logger.info(f"Loaded transitions {path}: V={v}, alpha={alpha}")
    return q
