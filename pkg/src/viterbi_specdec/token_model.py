"""
Token alphabet and corpus persistence.

Corpus file format: UTF-8 text, one sequence per line, tokens as base-10
unsigned integers separated by single spaces, every line terminated by LF.
"""

import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorpusParseError, EmptyCorpusError, ParameterError, VocabularyError

logger = logging.getLogger(__name__)

TokenId = int

# Dense V x V float64 storage; 1 << 16 tokens is already 32 GiB
MAX_VOCAB = 1 << 16

_TOKEN_RE = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class Vocabulary:
    """Discrete token alphabet of size V."""

    size: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise VocabularyError(f"vocabulary size must be >= 2, got {self.size}")
        if self.size > MAX_VOCAB:
            raise VocabularyError(
                f"vocabulary size {self.size} exceeds the maximum of {MAX_VOCAB}"
            )

    def contains(self, token: TokenId) -> bool:
        return 0 <= token < self.size


@dataclass(frozen=True)
class TokenCorpus:
    """Ordered collection of non-empty token sequences over one vocabulary."""

    sequences: tuple[tuple[TokenId, ...], ...]
    vocab: Vocabulary

    def __post_init__(self) -> None:
        for idx, seq in enumerate(self.sequences):
            if not seq:
                raise ParameterError(f"sequence {idx} is empty")
            bad = [t for t in seq if not self.vocab.contains(t)]
            if bad:
                raise VocabularyError(
                    f"sequence {idx} holds token {bad[0]} outside vocabulary of size {self.vocab.size}"
                )

    @classmethod
    def from_sequences(
        cls,
        sequences: Iterable[Sequence[int]],
        vocab: Vocabulary | None = None,
    ) -> "TokenCorpus":
        """Build a corpus, inferring V = 1 + max id (at least 2) when vocab is omitted."""
        frozen = tuple(tuple(int(t) for t in seq) for seq in sequences)
        if vocab is None:
            max_id = max((max(seq) for seq in frozen if seq), default=0)
            vocab = Vocabulary(max(2, max_id + 1))
        return cls(sequences=frozen, vocab=vocab)

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def num_tokens(self) -> int:
        return sum(len(seq) for seq in self.sequences)

    @property
    def num_bigrams(self) -> int:
        return sum(len(seq) - 1 for seq in self.sequences)

    def as_arrays(self) -> list[np.ndarray]:
        """Sequences as int64 arrays, for vectorised counting."""
        return [np.asarray(seq, dtype=np.int64) for seq in self.sequences]

    def shards(self, count: int) -> list["TokenCorpus"]:
        """
        Partition into `count` sequence-disjoint shards of contiguous sequences.

        Shards may be empty when count exceeds the number of sequences.
        """
        if count < 1:
            raise ParameterError(f"shard count must be >= 1, got {count}")
        bounds = np.linspace(0, len(self.sequences), count + 1).astype(int)
        return [
            TokenCorpus(sequences=self.sequences[lo:hi], vocab=self.vocab)
            for lo, hi in zip(bounds[:-1], bounds[1:], strict=True)
        ]


def _parse_line(line: str, line_number: int) -> tuple[TokenId, ...]:
    if not line:
        raise CorpusParseError(line_number, "empty line")
    fields = line.split(" ")
    for field in fields:
        if not _TOKEN_RE.fullmatch(field):
            raise CorpusParseError(line_number, f"not an unsigned integer: {field!r}")
    return tuple(int(field) for field in fields)


def load_corpus(path: str | Path, declared_vocab: Vocabulary | None = None) -> TokenCorpus:
    """
    Load a corpus file.

    Args:
        path: Corpus file path
        declared_vocab: Expected vocabulary; inferred as 1 + max id when omitted

    Returns:
        TokenCorpus preserving sequence and token order

    Raises:
        CorpusParseError: Empty line or non-integer field (with line number)
        VocabularyError: Token id >= declared V
        EmptyCorpusError: File holds no sequences
    """
    text = Path(path).read_text(encoding="utf-8")
    if not text:
        raise EmptyCorpusError(f"corpus file {path} is empty")

    lines = text.split("\n")
    # A trailing LF leaves one empty element at the end
    if lines[-1] == "":
        lines.pop()

    sequences = [_parse_line(line, number) for number, line in enumerate(lines, start=1)]
    if not sequences:
        raise EmptyCorpusError(f"corpus file {path} holds no sequences")

    if declared_vocab is not None:
        for number, seq in enumerate(sequences, start=1):
            for token in seq:
                if token >= declared_vocab.size:
                    raise VocabularyError(
                        f"line {number}: token {token} >= declared vocabulary size {declared_vocab.size}",
                        data={"line": number, "token": token},
                    )

    corpus = TokenCorpus.from_sequences(sequences, declared_vocab)
    logger.info(
        f"Loaded corpus {path}: {len(corpus)} sequences, {corpus.num_tokens} tokens, V={corpus.vocab.size}"
    )
    return corpus


def format_sequence(tokens: Iterable[int]) -> str:
    """One corpus line without the terminator."""
    return " ".join(str(int(t)) for t in tokens)


def save_corpus(corpus: TokenCorpus, path: str | Path) -> None:
    """Write a corpus in the text format; load_corpus reproduces it exactly."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for seq in corpus.sequences:
            fh.write(format_sequence(seq))
            fh.write("\n")
    logger.debug(f"Saved corpus {path}: {len(corpus)} sequences")
