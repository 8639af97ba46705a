"""
Exception hierarchy for Viterbi SpecDec.

Every error carries a numeric code that the CLI uses as its exit code:
1 for user/input errors, 2 for internal invariant violations.
"""

from typing import Any


class SpecDecodeError(Exception):
    """Base exception for all library errors."""

    code: int = 1

    def __init__(self, message: str, data: Any = None):
        self.message = message
        self.data = data
        super().__init__(message)


# Corpus


class CorpusParseError(SpecDecodeError):
    """Malformed line in a corpus file."""

    def __init__(self, line_number: int, message: str, data: Any = None):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}", data)


class VocabularyError(SpecDecodeError):
    """Token id outside the declared vocabulary."""


class EmptyCorpusError(SpecDecodeError):
    """Corpus file holds no sequences."""


# Transitions


class DimensionError(SpecDecodeError):
    """Mismatched vocabularies or out-of-range indices."""


class DegenerateRowError(SpecDecodeError):
    """A count row with zero mass cannot be normalized without smoothing."""

    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(message or f"row {row} has no observed bigrams and alpha = 0")


class TransitionFormatError(SpecDecodeError):
    """Bad magic, truncated payload or impossible dimensions in a transition file."""


# Decoding


class ParameterError(SpecDecodeError):
    """Invalid decoding parameter (k, n, candidate set)."""


class NumericError(SpecDecodeError):
    """NaN or otherwise unusable number in decoder input."""


class OracleSizeError(SpecDecodeError):
    """Brute-force enumeration would exceed the configured path limit."""


class ReplayFormatError(SpecDecodeError):
    """Malformed replay file."""


class ReplayUnderrunError(SpecDecodeError):
    """Replay source ran out of recorded steps."""


class SourceError(SpecDecodeError):
    """Head source produced distributions that violate their invariants."""


class InfiniteLossError(SpecDecodeError):
    """A target token has probability zero, so its negative log-likelihood is infinite."""


class InvariantViolation(SpecDecodeError):
    """Internal post-condition failed."""

    code = 2
