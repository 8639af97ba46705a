"""
Pytest configuration and fixtures.
"""

import os

import numpy as np
import pytest

# Set test environment variables before importing modules
os.environ.setdefault("SPECDEC_ALPHA", "1.0")
os.environ.setdefault("SPECDEC_HEADS", "8")
os.environ.setdefault("SPECDEC_TOP_K", "3")
os.environ.setdefault("SPECDEC_MODE", "viterbi")
os.environ.setdefault("SPECDEC_MASK_MODE", "retain")
os.environ.setdefault("SPECDEC_ANCHORED", "false")
os.environ.setdefault("SPECDEC_WORKERS", "1")
os.environ.setdefault("SPECDEC_LOG_LEVEL", "WARNING")


@pytest.fixture(autouse=True)
def reset_settings():
    """Reset settings cache before each test."""
    from viterbi_specdec.config import get_settings

    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def alternating_q():
    """The deterministic two-token chain 0 -> 1 -> 0."""
    from viterbi_specdec.transition import TransitionMatrix

    return TransitionMatrix.from_rows([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def branching_q():
    """
    Four-token chain where the per-position marginals disagree with the best path.

    From 0 the likeliest next token is 1, but 1 returns to 0 while the runner-up
    2 leads to 3. Marginal argmaxes from 0 over three steps are (1, 0, 0), which
    contains the impossible 0 -> 0 transition.
    """
    from viterbi_specdec.transition import TransitionMatrix

    return TransitionMatrix.from_rows(
        [
            [0.0, 0.55, 0.45, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
        ]
    )


@pytest.fixture
def random_q():
    """Factory for smoothed random row-stochastic matrices."""
    from viterbi_specdec.transition import TransitionMatrix

    def _make(v: int, seed: int = 0) -> TransitionMatrix:
        rng = np.random.default_rng(seed)
        rows = 0.5 * rng.dirichlet(np.ones(v), size=v) + 0.5 / v
        rows = rows / rows.sum(axis=1, keepdims=True)
        return TransitionMatrix.from_rows(rows)

    return _make


@pytest.fixture
def write_corpus(tmp_path):
    """Write raw text to a corpus file and return its path."""

    def _write(text: str, name: str = "corpus.txt"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8", newline="")
        return path

    return _write
