"""
Tool implementations behind the MCP server.

Each tool returns a compact dict. Library errors degrade to an ErrorResponse
instead of raising, so a client always gets a parseable payload.
"""

import logging
from pathlib import Path

import numpy as np

from .bench import run_bench
from .config import DecodeMode, MaskMode, get_settings
from .decode_loop import MarkovHeadSource, run_session, sequence_log_likelihood
from .errors import ParameterError, SpecDecodeError
from .models import ErrorResponse, SessionResponse, TransitionInfoResponse
from .transition import load_transitions

logger = logging.getLogger(__name__)

MAX_TOOL_LENGTH = 4096
MAX_RETURNED_TOKENS = 256


def _error(e: SpecDecodeError | OSError, *notes: str) -> dict:
    if isinstance(e, SpecDecodeError):
        code, message = e.code, e.message
    else:
        code, message = 1, f"{type(e).__name__}: {e}"
    return ErrorResponse(code=code, message=message[:200], notes=list(notes)[:6]).model_dump(
        mode="json"
    )


def _parse_mode(mode: str) -> DecodeMode:
    try:
        return DecodeMode(mode)
    except ValueError as e:
        raise ParameterError(f"unknown mode {mode!r}; use viterbi, greedy or stochastic") from e


def _check_length(length: int) -> None:
    if not 1 <= length <= MAX_TOOL_LENGTH:
        raise ParameterError(f"length must be in [1, {MAX_TOOL_LENGTH}], got {length}")


# =============================================================================
# Tool 1: transition_info
# =============================================================================


def transition_info(path: str) -> dict:
    """
    Summarize a transition file.

    Returns:
        TransitionInfoResponse with V, alpha, smallest entry and worst row-sum error.
    """
    try:
        q = load_transitions(path)
    except (SpecDecodeError, OSError) as e:
        return _error(e, f"path:{Path(path).name}")

    notes: list[str] = []
    min_entry = float(q.rows.min())
    if min_entry == 0.0:
        notes.append("has_zero_entries")
    if q.alpha == 0:
        notes.append("unsmoothed")

    return TransitionInfoResponse(
        path=str(path),
        vocab=q.size,
        alpha=q.alpha,
        min_entry=min_entry,
        max_row_error=float(np.abs(q.rows.sum(axis=1) - 1.0).max()),
        notes=notes,
    ).model_dump(mode="json")


# =============================================================================
# Tool 2: decode_session
# =============================================================================


def decode_session(
    transitions: str,
    length: int,
    n: int | None = None,
    k: int | None = None,
    mode: str | None = None,
    seed: int = 0,
    prompt: list[int] | None = None,
    gamma: float | None = None,
) -> dict:
    """
    Run one session against a Markov head source built from the transition file.

    Returns:
        SessionResponse with counts, timings, log-likelihood and up to 256 tokens.
    """
    settings = get_settings()
    prompt = list(prompt or [])
    n = n or settings.heads
    k = k or settings.top_k
    notes: list[str] = []

    try:
        _check_length(length)
        decode_mode = _parse_mode(mode) if mode else settings.mode
        q = load_transitions(transitions)
        source = MarkovHeadSource(q, n, settings.head_gamma if gamma is None else gamma)
        tokens, stats = run_session(
            source,
            q,
            prompt,
            length,
            k,
            decode_mode,
            mask_mode=settings.mask_mode,
            anchored=settings.anchored,
            log_floor=settings.log_floor,
            rng=np.random.default_rng(seed),
        )
    except (SpecDecodeError, OSError) as e:
        return _error(e, f"n:{n}", f"k:{k}")

    generated = tokens[len(prompt) :]
    if len(generated) > MAX_RETURNED_TOKENS:
        notes.append(f"tokens_truncated:{len(generated)}")
    if settings.mask_mode == MaskMode.STRICT:
        notes.append("strict_mask")
    if stats.dominance_violations():
        notes.append(f"dominance_violations:{stats.dominance_violations()}")

    return SessionResponse(
        n=n,
        k=k,
        mode=decode_mode,
        seed=seed,
        length=length,
        invocations=stats.invocations,
        m_mean=round(stats.m_mean, 4),
        viterbi_ops=stats.viterbi_ops,
        mean_log_likelihood=round(
            sequence_log_likelihood(q, generated, prompt, settings.log_floor), 6
        ),
        us_source=stats.total_us_source,
        us_reduce=stats.total_us_reduce,
        us_viterbi=stats.total_us_viterbi,
        tokens=generated[:MAX_RETURNED_TOKENS],
        notes=notes,
    ).model_dump(mode="json")


# =============================================================================
# Tool 3: bench_point
# =============================================================================


def bench_point(
    transitions: str,
    n: int,
    k: int,
    length: int,
    mode: str = "viterbi",
    trials: int = 1,
    seed: int = 0,
) -> dict:
    """
    Measure one (n, k, mode) grid point.

    Returns:
        {"records": [BenchRecord, ...]} sorted by trial.
    """
    settings = get_settings()
    try:
        _check_length(length)
        decode_mode = _parse_mode(mode)
        q = load_transitions(transitions)
        records = run_bench(
            q,
            [n],
            [k],
            length,
            trials=trials,
            modes=[decode_mode],
            seed=seed,
            gamma=settings.head_gamma,
            mask_mode=settings.mask_mode,
            anchored=settings.anchored,
        )
    except (SpecDecodeError, OSError) as e:
        return _error(e, f"n:{n}", f"k:{k}")

    logger.debug(f"bench_point n={n} k={k} mode={mode}: {len(records)} records")
    return {"records": [r.model_dump(mode="json") for r in records]}
