"""
Benchmark harness.

Runs one session per (n, k, mode, trial) against a Markov head source and
records invocation counts, Viterbi inner-loop operations and per-phase time.
Correctness checks rely on the counts; the timings are informational.
"""

import csv
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import DecodeMode, MaskMode
from .decode_loop import MarkovHeadSource, gen_synthetic_corpus, run_session
from .errors import ParameterError
from .models import BENCH_HEADER, BenchRecord
from .transition import TransitionMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchJob:
    """Parameters of one bench session."""

    n: int
    k: int
    mode: DecodeMode
    trial: int
    seed: int


def parse_int_list(text: str, name: str) -> list[int]:
    """Parse '1,2,4' into [1, 2, 4]; every value must be >= 1."""
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ParameterError(f"{name}: not a comma-separated integer list: {text!r}") from e
    if not values:
        raise ParameterError(f"{name}: empty list")
    if any(v < 1 for v in values):
        raise ParameterError(f"{name}: values must be >= 1, got {values}")
    return values


def _run_job(
    job: BenchJob,
    q: TransitionMatrix,
    target_len: int,
    prompt_len: int,
    gamma: float,
    mask_mode: MaskMode,
    anchored: bool,
) -> BenchRecord:
    prompt: list[int] = []
    if prompt_len > 0:
        prompt = list(gen_synthetic_corpus(q, 1, prompt_len, job.seed).sequences[0])
    source = MarkovHeadSource(q, job.n, gamma)
    _, stats = run_session(
        source,
        q,
        prompt,
        target_len,
        job.k,
        job.mode,
        mask_mode=mask_mode,
        anchored=anchored,
        rng=np.random.default_rng(job.seed),
    )
    return BenchRecord(
        n=job.n,
        k=job.k,
        mode=job.mode,
        seed=job.seed,
        trial=job.trial,
        invocations=stats.invocations,
        m_mean=stats.m_mean,
        viterbi_ops=stats.viterbi_ops,
        us_source=stats.total_us_source,
        us_reduce=stats.total_us_reduce,
        us_viterbi=stats.total_us_viterbi,
    )


def run_bench(
    q: TransitionMatrix,
    n_list: Sequence[int],
    k_list: Sequence[int],
    target_len: int,
    trials: int = 1,
    modes: Sequence[DecodeMode] = (DecodeMode.VITERBI, DecodeMode.GREEDY),
    seed: int = 0,
    prompt_len: int = 0,
    gamma: float = 0.5,
    workers: int = 1,
    mask_mode: MaskMode = MaskMode.RETAIN,
    anchored: bool = False,
) -> list[BenchRecord]:
    """
    Sweep the (n, k, mode, trial) grid.

    Trial t uses seed + t for its prompt and sampling, identical across n, k
    and mode. Records come back sorted by (n, k, mode, trial) whatever the
    worker count.

    Raises:
        ParameterError: invalid lists, trials < 1, target_len <= prompt_len
    """
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    if target_len <= prompt_len:
        raise ParameterError(f"len {target_len} must exceed prompt length {prompt_len}")
    bad_k = [k for k in k_list if not 1 <= k <= q.size]
    if bad_k:
        raise ParameterError(f"k-list values must be in [1, {q.size}], got {bad_k}")
    if any(n < 1 for n in n_list):
        raise ParameterError(f"n-list values must be >= 1, got {list(n_list)}")

    jobs = [
        BenchJob(n=n, k=k, mode=mode, trial=trial, seed=seed + trial)
        for n in n_list
        for k in k_list
        for mode in modes
        for trial in range(trials)
    ]
    logger.info(f"Running {len(jobs)} bench sessions with {workers} worker(s)")

    def run(job: BenchJob) -> BenchRecord:
        return _run_job(job, q, target_len, prompt_len, gamma, mask_mode, anchored)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(job) for job in jobs]

    return sorted(records, key=BenchRecord.sort_key)


def write_bench_csv(records: Sequence[BenchRecord], path: str | Path) -> None:
    """Write records sorted by (n, k, mode, trial) under the fixed header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        for record in sorted(records, key=BenchRecord.sort_key):
            writer.writerow(record.csv_row())
    logger.info(f"Wrote {len(records)} bench rows to {path}")
