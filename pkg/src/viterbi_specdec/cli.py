"""
Command-line interface.

Usage:
    viterbi-specdec build-transitions --corpus corpus.txt --out q.sdtq --alpha 1 --shards 4
    viterbi-specdec gen-corpus --transitions q.sdtq --num 1000 --length 512 --seed 7 --out c.txt
    viterbi-specdec decode --transitions q.sdtq --source markov:7 --n 8 --k 3 --len 256 --out gen.txt
    viterbi-specdec bench --transitions q.sdtq --n-list 1,2,4,8 --k-list 3 --len 1024 --out bench.csv
    viterbi-specdec compare --truth q.sdtq --n-list 2,4,6,8 --k 3 --len 256 --sessions 100

Exit codes: 0 success, 1 user/input error, 2 internal invariant violation.
"""

import argparse
import csv
import logging
import secrets
import sys
import time
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from typing import NoReturn

import numpy as np

from . import __version__
from .bench import parse_int_list, run_bench, write_bench_csv
from .config import DecodeMode, MaskMode, Settings, get_settings
from .decode_loop import (
    HeadSource,
    MarkovHeadSource,
    RecordingHeadSource,
    ReplayHeadSource,
    compare_strategies,
    gen_synthetic_corpus,
    run_session,
    save_replay,
    sequence_log_likelihood,
)
from .errors import ParameterError, SpecDecodeError
from .token_model import TokenCorpus, Vocabulary, load_corpus, save_corpus
from .transition import (
    TransitionMatrix,
    count_bigrams_sharded,
    estimate_transitions,
    load_transitions,
    save_transitions,
)

logger = logging.getLogger("viterbi_specdec")

COMPARE_HEADER = (
    "n",
    "k",
    "mode",
    "sessions",
    "mean_log_likelihood",
    "invocations",
    "mean_viterbi_ops",
    "dominance_violations",
)


class StageError(Exception):
    """A command stage failed; wraps the original error with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        code = cause.code if isinstance(cause, SpecDecodeError) else 1
        self.code = code
        detail = cause.message if isinstance(cause, SpecDecodeError) else str(cause)
        super().__init__(f"{stage}: {detail}")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1 like every other input error."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Attach a stage name to library and I/O errors."""
    try:
        yield
    except (SpecDecodeError, OSError) as e:
        raise StageError(name, e) from e


def _resolve_seed(seed: int | None) -> int:
    if seed is None:
        seed = secrets.randbelow(2**31)
        print(f"seed={seed}")
    return seed


def _parse_modes(text: str) -> list[DecodeMode]:
    try:
        return [DecodeMode(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ParameterError(f"modes: {e}") from e


def _parse_prompt(text: str | None) -> list[int]:
    if not text:
        return []
    try:
        return [int(t) for t in text.split()]
    except ValueError as e:
        raise ParameterError(f"prompt: not a token list: {text!r}") from e


# =============================================================================
# Commands
# =============================================================================


def cmd_build_transitions(args: argparse.Namespace, settings: Settings) -> int:
    """Estimate Q from a corpus and write the transition file."""
    start = time.monotonic()
    alpha = settings.alpha if args.alpha is None else args.alpha
    shards = settings.shards if args.shards is None else args.shards

    with stage("load corpus"):
        declared = Vocabulary(args.vocab) if args.vocab else None
        corpus = load_corpus(args.corpus, declared)
    with stage("count bigrams"):
        counts = count_bigrams_sharded(corpus, shards, settings.workers)
    with stage("estimate transitions"):
        q = estimate_transitions(counts, alpha)
    with stage("write transitions"):
        save_transitions(q, args.out)

    elapsed = time.monotonic() - start
    print(f"V={q.size} bigrams={counts.total} elapsed_s={elapsed:.3f}")
    return 0


def cmd_gen_corpus(args: argparse.Namespace, settings: Settings) -> int:
    """Sample a synthetic corpus from a transition file."""
    seed = _resolve_seed(args.seed)
    with stage("load transitions"):
        q = load_transitions(args.transitions)
    with stage("generate corpus"):
        corpus = gen_synthetic_corpus(q, args.num, args.length, seed)
    with stage("write corpus"):
        save_corpus(corpus, args.out)
    print(f"sequences={len(corpus)} tokens={corpus.num_tokens} V={corpus.vocab.size}")
    return 0


def _build_source(
    spec: str, q: TransitionMatrix, n: int | None, gamma: float, settings: Settings
) -> tuple[HeadSource, int | None]:
    """markov[:SEED] uses the decoder matrix as ground truth; replay:PATH reads a dump."""
    kind, _, value = spec.partition(":")
    if kind == "markov":
        try:
            seed = int(value) if value else None
        except ValueError as e:
            raise StageError("open source", ParameterError(f"bad markov seed {value!r}")) from e
        return MarkovHeadSource(q, n or settings.heads, gamma), seed
    if kind == "replay":
        if not value:
            raise StageError("open source", ParameterError("replay source needs a path: replay:PATH"))
        with stage("load replay"):
            source = ReplayHeadSource.from_file(value)
        if n is not None and n != source.n:
            raise StageError(
                "open source", ParameterError(f"--n {n} does not match replay heads n={source.n}")
            )
        return source, None
    raise StageError(
        "open source", ParameterError(f"unknown source {spec!r}; use markov:SEED or replay:PATH")
    )


def cmd_decode(args: argparse.Namespace, settings: Settings) -> int:
    """Run one decode session and write the generated sequence."""
    gamma = settings.head_gamma if args.gamma is None else args.gamma
    k = settings.top_k if args.k is None else args.k
    mode = DecodeMode(args.mode) if args.mode else settings.mode
    mask_mode = MaskMode(args.mask_mode) if args.mask_mode else settings.mask_mode
    anchored = args.anchored or settings.anchored

    with stage("load transitions"):
        q = load_transitions(args.transitions)
    source, source_seed = _build_source(args.source, q, args.n, gamma, settings)
    seed = _resolve_seed(args.seed if args.seed is not None else source_seed)

    recorder: RecordingHeadSource | None = None
    if args.record:
        width = args.record_width or q.size
        with stage("open recorder"):
            recorder = RecordingHeadSource(source, width)
        source = recorder

    with stage("parse prompt"):
        prompt = _parse_prompt(args.prompt)
    with stage("decode"):
        tokens, stats = run_session(
            source,
            q,
            prompt,
            args.len,
            k,
            mode,
            mask_mode=mask_mode,
            anchored=anchored,
            log_floor=settings.log_floor,
            rng=np.random.default_rng(seed),
        )
    with stage("write output"):
        save_corpus(TokenCorpus.from_sequences([tokens], q.vocab), args.out)
    if recorder is not None:
        with stage("write replay"):
            save_replay(recorder.replay_log(), args.record)

    ll = sequence_log_likelihood(q, tokens[len(prompt) :], prompt, settings.log_floor)
    steps = max(stats.invocations, 1)
    print(
        f"n={source.n} k={k} mode={mode.value} invocations={stats.invocations} "
        f"m_mean={stats.m_mean:.2f} viterbi_ops={stats.viterbi_ops} "
        f"mean_log_likelihood={ll:.6f}"
    )
    print(
        f"us_per_step source={stats.total_us_source / steps:.1f} "
        f"reduce={stats.total_us_reduce / steps:.1f} viterbi={stats.total_us_viterbi / steps:.1f}"
    )
    return 0


def cmd_bench(args: argparse.Namespace, settings: Settings) -> int:
    """Sweep heads, top-k and modes; write CSV."""
    gamma = settings.head_gamma if args.gamma is None else args.gamma
    with stage("parse lists"):
        n_list = parse_int_list(args.n_list, "n-list")
        k_list = parse_int_list(args.k_list, "k-list")
        modes = _parse_modes(args.modes)
    seed = _resolve_seed(args.seed)

    with stage("load transitions"):
        q = load_transitions(args.transitions)
    with stage("bench"):
        records = run_bench(
            q,
            n_list,
            k_list,
            args.len,
            trials=args.trials,
            modes=modes,
            seed=seed,
            prompt_len=args.prompt_len,
            gamma=gamma,
            workers=args.workers or settings.workers,
            mask_mode=settings.mask_mode,
            anchored=settings.anchored,
        )
    with stage("write csv"):
        write_bench_csv(records, args.out)
    print(f"rows={len(records)} out={args.out}")
    return 0


def cmd_compare(args: argparse.Namespace, settings: Settings) -> int:
    """Per-token log-likelihood of each mode across head counts."""
    gamma = settings.head_gamma if args.gamma is None else args.gamma
    with stage("parse lists"):
        n_list = parse_int_list(args.n_list, "n-list")
        modes = _parse_modes(args.modes)
    seed = _resolve_seed(args.seed)

    with stage("load transitions"):
        q_true = load_transitions(args.truth)
        q = load_transitions(args.transitions) if args.transitions else q_true
    with stage("compare"):
        rows = compare_strategies(
            q_true,
            q,
            args.len,
            args.k,
            n_list,
            modes=modes,
            sessions=args.sessions,
            prompt_len=args.prompt_len,
            gamma=gamma,
            seed=seed,
            mask_mode=settings.mask_mode,
            anchored=settings.anchored,
        )

    with stage("write csv"):
        out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
        try:
            writer = csv.writer(out, lineterminator="\n")
            writer.writerow(COMPARE_HEADER)
            for row in rows:
                writer.writerow(
                    [
                        row.n,
                        row.k,
                        row.mode.value,
                        row.sessions,
                        f"{row.mean_log_likelihood:.6f}",
                        row.invocations,
                        f"{row.mean_viterbi_ops:.1f}",
                        row.dominance_violations,
                    ]
                )
        finally:
            if out is not sys.stdout:
                out.close()
    return 0


# =============================================================================
# Parser
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="viterbi-specdec",
        description="Viterbi-based speculative decoding over discrete token streams.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Logging level (default: SPECDEC_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-transitions", help="Estimate the transition matrix from a corpus")
    p.add_argument("--corpus", required=True, help="Corpus text file")
    p.add_argument("--out", required=True, help="Transition file to write")
    p.add_argument("--alpha", type=float, default=None, help="Additive smoothing constant")
    p.add_argument("--shards", type=int, default=None, help="Sequence shards for counting")
    p.add_argument("--vocab", type=int, default=None, help="Declared vocabulary size")
    p.set_defaults(func=cmd_build_transitions)

    p = sub.add_parser("gen-corpus", help="Sample a synthetic corpus from a transition file")
    p.add_argument("--transitions", required=True)
    p.add_argument("--num", type=int, required=True, help="Number of sequences")
    p.add_argument("--length", type=int, required=True, help="Tokens per sequence")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("decode", help="Run one multi-token decode session")
    p.add_argument("--transitions", required=True)
    p.add_argument("--source", default="markov", help="markov[:SEED] or replay:PATH")
    p.add_argument("--n", type=int, default=None, help="Prediction heads (default 8)")
    p.add_argument("--k", type=int, default=None, help="Top-k per head (default 3)")
    p.add_argument("--len", type=int, required=True, help="Target sequence length L")
    p.add_argument("--mode", choices=[m.value for m in DecodeMode], default=None)
    p.add_argument("--mask-mode", choices=[m.value for m in MaskMode], default=None)
    p.add_argument("--anchored", action="store_true", help="Condition head 1 on the last token")
    p.add_argument("--prompt", default=None, help="Space-separated prompt tokens")
    p.add_argument("--gamma", type=float, default=None, help="Far-head temperature exponent")
    p.add_argument("--seed", type=int, default=None, help="Sampling seed (overrides markov:SEED)")
    p.add_argument("--record", default=None, help="Write a replay file of the head outputs")
    p.add_argument("--record-width", type=int, default=None, help="Pairs per replay line (default V)")
    p.add_argument("--out", required=True, help="Output corpus file")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="Sweep n, k and modes; write CSV")
    p.add_argument("--transitions", required=True)
    p.add_argument("--n-list", required=True, help="Comma-separated head counts")
    p.add_argument("--k-list", default="3", help="Comma-separated top-k values")
    p.add_argument("--modes", default="viterbi,greedy")
    p.add_argument("--len", type=int, required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--prompt-len", type=int, default=0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", help="Compare decoding modes by log-likelihood under the true chain")
    p.add_argument("--truth", required=True, help="Ground-truth transition file")
    p.add_argument("--transitions", default=None, help="Decoder transition file (default: truth)")
    p.add_argument("--n-list", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--modes", default="viterbi,greedy")
    p.add_argument("--len", type=int, required=True)
    p.add_argument("--sessions", type=int, default=100)
    p.add_argument("--prompt-len", type=int, default=1)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()

    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
    )
    logger.debug(f"Configuration: {settings.get_safe_config_summary()}")

    try:
        code: int = args.func(args, settings)
        return code
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except SpecDecodeError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return e.code
    except Exception as e:
        logger.error(f"Internal error: {type(e).__name__}: {e}", exc_info=True)
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
