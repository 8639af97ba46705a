"""
Tests for the bench harness and its CSV output.
"""

import csv

import numpy as np
import pytest

from viterbi_specdec.bench import parse_int_list, run_bench, write_bench_csv
from viterbi_specdec.config import DecodeMode
from viterbi_specdec.errors import ParameterError
from viterbi_specdec.models import BENCH_HEADER, BenchRecord
from viterbi_specdec.transition import TransitionMatrix
from viterbi_specdec.viterbi import count_viterbi_ops

_DETERMINISTIC = ("n", "k", "mode", "seed", "trial", "invocations", "m_mean", "viterbi_ops")


def _stable(record: BenchRecord) -> tuple:
    return tuple(getattr(record, name) for name in _DETERMINISTIC)


def _context_free_q(v: int) -> TransitionMatrix:
    """Every row is the same strictly decreasing distribution over token ids."""
    weights = np.arange(v, 0, -1, dtype=np.float64)
    return TransitionMatrix.from_rows(np.tile(weights / weights.sum(), (v, 1)))


class TestParseIntList:
    """Tests for parse_int_list."""

    def test_valid(self):
        assert parse_int_list("1,2,4,8", "n-list") == [1, 2, 4, 8]
        assert parse_int_list(" 3 , 5 ", "k-list") == [3, 5]

    @pytest.mark.parametrize("text", ["", "1,x", "0,2", "-1"])
    def test_invalid(self, text):
        with pytest.raises(ParameterError):
            parse_int_list(text, "n-list")


class TestRunBench:
    """Tests for run_bench."""

    def test_invocations_follow_ceil_law(self, random_q):
        q = random_q(8, seed=1)
        records = run_bench(q, [1, 2, 4, 8], [3], 1024, modes=[DecodeMode.VITERBI])
        assert [r.invocations for r in records] == [1024, 512, 256, 128]

    def test_ops_match_candidate_counts(self, random_q):
        """With a single step m_mean is the step's m, so ops are exactly (n-1) m^2."""
        q = random_q(30, seed=2)
        records = run_bench(q, [4, 8], [3, 5], 8, modes=[DecodeMode.VITERBI], prompt_len=0)
        for r in records:
            assert r.invocations == 8 // r.n
            if r.invocations == 1:
                m = int(r.m_mean)
                assert r.viterbi_ops == count_viterbi_ops(r.n, m)

    def test_grid_is_sorted(self, random_q):
        q = random_q(10, seed=3)
        records = run_bench(q, [4, 2], [5, 3], 20, trials=2, modes=list(DecodeMode), seed=7)
        assert len(records) == 2 * 2 * 3 * 2
        assert records == sorted(records, key=BenchRecord.sort_key)
        assert {r.seed - r.trial for r in records} == {7}

    def test_workers_do_not_change_results(self, random_q):
        q = random_q(10, seed=4)
        kwargs = dict(trials=2, modes=list(DecodeMode), seed=3, prompt_len=2)
        serial = run_bench(q, [1, 3], [2, 4], 30, workers=1, **kwargs)
        threaded = run_bench(q, [1, 3], [2, 4], 30, workers=4, **kwargs)
        assert [_stable(r) for r in serial] == [_stable(r) for r in threaded]

    def test_ops_follow_candidate_count_in_every_mode(self):
        q = _context_free_q(12)
        records = run_bench(q, [4], [3], 40, modes=list(DecodeMode))
        for r in records:
            assert r.m_mean == 3.0
            assert r.viterbi_ops == r.invocations * count_viterbi_ops(4, 3)

    def test_top_k_sweep_grows_candidates_and_ops(self):
        """Rows of one repeated distribution give m = k at every step."""
        ks = [3, 5, 7, 9, 15, 25]
        records = run_bench(_context_free_q(32), [8], ks, 256, modes=[DecodeMode.VITERBI])
        assert [r.k for r in records] == ks
        assert [r.m_mean for r in records] == [float(k) for k in ks]
        assert [r.viterbi_ops for r in records] == [32 * count_viterbi_ops(8, k) for k in ks]
        ops = [r.viterbi_ops for r in records]
        assert all(a < b for a, b in zip(ops, ops[1:]))

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(trials=0),
            dict(prompt_len=50),
            dict(k_list=[0]),
            dict(k_list=[7]),
            dict(n_list=[0]),
        ],
    )
    def test_invalid(self, random_q, kwargs):
        args = dict(n_list=[2], k_list=[3], target_len=50)
        args.update(kwargs)
        with pytest.raises(ParameterError):
            run_bench(random_q(6), **args)


class TestBenchCsv:
    """Tests for the CSV contract."""

    def test_header(self):
        assert ",".join(BENCH_HEADER) == (
            "n,k,mode,seed,trial,invocations,m_mean,viterbi_ops,us_source,us_reduce,us_viterbi"
        )

    def test_write(self, tmp_path, random_q):
        records = run_bench(random_q(6), [2, 1], [3], 12, trials=2)
        path = tmp_path / "bench.csv"
        write_bench_csv(list(reversed(records)), path)

        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == BENCH_HEADER
        assert len(rows) == 1 + len(records)
        keys = [(int(r[0]), int(r[1]), r[2], int(r[4])) for r in rows[1:]]
        assert keys == sorted(keys)
        assert rows[1][:3] == ["1", "3", "greedy"]
        assert all("." in r[6] and len(r[6].split(".")[1]) == 4 for r in rows[1:])

    def test_csv_row(self):
        record = BenchRecord(
            n=8,
            k=3,
            mode=DecodeMode.VITERBI,
            seed=1,
            trial=0,
            invocations=128,
            m_mean=24.0,
            viterbi_ops=516096,
            us_source=10,
            us_reduce=20,
            us_viterbi=30,
        )
        assert record.csv_row() == [
            "8", "3", "viterbi", "1", "0", "128", "24.0000", "516096", "10", "20", "30"
        ]
