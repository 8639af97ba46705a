"""
Tests for path selection.

Covers:
- Hand-enumerated instances for Viterbi, brute force and greedy
- Oracle equivalence on randomized problems
- Dominance, score consistency, scale invariance and growth in k
"""

import math

import numpy as np
import pytest

from viterbi_specdec.config import DecodeMode, MaskMode
from viterbi_specdec.errors import DimensionError, NumericError, OracleSizeError, ParameterError
from viterbi_specdec.logspace import floored_log
from viterbi_specdec.reducer import ReducedProblem, StepDistributions, reduce_step
from viterbi_specdec.viterbi import (
    brute_force_decode,
    count_viterbi_ops,
    decode,
    greedy_decode,
    path_log_score,
    stochastic_decode,
    viterbi_decode,
    viterbi_trellis,
)


def _problem(q, s, anchor=None) -> ReducedProblem:
    return ReducedProblem.from_log_arrays(
        floored_log(q), floored_log(s), None if anchor is None else floored_log(anchor)
    )


def _smoothed_rows(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    p = 0.5 * rng.dirichlet(np.ones(cols), size=rows) + 0.5 / cols
    return p / p.sum(axis=1, keepdims=True)


def _random_problem(rng: np.random.Generator, n: int, m: int) -> ReducedProblem:
    return _problem(_smoothed_rows(rng, m, m), _smoothed_rows(rng, n, m))


@pytest.fixture
def four_path_problem():
    """
    Candidates a, b (head 1) and c, d (head 2) as indices 0..3.

    Path probabilities: ac .27, ad .03, bc .04, bd .16.
    """
    q = [
        [0.0, 0.0, 0.9, 0.1],
        [0.0, 0.0, 0.2, 0.8],
        [0.5, 0.5, 0.0, 0.0],
        [0.5, 0.5, 0.0, 0.0],
    ]
    s = [[0.6, 0.4, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]]
    return _problem(q, s)


@pytest.fixture
def greedy_trap_problem():
    """Greedy takes (a, d) at .0045; the best path is (a, c) at .0495."""
    q = [
        [0.0, 0.0, 0.99, 0.01],
        [0.49, 0.49, 0.01, 0.01],
        [0.5, 0.5, 0.0, 0.0],
        [0.5, 0.5, 0.0, 0.0],
    ]
    s = [[0.5, 0.4, 0.05, 0.05], [0.0, 0.0, 0.1, 0.9]]
    return _problem(q, s)


class TestViterbiDecode:
    """Tests for viterbi_decode."""

    def test_four_path_instance(self, four_path_problem):
        path = viterbi_decode(four_path_problem)
        assert path.indices == (0, 2)
        assert path.log_score == pytest.approx(math.log(0.27), abs=1e-12)

    def test_single_head(self):
        problem = _problem(np.full((3, 3), 1 / 3), [[0.2, 0.5, 0.3]])
        path = viterbi_decode(problem)
        assert path.indices == (1,)
        assert path.log_score == pytest.approx(math.log(0.5), abs=1e-15)
        assert path.backpointers_used == ()

    def test_uniform_transitions_follow_head_argmax(self):
        rng = np.random.default_rng(3)
        m, n = 5, 4
        s = _smoothed_rows(rng, n, m)
        path = viterbi_decode(_problem(np.full((m, m), 1 / m), s))
        assert list(path.indices) == [int(np.argmax(row)) for row in s]

    def test_ties_pick_smallest_index(self):
        problem = _problem(np.full((3, 3), 1 / 3), np.full((4, 3), 1 / 3))
        assert viterbi_decode(problem).indices == (0, 0, 0, 0)

    def test_tokens_map_through_candidates(self, branching_q):
        dists = StepDistributions.from_heads([[0.0, 0.55, 0.45, 0.0], [0.55, 0.0, 0.0, 0.45]])
        problem = reduce_step(branching_q, dists, 2)
        path = viterbi_decode(problem)
        assert path.tokens == tuple(int(problem.tokens[i]) for i in path.indices)

    def test_backpointers_cover_all_but_last(self, four_path_problem):
        path = viterbi_decode(four_path_problem)
        assert path.backpointers_used == path.indices[:-1]

    def test_nan_input(self):
        problem = ReducedProblem.from_log_arrays([[0.0, np.nan], [0.0, 0.0]], [[0.0, 0.0]])
        with pytest.raises(NumericError):
            viterbi_decode(problem)

    def test_empty_candidate_set(self):
        problem = ReducedProblem.from_log_arrays(np.zeros((0, 0)), np.zeros((1, 0)))
        with pytest.raises(ParameterError):
            viterbi_decode(problem)

    def test_shape_mismatch(self):
        problem = ReducedProblem.from_log_arrays(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(DimensionError):
            viterbi_decode(problem)

    def test_anchor_shifts_first_choice(self):
        """An anchor that forbids candidate 0 moves head 1 to candidate 1."""
        q = np.full((2, 2), 0.5)
        s = [[0.6, 0.4], [0.5, 0.5]]
        plain = viterbi_decode(_problem(q, s))
        anchored = viterbi_decode(_problem(q, s, anchor=[0.0, 1.0]))
        assert plain.indices[0] == 0
        assert anchored.indices[0] == 1

    def test_trellis(self, four_path_problem):
        trellis = viterbi_trellis(four_path_problem)
        assert trellis.delta.shape == (2, 4)
        assert (trellis.psi[0] == 0).all()
        assert trellis.delta[-1].max() == viterbi_decode(four_path_problem).log_score
        assert trellis.psi[1, 2] == 0
        assert trellis.psi[1, 3] == 1


class TestBruteForceDecode:
    """Tests for the exhaustive oracle."""

    def test_four_path_instance(self, four_path_problem):
        path = brute_force_decode(four_path_problem)
        assert path.indices == (0, 2)
        assert path.log_score == viterbi_decode(four_path_problem).log_score

    def test_single_head(self):
        problem = _problem(np.full((3, 3), 1 / 3), [[0.2, 0.5, 0.3]])
        assert brute_force_decode(problem).indices == (1,)

    def test_three_heads_two_candidates(self):
        problem = _random_problem(np.random.default_rng(0), 3, 2)
        oracle = brute_force_decode(problem)
        fast = viterbi_decode(problem)
        assert oracle.indices == fast.indices
        assert oracle.log_score == fast.log_score

    def test_ties_match_viterbi(self):
        problem = _problem(np.full((3, 3), 1 / 3), np.full((4, 3), 1 / 3))
        assert brute_force_decode(problem).indices == (0, 0, 0, 0)

    def test_size_guard(self):
        problem = _random_problem(np.random.default_rng(0), 5, 4)
        with pytest.raises(OracleSizeError):
            brute_force_decode(problem, limit=4**5 - 1)
        assert brute_force_decode(problem, limit=4**5).n == 5

    def test_size_guard_from_settings(self, monkeypatch):
        from viterbi_specdec.config import get_settings

        monkeypatch.setenv("SPECDEC_BRUTE_FORCE_LIMIT", "10")
        get_settings.cache_clear()
        problem = _random_problem(np.random.default_rng(0), 5, 2)
        with pytest.raises(OracleSizeError):
            brute_force_decode(problem)


class TestGreedyDecode:
    """Tests for greedy_decode."""

    def test_tie_on_second_head(self, four_path_problem):
        path = greedy_decode(four_path_problem)
        assert path.indices == (0, 2)
        assert path.log_score == pytest.approx(math.log(0.27), abs=1e-12)

    def test_greedy_differs_from_viterbi(self, greedy_trap_problem):
        greedy = greedy_decode(greedy_trap_problem)
        best = viterbi_decode(greedy_trap_problem)
        assert greedy.indices == (0, 3)
        assert greedy.log_score == pytest.approx(math.log(0.0045), abs=1e-9)
        assert best.indices == (0, 2)
        assert best.log_score == pytest.approx(math.log(0.0495), abs=1e-9)
        assert best.log_score > greedy.log_score

    def test_uniform_heads_pick_zero(self):
        problem = _problem(_smoothed_rows(np.random.default_rng(1), 4, 4), np.full((3, 4), 0.25))
        assert greedy_decode(problem).indices == (0, 0, 0)


class TestStochasticDecode:
    """Tests for stochastic_decode."""

    def test_draws_from_head_topk(self, random_q):
        q = random_q(12, seed=6)
        dists = StepDistributions.from_heads(q.rows[:4])
        problem = reduce_step(q, dists, 3)
        rng = np.random.default_rng(0)
        for _ in range(50):
            path = stochastic_decode(problem, rng)
            for head, token in enumerate(path.tokens):
                assert token in problem.candidates.head_tokens(head)
            assert path.log_score == path_log_score(problem, path.indices)

    def test_seeded(self, random_q):
        q = random_q(12, seed=6)
        problem = reduce_step(q, StepDistributions.from_heads(q.rows[:4]), 3)
        a = stochastic_decode(problem, np.random.default_rng(5))
        b = stochastic_decode(problem, np.random.default_rng(5))
        assert a == b

    def test_dispatch_requires_rng(self, four_path_problem):
        with pytest.raises(ParameterError):
            decode(four_path_problem, DecodeMode.STOCHASTIC)
        assert decode(four_path_problem, DecodeMode.GREEDY).indices == (0, 2)


class TestCountViterbiOps:
    """Tests for count_viterbi_ops."""

    def test_full_union(self):
        assert count_viterbi_ops(8, 24) == 4032

    def test_single_head(self):
        assert count_viterbi_ops(1, 17) == 0

    @pytest.mark.parametrize("n,m", [(2, 1), (5, 3), (8, 24), (16, 7)])
    def test_doubling_m_quadruples(self, n, m):
        assert count_viterbi_ops(n, 2 * m) == 4 * count_viterbi_ops(n, m)

    @pytest.mark.parametrize("n,m", [(0, 3), (3, 0)])
    def test_invalid(self, n, m):
        with pytest.raises(ParameterError):
            count_viterbi_ops(n, m)


class TestDecoderProperties:
    """Randomized properties over small problems."""

    def test_oracle_equivalence(self):
        """10,000 random problems: Viterbi and brute force agree on path and score."""
        rng = np.random.default_rng(20240607)
        for trial in range(10_000):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(1, 7))
            problem = _random_problem(rng, n, m)
            fast = viterbi_decode(problem)
            oracle = brute_force_decode(problem)
            assert fast.indices == oracle.indices, f"trial {trial}: n={n} m={m}"
            assert abs(fast.log_score - oracle.log_score) <= 1e-9

    def test_dominance_and_score_consistency(self):
        rng = np.random.default_rng(99)
        for _ in range(2000):
            n, m = int(rng.integers(1, 7)), int(rng.integers(1, 9))
            q = _smoothed_rows(rng, m, m)
            s = _smoothed_rows(rng, n, m)
            problem = _problem(q, s)
            best = viterbi_decode(problem)
            assert best.log_score >= greedy_decode(problem).log_score
            assert path_log_score(problem, best.indices) == best.log_score

            p = best.indices
            raw = math.log(s[0][p[0]]) + sum(
                math.log(q[p[t - 1]][p[t]]) + math.log(s[t][p[t]]) for t in range(1, n)
            )
            assert abs(raw - best.log_score) <= 1e-9

    def test_scale_invariance(self):
        """Scaling one head by c shifts the score by log c and keeps the path."""
        rng = np.random.default_rng(5)
        for _ in range(500):
            n, m = int(rng.integers(1, 6)), int(rng.integers(2, 7))
            q = _smoothed_rows(rng, m, m)
            s = _smoothed_rows(rng, n, m)
            head = int(rng.integers(n))
            c = float(rng.uniform(0.1, 10.0))
            scaled = s.copy()
            scaled[head] *= c
            base = viterbi_decode(_problem(q, s))
            shifted = viterbi_decode(_problem(q, scaled))
            assert shifted.indices == base.indices
            assert shifted.log_score - base.log_score == pytest.approx(math.log(c), abs=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_score_grows_with_k(self, random_q, seed):
        q = random_q(30, seed=seed)
        rng = np.random.default_rng(seed)
        dists = StepDistributions.from_heads(_smoothed_rows(rng, 6, 30))
        scores = [
            viterbi_decode(reduce_step(q, dists, k, MaskMode.RETAIN)).log_score for k in range(1, 12)
        ]
        assert all(b >= a for a, b in zip(scores, scores[1:]))
