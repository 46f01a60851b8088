import itertools

import numpy as np
import pytest

from imputerank.data import MissingPattern
from imputerank.errors import ContractError, UnsupportedError
from imputerank.metrics import SampleSet
from imputerank.ranking import (
    RankMatrix,
    aggregate,
    friedman_test,
    inconsistency_score,
    kendall_tau_distance,
    nemenyi_cd,
    scores_to_ranks,
)

ABC = ("a", "b", "c")


def matrix_from_rows(rows, algorithms=ABC, metric="nds"):
    return scores_to_ranks([dict(zip(algorithms, r)) for r in rows], algorithms, metric=metric)


class TestScoresToRanks:
    def test_plain_sort(self):
        rm = matrix_from_rows([[0.1, 0.3, 0.2]])
        assert rm.ranks[0].tolist() == [1.0, 3.0, 2.0]

    def test_average_rank_ties(self):
        rm = matrix_from_rows([[0.1, 0.1, 0.2]])
        assert rm.ranks[0].tolist() == [1.5, 1.5, 3.0]

    def test_b_test_style_ties(self):
        rm = scores_to_ranks(
            [dict(zip("wxyz", [0.0, 0.0, 1.0, 1.0]))], ("w", "x", "y", "z")
        )
        assert rm.ranks[0].tolist() == [1.5, 1.5, 3.5, 3.5]

    def test_missing_score_rejected(self):
        with pytest.raises(ContractError, match="no score"):
            scores_to_ranks([{"a": 0.1, "b": 0.2}], ABC)

    def test_row_sums_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            k = rng.integers(2, 7)
            names = tuple(f"alg{i}" for i in range(k))
            scores = rng.integers(0, 3, size=(5, k)) / 2.0  # provoke ties
            rm = scores_to_ranks([dict(zip(names, row)) for row in scores], names)
            np.testing.assert_allclose(rm.ranks.sum(axis=1), k * (k + 1) / 2)


class TestFriedman:
    def test_hand_computed_statistic(self):
        rm = matrix_from_rows([[0.1, 0.2, 0.3]] * 4)
        stat, reject = friedman_test(rm, beta=0.05)
        assert stat == pytest.approx(8.0, abs=1e-12)
        assert reject  # chi2 critical value at 2 dof is 5.991

    def test_complete_ties_fail_to_reject(self):
        rm = matrix_from_rows([[1.0, 1.0, 1.0]] * 6)
        stat, reject = friedman_test(rm)
        assert stat == pytest.approx(0.0, abs=1e-12)
        assert not reject

    def test_column_permutation_invariance(self):
        rows = [[0.3, 0.1, 0.2], [0.2, 0.3, 0.1], [0.1, 0.2, 0.3], [0.3, 0.2, 0.1]]
        stat1, _ = friedman_test(matrix_from_rows(rows))
        permuted = [[r[2], r[0], r[1]] for r in rows]
        stat2, _ = friedman_test(matrix_from_rows(permuted))
        assert stat1 == pytest.approx(stat2)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        rows = rng.random((10, 3))
        stat1, _ = friedman_test(matrix_from_rows(rows.tolist()))
        stat2, _ = friedman_test(matrix_from_rows(np.exp(5 * rows).tolist()))
        assert stat1 == pytest.approx(stat2)

    def test_degenerate_sizes(self):
        with pytest.raises(ContractError):
            friedman_test(matrix_from_rows([[0.1, 0.2, 0.3]]))


class TestNemenyiCd:
    def test_published_value_k4(self):
        assert nemenyi_cd(4, 100, 0.05) == pytest.approx(0.4692, abs=1e-3)

    def test_scales_inverse_sqrt_n(self):
        assert nemenyi_cd(3, 400, 0.05) == pytest.approx(nemenyi_cd(3, 100, 0.05) / 2)

    def test_k2_reduces_to_z_over_sqrt_n(self):
        assert nemenyi_cd(2, 50, 0.05) == pytest.approx(1.960 * np.sqrt(1 / 50))

    def test_beta_010_table(self):
        assert nemenyi_cd(2, 50, 0.10) == pytest.approx(1.645 * np.sqrt(1 / 50))

    def test_k_outside_table(self):
        with pytest.raises(UnsupportedError):
            nemenyi_cd(11, 100, 0.05)

    def test_unsupported_beta(self):
        with pytest.raises(UnsupportedError):
            nemenyi_cd(4, 100, 0.01)


class TestAggregate:
    def test_identical_rank_fixture(self):
        rm = matrix_from_rows([[0.1, 0.2, 0.3]] * 4)
        result = aggregate(rm, beta=0.05)
        assert result.avg_ranks == (1.0, 2.0, 3.0)
        assert result.reject_null
        # CD = 2.343 * sqrt(12/24) ~= 1.657: only the (a, c) gap of 2 exceeds it
        assert result.cd == pytest.approx(2.343 * np.sqrt(12 / 24), abs=1e-9)
        assert result.significant_pairs == (("a", "c"),)

    def test_single_algorithm_rejected(self):
        with pytest.raises(ContractError):
            rm = scores_to_ranks([{"a": 0.1}], ("a",))
            aggregate(rm)

    def test_duplicated_rows_keep_avg_ranks(self):
        rows = [[0.3, 0.1, 0.2], [0.1, 0.2, 0.3], [0.2, 0.1, 0.3], [0.1, 0.3, 0.2]]
        base = aggregate(matrix_from_rows(rows))
        doubled = aggregate(matrix_from_rows(rows * 2))
        assert doubled.avg_ranks == base.avg_ranks
        assert doubled.cd**2 == pytest.approx(base.cd**2 / 2)

    def test_no_pairs_when_not_rejected(self):
        rm = matrix_from_rows([[1.0, 1.0, 1.0]] * 6)
        result = aggregate(rm)
        assert not result.reject_null
        assert result.significant_pairs == ()


class TestKendallTau:
    def test_reversal(self):
        assert kendall_tau_distance([1, 2, 3], [3, 2, 1]) == 3

    def test_identity_zero(self):
        assert kendall_tau_distance([2, 1, 3], [2, 1, 3]) == 0

    def test_metric_axioms_on_random_permutations(self):
        rng = np.random.default_rng(9)
        for _ in range(60):
            n = rng.integers(2, 7)
            a, b, c = (rng.permutation(n) for _ in range(3))
            dab = kendall_tau_distance(a, b)
            dba = kendall_tau_distance(b, a)
            assert dab == dba
            assert kendall_tau_distance(a, a) == 0
            assert dab <= kendall_tau_distance(a, c) + kendall_tau_distance(c, b)
            # brute-force discordance count agrees
            brute = sum(
                1
                for i, j in itertools.combinations(range(n), 2)
                if (a[i] - a[j]) * (b[i] - b[j]) < 0
            )
            assert dab == brute


class TestInconsistency:
    def test_three_same_samplers_score_zero(self):
        # K=3: a single remaining algorithm is always ranked consistently
        pattern = MissingPattern(missing=(0,), observed=())
        rng = np.random.default_rng(4)
        samplesets = {
            name: [
                SampleSet(pattern, rng.integers(0, 2, size=(25, 1)), (2,))
                for _ in range(12)
            ]
            for name in ("s1", "s2", "s3")
        }
        assert inconsistency_score(samplesets, "nds") == 0.0

    def test_needs_three_algorithms(self):
        pattern = MissingPattern(missing=(0,), observed=())
        sets = {
            "a": [SampleSet(pattern, [[0]], (2,))],
            "b": [SampleSet(pattern, [[0]], (2,))],
        }
        with pytest.raises(ContractError):
            inconsistency_score(sets, "nds")

    def test_row_count_mismatch_rejected(self):
        pattern = MissingPattern(missing=(0,), observed=())
        mk = lambda n: [SampleSet(pattern, [[0]], (2,)) for _ in range(n)]
        sets = {"a": mk(2), "b": mk(2), "c": mk(3)}
        with pytest.raises(ContractError):
            inconsistency_score(sets, "nds")
