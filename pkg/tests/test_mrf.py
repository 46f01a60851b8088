import itertools
import math

import numpy as np
import pytest

from imputerank.data import MissingPattern
from imputerank.errors import ContractError
from imputerank.mrf import (
    GibbsConfig,
    MrfParams,
    TrainConfig,
    conditional_distribution,
    gibbs_sample,
    per_pattern_problem,
    single_model_problem,
    train_per_pattern,
    train_single_model,
)

from conftest import make_dataset


def two_binary_params(w11=0.0, unary0=(0.0, 0.0), unary1=(0.0, 0.0), pattern=None):
    pairwise = np.zeros((2, 2))
    pairwise[1, 1] = w11
    if pattern is None:
        pattern = MissingPattern(missing=(0, 1), observed=())
    return MrfParams(
        cards=(2, 2),
        unary={0: np.array(unary0), 1: np.array(unary1)},
        pairwise={(0, 1): pairwise},
        pattern=pattern,
    )


class TestConditionalDistribution:
    def test_zero_weights_uniform(self):
        params = two_binary_params()
        p = conditional_distribution(params, [-1, 0], 0)
        np.testing.assert_allclose(p, [0.5, 0.5])

    def test_hand_computed_log3(self):
        params = two_binary_params(w11=math.log(3))
        p = conditional_distribution(params, [-1, 1], 0)
        np.testing.assert_allclose(p, [0.25, 0.75], atol=1e-12)

    def test_shift_invariance(self):
        base = two_binary_params(w11=0.7, unary0=(0.3, -0.4))
        shifted = two_binary_params(w11=0.7, unary0=(0.3 + 5.0, -0.4 + 5.0))
        p0 = conditional_distribution(base, [-1, 1], 0)
        p1 = conditional_distribution(shifted, [-1, 1], 0)
        np.testing.assert_allclose(p0, p1, atol=1e-12)

    def test_valid_probability_vector_for_random_weights(self):
        rng = np.random.default_rng(4)
        pattern = MissingPattern(missing=(0, 1, 2), observed=())
        for _ in range(20):
            params = MrfParams(
                cards=(3, 2, 4),
                unary={k: rng.normal(0, 50, size=c) for k, c in enumerate((3, 2, 4))},
                pairwise={
                    (0, 1): rng.normal(0, 50, size=(3, 2)),
                    (0, 2): rng.normal(0, 50, size=(3, 4)),
                    (1, 2): rng.normal(0, 50, size=(2, 4)),
                },
                pattern=pattern,
            )
            p = conditional_distribution(params, [0, 1, 2], 1)
            assert np.all(p >= 0)
            assert abs(p.sum() - 1.0) < 1e-12

    def test_unassigned_neighbor_rejected(self):
        params = two_binary_params(w11=1.0)
        with pytest.raises(ContractError, match="unassigned"):
            conditional_distribution(params, [-1, -1], 0)

    def test_column_outside_scope_rejected(self):
        pattern = MissingPattern(missing=(0,), observed=(1,))
        params = MrfParams(
            cards=(2, 2),
            unary={0: np.zeros(2)},
            pairwise={(0, 1): np.zeros((2, 2))},
            pattern=pattern,
        )
        with pytest.raises(ContractError, match="scope"):
            conditional_distribution(params, [0, 0], 1)


class TestTraining:
    def test_copy_dataset_learns_conditional(self, copy_dataset):
        pattern = MissingPattern(missing=(1,), observed=(0,))
        params = train_per_pattern(copy_dataset, range(500), pattern)
        for level in (0, 1):
            p = conditional_distribution(params, np.array([level, -1]), 1)
            assert p[level] > 0.95

    def test_independent_columns_have_small_interactions(self):
        rng = np.random.default_rng(8)
        cells = rng.integers(0, 2, size=(2000, 3))
        data = make_dataset(cells, cards=[2, 2, 2])
        pattern = MissingPattern(missing=(0, 1), observed=(2,))
        params = train_per_pattern(data, range(2000), pattern, TrainConfig(l2=1e-2))
        for w in params.pairwise.values():
            assert np.abs(w).max() < 0.1

    def test_single_row_strong_l2_bounded(self):
        data = make_dataset([[0, 1]], cards=[2, 2])
        pattern = MissingPattern(missing=(0,), observed=(1,))
        params = train_per_pattern(data, [0], pattern, TrainConfig(l2=10.0))
        for arr in [*params.unary.values(), *params.pairwise.values()]:
            assert np.all(np.isfinite(arr))
            assert np.abs(arr).max() < 1.0

    def test_single_model_copy_dataset(self, copy_dataset):
        params = train_single_model(copy_dataset, range(500))
        for level in (0, 1):
            p = conditional_distribution(params, np.array([level, -1]), 1)
            assert p[level] > 0.95
            # symmetric direction is also available from the single model
            p = conditional_distribution(params, np.array([-1, level]), 0)
            assert p[level] > 0.95

    def test_huge_tolerance_returns_zero_init(self, copy_dataset):
        params = train_single_model(copy_dataset, range(500), cfg=TrainConfig(tol=1e9))
        for arr in [*params.unary.values(), *params.pairwise.values()]:
            assert np.all(arr == 0.0)

    def test_determinism(self, copy_dataset):
        pattern = MissingPattern(missing=(1,), observed=(0,))
        a = train_per_pattern(copy_dataset, range(500), pattern)
        b = train_per_pattern(copy_dataset, range(500), pattern)
        for key in a.pairwise:
            assert np.array_equal(a.pairwise[key], b.pairwise[key])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        cells = rng.integers(0, 3, size=(40, 3)) % np.array([3, 2, 3])
        data = make_dataset(cells, cards=[3, 2, 3])
        pattern = MissingPattern(missing=(0, 2), observed=(1,))
        for problem in (
            per_pattern_problem(data, range(40), pattern, l2=1e-2),
            single_model_problem(data, range(40), l2=1e-2),
        ):
            for _ in range(20):
                theta = rng.normal(0, 0.5, size=problem.num_params)
                _, analytic = problem.value_and_grad(theta)
                fd = np.zeros_like(theta)
                h = 1e-5
                for i in range(len(theta)):
                    up, down = theta.copy(), theta.copy()
                    up[i] += h
                    down[i] -= h
                    fd[i] = (problem.value(up) - problem.value(down)) / (2 * h)
                rel = np.linalg.norm(fd - analytic) / max(np.linalg.norm(fd), 1e-12)
                assert rel < 1e-4

    def test_objective_concave_increases_and_converges(self, copy_dataset):
        pattern = MissingPattern(missing=(1,), observed=(0,))
        cfg = TrainConfig(max_iters=2000, tol=1e-5)
        params = train_per_pattern(copy_dataset, range(500), pattern, cfg)
        problem = per_pattern_problem(copy_dataset, range(500), pattern, cfg.l2)
        theta = problem.pack(params.unary, params.pairwise)
        value, grad = problem.value_and_grad(theta)
        assert np.linalg.norm(grad) <= cfg.tol
        # optimum beats the zero initialization
        assert value > problem.value(np.zeros(problem.num_params))


class TestGibbs:
    def test_single_site_exact(self):
        pattern = MissingPattern(missing=(0,), observed=(1,))
        params = MrfParams(
            cards=(2, 2),
            unary={0: np.array([0.0, math.log(3)])},
            pairwise={(0, 1): np.zeros((2, 2))},
            pattern=pattern,
        )
        cfg = GibbsConfig(burn_in=0, thin=1, num_samples=10_000, seed=0)
        ss = gibbs_sample(params, [0], pattern, cfg)
        expected = conditional_distribution(params, [-1, 0], 0)
        freq = np.bincount(ss.samples[:, 0], minlength=2) / len(ss)
        assert np.abs(freq - expected).max() < 0.02

    def test_two_variable_joint_matches_enumeration(self):
        rng = np.random.default_rng(3)
        pattern = MissingPattern(missing=(0, 1), observed=())
        params = two_binary_params(
            w11=rng.normal(0, 1), unary0=tuple(rng.normal(0, 1, 2)), unary1=tuple(rng.normal(0, 1, 2))
        )
        cfg = GibbsConfig(burn_in=100, thin=2, num_samples=10_000, seed=5)
        ss = gibbs_sample(params, [], pattern, cfg)
        counts = np.zeros((2, 2))
        for a, b in ss.samples:
            counts[a, b] += 1
        empirical = counts / counts.sum()
        logits = np.zeros((2, 2))
        for a, b in itertools.product(range(2), range(2)):
            logits[a, b] = (
                params.unary[0][a] + params.unary[1][b] + params.pairwise[(0, 1)][a, b]
            )
        exact = np.exp(logits - logits.max())
        exact /= exact.sum()
        assert 0.5 * np.abs(empirical - exact).sum() <= 0.03

    def test_deterministic(self):
        pattern = MissingPattern(missing=(0, 1), observed=())
        params = two_binary_params(w11=0.8)
        cfg = GibbsConfig(num_samples=30, seed=11)
        a = gibbs_sample(params, [], pattern, cfg)
        b = gibbs_sample(params, [], pattern, cfg)
        assert np.array_equal(a.samples, b.samples)

    def test_pattern_scope_mismatch(self):
        pattern = MissingPattern(missing=(0,), observed=(1,))
        other = MissingPattern(missing=(1,), observed=(0,))
        params = MrfParams(
            cards=(2, 2),
            unary={0: np.zeros(2)},
            pairwise={(0, 1): np.zeros((2, 2))},
            pattern=pattern,
        )
        with pytest.raises(ContractError):
            gibbs_sample(params, [0], other, GibbsConfig(seed=0))

    def test_single_model_any_pattern(self, copy_dataset):
        params = train_single_model(copy_dataset, range(500))
        for pattern in (
            MissingPattern(missing=(0,), observed=(1,)),
            MissingPattern(missing=(1,), observed=(0,)),
            MissingPattern(missing=(0, 1), observed=()),
        ):
            observed = [1] if pattern.observed else []
            ss = gibbs_sample(params, observed, pattern, GibbsConfig(num_samples=5, seed=1))
            assert ss.samples.shape == (5, len(pattern.missing))


class TestSerialization:
    def test_round_trip_bit_faithful(self, tmp_path, copy_dataset):
        pattern = MissingPattern(missing=(1,), observed=(0,))
        params = train_per_pattern(copy_dataset, range(500), pattern)
        path = tmp_path / "model.json"
        params.save(path)
        again = MrfParams.load(path)
        assert again.cards == params.cards
        assert again.pattern == params.pattern
        for k in params.unary:
            assert np.array_equal(again.unary[k], params.unary[k])
        for key in params.pairwise:
            assert np.array_equal(again.pairwise[key], params.pairwise[key])
