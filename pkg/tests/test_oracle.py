import math

import numpy as np
import pytest

from activeht import (
    Allocation,
    DegenerateInstanceError,
    GridTooLargeError,
    OracleCache,
    OracleError,
    grid_oracle,
    load_environment,
    oracle_allocation,
    worst_case_rate,
)

from conftest import BASE_SEED


def cross_env():
    """Two actions whose divergence rows against opponents 1, 2 are (1, 0)
    and (0, 1): the max-min optimum is w = (1/2, 1/2) with value 1/2."""
    r2 = math.sqrt(2.0)
    return load_environment({"name": "cross", "means": [[0, r2, 0], [0, 0, r2]]})


def random_env(rng, num_actions, num_hypotheses):
    means = rng.uniform(0, 1, size=(num_actions, num_hypotheses))
    return load_environment(
        {"name": "rand", "means": means.tolist()}, strict=False
    )


def live_opponents(env, h):
    return [g for g in range(env.num_hypotheses) if g != h and env.max_divergence[h][g] > 0]


class TestAllocation:
    def test_tiny_negative_weights_clamp_to_zero(self):
        alloc = Allocation((1.0 + 5e-13, -5e-13, 0.0))
        assert alloc.weights[1] == 0.0

    def test_real_negatives_rejected(self):
        with pytest.raises(OracleError):
            Allocation((1.1, -0.1))

    def test_bad_sum_rejected(self):
        with pytest.raises(OracleError):
            Allocation((0.7, 0.2))


class TestWorstCaseRate:
    def test_unit_mass_reduces_to_divergence_row_minimum(self, skewed):
        for a in range(skewed.num_actions):
            w = tuple(1.0 if i == a else 0.0 for i in range(skewed.num_actions))
            expected = min(float(skewed.kl_table.values[a, 0, g]) for g in (1, 2, 3, 4))
            assert worst_case_rate(skewed, 0, (1, 2, 3, 4), w) == pytest.approx(expected)

    def test_cross_instance_midpoint(self):
        env = cross_env()
        assert worst_case_rate(env, 0, (1, 2), (0.5, 0.5)) == pytest.approx(0.5, abs=1e-12)

    def test_subset_can_only_raise_the_rate(self, skewed):
        rng = np.random.default_rng(BASE_SEED)
        for _ in range(50):
            w = rng.dirichlet(np.ones(skewed.num_actions))
            big = worst_case_rate(skewed, 0, (1, 2, 3, 4), tuple(w))
            small = worst_case_rate(skewed, 0, (1, 2), tuple(w))
            assert small >= big - 1e-12

    def test_rejects_empty_or_self_opponents(self, skewed):
        w = (0.2,) * 5
        with pytest.raises(OracleError):
            worst_case_rate(skewed, 0, (), w)
        with pytest.raises(OracleError):
            worst_case_rate(skewed, 0, (0, 1), w)


class TestOracleAllocation:
    def test_singleton_opponent_takes_best_action_lowest_index(self, skewed):
        # divergence row of (0 vs 1) is (0.08, 0.02, 0.045, 0.08, 0.02):
        # actions 0 and 3 tie, so the lowest index wins.
        sol = oracle_allocation(skewed, 0, [1])
        assert sol.allocation.weights == (1.0, 0.0, 0.0, 0.0, 0.0)
        assert sol.rate == pytest.approx(0.08)

    def test_cross_instance_optimum(self):
        env = cross_env()
        sol = oracle_allocation(env, 0, [1, 2])
        assert sol.rate == pytest.approx(0.5, abs=1e-9)
        grid = grid_oracle(env, 0, [1, 2], 0.001)
        assert abs(sol.rate - grid.rate) <= 0.001

    def test_single_action_environment(self):
        env = load_environment({"name": "one", "means": [[0.0, 10.0]]})
        sol = oracle_allocation(env, 0, [1])
        assert sol.allocation.weights == (1.0,)
        assert sol.rate == pytest.approx(50.0)

    def test_skewed_full_set_value(self, skewed):
        # Hand-checkable structure: opponent 2 is informative only under
        # action 4, opponent 3 only meaningfully under action 3, giving
        # w* = (0, 0, 0, 0.1, 0.9) and value 0.018.
        sol = oracle_allocation(skewed, 0, [1, 2, 3, 4])
        assert sol.rate == pytest.approx(0.018, abs=1e-9)

    def test_degenerate_pair_is_an_error(self, degenerate):
        with pytest.raises(DegenerateInstanceError):
            oracle_allocation(degenerate, 3, [0, 4])

    def test_solution_is_feasible_and_consistent(self, skewed):
        rng = np.random.default_rng(BASE_SEED + 1)
        for _ in range(25):
            env = random_env(rng, int(rng.integers(2, 6)), int(rng.integers(2, 6)))
            opponents = live_opponents(env, 0)
            if not opponents:
                continue
            sol = oracle_allocation(env, 0, opponents)
            assert min(sol.allocation.weights) >= 0.0
            assert sum(sol.allocation.weights) == pytest.approx(1.0, abs=1e-9)
            achieved = worst_case_rate(env, 0, opponents, sol.allocation)
            assert sol.rate == pytest.approx(achieved, abs=1e-8)

    def test_deterministic_for_fixed_inputs(self, skewed):
        a = oracle_allocation(skewed, 2, [0, 1, 3, 4])
        b = oracle_allocation(skewed, 2, [0, 1, 3, 4])
        assert a == b


class TestGridOracle:
    def test_matches_trivial_singleton_exactly(self):
        env = cross_env()
        for step in (0.5, 0.1, 0.01):
            grid = grid_oracle(env, 0, [1], step)
            assert grid.rate == pytest.approx(1.0, abs=1e-12)

    def test_grid_suboptimality_bound(self):
        rng = np.random.default_rng(BASE_SEED + 2)
        for _ in range(30):
            env = random_env(rng, int(rng.integers(2, 4)), 4)
            opponents = live_opponents(env, 0)
            if not opponents:
                continue
            lp = oracle_allocation(env, 0, opponents)
            grid = grid_oracle(env, 0, opponents, 0.01)
            biggest = max(float(env.max_divergence[0][g]) for g in opponents)
            assert lp.rate >= grid.rate - 1e-9
            assert lp.rate <= grid.rate + 0.01 * biggest + 1e-9

    def test_too_many_actions_rejected(self, skewed):
        with pytest.raises(GridTooLargeError):
            grid_oracle(skewed, 0, [1], 0.01)

    def test_bad_step_rejected(self):
        env = cross_env()
        with pytest.raises(OracleError):
            grid_oracle(env, 0, [1], 0.7)
        with pytest.raises(OracleError):
            grid_oracle(env, 0, [1], 0.0)


class TestStructuralProperties:
    def test_set_monotonicity_on_nested_random_pairs(self):
        rng = np.random.default_rng(BASE_SEED + 3)
        done = 0
        while done < 100:
            env = random_env(rng, int(rng.integers(2, 6)), int(rng.integers(3, 6)))
            opponents = live_opponents(env, 0)
            if len(opponents) < 2:
                continue
            size = int(rng.integers(1, len(opponents)))
            subset = sorted(rng.choice(opponents, size=size, replace=False).tolist())
            big = oracle_allocation(env, 0, opponents)
            small = oracle_allocation(env, 0, subset)
            assert small.rate >= big.rate - 1e-9
            done += 1

    def test_concavity_at_midpoints(self):
        rng = np.random.default_rng(BASE_SEED + 4)
        done = 0
        while done < 100:
            env = random_env(rng, int(rng.integers(2, 6)), int(rng.integers(2, 6)))
            opponents = live_opponents(env, 0)
            if not opponents:
                continue
            w1 = tuple(rng.dirichlet(np.ones(env.num_actions)))
            w2 = tuple(rng.dirichlet(np.ones(env.num_actions)))
            mid = tuple((a + b) / 2 for a, b in zip(w1, w2))
            f1 = worst_case_rate(env, 0, opponents, w1)
            f2 = worst_case_rate(env, 0, opponents, w2)
            fmid = worst_case_rate(env, 0, opponents, mid)
            assert fmid >= (f1 + f2) / 2 - 1e-12
            done += 1

    def test_lipschitz_in_l1(self):
        rng = np.random.default_rng(BASE_SEED + 5)
        done = 0
        while done < 100:
            env = random_env(rng, int(rng.integers(2, 6)), int(rng.integers(2, 6)))
            opponents = live_opponents(env, 0)
            if not opponents:
                continue
            lipschitz = max(float(env.max_divergence[0][g]) for g in opponents)
            w1 = tuple(rng.dirichlet(np.ones(env.num_actions)))
            w2 = tuple(rng.dirichlet(np.ones(env.num_actions)))
            gap = abs(
                worst_case_rate(env, 0, opponents, w1)
                - worst_case_rate(env, 0, opponents, w2)
            )
            l1 = sum(abs(a - b) for a, b in zip(w1, w2))
            assert gap <= lipschitz * l1 + 1e-12
            done += 1


class TestOracleCache:
    def test_cache_returns_same_solution_as_direct_solve(self, skewed):
        cache = OracleCache(skewed)
        direct = oracle_allocation(skewed, 0, [1, 2, 3])
        cached_w, cached_rate = cache.target(0, {1, 2, 3})
        assert cached_w == direct.allocation.weights
        assert cached_rate == direct.rate
        again_w, again_rate = cache.target(0, [3, 2, 1])
        assert again_w == cached_w and again_rate == cached_rate

    def test_collapsed_opponents_yield_zero_rate_but_usable_target(self, degenerate):
        cache = OracleCache(degenerate)
        w, rate = cache.target(3, {0, 1, 2, 4})
        assert rate == 0.0
        assert sum(w) == pytest.approx(1.0, abs=1e-9)
        # mass flows to actions that still separate 3 from its live opponents
        assert w[4] > 0.5

    def test_all_collapsed_falls_back_to_uniform(self, degenerate):
        cache = OracleCache(degenerate)
        w, rate = cache.target(3, {4})
        assert rate == 0.0
        assert w == tuple([1 / 5] * 5)
