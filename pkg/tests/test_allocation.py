"""Greedy allocator vs brute force, offline policy, routing."""

import numpy as np
import pytest

from adalloc.allocation import (
    Allocation,
    BudgetSpec,
    OfflineBinnedPolicy,
    RoutingCosts,
    allocate_bruteforce,
    allocate_greedy,
    allocation_objective,
    load_policy,
    policy_from_dict,
    policy_to_dict,
    route_by_preference,
    route_random,
    save_policy,
    uniform_budgets,
)
from adalloc.curves import analytic_marginals


def random_instance(rng, max_n=6, max_cap=5):
    """Random nonincreasing-delta instance, possibly with zero tails."""
    n = int(rng.integers(1, max_n + 1))
    cap = int(rng.integers(1, max_cap + 1))
    deltas = np.sort(rng.random((n, cap)), axis=1)[:, ::-1]
    tails = rng.random(n) < 0.3
    for i in np.flatnonzero(tails):
        cut = int(rng.integers(0, cap))
        deltas[i, cut:] = 0.0
    minimum = int(rng.integers(0, 2))
    avg = rng.uniform(minimum, cap)
    return deltas, BudgetSpec(avg, cap, minimum)


class TestBudgetSpec:
    def test_total_units_floor(self):
        assert BudgetSpec(1.0, 4).total_units(2) == 2
        assert BudgetSpec(1.34, 4).total_units(3) == 4

    def test_float_representation_guard(self):
        # 0.3 * 10 is 2.999... in floats but must count as 3 units
        assert BudgetSpec(0.3, 2).total_units(10) == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            BudgetSpec(-1.0, 4)
        with pytest.raises(ValueError):
            BudgetSpec(1.0, 0)
        with pytest.raises(ValueError):
            BudgetSpec(1.0, 4, min_per_query=2)


class TestAllocateGreedy:
    def test_two_query_example(self):
        alloc = allocate_greedy([[0.9, 0.05], [0.5, 0.4]], BudgetSpec(1.0, 2, 0))
        np.testing.assert_array_equal(alloc.budgets, [1, 1])
        assert alloc.objective_estimate == pytest.approx(1.4)

    def test_identical_curves_split_evenly(self):
        deltas = np.tile(analytic_marginals(0.4, 4), (5, 1))
        alloc = allocate_greedy(deltas, BudgetSpec(2.0, 4, 0))
        np.testing.assert_array_equal(alloc.budgets, np.full(5, 2))

    def test_zero_delta_query_gets_nothing(self):
        alloc = allocate_greedy([[0.0, 0.0], [0.5, 0.3]], BudgetSpec(1.0, 2, 0))
        np.testing.assert_array_equal(alloc.budgets, [0, 2])

    def test_minimum_charged_first(self):
        alloc = allocate_greedy([[0.0, 0.0], [0.5, 0.3]], BudgetSpec(1.0, 2, 1))
        np.testing.assert_array_equal(alloc.budgets, [1, 1])

    def test_tie_break_front_loads_lowest_index(self):
        deltas = np.ones((3, 2))
        alloc = allocate_greedy(deltas, BudgetSpec(2 / 3, 2, 0))
        np.testing.assert_array_equal(alloc.budgets, [2, 0, 0])

    def test_infeasible_minimum(self):
        with pytest.raises(ValueError):
            allocate_greedy([[0.5], [0.5]], BudgetSpec(0.4, 1, 1))

    def test_curve_length_mismatch(self):
        with pytest.raises(ValueError):
            allocate_greedy([[0.5, 0.2]], BudgetSpec(1.0, 3, 0))

    def test_strict_mode_rejects_rising_curve(self):
        with pytest.raises(ValueError):
            allocate_greedy([[0.1, 0.5]], BudgetSpec(1.0, 2, 0), concavify=False)

    def test_concavify_enables_deferred_value(self):
        # quality [0, 0, 1]: worth 2 units together, nothing alone
        alloc = allocate_greedy([[0.0, 1.0], [0.4, 0.0]], BudgetSpec(1.0, 2, 0))
        np.testing.assert_array_equal(alloc.budgets, [2, 0])

    def test_negative_mandatory_unit_does_not_poison_the_tail(self):
        # a negative q(1) - q(0) on a mandatory unit must not stop the
        # allocator from buying the genuinely positive units behind it
        deltas = [[-2.0, 0.3, 0.2], [0.1, 0.05, 0.01]]
        alloc = allocate_greedy(deltas, BudgetSpec(2.0, 3, 1))
        np.testing.assert_array_equal(alloc.budgets, [3, 1])

    def test_budget_tightness_with_positive_deltas(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            cap = int(rng.integers(2, 6))
            deltas = np.sort(rng.uniform(0.05, 1.0, (n, cap)), axis=1)[:, ::-1]
            budget = BudgetSpec(rng.uniform(0.5, cap - 1), cap, 0)
            alloc = allocate_greedy(deltas, budget)
            assert alloc.total_units == budget.total_units(n)

    def test_objective_monotone_in_budget(self):
        rng = np.random.default_rng(1)
        deltas = np.sort(rng.random((6, 4)), axis=1)[:, ::-1]
        objectives = [
            allocate_greedy(deltas, BudgetSpec(b, 4, 0)).objective_estimate
            for b in (0.5, 1.0, 2.0, 3.0, 4.0)
        ]
        assert np.all(np.diff(objectives) >= -1e-12)

    def test_dominates_uniform(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            deltas, budget = random_instance(rng)
            if budget.average_budget < 1:
                continue
            alloc = allocate_greedy(deltas, budget)
            uniform = uniform_budgets(deltas.shape[0], budget)
            assert alloc.objective_estimate >= allocation_objective(deltas, uniform) - 1e-9

    def test_ids_attached(self):
        alloc = allocate_greedy([[0.5], [0.4]], BudgetSpec(1.0, 1, 0), ids=["a", "b"])
        assert alloc.budgets_by_id() == {"a": 1, "b": 1}


class TestAllocateBruteforce:
    def test_two_query_example(self):
        alloc = allocate_bruteforce([[0.9, 0.05], [0.5, 0.4]], BudgetSpec(1.0, 2, 0))
        np.testing.assert_array_equal(alloc.budgets, [1, 1])

    def test_zero_budget(self):
        alloc = allocate_bruteforce([[0.5], [0.5]], BudgetSpec(0.0, 1, 0))
        np.testing.assert_array_equal(alloc.budgets, [0, 0])

    def test_single_query_takes_floor(self):
        alloc = allocate_bruteforce([[0.5, 0.4, 0.3, 0.2]], BudgetSpec(2.9, 4, 0))
        np.testing.assert_array_equal(alloc.budgets, [2])

    def test_never_buys_free_units(self):
        alloc = allocate_bruteforce([[0.0]], BudgetSpec(1.0, 1, 0))
        np.testing.assert_array_equal(alloc.budgets, [0])

    def test_guard_on_large_instances(self):
        with pytest.raises(ValueError):
            allocate_bruteforce(np.ones((9, 2)), BudgetSpec(1.0, 2, 0))
        with pytest.raises(ValueError):
            allocate_bruteforce(np.ones((2, 7)), BudgetSpec(1.0, 7, 0))

    def test_matches_greedy_objective_and_budgets(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            deltas, budget = random_instance(rng)
            greedy = allocate_greedy(deltas, budget)
            brute = allocate_bruteforce(deltas, budget)
            assert greedy.objective_estimate == pytest.approx(
                brute.objective_estimate, abs=1e-9
            )
            np.testing.assert_array_equal(greedy.budgets, brute.budgets)


class TestUniformBudgets:
    def test_floor_and_cap(self):
        np.testing.assert_array_equal(uniform_budgets(3, BudgetSpec(2.7, 4, 0)), [2, 2, 2])
        np.testing.assert_array_equal(uniform_budgets(2, BudgetSpec(9.0, 4, 0)), [4, 4])

    def test_infeasible_minimum(self):
        with pytest.raises(ValueError):
            uniform_budgets(3, BudgetSpec(0.5, 4, 1))


class TestOfflineBinnedPolicy:
    def test_single_bin_assigns_floor(self):
        scores = np.linspace(0.1, 0.9, 8)
        deltas = np.vstack([analytic_marginals(s, 4) for s in scores])
        policy = OfflineBinnedPolicy(BudgetSpec(2.0, 4, 0), n_bins=1).fit(scores, deltas)
        np.testing.assert_array_equal(policy.predict(scores), np.full(8, 2))

    def test_dead_bin_gets_nothing(self):
        scores = np.array([0.0, 0.0, 0.9, 0.9])
        deltas = np.vstack([analytic_marginals(s, 3) for s in scores])
        policy = OfflineBinnedPolicy(BudgetSpec(1.5, 3, 0), n_bins=2).fit(scores, deltas)
        assert policy.predict([0.0])[0] == 0
        assert policy.predict([0.9])[0] == 3

    def test_edge_goes_to_higher_bin(self):
        scores = np.array([0.1, 0.2, 0.3, 0.4])
        deltas = np.vstack([analytic_marginals(s, 2) for s in scores])
        policy = OfflineBinnedPolicy(BudgetSpec(1.0, 2, 0), n_bins=2).fit(scores, deltas)
        edge = policy.bin_edges_[0]
        assert policy.assign_bin([edge])[0] == 1
        assert policy.assign_bin([edge - 1e-9])[0] == 0

    def test_three_bin_mapping(self):
        # easy/medium/hard thirds with distinct budgets; every region maps home
        scores = np.array([0.05, 0.1, 0.15, 0.4, 0.45, 0.5, 0.8, 0.85, 0.9])
        deltas = np.vstack([analytic_marginals(s, 4) for s in scores])
        policy = OfflineBinnedPolicy(BudgetSpec(2.0, 4, 0), n_bins=3).fit(scores, deltas)
        budgets = policy.bin_budgets_
        assert policy.predict([0.0])[0] == budgets[0]
        assert policy.predict([0.45])[0] == budgets[1]
        assert policy.predict([1.0])[0] == budgets[-1]

    def test_out_of_range_scores_clamp_to_end_bins(self):
        scores = np.linspace(0.2, 0.8, 10)
        deltas = np.vstack([analytic_marginals(s, 3) for s in scores])
        policy = OfflineBinnedPolicy(BudgetSpec(1.0, 3, 0), n_bins=5).fit(scores, deltas)
        assert policy.assign_bin([-5.0])[0] == 0
        assert policy.assign_bin([5.0])[0] == policy.bin_budgets_.shape[0] - 1

    def test_tied_scores_degrade_bins(self):
        scores = np.array([0.5] * 6 + [0.9, 0.9])
        deltas = np.vstack([analytic_marginals(s, 2) for s in scores])
        policy = OfflineBinnedPolicy(BudgetSpec(1.0, 2, 0), n_bins=4).fit(scores, deltas)
        assert policy.meta_["effective_bins"] < 4
        assert policy.meta_["requested_bins"] == 4
        counts = np.bincount(policy.assign_bin(scores))
        assert np.all(counts > 0)

    def test_sandwich_against_online_and_uniform(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            n = int(rng.integers(6, 40))
            cap = int(rng.integers(2, 7))
            deltas = np.sort(rng.random((n, cap)), axis=1)[:, ::-1]
            scores = rng.random(n)
            budget = BudgetSpec(rng.uniform(1.0, cap), cap, int(rng.integers(0, 2)))
            n_bins = int(rng.integers(1, 6))
            policy = OfflineBinnedPolicy(budget, n_bins=n_bins).fit(scores, deltas)
            offline = allocation_objective(deltas, policy.predict(scores))
            online = allocate_greedy(deltas, budget).objective_estimate
            uniform = allocation_objective(deltas, uniform_budgets(n, budget))
            assert uniform <= offline + 1e-9
            assert offline <= online + 1e-9

    def test_respects_capacity(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(5, 30))
            cap = int(rng.integers(2, 6))
            deltas = np.sort(rng.random((n, cap)), axis=1)[:, ::-1]
            scores = rng.random(n)
            budget = BudgetSpec(rng.uniform(0.2, cap), cap, 0)
            policy = OfflineBinnedPolicy(budget, n_bins=3).fit(scores, deltas)
            assert policy.predict(scores).sum() <= budget.total_units(n)

    def test_serialization_roundtrip(self, tmp_path):
        scores = np.linspace(0.05, 0.95, 12)
        deltas = np.vstack([analytic_marginals(s, 4) for s in scores])
        policy = OfflineBinnedPolicy(BudgetSpec(2.0, 4, 1), n_bins=3).fit(scores, deltas)
        path = tmp_path / "policy.json"
        save_policy(policy, path)
        loaded = load_policy(path)
        np.testing.assert_array_equal(policy.predict(scores), loaded.predict(scores))
        assert loaded.meta_ == policy.meta_
        assert loaded.budget == policy.budget

    def test_bad_schema_rejected(self):
        payload = policy_to_dict(
            OfflineBinnedPolicy(BudgetSpec(1.0, 2, 0), n_bins=1).fit(
                [0.5, 0.6], np.full((2, 2), 0.1)
            )
        )
        payload["schema"] = "nope"
        with pytest.raises(ValueError):
            policy_from_dict(payload)

    def test_sklearn_get_params(self):
        policy = OfflineBinnedPolicy(BudgetSpec(1.0, 2, 0), n_bins=7)
        params = policy.get_params()
        assert params["n_bins"] == 7
        assert params["budget"].max_per_query == 2


class TestRouting:
    def test_all_weak_at_lower_endpoint(self):
        decision = route_by_preference([0.2, 0.8], RoutingCosts(1, 2), 1.0)
        assert not decision.strong_mask.any()
        assert decision.realized_avg_cost == pytest.approx(1.0)

    def test_all_strong_at_upper_endpoint(self):
        decision = route_by_preference([0.2, 0.8], RoutingCosts(1, 2), 2.0)
        assert decision.strong_mask.all()

    def test_top_preference_routed(self):
        decision = route_by_preference([0.9, 0.1, 0.6], RoutingCosts(1, 2), 1.34)
        assert decision.routes_by_id() == {"0": "strong", "1": "weak", "2": "weak"}

    def test_tie_breaks_toward_lower_index(self):
        decision = route_by_preference([0.5, 0.5, 0.5], RoutingCosts(1, 2), 1.4)
        np.testing.assert_array_equal(decision.strong_mask, [True, False, False])

    def test_realized_cost_within_slack(self):
        rng = np.random.default_rng(6)
        costs = RoutingCosts(1.0, 3.0)
        for _ in range(20):
            n = int(rng.integers(1, 40))
            budget = rng.uniform(1.0, 3.0)
            decision = route_random(n, costs, budget, seed=int(rng.integers(1e6)))
            assert decision.realized_avg_cost <= budget + costs.strong_cost / n + 1e-9

    def test_random_same_count_different_membership(self):
        costs = RoutingCosts(1, 2)
        a = route_random(50, costs, 1.5, seed=1)
        b = route_random(50, costs, 1.5, seed=2)
        assert a.strong_mask.sum() == b.strong_mask.sum() == 25
        assert (a.strong_mask != b.strong_mask).any()

    def test_budget_out_of_range(self):
        with pytest.raises(ValueError):
            route_by_preference([0.5], RoutingCosts(1, 2), 0.5)
        with pytest.raises(ValueError):
            route_random(3, RoutingCosts(1, 2), 2.5)

    def test_invalid_costs(self):
        with pytest.raises(ValueError):
            RoutingCosts(2.0, 1.0)
        with pytest.raises(ValueError):
            RoutingCosts(0.0, 1.0)


def test_allocation_budgets_by_id_roundtrip():
    alloc = Allocation(
        ids=("a", "b"), budgets=np.array([2, 0]), total_units=2, objective_estimate=0.5
    )
    assert alloc.budgets_by_id() == {"a": 2, "b": 0}
