import math

import numpy as np
import pytest

from nfrkit.catalog import ScoreMatrix, synthetic_catalog, zipf_direct_demand
from nfrkit.demand import UserModel, stationary_demand
from nfrkit.fairness import kl_divergence, max_deviation, total_variation
from nfrkit.optimizer import (FairnessConstraint, PolicyRecoveryError,
                              SolveResult, build_lp, candidate_set,
                              recover_policy, solve, tangent_cuts)
from nfrkit.recsys import baseline_profile, qor_ratios

from oracles import best_deterministic_chr


def dense_matrix(size=3):
    entries = []
    value = 0.95
    for i in range(size):
        for j in range(size):
            if i != j:
                entries.append((i, j, value))
                value = max(value - 0.05, 0.05)
    return ScoreMatrix(size, entries)


def small_scenario(size=20, n=3, alpha=0.8, seed=0, cache_size=5, zipf_s=1.0):
    scores = synthetic_catalog(size, min(4, size - 1), seed=seed)
    baseline = baseline_profile(scores, n)
    user = UserModel(alpha=alpha, p_direct=zipf_direct_demand(size, zipf_s), n=n)
    p_bs = stationary_demand(baseline.policy, user)
    order = sorted(range(size), key=lambda i: (-p_bs[i], i))
    cache = frozenset(order[:cache_size])
    return scores, baseline, user, p_bs, cache


class TestTangentCuts:
    def test_first_cut_is_tangent_at_one(self):
        cuts = tangent_cuts(4, 0.1)
        assert cuts.slopes[0] == pytest.approx(1.0)
        assert cuts.intercepts[0] == pytest.approx(-1.0)

    def test_default_family_reaches_deep_tangent_point(self):
        cuts = tangent_cuts()
        assert cuts.count == 160
        assert cuts.step == 0.05
        assert cuts.min_tangent_point == pytest.approx(math.exp(-7.95))

    def test_cuts_touch_log_at_tangency_points(self):
        cuts = tangent_cuts(10, 0.2)
        for m in range(cuts.count):
            p = math.exp(-m * cuts.step)
            value = cuts.slopes[m] * p + cuts.intercepts[m]
            assert value == pytest.approx(math.log(p), abs=1e-12)

    def test_envelope_over_approximates_log(self):
        cuts = tangent_cuts()
        grid = np.geomspace(cuts.min_tangent_point, 1.0, 2000)
        gap = cuts.envelope(grid) - np.log(grid)
        assert gap.min() >= -1e-12
        assert gap.max() <= 1e-3

    def test_parameter_domains(self):
        with pytest.raises(ValueError):
            tangent_cuts(0, 0.05)
        with pytest.raises(ValueError):
            tangent_cuts(10, 1.0)


class TestCandidateSet:
    def test_dense_matrix_gives_all_offdiagonal(self):
        scores = dense_matrix(4)
        sets = candidate_set(scores, cache=set(), n=2)
        for i, candidates in enumerate(sets):
            assert candidates == [j for j in range(4) if j != i]

    def test_empty_row_uses_cache(self):
        scores = ScoreMatrix(4, [(1, 0, 0.5), (2, 0, 0.5), (3, 0, 0.5)])
        sets = candidate_set(scores, cache={1, 2}, n=2)
        assert sets[0] == [1, 2]

    def test_augmentation_adds_lowest_index_items(self):
        scores = ScoreMatrix(5, [(0, 4, 0.5),
                                 (1, 0, 0.5), (2, 0, 0.5), (3, 0, 0.5), (4, 0, 0.5)])
        sets = candidate_set(scores, cache=set(), n=2)
        # row 0 has one positive item; the 2 lowest-index others are added
        assert sets[0] == [1, 2, 4]

    def test_binary_matrix_counts(self):
        entries = [(0, 1, 1.0), (0, 2, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]
        scores = ScoreMatrix(4, entries)
        sets = candidate_set(scores, cache={3}, n=1)
        assert sets[0] == [1, 2, 3]   # two scored plus the cached item
        assert sets[1] == [0, 3]
        assert sets[2] == [3]
        assert sets[3] == [2]


class TestBuildLp:
    def test_constraint_counts_dense_fixture(self):
        scores = dense_matrix(3)
        baseline = baseline_profile(scores, 1)
        user = UserModel(alpha=0.5, p_direct=np.full(3, 1 / 3), n=1)
        model = build_lp(scores, baseline, cache={0}, user=user, q=0.8,
                         fairness=FairnessConstraint("f_max", 0.1))
        counts = model.constraint_counts
        assert counts["stationarity"] == 3
        assert counts["quality"] == 3
        assert counts["budget"] == 3
        assert counts["diagonal"] == 3
        assert counts["box_upper"] == 9
        assert counts["fairness"] == 6
        assert counts["cuts"] == 0

    def test_no_auxiliary_block_without_fairness(self):
        scores = dense_matrix(3)
        baseline = baseline_profile(scores, 1)
        user = UserModel(alpha=0.5, p_direct=np.full(3, 1 / 3), n=1)
        model = build_lp(scores, baseline, cache={0}, user=user, q=0.8)
        assert model.z_offset is None
        assert model.metric is None

    def test_kl_cut_count(self):
        scores = dense_matrix(3)
        baseline = baseline_profile(scores, 1)
        user = UserModel(alpha=0.5, p_direct=np.full(3, 1 / 3), n=1)
        cuts = tangent_cuts(160, 0.05)
        model = build_lp(scores, baseline, cache={0}, user=user, q=0.8,
                         fairness=FairnessConstraint("f_kl", 0.1, cuts=cuts))
        assert model.constraint_counts["cuts"] == 160 * 3

    def test_objective_covers_exactly_the_cache(self):
        scores = dense_matrix(4)
        baseline = baseline_profile(scores, 1)
        user = UserModel(alpha=0.5, p_direct=np.full(4, 0.25), n=1)
        model = build_lp(scores, baseline, cache={1, 3}, user=user, q=0.5)
        coefficients = {i: model.c[model.p_offset + i] for i in range(4)}
        assert coefficients == {0: 0.0, 1: -1.0, 2: 0.0, 3: -1.0}

    def test_lp_text_export(self):
        scores = dense_matrix(3)
        baseline = baseline_profile(scores, 1)
        user = UserModel(alpha=0.5, p_direct=np.full(3, 1 / 3), n=1)
        model = build_lp(scores, baseline, cache={0}, user=user, q=0.8)
        text = model.to_lp_text()
        assert text.startswith("\\")
        for section in ("Maximize", "Subject To", "Bounds", "End"):
            assert section in text
        assert "stat_0:" in text and "budget_2:" in text and "diag_1:" in text

    def test_budget_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            FairnessConstraint("f_max", -0.1)
        with pytest.raises(ValueError):
            FairnessConstraint("f_median", 0.1)


class TestSolve:
    def test_loose_budget_matches_unconstrained(self):
        scores, baseline, user, p_bs, cache = small_scenario()
        unconstrained = solve(build_lp(scores, baseline, cache, user, 0.8))
        assert unconstrained.status == "optimal"
        for metric in ("f_max", "f_tv"):
            loose = solve(build_lp(scores, baseline, cache, user, 0.8,
                                   fairness=FairnessConstraint(metric, 1.0),
                                   baseline_demand=p_bs))
            assert loose.status == "optimal"
            assert loose.objective == pytest.approx(unconstrained.objective, abs=1e-6)

    def test_zero_budget_pins_baseline(self):
        scores, baseline, user, p_bs, cache = small_scenario()
        pinned = solve(build_lp(scores, baseline, cache, user, 0.8,
                                fairness=FairnessConstraint("f_max", 0.0),
                                baseline_demand=p_bs))
        assert pinned.status == "optimal"
        chr_bs = float(p_bs[sorted(cache)].sum())
        assert pinned.objective == pytest.approx(chr_bs, abs=1e-6)
        assert np.max(np.abs(pinned.demand - p_bs)) <= 1e-6

    def test_optimum_at_least_baseline(self):
        scores, baseline, user, p_bs, cache = small_scenario(seed=3)
        result = solve(build_lp(scores, baseline, cache, user, 0.9))
        chr_bs = float(p_bs[sorted(cache)].sum())
        assert result.objective >= chr_bs - 1e-9

    def test_beats_brute_force_deterministic(self):
        scores, baseline, user, p_bs, cache = small_scenario(size=4, n=1, cache_size=2, seed=8)
        result = solve(build_lp(scores, baseline, cache, user, 0.5))
        best, feasible = best_deterministic_chr(scores, baseline, cache, user, 0.5)
        assert feasible > 0
        assert result.objective >= best - 1e-9

    def test_monotone_and_concave_in_budget(self):
        scores, baseline, user, p_bs, cache = small_scenario(seed=5)
        budgets = [0.0, 0.01, 0.02, 0.03, 0.04]
        values = []
        for budget in budgets:
            result = solve(build_lp(scores, baseline, cache, user, 0.8,
                                    fairness=FairnessConstraint("f_max", budget),
                                    baseline_demand=p_bs))
            values.append(result.objective)
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
        for left, mid, right in zip(values, values[1:], values[2:]):
            assert mid >= (left + right) / 2 - 1e-6

    def test_tv_budget_binds_on_metric_value(self):
        scores, baseline, user, p_bs, cache = small_scenario(seed=2, alpha=0.99)
        budget = 0.05
        result = solve(build_lp(scores, baseline, cache, user, 0.8,
                                fairness=FairnessConstraint("f_tv", budget),
                                baseline_demand=p_bs))
        assert total_variation(p_bs, result.demand) <= budget + 1e-8

    def test_max_budget_binds_on_metric_value(self):
        scores, baseline, user, p_bs, cache = small_scenario(seed=2, alpha=0.99)
        budget = 0.005
        result = solve(build_lp(scores, baseline, cache, user, 0.8,
                                fairness=FairnessConstraint("f_max", budget),
                                baseline_demand=p_bs))
        assert max_deviation(p_bs, result.demand) <= budget + 1e-8

    def test_kl_budget_respected_up_to_cut_gap(self):
        scores, baseline, user, p_bs, cache = small_scenario(seed=2, alpha=0.99)
        budget = 0.02
        result = solve(build_lp(scores, baseline, cache, user, 0.8,
                                fairness=FairnessConstraint("f_kl", budget),
                                baseline_demand=p_bs))
        assert kl_divergence(p_bs, result.demand) <= budget + 1e-3

    def test_solution_invariants(self):
        scores, baseline, user, p_bs, cache = small_scenario(seed=7)
        result = solve(build_lp(scores, baseline, cache, user, 0.8))
        assert abs(result.demand.sum() - 1.0) <= 1e-6
        assert result.demand.min() > 0.0
        assert result.tolerances["feasibility"] == 1e-8
        assert result.tolerances["optimality"] == 1e-8

    def test_deterministic_resolves(self):
        scores, baseline, user, p_bs, cache = small_scenario(seed=9)
        model = build_lp(scores, baseline, cache, user, 0.8)
        first = solve(model)
        second = solve(build_lp(scores, baseline, cache, user, 0.8))
        np.testing.assert_array_equal(first.demand, second.demand)


class TestRecoverPolicy:
    def test_round_trip_through_stationary_demand(self):
        scores, baseline, user, p_bs, cache = small_scenario(seed=4, alpha=0.99)
        result = solve(build_lp(scores, baseline, cache, user, 0.8))
        p_again = stationary_demand(result.policy, user)
        assert 0.5 * np.abs(p_again - result.demand).sum() <= 1e-6

    def test_multistep_respects_quality(self):
        scores, baseline, user, p_bs, cache = small_scenario(seed=4)
        result = solve(build_lp(scores, baseline, cache, user, 0.9))
        assert qor_ratios(result.policy, scores, baseline).min() >= 0.9 - 1e-6

    def test_binary_w_block_recovers_binary_policy(self):
        scores, baseline, user, p_bs, cache = small_scenario(size=6, n=2, cache_size=2)
        # craft a solve result whose w rows put mass p_i on exactly N items
        lists = [sorted(baseline.policy.row(i)) for i in range(6)]
        demand = stationary_demand(baseline.policy, user)
        w_rows = tuple({j: float(demand[i]) for j in lists[i]} for i in range(6))
        model = build_lp(scores, baseline, cache, user, 0.8)
        result = SolveResult(status="optimal", objective=0.0, demand=demand,
                             w_rows=w_rows, policy=None, tolerances={}, message="",
                             model=model)
        policy = recover_policy(result)
        assert policy == baseline.policy

    def test_recovery_requires_optimal_status(self):
        result = SolveResult(status="infeasible", objective=None, demand=None,
                             w_rows=None, policy=None, tolerances={}, message="")
        with pytest.raises(PolicyRecoveryError):
            recover_policy(result)

    def test_excess_drift_is_an_error(self):
        scores, baseline, user, p_bs, cache = small_scenario(size=6, n=2, cache_size=2)
        demand = stationary_demand(baseline.policy, user)
        lists = [sorted(baseline.policy.row(i)) for i in range(6)]
        w_rows = [{j: float(demand[i]) for j in lists[i]} for i in range(6)]
        w_rows[0][lists[0][0]] *= 1.5  # way beyond solver rounding
        model = build_lp(scores, baseline, cache, user, 0.8)
        result = SolveResult(status="optimal", objective=0.0, demand=demand,
                             w_rows=tuple(w_rows), policy=None, tolerances={},
                             message="", model=model)
        with pytest.raises(PolicyRecoveryError):
            recover_policy(result)
