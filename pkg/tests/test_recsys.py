import numpy as np
import pytest

from nfrkit.catalog import ScoreMatrix, synthetic_catalog
from nfrkit.recsys import (baseline_profile, cabaret_policy, greedy_policy,
                           qor_ratios)


def paper_example_matrix():
    # after content 0, scores: a=1 (content 1), b=0.8 (content 2), c=0.5 (content 3);
    # other rows are symmetric fillers so every row has candidates
    entries = [(0, 1, 1.0), (0, 2, 0.8), (0, 3, 0.5),
               (1, 0, 1.0), (1, 2, 0.6), (1, 3, 0.4),
               (2, 0, 0.7), (2, 1, 0.6), (2, 3, 0.3),
               (3, 0, 0.5), (3, 1, 0.4), (3, 2, 0.3)]
    return ScoreMatrix(4, entries)


class TestBaselineProfile:
    def test_highest_score_wins(self):
        base = baseline_profile(paper_example_matrix(), 1)
        assert base.list_of(0) == [1]
        assert base.q_bs[0] == pytest.approx(1.0)

    def test_ties_broken_by_index(self):
        m = ScoreMatrix(4, [(0, 1, 0.5), (0, 2, 0.5), (0, 3, 0.5),
                            (1, 0, 0.5), (2, 0, 0.5), (3, 0, 0.5)])
        base = baseline_profile(m, 2)
        assert base.list_of(0) == [1, 2]

    def test_sparse_row_padded_with_zero_score_items(self):
        m = ScoreMatrix(4, [(0, 2, 0.6),
                            (1, 0, 0.5), (2, 0, 0.5), (3, 0, 0.5)])
        base = baseline_profile(m, 2)
        # one positive item, then the lowest-index zero-score item
        assert base.list_of(0) == [2, 1]
        assert base.q_bs[0] == pytest.approx(0.6)

    def test_q_bs_is_top_n_sum(self):
        m = paper_example_matrix()
        base = baseline_profile(m, 2)
        assert base.q_bs[0] == pytest.approx(1.8)

    def test_list_size_must_fit_catalog(self):
        with pytest.raises(ValueError):
            baseline_profile(paper_example_matrix(), 4)

    def test_top_items_extends_past_list(self):
        base = baseline_profile(paper_example_matrix(), 1)
        assert base.top_items(0, 3) == [1, 2, 3]


class TestGreedyPolicy:
    def test_cached_item_within_quality(self):
        m = paper_example_matrix()
        base = baseline_profile(m, 1)
        policy = greedy_policy(m, base, cache={2, 3}, q=0.8)
        assert sorted(policy.row(0)) == [2]  # quality 0.8 >= 0.8 * 1.0

    def test_no_cached_item_passes(self):
        m = paper_example_matrix()
        base = baseline_profile(m, 1)
        policy = greedy_policy(m, base, cache={2, 3}, q=0.9)
        assert sorted(policy.row(0)) == [1]  # falls back to the baseline item

    def test_empty_cache_returns_baseline(self):
        m = synthetic_catalog(15, 4, seed=0)
        base = baseline_profile(m, 3)
        assert greedy_policy(m, base, cache=set(), q=0.8) == base.policy

    @pytest.mark.parametrize("q", [0.0, 0.5, 0.8, 0.9, 1.0])
    def test_quality_constraint_holds(self, q):
        m = synthetic_catalog(25, 5, seed=1)
        base = baseline_profile(m, 4)
        cache = {0, 3, 7, 11, 19}
        policy = greedy_policy(m, base, cache, q)
        assert qor_ratios(policy, m, base).min() >= q - 1e-12

    def test_rows_are_valid_lists(self):
        m = synthetic_catalog(25, 5, seed=2)
        base = baseline_profile(m, 4)
        policy = greedy_policy(m, base, {1, 2, 3}, 0.7)
        assert policy.n == 4
        assert policy.is_deterministic()

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_lower_q_never_drops_cached_count(self, seed):
        m = synthetic_catalog(20, 4, seed=seed)
        base = baseline_profile(m, 3)
        cache = {2, 5, 8, 13, 17}
        previous = None
        for q in (0.9, 0.8, 0.5, 0.0):
            policy = greedy_policy(m, base, cache, q)
            counts = [len(set(policy.row(i)) & cache) for i in range(m.size)]
            if previous is not None:
                assert all(now >= before for now, before in zip(counts, previous))
            previous = counts


class TestCabaretPolicy:
    def test_empty_cache_returns_baseline(self):
        m = synthetic_catalog(15, 4, seed=3)
        base = baseline_profile(m, 3)
        assert cabaret_policy(base, cache=set(), width=6, depth=2) == base.policy

    def test_identity_configuration(self):
        m = synthetic_catalog(15, 4, seed=3)
        base = baseline_profile(m, 3)
        assert cabaret_policy(base, cache=set(), width=3, depth=1) == base.policy

    def test_depth_one_collects_top_cached(self):
        # row 0 ranks 1 > 2 > 3 > 4; everything cached, so the list is the
        # top-N cached by score
        entries = [(0, 1, 0.9), (0, 2, 0.8), (0, 3, 0.7), (0, 4, 0.6),
                   (1, 0, 0.9), (2, 0, 0.9), (3, 0, 0.9), (4, 0, 0.9)]
        m = ScoreMatrix(5, entries)
        base = baseline_profile(m, 2)
        policy = cabaret_policy(base, cache={1, 2, 3, 4}, width=4, depth=1)
        assert list(policy.row(0)) == [1, 2]

    def test_depth_two_reaches_cached_item(self):
        # 5 is cached but only reachable from 0 through 1's list
        entries = [(0, 1, 0.9), (0, 2, 0.8),
                   (1, 5, 0.9), (1, 2, 0.8),
                   (2, 0, 0.9), (2, 1, 0.8),
                   (3, 0, 0.9), (3, 1, 0.8),
                   (4, 0, 0.9), (4, 1, 0.8),
                   (5, 0, 0.9), (5, 1, 0.8)]
        m = ScoreMatrix(6, entries)
        base = baseline_profile(m, 2)
        shallow = cabaret_policy(base, cache={5}, width=2, depth=1)
        deep = cabaret_policy(base, cache={5}, width=2, depth=2)
        assert 5 not in shallow.row(0)
        assert 5 in deep.row(0)

    def test_valid_policy(self):
        m = synthetic_catalog(30, 5, seed=4)
        base = baseline_profile(m, 5)
        policy = cabaret_policy(base, cache={0, 1, 2, 3, 4}, width=10, depth=2)
        assert policy.n == 5
        assert policy.is_deterministic()

    def test_parameter_domain(self):
        m = synthetic_catalog(10, 3, seed=0)
        base = baseline_profile(m, 2)
        with pytest.raises(ValueError):
            cabaret_policy(base, cache=set(), width=0, depth=1)


class TestQorRatios:
    def test_baseline_scores_one(self):
        m = synthetic_catalog(20, 4, seed=5)
        base = baseline_profile(m, 3)
        np.testing.assert_allclose(qor_ratios(base.policy, m, base), 1.0)

    def test_paper_single_swap_values(self):
        m = paper_example_matrix()
        base = baseline_profile(m, 1)
        from nfrkit.demand import RecommendationPolicy
        swap_b = RecommendationPolicy.from_lists([[2], [0], [0], [0]], 4)
        swap_c = RecommendationPolicy.from_lists([[3], [0], [0], [0]], 4)
        assert qor_ratios(swap_b, m, base)[0] == pytest.approx(0.8)
        assert qor_ratios(swap_c, m, base)[0] == pytest.approx(0.5)

    def test_zero_quality_row_reports_one(self):
        m = ScoreMatrix(3, [(1, 0, 0.5), (2, 0, 0.5)])
        base = baseline_profile(m, 1)
        assert base.q_bs[0] == 0.0
        assert qor_ratios(base.policy, m, base)[0] == 1.0
