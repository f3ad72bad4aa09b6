"""Baseline top-N recommender and cache-aware heuristic recommenders.

The baseline recommender shows the N highest-scored contents after each
content; its per-row list quality is the reference every cache-aware
policy is measured against. Two heuristics are provided: a greedy scheme
that swaps cached contents into each list subject to a minimum quality
ratio, and CABaRet, a breadth-first search over baseline lists that
surfaces cached contents without direct score knowledge.
"""

from itertools import islice

import numpy as np

from .demand import RecommendationPolicy

__all__ = [
    "BaselineProfile",
    "baseline_profile",
    "greedy_policy",
    "cabaret_policy",
    "qor_ratios",
]

#: slack used when testing list quality against the q * q_bs threshold
QOR_TOL = 1e-12


def _ranked_row(scores, i):
    """Items j != i of row i, best first: positive scores by (score desc,
    index asc), then zero-score items by index asc."""
    row = scores.row(i)
    positives = sorted(row, key=lambda j: (-row[j], j))
    yield from positives
    in_row = set(row)
    for j in range(scores.size):
        if j != i and j not in in_row:
            yield j


class BaselineProfile:
    """Baseline top-N policy plus the per-row maximum list quality.

    ``q_bs[i]`` is the sum of the N largest off-diagonal scores of row i;
    rows with fewer than N positive scores are padded with zero-score
    items (lowest index first), which contribute nothing to the quality.
    """

    def __init__(self, policy, q_bs, scores):
        self.policy = policy
        self.q_bs = q_bs
        self.scores = scores

    @property
    def size(self):
        return self.policy.size

    @property
    def n(self):
        return self.policy.n

    def list_of(self, i):
        """Baseline list for row i, best item first."""
        return self.top_items(i, self.n)

    def top_items(self, i, count):
        """The ``count`` best-ranked items after content i.

        For ``count <= N`` this is a prefix of the baseline list; larger
        counts extend the ranking past the list (used by BFS-based
        recommenders that ask the baseline for wider lists).
        """
        return list(islice(_ranked_row(self.scores, i), count))


def baseline_profile(scores, n):
    """Build the baseline top-N recommender for a score matrix.

    Parameters
    ----------
    scores : ScoreMatrix
    n : int
        List size; must satisfy N < K.

    Returns
    -------
    BaselineProfile
    """
    if n >= scores.size:
        raise ValueError("list size N=%d must be smaller than the catalog K=%d" % (n, scores.size))
    lists = []
    q_bs = []
    for i in range(scores.size):
        row = scores.row(i)
        chosen = list(islice(_ranked_row(scores, i), n))
        lists.append(chosen)
        q_bs.append(sum(row.get(j, 0.0) for j in chosen))
    policy = RecommendationPolicy.from_lists(lists, scores.size)
    return BaselineProfile(policy, np.asarray(q_bs, dtype=float), scores)


def greedy_policy(scores, baseline, cache, q):
    """Greedy cache-aware policy: as many cached contents as possible per list.

    For each row, cached candidates are tried best-score first; a candidate
    is kept only if the list completed with the best remaining contents
    still reaches a fraction ``q`` of the baseline list quality. Remaining
    slots are filled with the best non-admitted contents, so the final
    list always satisfies the quality constraint (the baseline list itself
    is a feasible fallback for any q <= 1).

    Parameters
    ----------
    scores : ScoreMatrix
    baseline : BaselineProfile
    cache : iterable of int
    q : float
        Minimum quality ratio in [0, 1].

    Returns
    -------
    RecommendationPolicy
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1], got %r" % q)
    size = scores.size
    n = baseline.n
    cache = set(cache)
    lists = []
    for i in range(size):
        row = scores.row(i)
        target = q * baseline.q_bs[i]
        candidates = sorted((c for c in cache if c != i), key=lambda c: (-row.get(c, 0.0), c))
        admitted = []
        admitted_set = set()
        admitted_quality = 0.0
        for c in candidates:
            if len(admitted) == n:
                break
            fill_slots = n - len(admitted) - 1
            fill_quality = 0.0
            taken = 0
            for j in _ranked_row(scores, i):
                if taken == fill_slots:
                    break
                if j in admitted_set or j == c:
                    continue
                fill_quality += row.get(j, 0.0)
                taken += 1
            quality = admitted_quality + row.get(c, 0.0) + fill_quality
            if quality + QOR_TOL >= target:
                admitted.append(c)
                admitted_set.add(c)
                admitted_quality += row.get(c, 0.0)
        final = list(admitted)
        for j in _ranked_row(scores, i):
            if len(final) == n:
                break
            if j not in admitted_set:
                final.append(j)
        lists.append(final)
    return RecommendationPolicy.from_lists(lists, size)


def cabaret_policy(baseline, cache, width, depth):
    """BFS-over-baseline-lists policy (CABaRet-style).

    Starting from the top-``width`` baseline items of each content, the
    search expands each frontier node's top-``width`` baseline items, in
    frontier order, up to ``depth`` levels. Cached contents are collected
    in discovery order (the origin excluded, duplicates skipped) until the
    list is full; remaining slots are filled with the original baseline
    list in order.

    Parameters
    ----------
    baseline : BaselineProfile
    cache : iterable of int
    width : int
        BFS width (>= 1); widths above N extend the baseline ranking.
    depth : int
        BFS depth (>= 1).

    Returns
    -------
    RecommendationPolicy
    """
    if width < 1 or depth < 1:
        raise ValueError("width and depth must be >= 1")
    size = baseline.size
    n = baseline.n
    cache = set(cache)
    ranked = {}

    def top(node):
        if node not in ranked:
            ranked[node] = baseline.top_items(node, width)
        return ranked[node]

    lists = []
    for i in range(size):
        collected = []
        collected_set = set()

        def collect(nodes):
            for j in nodes:
                if len(collected) == n:
                    return
                if j != i and j in cache and j not in collected_set:
                    collected.append(j)
                    collected_set.add(j)

        frontier = top(i)
        expanded = {i}
        collect(frontier)
        for _ in range(depth - 1):
            if len(collected) == n:
                break
            next_frontier = []
            for node in frontier:
                if node in expanded:
                    continue
                expanded.add(node)
                next_frontier.extend(top(node))
            collect(next_frontier)
            frontier = next_frontier
        final = list(collected)
        for j in baseline.list_of(i):
            if len(final) == n:
                break
            if j not in collected_set and j != i:
                final.append(j)
        lists.append(final)
    return RecommendationPolicy.from_lists(lists, size)


def qor_ratios(policy, scores, baseline):
    """Per-row quality of a policy relative to the baseline list quality.

    Row i reports (sum_j r_ij * u_ij) / q_bs[i]; rows whose baseline
    quality is zero report 1.
    """
    ratios = np.empty(policy.size)
    for i in range(policy.size):
        row_scores = scores.row(i)
        achieved = sum(freq * row_scores.get(j, 0.0) for j, freq in policy.row(i).items())
        ratios[i] = achieved / baseline.q_bs[i] if baseline.q_bs[i] > 0.0 else 1.0
    return ratios
