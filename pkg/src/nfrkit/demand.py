"""Content demand induced by a recommendation policy.

Users request contents either directly (with probability 1 - alpha, drawn
from the direct-demand distribution) or by following one of the N shown
recommendations (with probability alpha, each shown item equally likely).
The resulting request process is a Markov chain over the catalog; its
stationary distribution is the demand object everything else consumes.
"""

import warnings
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .catalog import validate_cache, validate_demand

__all__ = [
    "RecommendationPolicy",
    "UserModel",
    "DemandSolveError",
    "stationary_demand",
    "simulate_demand",
    "cache_hit_ratio",
    "network_gain",
    "write_policy_csv",
    "read_policy_csv",
]

#: absolute tolerance for policy row sums and entry bounds
POLICY_TOL = 1e-9


class DemandSolveError(RuntimeError):
    """Raised when the stationary-demand linear system cannot be solved."""


class RecommendationPolicy:
    """Row-stochastic-like matrix of recommendation frequencies.

    Entry r_ij is the probability that content j appears in the list shown
    after content i. Every row sums to the list size N; diagonal entries
    are forbidden; entries lie in [0, 1].

    Parameters
    ----------
    size : int
        Catalog size.
    n : int
        Recommendation list size (row budget).
    rows : sequence of dict
        Per-row mappings j -> frequency. Exact zeros are dropped.
    """

    def __init__(self, size, n, rows):
        size = int(size)
        n = int(n)
        if size < 1:
            raise ValueError("catalog size must be >= 1")
        if not 1 <= n < size:
            raise ValueError("list size must satisfy 1 <= N < K, got N=%d K=%d" % (n, size))
        if len(rows) != size:
            raise ValueError("expected %d rows, got %d" % (size, len(rows)))
        clean = []
        for i, row in enumerate(rows):
            total = 0.0
            out = {}
            for j, value in row.items():
                j = int(j)
                if not 0 <= j < size:
                    raise ValueError("row %d references index %d outside catalog" % (i, j))
                if j == i:
                    raise ValueError("row %d has a self-recommendation entry" % i)
                value = float(value)
                if value < 0.0 or value > 1.0 + POLICY_TOL:
                    raise ValueError("row %d entry r[%d]=%r outside [0, 1]" % (i, j, value))
                total += value
                if value > 0.0:
                    out[j] = min(value, 1.0)
            if abs(total - n) > POLICY_TOL:
                raise ValueError("row %d sums to %r, expected %d" % (i, total, n))
            clean.append(out)
        self.size = size
        self.n = n
        self._rows = tuple(clean)

    @classmethod
    def from_lists(cls, lists, size):
        """Deterministic policy from per-row recommendation lists."""
        if not lists:
            raise ValueError("need at least one list")
        n = len(lists[0])
        rows = []
        for i, items in enumerate(lists):
            if len(items) != n:
                raise ValueError("row %d has %d items, expected %d" % (i, len(items), n))
            if len(set(items)) != n:
                raise ValueError("row %d repeats an item" % i)
            rows.append({int(j): 1.0 for j in items})
        return cls(size, n, rows)

    def row(self, i):
        """Sparse row ``i`` as a mapping j -> frequency. Treat as read-only."""
        return self._rows[i]

    @property
    def nnz(self):
        return sum(len(r) for r in self._rows)

    def is_deterministic(self, tol=0.0):
        """True when every stored entry equals 1 (within ``tol``)."""
        return all(abs(v - 1.0) <= tol for row in self._rows for v in row.values())

    def to_csr(self):
        """The policy as a scipy CSR matrix of shape (K, K)."""
        data, rows, cols = [], [], []
        for i, row in enumerate(self._rows):
            for j, value in row.items():
                rows.append(i)
                cols.append(j)
                data.append(value)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.size, self.size))

    def __eq__(self, other):
        if not isinstance(other, RecommendationPolicy):
            return NotImplemented
        return (self.size, self.n, self._rows) == (other.size, other.n, other._rows)

    def __repr__(self):
        return "RecommendationPolicy(size=%d, n=%d, nnz=%d)" % (self.size, self.n, self.nnz)


@dataclass(frozen=True, eq=False)
class UserModel:
    """User behavior: follow probability, direct demand, list size.

    ``alpha`` must lie strictly inside (0, 1) and the direct-demand vector
    must be strictly positive; both are required for the stationary demand
    to exist and be unique.
    """

    alpha: float
    p_direct: np.ndarray
    n: int

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly in (0, 1), got %r" % self.alpha)
        p = validate_demand(self.p_direct)
        if p.min() <= 0.0:
            raise ValueError("direct demand must be strictly positive everywhere")
        if int(self.n) < 1:
            raise ValueError("list size must be >= 1")
        object.__setattr__(self, "p_direct", p)
        object.__setattr__(self, "n", int(self.n))

    @property
    def size(self):
        return self.p_direct.shape[0]


def _check_compatible(policy, user):
    if policy.size != user.size:
        raise ValueError("policy size %d != user catalog size %d" % (policy.size, user.size))
    if policy.n != user.n:
        raise ValueError("policy list size %d != user list size %d" % (policy.n, user.n))


def stationary_demand(policy, user):
    """Stationary content demand under a recommendation policy.

    Solves the sparse linear system

        p - (alpha/N) * p R = (1 - alpha) * p_direct

    (in transposed form) rather than inverting the system matrix. The
    solution is the unique stationary distribution of the request chain;
    it is strictly positive and sums to one.

    Parameters
    ----------
    policy : RecommendationPolicy
    user : UserModel

    Returns
    -------
    numpy.ndarray
        Demand vector of length K.

    Raises
    ------
    DemandSolveError
        If the solve fails numerically (singular within tolerance). This
        cannot happen when the preconditions hold and is reported rather
        than patched over.
    """
    _check_compatible(policy, user)
    size = policy.size
    coeff = user.alpha / policy.n
    system = sparse.eye(size, format="csc") - coeff * policy.to_csr().T.tocsc()
    rhs = (1.0 - user.alpha) * user.p_direct
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            p = spsolve(system, rhs)
        except MatrixRankWarning as exc:
            raise DemandSolveError("stationary system is singular within tolerance") from exc
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise DemandSolveError("stationary solve produced non-finite values")
    residual = np.max(np.abs(system @ p - rhs))
    if residual > 1e-9:
        raise DemandSolveError("stationary solve residual %g exceeds tolerance" % residual)
    if p.min() <= 0.0:
        raise DemandSolveError("stationary demand is not strictly positive")
    if abs(p.sum() - 1.0) > 1e-9:
        raise DemandSolveError("stationary demand sums to %r" % p.sum())
    return p


def _row_samplers(policy):
    """Per-row (items, cumulative-frequency) tables for systematic sampling."""
    items_by_row, cums_by_row = [], []
    for i in range(policy.size):
        row = policy.row(i)
        items = sorted(row)
        cum, total = [], 0.0
        for j in items:
            total += row[j]
            cum.append(total)
        items_by_row.append(items)
        cums_by_row.append(cum)
    return items_by_row, cums_by_row


def simulate_demand(policy, user, steps, seed):
    """Empirical demand from a Monte Carlo random walk.

    Serves as an independent oracle for :func:`stationary_demand`. At each
    step the user follows a recommendation with probability alpha (the
    shown list is realized from the row frequencies by systematic sampling
    of N items, then one shown item is picked uniformly) or requests
    directly from the direct-demand distribution. Picking a uniform item
    from a systematically sampled list is realized with a single uniform
    point in [0, N) over the row's cumulative frequencies, which has the
    same per-item distribution.

    Parameters
    ----------
    policy : RecommendationPolicy
    user : UserModel
    steps : int
        Number of requests to draw (>= 1). The first request is direct.
    seed : int
        RNG seed; identical seeds give identical output.

    Returns
    -------
    numpy.ndarray
        Empirical request frequencies of length K.
    """
    _check_compatible(policy, user)
    if steps < 1:
        raise ValueError("steps must be >= 1, got %d" % steps)
    size = policy.size
    n = policy.n
    items_by_row, cums_by_row = _row_samplers(policy)
    direct_cum = np.cumsum(user.p_direct).tolist()

    rng = np.random.default_rng(seed)
    first = rng.random()
    follow = (rng.random(steps - 1) < user.alpha).tolist()
    points = rng.random(steps - 1).tolist()
    slots = rng.integers(0, n, size=steps - 1).tolist()

    counts = [0] * size
    state = min(bisect_right(direct_cum, first), size - 1)
    counts[state] += 1
    for t in range(steps - 1):
        if follow[t]:
            cum = cums_by_row[state]
            idx = bisect_right(cum, points[t] + slots[t])
            if idx >= len(cum):
                idx = len(cum) - 1
            state = items_by_row[state][idx]
        else:
            state = bisect_right(direct_cum, points[t])
            if state >= size:
                state = size - 1
        counts[state] += 1
    return np.asarray(counts, dtype=float) / steps


def cache_hit_ratio(p, cache):
    """Fraction of total demand served by the cache: sum of p over cached contents."""
    p = validate_demand(p)
    cache = validate_cache(cache, p.shape[0])
    if not cache:
        return 0.0
    return float(p[sorted(cache)].sum())


def network_gain(p_nf, p_bs, cache):
    """Cache-hit-ratio increase of a policy's demand over the baseline demand."""
    p_nf = validate_demand(p_nf)
    p_bs = validate_demand(p_bs, size=p_nf.shape[0])
    return cache_hit_ratio(p_nf, cache) - cache_hit_ratio(p_bs, cache)


def write_policy_csv(policy, path):
    """Serialize a policy as sparse CSV: a ``K=..,N=..`` header then ``i,j,r_ij`` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("K=%d,N=%d\n" % (policy.size, policy.n))
        fh.write("i,j,r_ij\n")
        for i in range(policy.size):
            row = policy.row(i)
            for j in sorted(row):
                fh.write("%d,%d,%s\n" % (i, j, repr(row[j])))


def read_policy_csv(path):
    """Read a policy written by :func:`write_policy_csv`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        try:
            k_part, n_part = header.split(",")
            size = int(k_part.removeprefix("K="))
            n = int(n_part.removeprefix("N="))
        except ValueError:
            raise ValueError("expected 'K=<int>,N=<int>' header, got %r" % header) from None
        columns = fh.readline().strip()
        if columns != "i,j,r_ij":
            raise ValueError("expected 'i,j,r_ij' header, got %r" % columns)
        rows = [dict() for _ in range(size)]
        for raw in fh:
            text = raw.strip()
            if not text:
                continue
            i, j, value = text.split(",")
            rows[int(i)][int(j)] = float(value)
    return RecommendationPolicy(size, n, rows)
