"""Optimal cache-aware recommendation policies via linear programming.

The decision problem - maximize the cache hit ratio of the stationary
demand subject to list-size, quality, and optional fairness constraints -
becomes linear after substituting w_ij = p_i * r_ij for the recommendation
frequencies. Fairness budgets on the max-deviation and total-variation
metrics linearize exactly; the KL metric is handled with a family of
tangent cuts that over-approximate the logarithm, which relaxes (never
tightens) the fairness constraint by at most the envelope gap.

Solving without a fairness constraint yields the best quality-constrained
policy (the "multi-step" optimum used as the unconstrained reference).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .catalog import validate_cache
from .demand import RecommendationPolicy, stationary_demand

__all__ = [
    "METRICS",
    "DEFAULT_CUT_COUNT",
    "DEFAULT_CUT_STEP",
    "TangentCutFamily",
    "FairnessConstraint",
    "LpModel",
    "SolveResult",
    "PolicyRecoveryError",
    "tangent_cuts",
    "candidate_set",
    "build_lp",
    "solve",
    "recover_policy",
]

METRICS = ("f_max", "f_tv", "f_kl")

#: default tangent-cut family, adequate for catalogs of ~1000 contents
DEFAULT_CUT_COUNT = 160
DEFAULT_CUT_STEP = 0.05


class PolicyRecoveryError(RuntimeError):
    """Raised when a solution cannot be turned into a valid policy."""


@dataclass(frozen=True)
class TangentCutFamily:
    """Lines tangent to the natural logarithm, used as an outer approximation.

    Cut m (1-based) touches ln at p = e^{-(m-1)s}: it has slope e^{(m-1)s}
    and intercept -(m-1)s - 1. The pointwise minimum over the family lies
    above ln everywhere on (0, 1], so "z <= every cut" relaxes "z <= ln p".
    """

    count: int
    step: float
    slopes: np.ndarray
    intercepts: np.ndarray

    @property
    def min_tangent_point(self):
        """Smallest sampled tangency point, e^{-(count-1) * step}."""
        return math.exp(-(self.count - 1) * self.step)

    def envelope(self, p):
        """min over cuts of slope * p + intercept, elementwise."""
        p = np.asarray(p, dtype=float)
        values = np.outer(p, self.slopes) + self.intercepts
        return values.min(axis=1)


def tangent_cuts(count=DEFAULT_CUT_COUNT, step=DEFAULT_CUT_STEP):
    """Build a :class:`TangentCutFamily`.

    Parameters
    ----------
    count : int
        Number of cuts M, >= 1.
    step : float
        Log-spacing s between tangency points, in (0, 1).
    """
    if count < 1:
        raise ValueError("cut count must be >= 1")
    if not 0.0 < step < 1.0:
        raise ValueError("cut step must lie in (0, 1), got %r" % step)
    m = np.arange(count, dtype=float)
    slopes = np.exp(m * step)
    intercepts = -m * step - 1.0
    return TangentCutFamily(count=count, step=float(step), slopes=slopes, intercepts=intercepts)


@dataclass(frozen=True)
class FairnessConstraint:
    """A fairness budget for the policy optimization.

    ``budget`` is in the metric's own units; for the KL metric that means
    nats (plain, unnormalized divergence). ``cuts`` configures the
    logarithm approximation for the KL metric and is ignored otherwise.
    """

    metric: str
    budget: float
    cuts: TangentCutFamily | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError("unknown fairness metric %r, expected one of %s" % (self.metric, list(METRICS)))
        if not (math.isfinite(self.budget) and self.budget >= 0.0):
            raise ValueError("fairness budget must be finite and >= 0, got %r" % self.budget)


@dataclass
class LpModel:
    """Assembled linear program plus the bookkeeping to read answers back.

    Variables are laid out as the sparse w block (row-major over each
    row's candidate set plus the pinned diagonal), then the demand block
    p, then the auxiliary block z when the fairness metric needs one.
    """

    size: int
    n: int
    alpha: float
    cache: frozenset
    q: float
    metric: str | None
    budget: float | None
    c: np.ndarray
    a_eq: sparse.csr_matrix
    b_eq: np.ndarray
    a_ub: sparse.csr_matrix
    b_ub: np.ndarray
    bounds: list
    w_index: dict
    p_offset: int
    z_offset: int | None
    constraint_counts: dict
    row_labels_eq: list = field(repr=False)
    row_labels_ub: list = field(repr=False)
    baseline_demand: np.ndarray | None = None

    @property
    def num_variables(self):
        return self.c.shape[0]

    def variable_names(self):
        names = [None] * self.num_variables
        for (i, j), col in self.w_index.items():
            names[col] = "w_%d_%d" % (i, j)
        for i in range(self.size):
            names[self.p_offset + i] = "p_%d" % i
            if self.z_offset is not None:
                names[self.z_offset + i] = "z_%d" % i
        return names

    def to_lp_text(self):
        """The model in CPLEX-style LP text format, for external solvers."""
        names = self.variable_names()

        def render(row, rhs, relation, label):
            coeffs = []
            for col, value in zip(row.indices, row.data):
                coeffs.append("%+.17g %s" % (value, names[col]))
            body = " ".join(coeffs) if coeffs else "0 %s" % names[0]
            return " %s: %s %s %.17g" % (label, body, relation, rhs)

        lines = ["\\ cache-hit-ratio maximization (K=%d, N=%d)" % (self.size, self.n)]
        lines.append("Maximize")
        objective = " ".join("+ %s" % names[self.p_offset + i] for i in sorted(self.cache))
        lines.append(" obj: %s" % (objective or "0 %s" % names[0]))
        lines.append("Subject To")
        a_eq = self.a_eq.tocsr()
        for k in range(a_eq.shape[0]):
            lines.append(render(a_eq.getrow(k), self.b_eq[k], "=", self.row_labels_eq[k]))
        a_ub = self.a_ub.tocsr()
        for k in range(a_ub.shape[0]):
            lines.append(render(a_ub.getrow(k), self.b_ub[k], "<=", self.row_labels_ub[k]))
        lines.append("Bounds")
        for col, (lo, hi) in enumerate(self.bounds):
            if lo is None and hi is None:
                lines.append(" %s free" % names[col])
            else:
                lo_text = "-inf" if lo is None else "%.17g" % lo
                hi_text = "+inf" if hi is None else "%.17g" % hi
                lines.append(" %s <= %s <= %s" % (lo_text, names[col], hi_text))
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class SolveResult:
    """Outcome of one LP solve.

    ``status`` is "optimal", "infeasible", or "numerical-failure". On an
    optimal solve, ``objective`` is the achieved cache hit ratio,
    ``demand`` the optimal demand distribution, ``w_rows`` the sparse w
    block, and ``policy`` the recovered recommendation policy.
    """

    status: str
    objective: float | None
    demand: np.ndarray | None
    w_rows: tuple | None
    policy: RecommendationPolicy | None
    tolerances: dict
    message: str
    model: LpModel = field(repr=False, default=None)


def _covering_cuts(user):
    """Default cut family extended to cover the demand floor.

    Stationarity with nonnegative w forces p_j >= (1-alpha) * p_direct_j,
    so cuts only need to be tight down to that floor; below the deepest
    tangency point the envelope goes slack and the KL budget would be
    silently relaxed. The default family covers catalogs whose floor stays
    above ~3.5e-4; high alpha or skewed direct demand needs more cuts.
    """
    floor = (1.0 - user.alpha) * float(np.min(user.p_direct))
    needed = DEFAULT_CUT_COUNT
    if floor < 1.0:
        needed = max(needed, int(math.ceil(math.log(1.0 / floor) / DEFAULT_CUT_STEP)) + 1)
    return tangent_cuts(needed, DEFAULT_CUT_STEP)


def candidate_set(scores, cache, n):
    """Per-row variable support for the LP.

    Row i's candidates are its positively scored items plus every cached
    content (itself excluded). Rows with fewer than ``n`` candidates are
    augmented with the ``n`` lowest-index non-candidates so the row budget
    stays feasible. Excluded pairs cannot improve the optimum: a content
    with zero score that is not cached can only hurt the quality
    constraint and never contributes to the objective.

    Returns
    -------
    list of list of int
        Sorted candidate indices per row.
    """
    cache = validate_cache(cache, scores.size)
    result = []
    for i in range(scores.size):
        candidates = set(scores.row(i))
        candidates.update(cache)
        candidates.discard(i)
        if len(candidates) < n:
            added = 0
            for j in range(scores.size):
                if added == n:
                    break
                if j != i and j not in candidates:
                    candidates.add(j)
                    added += 1
        if len(candidates) < n:
            raise ValueError("row %d cannot support a list of size %d" % (i, n))
        result.append(sorted(candidates))
    return result


def build_lp(scores, baseline, cache, user, q, fairness=None, baseline_demand=None):
    """Assemble the policy-optimization LP.

    The model maximizes the cached demand subject to, per content:
    stationarity of the demand vector, a minimum list quality of
    q * q_bs, the list-size budget, the pinned diagonal, and the box
    coupling 0 <= w_ij <= p_i. A fairness budget adds the metric's linear
    constraint block; without one the model is the unconstrained
    (multi-step) optimum.

    Parameters
    ----------
    scores : ScoreMatrix
    baseline : BaselineProfile
    cache : iterable of int
    user : UserModel
    q : float
        Quality threshold in [0, 1].
    fairness : FairnessConstraint or None
    baseline_demand : array-like or None
        The baseline stationary demand; computed on demand when a
        fairness constraint needs it.

    Returns
    -------
    LpModel
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1], got %r" % q)
    size = scores.size
    if user.size != size:
        raise ValueError("user catalog size %d != score matrix size %d" % (user.size, size))
    n = baseline.n
    if user.n != n:
        raise ValueError("user list size %d != baseline list size %d" % (user.n, n))
    cache = validate_cache(cache, size)

    needs_z = fairness is not None and fairness.metric in ("f_tv", "f_kl")
    p_bs = None
    if fairness is not None:
        if baseline_demand is None:
            baseline_demand = stationary_demand(baseline.policy, user)
        p_bs = np.asarray(baseline_demand, dtype=float)

    # variable support: candidates plus the baseline list (keeps the
    # baseline policy itself feasible even when its rows were padded with
    # zero-score items) plus the pinned diagonal
    candidates = candidate_set(scores, cache, n)
    w_index = {}
    for i in range(size):
        support = set(candidates[i])
        support.update(baseline.list_of(i))
        support.add(i)
        for j in sorted(support):
            w_index[(i, j)] = len(w_index)
    n_w = len(w_index)
    p_offset = n_w
    z_offset = n_w + size if needs_z else None
    n_vars = n_w + size + (size if needs_z else 0)

    coeff = user.alpha / n

    eq_rows, eq_cols, eq_data, b_eq, labels_eq = [], [], [], [], []
    ub_rows, ub_cols, ub_data, b_ub, labels_ub = [], [], [], [], []
    counts = {"stationarity": 0, "quality": 0, "budget": 0, "diagonal": 0,
              "box_upper": 0, "fairness": 0, "cuts": 0}

    def eq_row(cols, data, rhs, label):
        k = len(b_eq)
        eq_rows.extend([k] * len(cols))
        eq_cols.extend(cols)
        eq_data.extend(data)
        b_eq.append(rhs)
        labels_eq.append(label)

    def ub_row(cols, data, rhs, label):
        k = len(b_ub)
        ub_rows.extend([k] * len(cols))
        ub_cols.extend(cols)
        ub_data.extend(data)
        b_ub.append(rhs)
        labels_ub.append(label)

    # stationarity: p_j - (alpha/N) sum_i w_ij = (1-alpha) p_direct_j
    incoming = [[] for _ in range(size)]
    for (i, j), col in w_index.items():
        incoming[j].append(col)
    for j in range(size):
        cols = [p_offset + j] + incoming[j]
        data = [1.0] + [-coeff] * len(incoming[j])
        eq_row(cols, data, (1.0 - user.alpha) * user.p_direct[j], "stat_%d" % j)
        counts["stationarity"] += 1

    # budget: sum_j w_ij - N p_i = 0; diagonal: w_ii = 0
    row_cols = [[] for _ in range(size)]
    for (i, j), col in w_index.items():
        row_cols[i].append((j, col))
    for i in range(size):
        cols = [col for _, col in row_cols[i]] + [p_offset + i]
        data = [1.0] * len(row_cols[i]) + [-float(n)]
        eq_row(cols, data, 0.0, "budget_%d" % i)
        counts["budget"] += 1
    for i in range(size):
        eq_row([w_index[(i, i)]], [1.0], 0.0, "diag_%d" % i)
        counts["diagonal"] += 1

    # quality: sum_j u_ij w_ij >= q * q_bs_i * p_i
    for i in range(size):
        row = scores.row(i)
        cols, data = [], []
        for j, col in row_cols[i]:
            score = row.get(j, 0.0)
            if score > 0.0:
                cols.append(col)
                data.append(-score)
        cols.append(p_offset + i)
        data.append(q * baseline.q_bs[i])
        ub_row(cols, data, 0.0, "quality_%d" % i)
        counts["quality"] += 1

    # box coupling: w_ij <= p_i
    for (i, j), col in sorted(w_index.items(), key=lambda kv: kv[1]):
        ub_row([col, p_offset + i], [1.0, -1.0], 0.0, "box_%d_%d" % (i, j))
        counts["box_upper"] += 1

    metric = fairness.metric if fairness is not None else None
    budget = fairness.budget if fairness is not None else None
    cuts = None
    if fairness is not None:
        if metric == "f_max":
            for i in range(size):
                ub_row([p_offset + i], [1.0], p_bs[i] + budget, "fair_hi_%d" % i)
                ub_row([p_offset + i], [-1.0], budget - p_bs[i], "fair_lo_%d" % i)
                counts["fairness"] += 2
        elif metric == "f_tv":
            # z_i >= |p_i - p_bs_i|, so sum z bounds the L1 distance; the
            # total-variation metric is half of that, hence the factor 2
            ub_row([z_offset + i for i in range(size)], [1.0] * size, 2.0 * budget, "fair_sum")
            counts["fairness"] += 1
            for i in range(size):
                ub_row([p_offset + i, z_offset + i], [1.0, -1.0], p_bs[i], "fair_hi_%d" % i)
                ub_row([p_offset + i, z_offset + i], [-1.0, -1.0], -p_bs[i], "fair_lo_%d" % i)
                counts["fairness"] += 2
        else:  # f_kl
            cuts = fairness.cuts if fairness.cuts is not None else _covering_cuts(user)
            entropy_term = float(np.sum(p_bs * np.log(p_bs)))
            # sum_i p_bs_i z_i >= entropy_term - budget
            ub_row([z_offset + i for i in range(size)], (-p_bs).tolist(),
                   budget - entropy_term, "fair_sum")
            counts["fairness"] += 1
            for m in range(cuts.count):
                slope = float(cuts.slopes[m])
                intercept = float(cuts.intercepts[m])
                for i in range(size):
                    ub_row([z_offset + i, p_offset + i], [1.0, -slope], intercept,
                           "cut_%d_%d" % (i, m + 1))
                    counts["cuts"] += 1

    bounds = [(0, None)] * n_w + [(0, 1)] * size
    if needs_z:
        if metric == "f_tv":
            bounds += [(0, None)] * size
        else:
            bounds += [(None, None)] * size

    c = np.zeros(n_vars)
    for i in cache:
        c[p_offset + i] = -1.0

    a_eq = sparse.csr_matrix((eq_data, (eq_rows, eq_cols)), shape=(len(b_eq), n_vars))
    a_ub = sparse.csr_matrix((ub_data, (ub_rows, ub_cols)), shape=(len(b_ub), n_vars))

    return LpModel(
        size=size, n=n, alpha=user.alpha, cache=cache, q=q,
        metric=metric, budget=budget,
        c=c, a_eq=a_eq, b_eq=np.asarray(b_eq), a_ub=a_ub, b_ub=np.asarray(b_ub),
        bounds=bounds, w_index=w_index, p_offset=p_offset, z_offset=z_offset,
        constraint_counts=counts, row_labels_eq=labels_eq, row_labels_ub=labels_ub,
        baseline_demand=p_bs,
    )


def solve(model, tol=1e-8):
    """Solve an assembled model with the HiGHS linear-programming solver.

    Deterministic for identical models and tolerances. A successful solve
    is validated against the demand invariants (sums to one, strictly
    positive) and the policy is recovered; validation failures demote the
    status to "numerical-failure" rather than returning a bad answer.

    Parameters
    ----------
    model : LpModel
    tol : float
        Primal/dual feasibility tolerance handed to the solver.

    Returns
    -------
    SolveResult
    """
    method = "highs"
    res = linprog(
        model.c,
        A_ub=model.a_ub, b_ub=model.b_ub,
        A_eq=model.a_eq, b_eq=model.b_eq,
        bounds=model.bounds,
        method=method,
        options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol},
    )
    if res.status not in (0, 2):
        # deterministic fallback: interior point handles some degenerate
        # instances the simplex gives up on
        method = "highs-ipm"
        res = linprog(
            model.c,
            A_ub=model.a_ub, b_ub=model.b_ub,
            A_eq=model.a_eq, b_eq=model.b_eq,
            bounds=model.bounds,
            method=method,
            options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol},
        )
    tolerances = {"feasibility": tol, "optimality": tol, "method": method}
    if res.status == 2:
        return SolveResult(status="infeasible", objective=None, demand=None, w_rows=None,
                           policy=None, tolerances=tolerances, message=res.message, model=model)
    if res.status != 0:
        return SolveResult(status="numerical-failure", objective=None, demand=None, w_rows=None,
                           policy=None, tolerances=tolerances, message=res.message, model=model)

    x = np.asarray(res.x, dtype=float)
    demand = x[model.p_offset:model.p_offset + model.size].copy()
    tolerances["eq_residual"] = float(np.max(np.abs(model.a_eq @ x - model.b_eq)))
    slack = model.a_ub @ x - model.b_ub
    tolerances["ub_residual"] = float(max(slack.max(initial=0.0), 0.0))

    failure = None
    if abs(demand.sum() - 1.0) > 1e-6:
        failure = "optimal demand sums to %r" % demand.sum()
    elif demand.min() <= 0.0:
        failure = "optimal demand is not strictly positive"
    if failure is not None:
        return SolveResult(status="numerical-failure", objective=None, demand=None, w_rows=None,
                           policy=None, tolerances=tolerances, message=failure, model=model)

    w_rows = [dict() for _ in range(model.size)]
    for (i, j), col in model.w_index.items():
        if i == j:
            continue
        value = x[col]
        if value > 0.0:
            w_rows[i][j] = float(value)
    w_rows = tuple(w_rows)
    objective = float(demand[sorted(model.cache)].sum()) if model.cache else 0.0

    result = SolveResult(status="optimal", objective=objective, demand=demand,
                         w_rows=w_rows, policy=None, tolerances=tolerances,
                         message=res.message, model=model)
    result.policy = recover_policy(result)
    return result


def recover_policy(result, drift_tol=1e-6):
    """Recommendation frequencies from an optimal solve: r_ij = w_ij / p_i.

    Solver tolerance leaks into the solution, so small drift is repaired:
    entries are clipped to [0, 1] and each row renormalized to sum exactly
    N. Drift is measured on the w variables (where the solver's residuals
    live; a fixed ratio tolerance would reject rows with tiny demand);
    anything beyond ``drift_tol`` is an error signalling solver trouble.
    The stationarity round trip, not this repair, is the authoritative
    check on a recovered policy.
    """
    if result.status != "optimal":
        raise PolicyRecoveryError("cannot recover a policy from a %s solve" % result.status)
    model = result.model
    demand = result.demand
    rows = []
    for i in range(model.size):
        p_i = demand[i]
        if p_i <= 0.0:
            raise PolicyRecoveryError("optimal demand for content %d is not positive" % i)
        row = {}
        total_w = 0.0
        for j, w in result.w_rows[i].items():
            if w < -drift_tol or w > p_i + drift_tol:
                raise PolicyRecoveryError("w[%d][%d]=%r outside [0, p_i] beyond drift" % (i, j, w))
            total_w += w
            r = min(max(w / p_i, 0.0), 1.0)
            if r > 0.0:
                row[j] = r
        if abs(total_w - model.n * p_i) > drift_tol:
            raise PolicyRecoveryError("row %d w-mass is %r, expected %r" % (i, total_w, model.n * p_i))
        rows.append(_renormalize_row(row, model.n))
    return RecommendationPolicy(model.size, model.n, rows)


def _renormalize_row(row, n):
    """Nudge clipped frequencies so the row sums to n without leaving [0, 1].

    Shrinking is a single exact rescale; growing distributes the deficit
    over entries with headroom (a row always has at least n entries, so
    headroom exists whenever the sum is short).
    """
    for _ in range(8):
        total = sum(row.values())
        if abs(total - n) <= 1e-12:
            break
        if total >= n:
            factor = n / total
            row = {j: v * factor for j, v in row.items()}
        else:
            headroom = {j: 1.0 - v for j, v in row.items() if v < 1.0}
            total_headroom = sum(headroom.values())
            if total_headroom <= 0.0:
                break
            grow = min(1.0, (n - total) / total_headroom)
            row = {j: min(1.0, v + headroom.get(j, 0.0) * grow) for j, v in row.items()}
    return row
