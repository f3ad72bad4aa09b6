"""Scenario runner: configuration grids, sweeps, curves, and result export.

A scenario fixes a catalog, user behavior, cache size, quality threshold,
and one recommendation algorithm; running it produces the baseline and
policy demands plus a full fairness report. Sweeps expand a grid of
parameter lists into the cross product of scenarios, run them (optionally
in parallel), and export plot-ready CSV/JSON tables.
"""

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .catalog import (largest_connected_component, load_score_matrix,
                      synthetic_catalog, threshold_binarize, validate_cache,
                      zipf_direct_demand)
from .demand import UserModel, stationary_demand
from .fairness import (DEFAULT_SMOOTHING, FairnessReport, build_report,
                       max_deviation, smoothed_kl, total_variation)
from .optimizer import METRICS, FairnessConstraint, build_lp, solve
from .recsys import baseline_profile, cabaret_policy, greedy_policy, qor_ratios

__all__ = [
    "ALGORITHMS",
    "WORKERS_ENV_VAR",
    "CatalogSpec",
    "ScenarioConfig",
    "ScenarioResult",
    "CurvePoint",
    "CurveResult",
    "DistanceCdf",
    "popularity_cache",
    "run_scenario",
    "expand_grid",
    "sweep",
    "price_of_fairness_curve",
    "distance_cdf",
    "export_results",
    "load_results_json",
    "read_results_csv",
]

ALGORITHMS = ("baseline", "greedy", "cabaret", "multistep", "fair-nfr")

#: environment variable controlling the sweep worker count
WORKERS_ENV_VAR = "NFRKIT_WORKERS"


@dataclass(frozen=True)
class CatalogSpec:
    """Where a scenario's score matrix comes from.

    Either a synthetic catalog (``kind="synthetic"`` with size, degree,
    seed) or an ingested edge-list file (``kind="edge-list"`` with path).
    Both kinds accept the same preprocessing used on real similarity
    data: threshold binarization and largest-component reduction.
    """

    kind: str
    size: int | None = None
    degree: int | None = None
    seed: int | None = None
    path: str | None = None
    threshold: float | None = None
    keep_largest_component: bool = False

    def __post_init__(self):
        if self.kind == "synthetic":
            if self.size is None or self.degree is None or self.seed is None:
                raise ValueError("synthetic catalogs need size, degree, and seed")
        elif self.kind == "edge-list":
            if not self.path:
                raise ValueError("edge-list catalogs need a path")
        else:
            raise ValueError("unknown catalog kind %r" % self.kind)

    def label(self):
        if self.kind == "synthetic":
            parts = ["K=%d,deg=%d,seed=%d" % (self.size, self.degree, self.seed)]
        else:
            parts = [self.path]
        if self.threshold is not None:
            parts.append("thr=%s" % repr(self.threshold))
        if self.keep_largest_component:
            parts.append("lcc")
        return "%s(%s)" % (self.kind, ",".join(parts))

    def to_dict(self):
        data = {"kind": self.kind}
        if self.kind == "synthetic":
            data.update(size=self.size, degree=self.degree, seed=self.seed)
        else:
            data.update(path=self.path)
        if self.threshold is not None:
            data["threshold"] = self.threshold
        if self.keep_largest_component:
            data["keep_largest_component"] = True
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@lru_cache(maxsize=16)
def _load_catalog(spec):
    if spec.kind == "synthetic":
        matrix = synthetic_catalog(spec.size, spec.degree, spec.seed)
    else:
        matrix = load_score_matrix(spec.path)
    if spec.threshold is not None:
        matrix = threshold_binarize(matrix, spec.threshold)
    if spec.keep_largest_component:
        matrix, _ = largest_connected_component(matrix)
    return matrix


@dataclass(frozen=True)
class ScenarioConfig:
    """One point of a simulation grid.

    ``budget`` is in the metric's reporting units: the normalized [0, 1]
    scale for the KL metric (converted to nats internally) and the metric
    value itself for the others. ``w_bfs``/``d_bfs`` matter only for the
    BFS recommender and ``metric``/``budget`` only for the fair policy,
    but all fields are echoed in results for context.
    """

    catalog: CatalogSpec
    alpha: float
    n: int
    cache_size: int
    q: float
    zipf_s: float
    algorithm: str
    w_bfs: int | None = None
    d_bfs: int | None = None
    metric: str | None = None
    budget: float | None = None
    seed: int = 0

    def validate(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly in (0, 1), got %r" % self.alpha)
        if self.n < 1:
            raise ValueError("list size must be >= 1")
        if self.cache_size < 1:
            raise ValueError("cache size must be >= 1")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1], got %r" % self.q)
        if self.zipf_s < 0.0:
            raise ValueError("zipf exponent must be >= 0")
        if self.algorithm not in ALGORITHMS:
            raise ValueError("unknown algorithm %r, expected one of %s" % (self.algorithm, list(ALGORITHMS)))
        if self.algorithm == "cabaret":
            if self.w_bfs is None or self.d_bfs is None:
                raise ValueError("the BFS recommender needs w_bfs and d_bfs")
            if self.w_bfs < 1 or self.d_bfs < 1:
                raise ValueError("w_bfs and d_bfs must be >= 1")
        if self.algorithm == "fair-nfr":
            if self.metric not in METRICS:
                raise ValueError("fair policy needs a metric from %s, got %r" % (list(METRICS), self.metric))
            if self.budget is None or self.budget < 0.0:
                raise ValueError("fair policy needs a budget >= 0")

    def to_dict(self):
        return {
            "catalog": self.catalog.to_dict(),
            "alpha": self.alpha, "n": self.n, "cache_size": self.cache_size,
            "q": self.q, "zipf_s": self.zipf_s, "algorithm": self.algorithm,
            "w_bfs": self.w_bfs, "d_bfs": self.d_bfs,
            "metric": self.metric, "budget": self.budget, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["catalog"] = CatalogSpec.from_dict(data["catalog"])
        return cls(**data)


@dataclass
class ScenarioResult:
    """Everything one scenario run produced (or the error that stopped it).

    ``policy`` is kept for in-process consumers only; it is not part of
    the serialized form.
    """

    config: ScenarioConfig
    status: str
    error: str | None
    p_bs: np.ndarray | None
    p_nf: np.ndarray | None
    report: FairnessReport | None
    qor_min: float | None
    qor_mean: float | None
    duration_s: float
    policy: object | None = None

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "status": self.status,
            "error": self.error,
            "p_bs": None if self.p_bs is None else [float(v) for v in self.p_bs],
            "p_nf": None if self.p_nf is None else [float(v) for v in self.p_nf],
            "report": None if self.report is None else self.report.to_dict(),
            "qor_min": self.qor_min,
            "qor_mean": self.qor_mean,
            "duration_s": self.duration_s,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            config=ScenarioConfig.from_dict(data["config"]),
            status=data["status"],
            error=data["error"],
            p_bs=None if data["p_bs"] is None else np.asarray(data["p_bs"], dtype=float),
            p_nf=None if data["p_nf"] is None else np.asarray(data["p_nf"], dtype=float),
            report=None if data["report"] is None else FairnessReport.from_dict(data["report"]),
            qor_min=data["qor_min"],
            qor_mean=data["qor_mean"],
            duration_s=data["duration_s"],
        )


def popularity_cache(p_bs, cache_size):
    """The ``cache_size`` contents with the highest baseline demand.

    Ties are broken by ascending content index.
    """
    p = np.asarray(p_bs, dtype=float)
    if cache_size > p.shape[0]:
        raise ValueError("cache size %d exceeds catalog size %d" % (cache_size, p.shape[0]))
    order = sorted(range(p.shape[0]), key=lambda i: (-p[i], i))
    return validate_cache(order[:cache_size], p.shape[0])


def _kl_budget_nats(budget):
    return budget * math.log(1.0 / DEFAULT_SMOOTHING)


def _select_policy(cfg, scores, baseline, cache, user, p_bs):
    if cfg.algorithm == "baseline":
        return baseline.policy
    if cfg.algorithm == "greedy":
        return greedy_policy(scores, baseline, cache, cfg.q)
    if cfg.algorithm == "cabaret":
        return cabaret_policy(baseline, cache, cfg.w_bfs, cfg.d_bfs)
    fairness = None
    if cfg.algorithm == "fair-nfr":
        budget = _kl_budget_nats(cfg.budget) if cfg.metric == "f_kl" else cfg.budget
        fairness = FairnessConstraint(cfg.metric, budget)
    model = build_lp(scores, baseline, cache, user, cfg.q,
                     fairness=fairness, baseline_demand=p_bs)
    result = solve(model)
    if result.status != "optimal":
        raise RuntimeError("policy optimization failed (%s): %s" % (result.status, result.message))
    return result.policy


def run_scenario(cfg):
    """Run one scenario end to end.

    Pipeline: build the baseline recommender, compute its stationary
    demand, fill the cache with the most popular contents under it, build
    the configured policy, compute the policy's stationary demand, and
    report fairness metrics with bound diagnostics.

    Returns
    -------
    ScenarioResult
    """
    cfg.validate()
    start = time.perf_counter()
    scores = _load_catalog(cfg.catalog)
    if cfg.cache_size > scores.size:
        raise ValueError("cache size %d exceeds catalog size %d" % (cfg.cache_size, scores.size))
    p_direct = zipf_direct_demand(scores.size, cfg.zipf_s)
    user = UserModel(alpha=cfg.alpha, p_direct=p_direct, n=cfg.n)
    baseline = baseline_profile(scores, cfg.n)
    p_bs = stationary_demand(baseline.policy, user)
    cache = popularity_cache(p_bs, cfg.cache_size)
    policy = _select_policy(cfg, scores, baseline, cache, user, p_bs)
    p_nf = stationary_demand(policy, user)
    report = build_report(p_bs, p_nf, cache)
    qor = qor_ratios(policy, scores, baseline)
    return ScenarioResult(
        config=cfg, status="ok", error=None, p_bs=p_bs, p_nf=p_nf, report=report,
        qor_min=float(qor.min()), qor_mean=float(qor.mean()),
        duration_s=time.perf_counter() - start, policy=policy,
    )


def _run_isolated(cfg):
    start = time.perf_counter()
    try:
        return run_scenario(cfg)
    except Exception as exc:  # noqa: BLE001 - failures stay per-scenario
        return ScenarioResult(
            config=cfg, status="error", error="%s: %s" % (type(exc).__name__, exc),
            p_bs=None, p_nf=None, report=None, qor_min=None, qor_mean=None,
            duration_s=time.perf_counter() - start,
        )


GRID_FIELDS = ("catalog", "zipf_s", "alpha", "n", "cache_size", "q",
               "w_bfs", "d_bfs", "algorithm", "metric", "budget", "seed")

_GRID_DEFAULTS = {"w_bfs": None, "d_bfs": None, "metric": None, "budget": None, "seed": 0}


def expand_grid(grid):
    """Expand a grid of per-field value lists into scenario configs.

    The cross product is taken over all listed fields in a fixed field
    order, so expansion (and hence sweep output) order is deterministic.
    Catalog entries may be :class:`CatalogSpec` instances or their dict
    form; ``w_bfs`` accepts the strings ``"N"`` and ``"2N"``, resolved
    against each combination's list size.
    """
    unknown = set(grid) - set(GRID_FIELDS)
    if unknown:
        raise ValueError("unknown grid fields: %s" % sorted(unknown))
    axes = []
    for name in GRID_FIELDS:
        if name in grid:
            values = list(grid[name])
            if not values:
                raise ValueError("grid field %r has no values" % name)
        elif name in _GRID_DEFAULTS:
            values = [_GRID_DEFAULTS[name]]
        else:
            raise ValueError("grid is missing required field %r" % name)
        axes.append(values)
    configs = []
    for combo in product(*axes):
        values = dict(zip(GRID_FIELDS, combo))
        catalog = values["catalog"]
        if isinstance(catalog, dict):
            catalog = CatalogSpec.from_dict(catalog)
        w_bfs = values["w_bfs"]
        if isinstance(w_bfs, str):
            if w_bfs == "N":
                w_bfs = values["n"]
            elif w_bfs == "2N":
                w_bfs = 2 * values["n"]
            else:
                raise ValueError("w_bfs string must be 'N' or '2N', got %r" % w_bfs)
        configs.append(ScenarioConfig(
            catalog=catalog, zipf_s=values["zipf_s"], alpha=values["alpha"],
            n=values["n"], cache_size=values["cache_size"], q=values["q"],
            w_bfs=w_bfs, d_bfs=values["d_bfs"], algorithm=values["algorithm"],
            metric=values["metric"], budget=values["budget"], seed=values["seed"],
        ))
    return configs


def sweep(grid, workers=None):
    """Run every scenario of a grid; failures are isolated per scenario.

    Parameters
    ----------
    grid : dict or list
        A grid mapping (see :func:`expand_grid`) or an explicit list of
        :class:`ScenarioConfig`.
    workers : int or None
        Process count; defaults to the ``NFRKIT_WORKERS`` environment
        variable, falling back to serial execution. Results are returned
        in grid order either way.

    Returns
    -------
    list of ScenarioResult
    """
    configs = expand_grid(grid) if isinstance(grid, dict) else list(grid)
    if not configs:
        raise ValueError("empty scenario grid")
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_isolated, configs))
    return [_run_isolated(cfg) for cfg in configs]


@dataclass(frozen=True)
class CurvePoint:
    """One operating point of a fairness-budget curve."""

    budget: float | None
    fairness: float
    chr_value: float


@dataclass
class CurveResult:
    """A fairness-vs-gain trade-off curve with its reference endpoints."""

    metric: str
    points: list
    baseline: CurvePoint
    multistep: CurvePoint


def _metric_value(metric, p_bs, demand):
    if metric == "f_max":
        return max_deviation(p_bs, demand)
    if metric == "f_tv":
        return total_variation(p_bs, demand)
    return smoothed_kl(p_bs, demand)[1]


def price_of_fairness_curve(cfg, metric, budgets):
    """Trade-off curve: achieved fairness and cache hit ratio per budget.

    Budgets must be sorted ascending; KL budgets are in normalized units.
    The unconstrained (multi-step) optimum and the baseline operating
    point are returned alongside as the curve's endpoints.

    Parameters
    ----------
    cfg : ScenarioConfig
        Scenario whose catalog/user/cache parameters to use; its
        ``algorithm``/``metric``/``budget`` fields are ignored.
    metric : str
        One of ``f_max``, ``f_tv``, ``f_kl``.
    budgets : sequence of float

    Returns
    -------
    CurveResult
    """
    if metric not in METRICS:
        raise ValueError("unknown metric %r" % metric)
    budgets = [float(b) for b in budgets]
    if budgets != sorted(budgets):
        raise ValueError("budgets must be sorted ascending")
    scores = _load_catalog(cfg.catalog)
    p_direct = zipf_direct_demand(scores.size, cfg.zipf_s)
    user = UserModel(alpha=cfg.alpha, p_direct=p_direct, n=cfg.n)
    baseline = baseline_profile(scores, cfg.n)
    p_bs = stationary_demand(baseline.policy, user)
    cache = popularity_cache(p_bs, cfg.cache_size)
    chr_bs = float(p_bs[sorted(cache)].sum())

    def solve_with(fairness):
        model = build_lp(scores, baseline, cache, user, cfg.q,
                         fairness=fairness, baseline_demand=p_bs)
        result = solve(model)
        if result.status != "optimal":
            raise RuntimeError("curve solve failed (%s): %s" % (result.status, result.message))
        return result

    multistep = solve_with(None)
    multistep_point = CurvePoint(budget=None,
                                 fairness=_metric_value(metric, p_bs, multistep.demand),
                                 chr_value=multistep.objective)
    points = []
    for budget in budgets:
        nats = _kl_budget_nats(budget) if metric == "f_kl" else budget
        result = solve_with(FairnessConstraint(metric, nats))
        points.append(CurvePoint(budget=budget,
                                 fairness=_metric_value(metric, p_bs, result.demand),
                                 chr_value=result.objective))
    return CurveResult(metric=metric, points=points,
                       baseline=CurvePoint(budget=0.0, fairness=0.0, chr_value=chr_bs),
                       multistep=multistep_point)


@dataclass
class DistanceCdf:
    """Empirical CDF of relative distances from a fairness bound."""

    metric: str
    distances: np.ndarray
    cdf: np.ndarray
    excluded: int
    median: float


def distance_cdf(results, metric):
    """CDF of the relative distance of operating points from the bound.

    Scenarios without gain (or without a finite bound) carry no distance;
    they are excluded and counted separately.

    Parameters
    ----------
    results : list of ScenarioResult
    metric : str
    """
    if metric not in METRICS:
        raise ValueError("unknown metric %r" % metric)
    key = "rel_dist_%s" % metric
    values = []
    excluded = 0
    for result in results:
        if result.status != "ok" or result.report is None:
            excluded += 1
            continue
        value = getattr(result.report, key)
        if result.report.gain > 0.0 and math.isfinite(value):
            values.append(value)
        else:
            excluded += 1
    distances = np.sort(np.asarray(values, dtype=float))
    cdf = (np.arange(len(distances)) + 1.0) / len(distances) if len(distances) else np.empty(0)
    median = float(np.median(distances)) if len(distances) else math.nan
    return DistanceCdf(metric=metric, distances=distances, cdf=cdf,
                       excluded=excluded, median=median)


CSV_COLUMNS = (
    "catalog", "zipf_s", "alpha", "n", "cache_size", "q", "w_bfs", "d_bfs",
    "algorithm", "metric", "budget", "seed", "status", "error",
    "chr_bs", "chr_nf", "gain", "f_max", "f_tv", "f_kl_raw", "f_kl_norm",
    "kl_plain", "kl_for_bound", "bound_f_max", "bound_f_tv", "bound_f_kl",
    "rel_dist_f_max", "rel_dist_f_tv", "rel_dist_f_kl",
    "qor_min", "qor_mean", "duration_s",
)


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _result_row(result):
    cfg = result.config
    row = {
        "catalog": cfg.catalog.label(), "zipf_s": cfg.zipf_s, "alpha": cfg.alpha,
        "n": cfg.n, "cache_size": cfg.cache_size, "q": cfg.q,
        "w_bfs": cfg.w_bfs, "d_bfs": cfg.d_bfs, "algorithm": cfg.algorithm,
        "metric": cfg.metric, "budget": cfg.budget, "seed": cfg.seed,
        "status": result.status, "error": result.error,
        "qor_min": result.qor_min, "qor_mean": result.qor_mean,
        "duration_s": result.duration_s,
    }
    if result.report is not None:
        row.update(result.report.to_dict())
    return {name: _csv_cell(row.get(name)) for name in CSV_COLUMNS}


def export_results(results, path, fmt="csv"):
    """Write scenario results as CSV (flat summary) or JSON (full mirror).

    The CSV column order is fixed (`CSV_COLUMNS`), so identical sweeps
    produce byte-identical files apart from the wall-clock column.
    """
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for result in results:
                writer.writerow(_result_row(result))
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"results": [r.to_dict() for r in results]}, fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError("unknown export format %r, expected 'csv' or 'json'" % fmt)


def load_results_json(path):
    """Read back results written by :func:`export_results` with fmt='json'."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return [ScenarioResult.from_dict(entry) for entry in data["results"]]


def read_results_csv(path):
    """Read a results CSV into a list of per-row dicts (strings as written)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
