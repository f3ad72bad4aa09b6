"""Command-line front end for the scenario harness.

Subcommands: ingest an edge-list dataset, run a single scenario, sweep a
JSON grid, trace a fairness-budget curve, evaluate the trade-off bounds,
and turn sweep output into a distance-from-bound CDF.
"""

import argparse
import json
import sys

from . import catalog as cat
from . import fairness, harness
from .demand import write_policy_csv

__all__ = ["main"]


def _add_catalog_args(parser):
    parser.add_argument("--dataset", help="edge-list CSV file (header K=<int>, rows i,j,score)")
    parser.add_argument("--threshold", type=float, default=None,
                        help="binarize the dataset: scores strictly above become 1")
    parser.add_argument("--keep-largest-component", action="store_true",
                        help="restrict the dataset to the largest support component")
    parser.add_argument("--synthetic", nargs=3, type=int, metavar=("K", "DEG", "SEED"),
                        help="synthesize a catalog instead of loading one")


def _catalog_spec(args):
    if args.synthetic is not None:
        size, degree, seed = args.synthetic
        return harness.CatalogSpec(kind="synthetic", size=size, degree=degree, seed=seed)
    if not args.dataset:
        raise SystemExit("need either --dataset or --synthetic")
    return harness.CatalogSpec(kind="edge-list", path=args.dataset,
                               threshold=args.threshold,
                               keep_largest_component=args.keep_largest_component)


def _add_scenario_args(parser, with_algorithm=True):
    _add_catalog_args(parser)
    parser.add_argument("--alpha", type=float, required=True,
                        help="probability of following a recommendation, in (0, 1)")
    parser.add_argument("--n", type=int, required=True, help="recommendation list size")
    parser.add_argument("--cache-size", type=int, required=True, help="number of cached contents")
    parser.add_argument("--q", type=float, required=True, help="minimum quality ratio in [0, 1]")
    parser.add_argument("--zipf-s", type=float, default=0.0,
                        help="Zipf exponent of the direct demand (0 = uniform)")
    parser.add_argument("--seed", type=int, default=0)
    if with_algorithm:
        parser.add_argument("--algorithm", choices=harness.ALGORITHMS, required=True)
        parser.add_argument("--w-bfs", type=int, default=None, help="BFS width (cabaret)")
        parser.add_argument("--d-bfs", type=int, default=None, help="BFS depth (cabaret)")
        parser.add_argument("--metric", choices=fairness_metrics(), default=None,
                            help="fairness metric (fair-nfr)")
        parser.add_argument("--budget", type=float, default=None,
                            help="fairness budget; normalized units for f_kl")


def fairness_metrics():
    from .optimizer import METRICS
    return METRICS


def _scenario_config(args):
    return harness.ScenarioConfig(
        catalog=_catalog_spec(args), alpha=args.alpha, n=args.n,
        cache_size=args.cache_size, q=args.q, zipf_s=args.zipf_s,
        algorithm=getattr(args, "algorithm", "baseline"),
        w_bfs=getattr(args, "w_bfs", None), d_bfs=getattr(args, "d_bfs", None),
        metric=getattr(args, "metric", None), budget=getattr(args, "budget", None),
        seed=args.seed,
    )


def _cmd_ingest(args):
    matrix = cat.load_score_matrix(args.input)
    dropped = None
    if args.threshold is not None:
        matrix = cat.threshold_binarize(matrix, args.threshold)
    if args.keep_largest_component:
        before = matrix.size
        matrix, _ = cat.largest_connected_component(matrix)
        dropped = before - matrix.size
    cat.write_score_matrix(matrix, args.output)
    print("wrote %s: K=%d, entries=%d" % (args.output, matrix.size, matrix.nnz))
    if dropped:
        print("dropped %d contents outside the largest component" % dropped)
    return 0


def _cmd_run(args):
    result = harness.run_scenario(_scenario_config(args))
    report = result.report
    print("algorithm=%s status=%s" % (result.config.algorithm, result.status))
    print("CHR baseline=%.6f policy=%.6f gain=%.6f" % (report.chr_bs, report.chr_nf, report.gain))
    print("F_max=%.6f F_tv=%.6f F_kl(norm)=%.6f" % (report.f_max, report.f_tv, report.f_kl_norm))
    print("QoR min=%.6f mean=%.6f" % (result.qor_min, result.qor_mean))
    if args.out:
        harness.export_results([result], args.out, fmt=args.format)
        print("wrote %s" % args.out)
    if args.demand_out:
        cat.write_demand_csv(result.p_nf, args.demand_out)
        print("wrote %s" % args.demand_out)
    if args.policy_out:
        write_policy_csv(result.policy, args.policy_out)
        print("wrote %s" % args.policy_out)
    return 0


def _cmd_sweep(args):
    with open(args.grid, "r", encoding="utf-8") as fh:
        grid = json.load(fh)
    results = harness.sweep(grid, workers=args.workers)
    harness.export_results(results, args.out, fmt=args.format)
    failed = sum(1 for r in results if r.status != "ok")
    print("ran %d scenarios (%d failed), wrote %s" % (len(results), failed, args.out))
    return 0


def _cmd_curve(args):
    cfg = _scenario_config(args)
    budgets = [float(b) for b in args.budgets.split(",")]
    curve = harness.price_of_fairness_curve(cfg, args.metric, budgets)
    rows = [("baseline", curve.baseline), ("multistep", curve.multistep)]
    rows[1:1] = [("fair", point) for point in curve.points]
    lines = ["kind,budget,fairness,chr"]
    for kind, point in rows:
        budget = "" if point.budget is None else repr(point.budget)
        lines.append("%s,%s,%s,%s" % (kind, budget, repr(point.fairness), repr(point.chr_value)))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print("wrote %s" % args.out)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_bounds(args):
    print("F_max >= %s" % repr(fairness.f_max_lower_bound(args.gain, args.cache_size)))
    print("F_tv  >= %s" % repr(fairness.f_tv_lower_bound(args.gain)))
    if args.chr_bs is not None:
        print("F_kl  >= %s nats" % repr(fairness.f_kl_lower_bound(args.gain, args.chr_bs)))
    return 0


def _cmd_cdf(args):
    rows = harness.read_results_csv(args.results)
    key = "rel_dist_%s" % args.metric
    values = []
    excluded = 0
    for row in rows:
        gain = float(row["gain"]) if row.get("gain") else float("nan")
        value = float(row[key]) if row.get(key) else float("nan")
        if row.get("status") == "ok" and gain > 0.0 and value == value and value not in (float("inf"),):
            values.append(value)
        else:
            excluded += 1
    values.sort()
    lines = ["distance,cdf"]
    for rank, value in enumerate(values, start=1):
        lines.append("%s,%s" % (repr(value), repr(rank / len(values))))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print("wrote %s (%d points, %d excluded)" % (args.out, len(values), excluded))
    else:
        sys.stdout.write(text)
        print("%d points, %d excluded (no gain)" % (len(values), excluded), file=sys.stderr)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="nfrkit",
                                     description="Demand, fairness, and optimal policies "
                                                 "for cache-aware recommendations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and preprocess an edge-list dataset")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--keep-largest-component", action="store_true")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("run", help="run a single scenario")
    _add_scenario_args(p)
    p.add_argument("--out", default=None, help="write the result row to this file")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--demand-out", default=None, help="write the policy demand as CSV")
    p.add_argument("--policy-out", default=None, help="write the policy as sparse CSV")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a JSON grid of scenarios")
    p.add_argument("grid")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=None,
                   help="process count (default: NFRKIT_WORKERS or serial)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("curve", help="fairness-budget vs cache-hit-ratio curve")
    _add_scenario_args(p, with_algorithm=False)
    p.add_argument("--metric", choices=fairness_metrics(), required=True)
    p.add_argument("--budgets", required=True, help="comma-separated ascending budgets")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("bounds", help="evaluate the trade-off lower bounds")
    p.add_argument("--gain", type=float, required=True)
    p.add_argument("--cache-size", type=int, required=True)
    p.add_argument("--chr-bs", type=float, default=None)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("cdf", help="distance-from-bound CDF from a sweep CSV")
    p.add_argument("results")
    p.add_argument("--metric", choices=fairness_metrics(), required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_cdf)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
