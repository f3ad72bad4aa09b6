"""Toolkit for cache-aware recommendation policies and their fairness.

Models the content demand induced by a recommender, measures how far a
cache-friendly policy's demand drifts from the baseline recommender's,
evaluates the analytic fairness-vs-gain trade-off bounds, and computes
optimal policies with fairness guarantees via linear programming.
"""

from .catalog import (EdgeListError, ScoreMatrix, largest_connected_component,
                      load_score_matrix, synthetic_catalog, threshold_binarize,
                      validate_cache, validate_demand, write_score_matrix,
                      zipf_direct_demand)
from .demand import (DemandSolveError, RecommendationPolicy, UserModel,
                     cache_hit_ratio, network_gain, simulate_demand,
                     stationary_demand)
from .fairness import (DEFAULT_SMOOTHING, FairnessReport, build_report,
                       f_kl_lower_bound, f_max_lower_bound, f_tv_lower_bound,
                       kl_divergence, max_deviation, relative_distance,
                       smoothed_kl, total_variation)
from .harness import (ALGORITHMS, CatalogSpec, ScenarioConfig, ScenarioResult,
                      distance_cdf, expand_grid, export_results,
                      load_results_json, popularity_cache,
                      price_of_fairness_curve, run_scenario, sweep)
from .optimizer import (METRICS, FairnessConstraint, LpModel, SolveResult,
                        TangentCutFamily, build_lp, candidate_set,
                        recover_policy, solve, tangent_cuts)
from .recsys import (BaselineProfile, baseline_profile, cabaret_policy,
                     greedy_policy, qor_ratios)

__version__ = "0.1.0"
