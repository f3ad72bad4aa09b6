"""Fairness metrics over demand-distribution pairs and trade-off bounds.

Fairness is measured as the deviation of a policy's demand distribution
from the baseline recommender's demand. Three metrics are provided
(maximum per-content deviation, total variation, smoothed KL divergence)
together with closed-form lower bounds on each metric as a function of
the achieved cache-hit-ratio gain. Natural logarithms are used throughout
so metrics and bounds share a base.
"""

import math
from dataclasses import dataclass

import numpy as np

from .catalog import validate_demand
from .demand import cache_hit_ratio

__all__ = [
    "DEFAULT_SMOOTHING",
    "FairnessReport",
    "max_deviation",
    "total_variation",
    "smoothed_kl",
    "kl_divergence",
    "f_max_lower_bound",
    "f_tv_lower_bound",
    "f_kl_lower_bound",
    "relative_distance",
    "build_report",
]

#: default smoothing weight for the KL metric
DEFAULT_SMOOTHING = 0.01


def _pair(p_bs, p_nf):
    p_bs = validate_demand(p_bs)
    p_nf = validate_demand(p_nf, size=p_bs.shape[0])
    return p_bs, p_nf


def max_deviation(p_bs, p_nf):
    """Largest absolute per-content demand change, max_i |p_nf[i] - p_bs[i]|."""
    p_bs, p_nf = _pair(p_bs, p_nf)
    return float(np.max(np.abs(p_nf - p_bs)))


def total_variation(p_bs, p_nf):
    """Total variation distance, half the L1 distance between the demands."""
    p_bs, p_nf = _pair(p_bs, p_nf)
    return 0.5 * float(np.sum(np.abs(p_nf - p_bs)))


def smoothed_kl(p_bs, p_nf, w=DEFAULT_SMOOTHING):
    """Smoothed KL divergence of the baseline demand from a policy's demand.

    The second argument is smoothed as (1-w) * p_nf + w * p_bs so the
    divergence stays finite even when some content loses all demand; the
    normalized value divides by the resulting upper bound ln(1/w).

    Parameters
    ----------
    p_bs, p_nf : array-like
        Baseline and policy demand distributions.
    w : float
        Smoothing weight in (0, 1).

    Returns
    -------
    (float, float)
        Raw value in nats and the normalized value in [0, 1].
    """
    if not 0.0 < w < 1.0:
        raise ValueError("smoothing weight must lie in (0, 1), got %r" % w)
    p_bs, p_nf = _pair(p_bs, p_nf)
    mask = p_bs > 0.0
    # (1-w) q + w p written so identical inputs blend to themselves exactly
    blended = p_nf[mask] + w * (p_bs[mask] - p_nf[mask])
    raw = float(np.sum(p_bs[mask] * np.log(p_bs[mask] / blended)))
    return raw, raw / math.log(1.0 / w)


def kl_divergence(p_bs, p_nf):
    """Plain (unsmoothed) KL divergence in nats; +inf when a content with
    baseline demand has zero demand under the policy."""
    p_bs, p_nf = _pair(p_bs, p_nf)
    mask = p_bs > 0.0
    if np.any(p_nf[mask] == 0.0):
        return math.inf
    return float(np.sum(p_bs[mask] * np.log(p_bs[mask] / p_nf[mask])))


def f_max_lower_bound(gain, cache_size):
    """Minimum possible max-deviation for a given gain: G / C."""
    if not 0.0 <= gain <= 1.0:
        raise ValueError("gain must lie in [0, 1], got %r" % gain)
    if cache_size < 1:
        raise ValueError("cache size must be >= 1")
    return gain / cache_size


def f_tv_lower_bound(gain):
    """Minimum possible total variation for a given gain: G itself."""
    if not 0.0 <= gain <= 1.0:
        raise ValueError("gain must lie in [0, 1], got %r" % gain)
    return gain


def f_kl_lower_bound(gain, chr_bs):
    """Minimum possible KL divergence (nats) for a given gain.

    Evaluates -H ln(1 + G/H) - (1-H) ln(1 - G/(1-H)) with H the baseline
    cache hit ratio. Nonnegative and convex in the gain; diverges as the
    gain approaches 1 - H (the cache cannot absorb more demand).

    Parameters
    ----------
    gain : float
        Cache-hit-ratio gain, with 0 <= gain < 1 - chr_bs.
    chr_bs : float
        Baseline cache hit ratio, strictly inside (0, 1).
    """
    if not 0.0 < chr_bs < 1.0:
        raise ValueError("baseline cache hit ratio must lie in (0, 1), got %r" % chr_bs)
    if not 0.0 <= gain < 1.0 - chr_bs:
        raise ValueError("gain must lie in [0, 1 - chr_bs), got %r" % gain)
    h = chr_bs
    return -h * math.log(1.0 + gain / h) - (1.0 - h) * math.log(1.0 - gain / (1.0 - h))


def relative_distance(value, bound):
    """Relative distance of a metric value from its bound, (F - bound) / bound."""
    if not bound > 0.0:
        raise ValueError("bound must be positive, got %r" % bound)
    return (value - bound) / bound


def _safe_relative_distance(value, bound):
    if bound is None or not math.isfinite(bound) or bound <= 0.0 or not math.isfinite(value):
        return math.nan
    return relative_distance(value, bound)


@dataclass(frozen=True)
class FairnessReport:
    """Fairness metrics, gains, and bound diagnostics for one demand pair.

    ``kl_for_bound`` is the value compared against the KL bound: the plain
    KL divergence when the policy demand is strictly positive (always the
    case for stationary or LP-produced demand) and the smoothed raw value
    otherwise. Bound fields are NaN when outside their domain; relative
    distances are NaN when the bound is zero or missing (no gain).
    """

    f_max: float
    f_tv: float
    f_kl_raw: float
    f_kl_norm: float
    kl_plain: float
    kl_for_bound: float
    chr_bs: float
    chr_nf: float
    gain: float
    bound_f_max: float
    bound_f_tv: float
    bound_f_kl: float
    rel_dist_f_max: float
    rel_dist_f_tv: float
    rel_dist_f_kl: float

    _FIELDS = (
        "f_max", "f_tv", "f_kl_raw", "f_kl_norm", "kl_plain", "kl_for_bound",
        "chr_bs", "chr_nf", "gain", "bound_f_max", "bound_f_tv", "bound_f_kl",
        "rel_dist_f_max", "rel_dist_f_tv", "rel_dist_f_kl",
    )

    def to_dict(self):
        return {name: getattr(self, name) for name in self._FIELDS}

    @classmethod
    def from_dict(cls, data):
        return cls(**{name: float(data[name]) for name in cls._FIELDS})


def build_report(p_bs, p_nf, cache, w=DEFAULT_SMOOTHING):
    """Evaluate all fairness metrics and bound diagnostics for a demand pair.

    Parameters
    ----------
    p_bs, p_nf : array-like
        Baseline and policy demand distributions.
    cache : iterable of int
        Cached contents; determines the gain and the bound parameters.
    w : float
        KL smoothing weight.

    Returns
    -------
    FairnessReport
    """
    p_bs, p_nf = _pair(p_bs, p_nf)
    f_max = max_deviation(p_bs, p_nf)
    f_tv = total_variation(p_bs, p_nf)
    f_kl_raw, f_kl_norm = smoothed_kl(p_bs, p_nf, w)
    kl_plain = kl_divergence(p_bs, p_nf)
    kl_for_bound = kl_plain if math.isfinite(kl_plain) else f_kl_raw

    chr_bs = cache_hit_ratio(p_bs, cache)
    chr_nf = cache_hit_ratio(p_nf, cache)
    gain = chr_nf - chr_bs
    cache_size = len(set(int(c) for c in cache))

    bound_f_max = gain / cache_size if cache_size >= 1 else math.nan
    bound_f_tv = gain
    if 0.0 < chr_bs < 1.0 and 0.0 <= gain < 1.0 - chr_bs:
        bound_f_kl = f_kl_lower_bound(gain, chr_bs)
    else:
        bound_f_kl = math.nan

    return FairnessReport(
        f_max=f_max,
        f_tv=f_tv,
        f_kl_raw=f_kl_raw,
        f_kl_norm=f_kl_norm,
        kl_plain=kl_plain,
        kl_for_bound=kl_for_bound,
        chr_bs=chr_bs,
        chr_nf=chr_nf,
        gain=gain,
        bound_f_max=bound_f_max,
        bound_f_tv=bound_f_tv,
        bound_f_kl=bound_f_kl,
        rel_dist_f_max=_safe_relative_distance(f_max, bound_f_max),
        rel_dist_f_tv=_safe_relative_distance(f_tv, bound_f_tv),
        rel_dist_f_kl=_safe_relative_distance(kl_for_bound, bound_f_kl),
    )
