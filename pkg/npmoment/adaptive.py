""" Data-driven choice of the sub-sample size s

H(s), the average k-NN radius of x over size-s sub-samples, falls with s;
G_delta(s) = Delta sqrt(C_{n,p,delta} p s / n) rises with it. Scanning s
from n downward, s2 is the first s with H(s) > 2 G_delta(s) and s1 = s2 + 1.
Estimation uses s_* = 9 s1 + 1; inference uses s_zeta = s_* n^zeta with
delta = 1/n.

Usage:

    npmoment adapt --data data.csv --covariates c0..c19 --outcome y --x 0.1,... --k 1 --zeta 0.1

"""

import logging, math

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .common import *
from .knn_weights import rank_by_distance, shrinkage_statistic

logger = logging.getLogger(__name__)

GRID_RATIO = 1.1

# log-log slopes closer to zero than this count as flat
SLOPE_TOLERANCE = 1e-6


@dataclass
class AdaptiveSelection:
    s1: int
    s2: int
    s_star: int
    s_zeta: int
    delta: float
    Delta: float
    zeta: float = None
    fallback: str = None
    zeta_bound_s1: float = None
    zeta_bound_s_star: float = None
    trace: list = field(default_factory=list)

    def trace_frame (self):
        """ The evaluated (s, H, G) triples, largest s first """
        return pd.DataFrame(self.trace, columns=["s", "H", "G"])

    def to_dict (self):
        return {
            "s1": self.s1,
            "s2": self.s2,
            "s_star": self.s_star,
            "s_zeta": self.s_zeta,
            "delta": self.delta,
            "Delta": self.Delta,
            "zeta": self.zeta,
            "fallback": self.fallback,
            "zeta_bound_s1": self.zeta_bound_s1,
            "zeta_bound_s_star": self.zeta_bound_s_star,
        }


def concentration_constant (n, p, delta):
    """ C_{n,p,delta} = 2 log(2 p n / delta) """
    return 2.0 * math.log(2.0 * p * n / delta)


def g_delta (s, n, p, delta, Delta):
    """ G_delta(s) = Delta sqrt(C_{n,p,delta} p s / n) """
    return Delta * np.sqrt(concentration_constant(n, p, delta) * p * np.asarray(s, dtype=float) / n)


@dataclass(frozen=True)
class GTrace:
    """ The concentration envelope G_delta(s) on a set of s values """
    c_npd: float
    s: np.ndarray
    values: np.ndarray


def g_trace (s_values, n, p, delta, Delta):
    s_values = np.asarray(s_values)
    return GTrace(c_npd=concentration_constant(n, p, delta), s=s_values, values=g_delta(s_values, n, p, delta, Delta))


def bounding_box_diameter (dataset):
    """ Diagonal of the covariates' bounding box, an upper bound on their diameter """
    extent = dataset.X.max(axis=0) - dataset.X.min(axis=0)
    return float(np.sqrt(np.sum(extent ** 2)))


def scan_grid (n, k):
    """ Geometric grid from n down to k (ratio 1.1), both ends included """
    values = {n, k}
    s = float(n)
    while s > k:
        values.add(int(round(s)))
        s /= GRID_RATIO
    return sorted((v for v in values if k <= v <= n), reverse=True)


def _find_s2 (ranking, n, k, p, delta, Delta, exact_scan):
    """ Scan s = n, ..., k; return (s2 or None, whether any s was covered, trace) """
    trace = []
    cache = {}

    def exceeds (s):
        if s not in cache:
            h = shrinkage_statistic(ranking, s, k)
            g = float(g_delta(s, n, p, delta, Delta))
            cache[s] = h > 2 * g
            trace.append((s, h, g))
        return cache[s]

    if exact_scan:
        for s in range(n, k - 1, -1):
            if exceeds(s):
                return s, s < n, trace
        return None, True, trace

    previous = None
    for s in scan_grid(n, k):
        if exceeds(s):
            if previous is None:
                return s, False, trace
            # unit steps down from the last covered grid point
            for t in range(previous - 1, s, -1):
                if exceeds(t):
                    return t, True, trace
            return s, True, trace
        previous = s
    return None, True, trace


def select_s_estimation (dataset, x, k, p, delta, Delta=None, exact_scan=False, ranking=None):
    """ s1, s2 and s_* = 9 s1 + 1 (clamped to [k, n-1]) from the H/G scan """
    n = dataset.n
    if not n > k:
        raise PreconditionException("need n > k (n={}, k={})".format(n, k))
    if not 0 < delta < 1:
        raise PreconditionException("delta must be in (0, 1), got {}".format(delta))
    if p is None or p < 1:
        raise PreconditionException("parameter dimension p must be at least 1")
    if ranking is None:
        ranking = rank_by_distance(dataset, x)
    if Delta is None:
        Delta = bounding_box_diameter(dataset)
    if not Delta > 0:
        raise PreconditionException("Delta must be positive")

    s2, covered, trace = _find_s2(ranking, n, k, p, delta, Delta, exact_scan)
    fallback = None
    if s2 is None:
        fallback = "all-covered"
        s2 = k
        logger.warning("H(s) <= 2 G(s) for every s; using s2 = k = {}".format(k))
    elif not covered:
        fallback = "never-covered"
        s2 = n - 1
        logger.warning("H(s) > 2 G(s) even at s = n; using s2 = n - 1 = {}".format(n - 1))
    s1 = s2 + 1
    s_star = min(max(9 * s1 + 1, k), n - 1)

    trace.sort(key=lambda row: -row[0])
    return AdaptiveSelection(
        s1=s1, s2=s2, s_star=s_star, s_zeta=s_star,
        delta=delta, Delta=Delta, fallback=fallback, trace=trace,
    )


def zeta_upper_bound (n, s):
    """ (log n - log s - log log^2 n) / log n """
    log_n = math.log(n)
    return (log_n - math.log(s) - math.log(log_n ** 2)) / log_n


def select_s_inference (dataset, x, k, p, zeta, Delta=None, exact_scan=False, ranking=None):
    """ s_zeta = floor(s_* n^zeta) with delta = 1/n.
    A zeta above the admissible bound (computed with s_*) is clamped to it
    with a warning, which caps s_zeta at floor(n / log^2 n).

    """
    n = dataset.n
    if zeta < 0:
        raise PreconditionException("zeta must be positive, got {}".format(zeta))
    selection = select_s_estimation(dataset, x, k, p, 1.0 / n, Delta, exact_scan, ranking)

    bound_s1 = zeta_upper_bound(n, selection.s1)
    bound_s_star = zeta_upper_bound(n, selection.s_star)
    selection.zeta_bound_s1 = bound_s1
    selection.zeta_bound_s_star = bound_s_star
    selection.zeta = zeta

    used = zeta
    if zeta > bound_s_star:
        used = max(bound_s_star, 0.0)
        logger.warning("zeta = {} exceeds the admissible bound {:.4f}; clamping".format(zeta, bound_s_star))

    if used == 0:
        s_zeta = selection.s_star
    else:
        s_zeta = int(math.floor(selection.s_star * n ** used))
    upper = min(n - 1, int(math.floor(n / math.log(n) ** 2)))
    selection.s_zeta = max(min(max(s_zeta, k + 1), upper), k)
    return selection


def estimate_intrinsic_dimension (dataset, x, k, s_grid=None, ranking=None):
    """ d-hat = -1 / slope of the least-squares line of log H(s) on log s """
    n = dataset.n
    if s_grid is None:
        low = max(10 * k, n // 100)
        s_grid = np.unique(np.geomspace(low, max(low * 10, n // 2), 12).astype(int))
    s_grid = np.array(sorted(set(int(s) for s in s_grid)))
    if s_grid.size < 3:
        raise PreconditionException("need at least 3 sub-sample sizes")
    if s_grid[-1] < 10 * s_grid[0]:
        raise PreconditionException("sub-sample sizes must span at least a decade")
    if s_grid[0] < k or s_grid[-1] > n:
        raise PreconditionException("sub-sample sizes must lie in [k, n]")
    if ranking is None:
        ranking = rank_by_distance(dataset, x)

    h = np.array([shrinkage_statistic(ranking, int(s), k) for s in s_grid])
    if np.any(h <= 0):
        raise DiagnosticException("zero k-NN radius; duplicated points at the target")
    slope, _ = np.polyfit(np.log(s_grid), np.log(h), 1)
    if not slope < -SLOPE_TOLERANCE:
        raise DiagnosticException("H(s) does not shrink with s (slope {:.3f}); data not locally homogeneous at this scale".format(slope))
    return float(-1.0 / slope)


# end
