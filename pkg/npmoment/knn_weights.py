""" Sub-sampled k-NN kernel weights

Averaging the "1/k on the k nearest neighbours" rule over all C(n, s)
sub-samples collapses to fixed weights on the distance-ordered data, so
the complete ensemble costs one sort plus O(nk). The incomplete ensemble
draws B sub-samples explicitly, and can average any base kernel
that maps a target and a sub-sample to weights (SubsampleKernel); the
k-NN rule is the one shipped.

"""

import logging, math

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd

from scipy.special import logsumexp

from .common import *
from .combinatorics import log_binomial
from .dataset import SubsampleDrawer

logger = logging.getLogger(__name__)

# log-weight terms further than this below the largest carry no mass in double precision
LOG_MASS_CUTOFF = 60.0


@dataclass(frozen=True)
class DistanceRanking:
    """ Observations ordered by l2 distance to a target x (ties by index) """
    target: np.ndarray
    order: np.ndarray
    distances: np.ndarray

    @property
    def n (self):
        return self.order.size

    @cached_property
    def _ranks (self):
        ranks = np.empty(self.n, dtype=int)
        ranks[self.order] = np.arange(self.n)
        ranks.flags.writeable = False
        return ranks

    def ranks (self):
        """ ranks()[i] is the 0-based rank of observation i """
        return self._ranks

    def distance_of (self, ids):
        """ Distance to the target of the given observation ids """
        return self.distances[self._ranks[ids]]


@dataclass(frozen=True)
class WeightVector:
    """ Kernel weights alpha(X_i), indexed by original observation id """
    alpha: np.ndarray
    s: int
    k: int
    mode: str = "complete"
    B: int = None

    def positive (self):
        """ (ids, weights) of the strictly positive entries, by id """
        ids = np.flatnonzero(self.alpha > 0)
        return ids, self.alpha[ids]

    def to_frame (self):
        ids, weights = self.positive()
        return pd.DataFrame({"observation": ids, "weight": weights})


def rank_by_distance (dataset, x):
    """ Sort observations by ||x - X_i||_2, stably """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.size != dataset.D:
        raise DimensionException("target has dimension {}, data has D={}".format(x.size, dataset.D))
    distances = np.sqrt(np.sum((dataset.X - x) ** 2, axis=1))
    order = np.argsort(distances, kind="stable")
    return DistanceRanking(target=x, order=order, distances=distances[order])


def _check_sizes (n, s, k):
    if k < 1:
        raise PreconditionException("k must be at least 1")
    if s > n:
        raise PreconditionException("s={} exceeds n={}".format(s, n))
    if k > s:
        raise PreconditionException("k={} exceeds s={}".format(k, s))


def _rank_limit (n, s, k):
    """ Ranks beyond this carry less than exp(-LOG_MASS_CUTOFF) of the mass.
    Past its head the rank distribution falls at least like
    (1 - (s-k)/n)^i; the 10k allowance covers the C(i-1, k-1) growth.

    """
    if s >= n:
        return k
    if s == k:
        return n - s + k
    decay = -math.log1p(-(s - k) / n)
    limit = k + int(math.ceil((LOG_MASS_CUTOFF + 10.0 * k) / decay))
    return min(n - s + k, limit)


def rank_weights (n, s, k):
    """ Complete-ensemble weight for each rank i = 1..n:
    alpha_(i) = (1/k) C(n,s)^-1 sum_{j=0}^{k-1} C(i-1, j) C(n-i, s-1-j)
    i.e. (1/k) P[rank i is in the sub-sample and among its k nearest].

    """
    _check_sizes(n, s, k)
    weights = np.zeros(n)
    if s == n:
        weights[:k] = 1.0 / k
        return weights

    limit = _rank_limit(n, s, k)
    i = np.arange(1, limit + 1)
    log_total = log_binomial(n, s)
    terms = np.stack([
        log_binomial(i - 1, j) + log_binomial(n - i, s - 1 - j) - log_total
        for j in range(k)
    ])
    weights[:limit] = np.exp(logsumexp(terms, axis=0)) / k
    return weights


def complete_weights (ranking, s, k):
    """ Exact (complete U-statistic) sub-sampled k-NN weights """
    n = ranking.n
    by_rank = rank_weights(n, s, k)
    alpha = np.zeros(n)
    alpha[ranking.order] = by_rank
    return WeightVector(alpha=alpha, s=s, k=k, mode="complete")


def default_draws (n, s, inference=True):
    """ B >= (n/s)^(5/4) when intervals are wanted, B >= n/s for estimation """
    if inference:
        return int(math.ceil((n / s) ** 1.25))
    return int(math.ceil(n / s))


#
# Base kernels for the sub-sampled ensemble
#

class SubsampleKernel:
    """ A base kernel K(x, S): given the ranking of the data around the
    target x and the ids of a drawn sub-sample S, put weights on members
    of S. The weights of one draw sum to mass; the ensemble divides by
    mass once at the end, so a kernel with integer weights keeps exact
    counts.

    Subclasses implement subsample_weights(); check() may reject sizes
    the kernel can't work with.

    """

    name = "kernel"
    mass = 1.0

    def check (self, n, s):
        if s > n:
            raise PreconditionException("s={} exceeds n={}".format(s, n))
        if s < 1:
            raise PreconditionException("s must be at least 1")

    def subsample_weights (self, ranking, members):
        """ Return (ids, weights) for one sub-sample """
        raise NotImplementedError()


class KNNKernel(SubsampleKernel):
    """ 1/k on the k members of the sub-sample nearest to x """

    name = "knn"

    def __init__ (self, k):
        self.k = int(k)
        self.mass = float(self.k)

    def check (self, n, s):
        _check_sizes(n, s, self.k)

    def subsample_weights (self, ranking, members):
        k = self.k
        if k < members.size:
            ranks = ranking.ranks()
            nearest = members[np.argpartition(ranks[members], k - 1)[:k]]
        else:
            nearest = members
        return nearest, np.ones(nearest.size)


def ensemble_weights (ranking, s, B, rng, kernel):
    """ Average kernel's weights over B sub-samples of size s drawn
    without replacement. Returns the weight of every observation, by id.

    """
    n = ranking.n
    kernel.check(n, s)
    if B < 1:
        raise PreconditionException("B must be at least 1")

    drawer = SubsampleDrawer(n, rng)
    totals = np.zeros(n)
    for b in range(B):
        members = drawer.draw(s)
        ids, weights = kernel.subsample_weights(ranking, members)
        np.add.at(totals, ids, weights)
    return totals / (kernel.mass * B)


def incomplete_weights (ranking, s, k, B, rng, kernel=None):
    """ The B-draw ensemble of the k-NN kernel (or of another base kernel,
    which then ignores k apart from recording it)

    """
    _check_sizes(ranking.n, s, k)
    if kernel is None:
        kernel = KNNKernel(k)
    alpha = ensemble_weights(ranking, s, B, rng, kernel)
    return WeightVector(alpha=alpha, s=s, k=k, mode="incomplete", B=int(B))


def make_weights (ranking, s, k, mode="complete", B=None, rng=None, inference=True, kernel=None):
    """ Complete or incomplete weights, with the default B when none is given.
    Only the k-NN kernel has a complete form.

    """
    if mode == "complete":
        if kernel is not None and not isinstance(kernel, KNNKernel):
            raise PreconditionException("complete weights need the k-NN kernel; use incomplete mode")
        return complete_weights(ranking, s, k)
    elif mode == "incomplete":
        if B is None:
            B = default_draws(ranking.n, s, inference)
        return incomplete_weights(ranking, s, k, B, rng, kernel)
    else:
        raise SchemaException("unknown weight mode {}".format(mode))


def shrinkage_statistic (ranking, s, k):
    """ H(s): the k-NN radius of x averaged over all size-s sub-samples,
    H(s) = C(n,s)^-1 sum_{i=k}^{n-s+k} C(i-1,k-1) C(n-i,s-k) d_(i)

    """
    n = ranking.n
    _check_sizes(n, s, k)
    if s == n:
        return float(ranking.distances[k - 1])
    limit = _rank_limit(n, s, k)
    i = np.arange(k, limit + 1)
    log_weights = log_binomial(i - 1, k - 1) + log_binomial(n - i, s - k) - log_binomial(n, s)
    return float(np.sum(np.exp(log_weights) * ranking.distances[i - 1]))


# end
