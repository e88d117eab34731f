""" Binomial machinery and the k-NN variance constants

Everything here works with log C(n, k) so that n in the tens of
thousands never overflows. Exact integer versions are kept only where a
test needs an oracle.

Usage:

    npmoment zeta 3
    npmoment zeta 2 100

"""

import logging, math

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from scipy.special import betaln, logsumexp, roots_legendre
from scipy.stats import binom

from .common import *

logger = logging.getLogger(__name__)


#
# Log binomials
#

def log_binomial (n, k):
    """ log C(n, k), elementwise; -inf where C(n, k) = 0.
    Uses -log(n+1) - log B(n-k+1, k+1), which stays accurate relative to the
    result rather than to log n!.

    """
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    valid = (k >= 0) & (k <= n) & (n >= 0)
    n_safe = np.where(valid, n, 1.0)
    k_safe = np.where(valid, k, 0.0)
    values = -np.log1p(n_safe) - betaln(n_safe - k_safe + 1.0, k_safe + 1.0)
    values = np.where(valid, values, -np.inf)
    if values.ndim == 0:
        return float(values)
    return values


class LogBinomialTable:
    """ log C(n, k) for 0 <= k <= n <= max_n, filled row by row on demand """

    def __init__ (self, max_n):
        require(max_n >= 0, "max_n must be non-negative")
        self.max_n = int(max_n)
        self._rows = {}

    def row (self, n):
        """ log C(n, 0..n) as an array """
        if n < 0 or n > self.max_n:
            raise PreconditionException("n={} outside table range [0, {}]".format(n, self.max_n))
        if n not in self._rows:
            self._rows[n] = log_binomial(n, np.arange(n + 1))
        return self._rows[n]

    def __call__ (self, n, k):
        if k < 0 or k > n:
            return -np.inf
        return float(self.row(n)[k])


#
# zeta_k
#

def zeta (k, exact=False):
    """ zeta_k = k + sum_{t=k}^{2k-2} 2^-t sum_{i=t-k+1}^{k-1} C(t, i).
    With exact=True, return the dyadic rational as a Fraction.

    """
    if k < 1:
        raise PreconditionException("zeta needs k >= 1, got {}".format(k))
    value = Fraction(k)
    for t in range(k, 2 * k - 1):
        inner = sum(math.comb(t, i) for i in range(t - k + 1, k))
        value += Fraction(inner, 2 ** t)
    return value if exact else float(value)


#
# The a_t, b_t sequences behind the k-NN incrementality
#

@dataclass(frozen=True)
class IncrementalitySequences:
    """ a_t and b_t for t = 0..2k-2, as logs, with the ratios a_t/b_t """
    k: int
    s: int
    log_a: np.ndarray
    log_b: np.ndarray
    ratio: np.ndarray

    @property
    def ratio_sum (self):
        return float(np.sum(self.ratio))


def incrementality_sequences (k, s):
    """ a_t = sum_{i=max(0,t-k+1)}^{min(t,k-1)} C(s-1,i) C(s-1,t-i), and
    b_t = C(2s-2, t) (the full Vandermonde sum), for t = 0..2k-2.

    a_t/b_t is a hypergeometric probability, so it is formed from log terms
    and never from the binomials themselves. For t <= k-1 the ranges
    coincide and the ratio is exactly 1.

    """
    if k < 1:
        raise PreconditionException("k must be at least 1")
    if s < k:
        raise PreconditionException("s={} is smaller than k={}".format(s, k))

    m = s - 1
    ts = np.arange(2 * k - 1)
    log_a = np.empty(ts.size)
    log_b = np.empty(ts.size)
    ratio = np.empty(ts.size)
    for t in ts:
        log_b[t] = log_binomial(2 * m, t)
        i = np.arange(max(0, t - k + 1), min(t, k - 1) + 1)
        terms = log_binomial(m, i) + log_binomial(m, t - i)
        log_a[t] = logsumexp(terms) if np.any(np.isfinite(terms)) else -np.inf
        if t <= k - 1:
            ratio[t] = 1.0
        elif np.isfinite(log_b[t]):
            ratio[t] = np.exp(log_a[t] - log_b[t])
        else:
            # C(2s-2, t) = 0 only when a_t = 0 too; that term is absent
            ratio[t] = 0.0
    return IncrementalitySequences(k, s, log_a, log_b, ratio)


def exact_sequences (k, s):
    """ Exact integer a_t and b_t (b_t by its defining sum), for oracles """
    m = s - 1
    a = []
    b = []
    for t in range(2 * k - 1):
        a.append(sum(math.comb(m, i) * math.comb(m, t - i) for i in range(max(0, t - k + 1), min(t, k - 1) + 1)))
        b.append(sum(math.comb(m, i) * math.comb(m, t - i) for i in range(0, t + 1)))
    return a, b


def incrementality_bounds (k):
    """ (lower, upper) bounds on sum_t a_t/b_t valid for every s """
    lower = k + sum((2 * k - 1 - t) / (t + 1) for t in range(k, 2 * k - 1))
    return lower, float(2 * k - 1)


def incrementality (k, s):
    """ eta_k(s) = (sum_t a_t/b_t) / ((2s-1) k^2) """
    if k < 1:
        raise PreconditionException("k must be at least 1")
    if s < k:
        raise PreconditionException("s={} is smaller than k={}".format(s, k))
    if s < 2:
        raise PreconditionException("incrementality needs s >= 2")
    total = incrementality_sequences(k, s).ratio_sum
    return total / ((2 * s - 1) * k * k)


def incrementality_oracle (k, s, quadrature_points=2000):
    """ eta_k(s) by quadrature: (1/k^2) int_0^1 P[Bin(s-1, p) <= k-1]^2 dp.
    The integrand is a polynomial of degree 2s-2, so Gauss-Legendre with
    enough points is exact up to rounding.

    """
    if quadrature_points < 1000:
        raise PreconditionException("use at least 1000 quadrature points")
    if s < k or k < 1:
        raise PreconditionException("need s >= k >= 1")
    nodes, weights = roots_legendre(int(quadrature_points))
    p = 0.5 * (nodes + 1.0)
    tail = binom.cdf(k - 1, s - 1, p)
    return float(0.5 * np.sum(weights * tail * tail)) / (k * k)


# end
