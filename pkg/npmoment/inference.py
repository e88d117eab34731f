""" Plug-in asymptotic variance and normal confidence intervals

For coordinate j the sub-sampled k-NN estimate has leading variance

    (s^2 / n) * sigma_j^2(x) / (2s - 1) * zeta_k / k^2

with sigma_j^2(x) = Var[<e_j, M0^-1 psi(Z; theta(x))> | X = x]. sigma_j^2 is
estimated from the residual scores of the nearest neighbours of x, on the
same sample used for estimation.

"""

import logging, math

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from scipy.stats import anderson, norm

from .common import *
from .combinatorics import incrementality_sequences, zeta
from .knn_weights import make_weights, rank_by_distance
from .solver import checked_solve, solve, weight_array, weighted_jacobian

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InferenceResult:
    theta_hat: np.ndarray
    sigma_tilde_sq: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    m0_hat: np.ndarray
    sigma_j_sq_hat: np.ndarray
    gamma: float
    s: int
    k: int
    residual_norm: float = 0.0
    method: str = None
    adaptive: object = field(default=None, repr=False)

    def to_dict (self):
        return {
            "theta": self.theta_hat,
            "variance": self.sigma_tilde_sq,
            "ci": [[lo, hi] for lo, hi in zip(self.ci_lower, self.ci_upper)],
            "gamma": self.gamma,
            "s_used": self.s,
            "k": self.k,
            "m0": self.m0_hat,
            "sigma_sq": self.sigma_j_sq_hat,
            "residual": self.residual_norm,
            "method": self.method,
        }


def estimate_m0 (weights, dataset, moment, theta_hat, density=None):
    """ M0-hat = sum_i alpha_i d psi(Z_i; theta-hat)/d theta.
    A piecewise-constant moment has no usable Jacobian; pass the conditional
    density at the solution (M0 = [[density]] for the quantile moment).

    """
    if moment.smoothness == "piecewise-constant":
        if density is None:
            raise UnsupportedInferenceException(
                "inference for {} needs a conditional density value at the solution".format(moment.name)
            )
        if not density > 0:
            raise PreconditionException("density must be positive")
        return np.array([[float(density)]])

    alpha = weight_array(weights)
    ids = np.flatnonzero(alpha > 0)
    rows = dataset.subset(ids)
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if moment.name == "regression":
        m0 = np.array([[-1.0]])
    elif moment.name == "het_effect":
        T = rows.T
        m0 = -((T * alpha[ids][:, None]).T @ T)
    else:
        m0 = np.atleast_2d(weighted_jacobian(alpha[ids], rows, moment, theta_hat))

    # surface singularity here rather than in sigma_j
    checked_solve(m0, np.zeros(m0.shape[0]), "M0 estimate")
    return m0


def default_neighbors (n):
    """ m = ceil(sqrt(n)) nearest neighbours for the local variance """
    return max(2, int(math.ceil(math.sqrt(n))))


def estimate_sigma_j (dataset, x, theta_hat, m0_hat, m_neighbors, moment, ranking=None):
    """ Per-coordinate sample variance (1/(m-1)) of <e_j, M0^-1 psi(Z_i; theta-hat)>
    over the m nearest neighbours of x.

    """
    if m_neighbors < 2:
        raise PreconditionException("need at least 2 neighbours for a variance")
    if m_neighbors > dataset.n:
        raise PreconditionException("m={} neighbours requested from n={}".format(m_neighbors, dataset.n))
    if ranking is None:
        ranking = rank_by_distance(dataset, x)
    rows = dataset.subset(ranking.order[:m_neighbors])
    scores = moment.scores(rows, np.atleast_1d(theta_hat))
    m0_hat = np.atleast_2d(m0_hat)
    standardized = checked_solve(m0_hat, scores.T, "M0 estimate").T
    return np.var(standardized, axis=0, ddof=1)


def variance_factor (s, k, finite_sample=False):
    """ zeta_k / k^2, or its finite-s version sum_t a_t/b_t / k^2 """
    if finite_sample:
        return incrementality_sequences(k, s).ratio_sum / (k * k)
    return zeta(k) / (k * k)


def plugin_variance (sigma_j_sq, n, s, k, finite_sample=False):
    """ (s^2/n) * sigma_j^2 / (2s-1) * zeta_k / k^2, coordinatewise """
    if k < 1 or s < k:
        raise PreconditionException("need s >= k >= 1 (s={}, k={})".format(s, k))
    if n < s:
        raise PreconditionException("need n >= s (n={}, s={})".format(n, s))
    sigma_j_sq = np.asarray(sigma_j_sq, dtype=float)
    return (s * s / n) * sigma_j_sq / (2 * s - 1) * variance_factor(s, k, finite_sample)


def normal_quantile (gamma):
    """ z_{(1+gamma)/2} """
    if not 0 < gamma < 1:
        raise PreconditionException("confidence level must be in (0, 1), got {}".format(gamma))
    return float(norm.ppf((1.0 + gamma) / 2.0))


def confidence_interval (theta_hat, variance, gamma):
    """ theta_j -/+ z_{(1+gamma)/2} sqrt(variance_j); returns (lower, upper) """
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    variance = np.atleast_1d(np.asarray(variance, dtype=float))
    half_width = normal_quantile(gamma) * np.sqrt(variance)
    return theta_hat - half_width, theta_hat + half_width


def qq_data (estimates, mean, sd):
    """ Sorted replicas against N(mean, sd^2) quantiles at (i - 0.5)/N """
    estimates = np.sort(np.asarray(estimates, dtype=float))
    if estimates.size < 10:
        raise PreconditionException("need at least 10 replicas for a QQ plot")
    positions = (np.arange(1, estimates.size + 1) - 0.5) / estimates.size
    return pd.DataFrame({
        "theoretical": mean + sd * norm.ppf(positions),
        "empirical": estimates,
    })


def normality_check (standardized, level=0.01):
    """ Anderson-Darling test of standardized replicas against N(0, 1).
    Returns (statistic, critical value at the level, passed).

    """
    result = anderson(np.asarray(standardized, dtype=float), dist="norm")
    levels = list(np.asarray(result.significance_level) / 100.0)
    # closest tabulated level at or below the one asked for
    choices = [i for i, value in enumerate(levels) if value <= level + 1e-12]
    index = choices[0] if choices else len(levels) - 1
    critical = float(result.critical_values[index])
    return float(result.statistic), critical, bool(result.statistic <= critical)


def local_inference (dataset, x, moment, k, s=None, gamma=0.98, zeta_exponent=0.1,
                     Delta=None, mode="complete", B=None, rng=None,
                     m_neighbors=None, density=None, exact_scan=False, finite_sample=False):
    """ Estimate theta(x) with a plug-in normal interval.
    With s=None the sub-sample size is picked adaptively (s_zeta).

    """
    from .adaptive import select_s_inference

    moment.check(dataset)
    ranking = rank_by_distance(dataset, x)
    selection = None
    if s is None:
        p = moment.dimension(dataset)
        selection = select_s_inference(dataset, x, k, p, zeta_exponent, Delta=Delta, exact_scan=exact_scan, ranking=ranking)
        s = selection.s_zeta
    if not k <= s <= dataset.n:
        raise PreconditionException("need k <= s <= n (k={}, s={}, n={})".format(k, s, dataset.n))

    weights = make_weights(ranking, s, k, mode, B, rng, inference=True)
    solved = solve(weights, dataset, moment)
    m0 = estimate_m0(weights, dataset, moment, solved.theta_hat, density)
    if m_neighbors is None:
        m_neighbors = default_neighbors(dataset.n)
    sigma_sq = estimate_sigma_j(dataset, x, solved.theta_hat, m0, min(m_neighbors, dataset.n), moment, ranking)
    variance = plugin_variance(sigma_sq, dataset.n, s, k, finite_sample)
    lower, upper = confidence_interval(solved.theta_hat, variance, gamma)
    return InferenceResult(
        theta_hat=solved.theta_hat,
        sigma_tilde_sq=variance,
        ci_lower=lower,
        ci_upper=upper,
        m0_hat=m0,
        sigma_j_sq_hat=sigma_sq,
        gamma=gamma,
        s=int(s),
        k=int(k),
        residual_norm=solved.residual_norm,
        method=solved.method,
        adaptive=selection,
    )

# end
