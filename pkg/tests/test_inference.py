import math

import numpy as np
import pytest

from scipy.stats import norm

from npmoment.common import *
from npmoment.dataset import Dataset
from npmoment.inference import *
from npmoment.knn_weights import rank_by_distance, rank_weights
from npmoment.moments import *
from npmoment.solver import solve


def uniform (n):
    return np.full(n, 1.0 / n)


def test_m0_regression (line_dataset):
    assert estimate_m0(uniform(3), line_dataset, regression_moment(), [1.0]).tolist() == [[-1.0]]


def test_m0_het_effect_one_hot ():
    T = np.array([[1.0, 0.0], [0.0, 1.0]])
    dataset = Dataset(np.zeros((2, 1)), np.zeros(2), T=T)
    m0 = estimate_m0(uniform(2), dataset, het_effect_moment(), [0.0, 0.0])
    assert m0 == pytest.approx(-0.5 * np.eye(2))


def test_m0_singular ():
    dataset = Dataset(np.zeros((2, 1)), np.zeros(2), T=np.array([[1.0, 0.0], [2.0, 0.0]]))
    with pytest.raises(SingularityException):
        estimate_m0(uniform(2), dataset, het_effect_moment(), [0.0, 0.0])


def test_m0_quantile_needs_density (line_dataset):
    with pytest.raises(UnsupportedInferenceException):
        estimate_m0(uniform(3), line_dataset, quantile_moment(0.5), [3.0])
    assert estimate_m0(uniform(3), line_dataset, quantile_moment(0.5), [3.0], density=0.4).tolist() == [[0.4]]


def test_sigma_constant_neighbours ():
    X = np.linspace(0, 1, 20).reshape(-1, 1)
    dataset = Dataset(X, np.full(20, 2.0))
    sigma = estimate_sigma_j(dataset, [0.0], [2.0], [[-1.0]], 5, regression_moment())
    assert sigma.tolist() == [0.0]


def test_sigma_unit_noise ():
    generator = RngSpec(21).generator()
    dataset = Dataset(generator.uniform(size=(10000, 2)), generator.normal(size=10000))
    sigma = estimate_sigma_j(dataset, [0.5, 0.5], [0.0], [[-1.0]], 10000, regression_moment())
    assert sigma[0] == pytest.approx(1.0, abs=0.05)


def test_sigma_too_many_neighbours (line_dataset):
    with pytest.raises(PreconditionException):
        estimate_sigma_j(line_dataset, [0.0], [1.0], [[-1.0]], 4, regression_moment())


def test_default_neighbours ():
    assert default_neighbors(20000) == 142
    assert default_neighbors(1) == 2


@pytest.mark.parametrize("k, factor", [
    (1, 1.0),
    (2, 5.0 / 8.0),
    (3, 11.0 / 24.0),
])
def test_plugin_variance (k, factor):
    n, s, sigma_sq = 5000, 200, 1.7
    expected = factor * s * s * sigma_sq / (n * (2 * s - 1))
    assert plugin_variance([sigma_sq], n, s, k)[0] == pytest.approx(expected, rel=1e-12)


def test_plugin_variance_finite_sample ():
    assert plugin_variance([1.0], 100, 10, 1, finite_sample=True)[0] == pytest.approx(100 / (100 * 19), rel=1e-12)
    assert plugin_variance([1.0], 100, 3, 2, finite_sample=True)[0] == pytest.approx((9 / 100) * (8 / 3) / (5 * 4), rel=1e-12)


def test_plugin_variance_preconditions ():
    with pytest.raises(PreconditionException):
        plugin_variance([1.0], 100, 2, 3)
    with pytest.raises(PreconditionException):
        plugin_variance([1.0], 10, 20, 1)


@pytest.mark.parametrize("k", [1, 2])
def test_plugin_variance_matches_conditional_variance (k):
    # given X, Var(theta-hat) = sigma^2 sum alpha_i^2 for pure-noise regression
    n, s = 5000, 200
    exact = float(np.sum(rank_weights(n, s, k) ** 2))
    assert plugin_variance([1.0], n, s, k)[0] == pytest.approx(exact, rel=0.15)
    assert plugin_variance([1.0], n, s, k, finite_sample=True)[0] == pytest.approx(exact, rel=0.08)


@pytest.mark.slow
@pytest.mark.parametrize("k", [1, 2])
def test_plugin_variance_matches_monte_carlo (k):
    n, s, replicas = 5000, 200, 1000
    estimates = np.empty(replicas)
    reported = np.empty(replicas)
    for replica in range(replicas):
        generator = RngSpec(2024, replica + 1).generator()
        dataset = Dataset(generator.uniform(-1, 1, size=(n, 2)), generator.normal(size=n))
        result = local_inference(dataset, [0.0, 0.0], regression_moment(), k, s=s)
        estimates[replica] = result.theta_hat[0]
        reported[replica] = result.sigma_tilde_sq[0]
    expected = plugin_variance([1.0], n, s, k)[0]
    assert np.var(estimates, ddof=1) == pytest.approx(expected, rel=0.15)
    assert np.mean(reported) == pytest.approx(expected, rel=0.15)


def test_plugin_variance_grows_with_s ():
    n = 2000
    for k in (1, 2, 5):
        values = [plugin_variance([1.0], n, s, k)[0] for s in range(max(k, 2), n + 1, 7)]
        assert np.all(np.diff(values) > 0)


def test_plugin_variance_shrinks_with_n ():
    s = 50
    for k in (1, 3):
        values = [plugin_variance([1.0], n, s, k)[0] for n in range(s, 20000, 97)]
        assert np.all(np.diff(values) < 0)


def test_confidence_interval ():
    lower, upper = confidence_interval([0.676], [0.0036], 0.98)
    assert lower[0] == pytest.approx(0.676 - 2.3263 * 0.06, abs=1e-4)
    assert upper[0] == pytest.approx(0.676 + 2.3263 * 0.06, abs=1e-4)


def test_confidence_interval_zero_variance ():
    lower, upper = confidence_interval([1.5, -2.0], [0.0, 0.0], 0.9)
    assert lower.tolist() == [1.5, -2.0]
    assert upper.tolist() == [1.5, -2.0]


def test_confidence_interval_half_level ():
    lower, upper = confidence_interval([0.0], [4.0], 0.5)
    assert upper[0] == pytest.approx(0.6745 * 2.0, abs=1e-3)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 1.2])
def test_confidence_level_range (gamma):
    with pytest.raises(PreconditionException):
        normal_quantile(gamma)


def test_qq_identity ():
    positions = (np.arange(1, 51) - 0.5) / 50
    frame = qq_data(norm.ppf(positions), 0.0, 1.0)
    assert frame.empirical.values == pytest.approx(frame.theoretical.values)


def test_qq_constant_replicas ():
    frame = qq_data(np.full(20, 0.3), 0.3, 0.0)
    assert frame.empirical.tolist() == [0.3] * 20
    assert frame.theoretical.tolist() == [0.3] * 20


def test_qq_normal_draws ():
    draws = RngSpec(31).generator().normal(size=10000)
    frame = qq_data(draws, 0.0, 1.0)
    central = frame.iloc[100:-100]
    assert np.max(np.abs(central.empirical - central.theoretical)) < 0.15


def test_qq_needs_replicas ():
    with pytest.raises(PreconditionException):
        qq_data(np.zeros(5), 0.0, 1.0)


def test_normality_check ():
    statistic, critical, passed = normality_check(RngSpec(41).generator().normal(size=500))
    assert passed
    assert statistic <= critical
    uniform_draws = RngSpec(42).generator().uniform(-1, 1, size=2000)
    _, _, passed = normality_check((uniform_draws - uniform_draws.mean()) / uniform_draws.std())
    assert not passed


def test_local_inference_fixed_s (plane_dataset):
    result = local_inference(plane_dataset, [0.5, 0.5], regression_moment(), 2, s=40)
    assert result.s == 40
    assert result.adaptive is None
    assert result.ci_lower[0] < result.theta_hat[0] < result.ci_upper[0]
    expected = plugin_variance(result.sigma_j_sq_hat, plane_dataset.n, 40, 2)
    assert result.sigma_tilde_sq == pytest.approx(expected)
    assert result.to_dict()["s_used"] == 40


def test_local_inference_adaptive (plane_dataset):
    result = local_inference(plane_dataset, [0.5, 0.5], regression_moment(), 1, zeta_exponent=0.1)
    assert result.adaptive is not None
    assert result.s == result.adaptive.s_zeta
    assert 1 <= result.s <= plane_dataset.n - 1


def test_local_inference_incomplete (plane_dataset):
    first = local_inference(plane_dataset, [0.5, 0.5], regression_moment(), 1, s=20, mode="incomplete", rng=RngSpec(3))
    second = local_inference(plane_dataset, [0.5, 0.5], regression_moment(), 1, s=20, mode="incomplete", rng=RngSpec(3))
    assert first.theta_hat.tolist() == second.theta_hat.tolist()


def test_local_inference_quantile_needs_density (plane_dataset):
    with pytest.raises(UnsupportedInferenceException):
        local_inference(plane_dataset, [0.5, 0.5], quantile_moment(0.5), 1, s=20)
    result = local_inference(plane_dataset, [0.5, 0.5], quantile_moment(0.5), 1, s=20, density=4.0)
    assert result.sigma_tilde_sq[0] > 0


def test_local_inference_s_range (plane_dataset):
    with pytest.raises(PreconditionException):
        local_inference(plane_dataset, [0.5, 0.5], regression_moment(), 3, s=2)
