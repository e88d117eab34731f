import json, math, os

import numpy as np
import pytest

from npmoment import harness
from npmoment.common import *
from npmoment.synth import GeneratorSpec

INPUTS = os.path.join(os.path.dirname(__file__), os.pardir, "inputs")


def small_config (**changes):
    data = {
        "name": "small",
        "seed": 5,
        "generator": {"kind": "linear-embedding", "n": 300, "D": 5, "d": 2, "mean_function": "logistic3", "noise_sd": 1.0},
        "k": [1, 2],
        "policies": [{"name": "adaptive", "zeta": 0.1}],
        "replicas": 12,
        "test_points": 1,
    }
    data.update(changes)
    return data


def read_config (name, **changes):
    with open(os.path.join(INPUTS, name)) as input:
        data = json.load(input)
    data.update(changes)
    return harness.config_from_dict(data)


#
# Configuration
#

def test_config_defaults ():
    config = harness.config_from_dict({"seed": 1, "generator": {}, "replicas": 3})
    assert config.k_list == (1,)
    assert config.policies == (harness.SPolicy("adaptive", zeta=0.1),)
    assert config.generator == GeneratorSpec()
    assert config.gamma == 0.98
    assert config.to_dict()["k"] == [1]


def test_config_policies ():
    config = harness.config_from_dict(small_config(policies=["theory-d", "theory-D", {"name": "fixed", "s": 50}]))
    assert [policy.label for policy in config.policies] == ["theory-d", "theory-D", "fixed-50"]


@pytest.mark.parametrize("changes", [
    {"colour": "blue"},
    {"k": 0},
    {"k": []},
    {"policies": ["largest"]},
    {"policies": [{"name": "fixed"}]},
    {"policies": [{"name": "fixed", "s": 300}]},
    {"policies": [{"name": "adaptive", "zeta": -1}]},
    {"moment": "median"},
    {"weight_mode": "partial"},
    {"gamma": 1.5},
    {"replicas": 0},
    {"generator": {"kind": "torus"}},
    {"generator": {"width": 3}},
    {"generator": {"n": "many"}},
])
def test_config_errors (changes):
    with pytest.raises(ConfigException):
        harness.config_from_dict(small_config(**changes))


def test_config_needs_seed ():
    data = small_config()
    del data["seed"]
    with pytest.raises(SchemaException):
        harness.config_from_dict(data)


def test_load_config (write_file, tmp_path):
    with pytest.raises(SchemaException):
        harness.load_config(str(tmp_path / "absent.json"))
    with pytest.raises(ParseException):
        harness.load_config(write_file("bad.json", "{not json"))
    config = harness.load_config(write_file("good.json", json.dumps(small_config())))
    assert config.name == "small"


def test_shipped_configs_load ():
    for name in ("figure1.json", "figure1-desk.json", "coverage-desk.json", "rate.json"):
        read_config(name)


def test_policy_s ():
    spec = GeneratorSpec(D=20, d=2)
    assert harness.policy_s(harness.SPolicy("adaptive"), 4000, 1, spec) is None
    assert harness.policy_s(harness.SPolicy("theory-d"), 4000, 1, spec) == math.floor(4000 ** (1.05 * 2 / 4))
    assert harness.policy_s(harness.SPolicy("theory-D"), 4000, 1, spec) == math.floor(4000 ** (1.05 * 20 / 22))
    assert harness.policy_s(harness.SPolicy("theory-D"), 100, 1, GeneratorSpec(D=200, d=2)) == 99
    assert harness.policy_s(harness.SPolicy("fixed", s=2), 4000, 5, spec) == 5


#
# Experiments
#

def test_distribution_experiment ():
    config = harness.config_from_dict(small_config())
    result = harness.run_distribution_experiment(config)
    assert len(result.estimates) == 24
    assert list(result.summary.k) == [1, 2]
    assert len(result.qq) == 24
    row = result.summary.iloc[0]
    assert row.replicas == 12
    assert row.sd > 0 and row.plugin_sd > 0
    assert 0 < row.truth < 1
    assert set(result.traces.policy) == {"adaptive"}


def test_distribution_without_noise ():
    generator = {"kind": "linear-embedding", "n": 300, "D": 5, "d": 2, "mean_function": "constant", "mean_constant": 0.5, "noise_sd": 0.0}
    config = harness.config_from_dict(small_config(generator=generator))
    result = harness.run_distribution_experiment(config)
    assert np.all(result.summary.sd < 1e-12)
    assert np.allclose(result.estimates.theta_hat, 0.5, atol=1e-12)


def test_distribution_needs_one_point ():
    config = harness.config_from_dict(small_config(test_points=2))
    with pytest.raises(SchemaException):
        harness.run_distribution_experiment(config)


def test_inflated_intervals_always_cover ():
    config = harness.config_from_dict(small_config(test_points=3, replicas=4, variance_inflation=1e6, policies=["theory-d", "adaptive"]))
    report = harness.run_coverage_experiment(config)
    assert report.coverage("adaptive") == 1.0
    assert report.coverage("theory-d", 1) == 1.0
    assert list(report.aggregate.nominal.unique()) == [0.98]
    assert len(report.points) == 2 * 2 * 3


def test_coverage_runs_are_byte_identical (tmp_path):
    config = harness.config_from_dict(small_config(test_points=2, replicas=3, policies=["adaptive", "theory-D"]))
    parallel = harness.config_from_dict(small_config(test_points=2, replicas=3, policies=["adaptive", "theory-D"], n_jobs=2))
    harness.run_experiment("coverage", config, str(tmp_path / "first"))
    harness.run_experiment("coverage", config, str(tmp_path / "second"))
    harness.run_experiment("coverage", parallel, str(tmp_path / "third"))
    with open(tmp_path / "first" / "manifest.json") as input:
        manifest = json.load(input)
    assert "timings" in manifest
    assert manifest["config"]["replicas"] == 3
    for name in manifest["outputs"]:
        expected = (tmp_path / "first" / name).read_bytes()
        assert (tmp_path / "second" / name).read_bytes() == expected
        assert (tmp_path / "third" / name).read_bytes() == expected


def test_rate_without_noise ():
    generator = {"kind": "linear-embedding", "n": 100, "D": 5, "d": 2, "mean_function": "constant", "mean_constant": 1.0, "noise_sd": 0.0}
    config = harness.config_from_dict(small_config(generator=generator, n_list=[100, 300, 1000], replicas=2, k=[1], policies=["theory-d"]))
    result = harness.run_rate_experiment(config)
    assert list(result.table.n) == [100, 300, 1000]
    assert np.all(result.table.rmse < 1e-12)


def test_rate_needs_a_decade ():
    with pytest.raises(PreconditionException):
        harness.run_rate_experiment(harness.config_from_dict(small_config(n_list=[100, 200])))
    with pytest.raises(PreconditionException):
        harness.run_rate_experiment(harness.config_from_dict(small_config(n_list=[100, 200, 500])))


def test_fit_log_slope ():
    n = np.array([100.0, 1000.0, 10000.0])
    assert harness.fit_log_slope(n, 3.0 * n ** -0.25) == pytest.approx(-0.25)
    assert math.isnan(harness.fit_log_slope(n, [1.0, 0.0, 1.0]))


#
# Long Monte Carlo checks
#

@pytest.mark.slow
def test_figure1_desk_scale ():
    result = harness.run_distribution_experiment(read_config("figure1-desk.json"))
    for row in result.summary.itertuples():
        assert abs(row.mean - 0.676) <= 0.04


@pytest.mark.slow
def test_figure1_full_scale ():
    result = harness.run_distribution_experiment(read_config("figure1.json"))
    expected_sd = {1: 0.058, 2: 0.055, 5: 0.049}
    for row in result.summary.itertuples():
        assert abs(row.mean - 0.676) <= 0.02
        assert row.sd == pytest.approx(expected_sd[row.k], rel=0.3)
        assert row.qq_max_deviation < 0.2 * row.sd


@pytest.mark.slow
def test_coverage_desk_scale ():
    report = harness.run_coverage_experiment(read_config("coverage-desk.json"))
    assert report.coverage("adaptive") >= 0.90
    assert report.width("adaptive") < report.width("theory-D")


@pytest.mark.slow
def test_rate_slopes ():
    slopes = {}
    for d in (1, 2):
        config = read_config("rate.json", generator={"kind": "linear-embedding", "n": 1000, "D": 20, "d": d, "mean_function": "logistic3", "noise_sd": 1.0})
        slopes[d] = harness.run_rate_experiment(config).slope("theory-d", 1)
    assert -0.55 <= slopes[2] <= -0.15
    assert slopes[1] < slopes[2]


@pytest.mark.slow
def test_incomplete_matches_complete ():
    complete = harness.run_distribution_experiment(read_config("figure1-desk.json"))
    incomplete = harness.run_distribution_experiment(read_config("figure1-desk.json", weight_mode="incomplete"))
    for first, second in zip(complete.summary.itertuples(), incomplete.summary.itertuples()):
        standard_error = math.sqrt((first.sd ** 2 + second.sd ** 2) / first.replicas)
        assert abs(first.mean - second.mean) <= 2 * standard_error
