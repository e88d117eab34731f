""" Monte Carlo experiments: estimate distributions, interval coverage, error rates

Usage:

    npmoment experiment distribution --config inputs/figure1-desk.json --out-dir output/figure1
    npmoment experiment coverage --config inputs/coverage-desk.json --out-dir output/coverage
    npmoment experiment rate --config inputs/rate.json --out-dir output/rate

Each run writes one CSV per panel plus manifest.json into the output
directory. Timings go into the manifest only, so rerunning a config gives
byte-identical CSV files.

Config schema (JSON):

    {
        "name": "figure1-desk",
        "seed": 20190601,
        "generator": {"kind": "linear-embedding", "n": 4000, "D": 20, "d": 2,
                      "mean_function": "logistic3", "noise_sd": 1.0},
        "moment": "regression",
        "k": [1, 2, 5],
        "policies": [{"name": "adaptive", "zeta": 0.1}, "theory-d", "theory-D", {"name": "fixed", "s": 200}],
        "replicas": 200,
        "test_points": 1,
        "test_point_first_coordinate": 0.245,
        "gamma": 0.98,
        "weight_mode": "complete",
        "B": null,
        "n_list": [1000, 2000, 4000, 8000, 16000],
        "n_jobs": -1,
        "variance_inflation": 1.0,
        "finite_sample": false,
        "exact_scan": false,
        "m_neighbors": null
    }

Only "seed", "generator" and "replicas" are required.

"""

import dataclasses, logging, math, os, time

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from joblib import Parallel, delayed
from scipy.stats import norm

from .common import *
from .inference import confidence_interval, local_inference, normality_check, qq_data
from .moments import moment_by_name
from .synth import GeneratorSpec, generate, make_embedding, sample_test_points, point_with_first_coordinate

logger = logging.getLogger(__name__)

EXPERIMENTS = ["distribution", "coverage", "rate",]

CONFIG_FIELDS = [
    "name", "experiment", "seed", "generator", "moment", "k", "policies",
    "replicas", "test_points", "test_point_first_coordinate", "gamma",
    "weight_mode", "B", "n_list", "n_jobs", "variance_inflation",
    "finite_sample", "exact_scan", "m_neighbors",
]

GENERATOR_FIELDS = [
    "kind", "n", "D", "d", "noise_sd", "mean_function", "mean_constant",
    "mixture_dims", "product_dims",
]

# QQ deviations are measured on the central part of the plot
QQ_TRIM = 0.01


#
# Configuration
#

@dataclass(frozen=True)
class SPolicy:
    """ How a replica picks s: adaptive(zeta), theory-d, theory-D or fixed(s) """
    name: str
    zeta: float = 0.1
    s: int = None

    @property
    def label (self):
        if self.name == "fixed":
            return "fixed-{}".format(self.s)
        return self.name

    def to_dict (self):
        if self.name == "adaptive":
            return {"name": self.name, "zeta": self.zeta}
        elif self.name == "fixed":
            return {"name": self.name, "s": self.s}
        return {"name": self.name}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    generator: GeneratorSpec
    replicas: int
    name: str = "experiment"
    experiment: str = None
    moment: str = "regression"
    k_list: tuple = (1,)
    policies: tuple = (SPolicy("adaptive"),)
    test_points: int = 1
    test_point_first_coordinate: float = None
    gamma: float = 0.98
    weight_mode: str = "complete"
    B: int = None
    n_list: tuple = ()
    n_jobs: int = 1
    variance_inflation: float = 1.0
    finite_sample: bool = False
    exact_scan: bool = False
    m_neighbors: int = None

    def to_dict (self):
        spec = self.generator
        return {
            "name": self.name,
            "experiment": self.experiment,
            "seed": self.seed,
            "generator": {
                "kind": spec.kind, "n": spec.n, "D": spec.D, "d": spec.d,
                "noise_sd": spec.noise_sd, "mean_function": spec.mean_function,
                "mean_constant": spec.mean_constant,
                "mixture_dims": None if spec.mixture_dims is None else list(spec.mixture_dims),
                "product_dims": None if spec.product_dims is None else list(spec.product_dims),
            },
            "moment": self.moment,
            "k": list(self.k_list),
            "policies": [policy.to_dict() for policy in self.policies],
            "replicas": self.replicas,
            "test_points": self.test_points,
            "test_point_first_coordinate": self.test_point_first_coordinate,
            "gamma": self.gamma,
            "weight_mode": self.weight_mode,
            "B": self.B,
            "n_list": list(self.n_list),
            "n_jobs": self.n_jobs,
            "variance_inflation": self.variance_inflation,
            "finite_sample": self.finite_sample,
            "exact_scan": self.exact_scan,
            "m_neighbors": self.m_neighbors,
        }


def _typed (data, key, kind, default=None):
    """ data[key] checked against a type (int also accepted for float) """
    value = data.get(key, default)
    if value is None:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise SchemaException("field {} must be an integer".format(key))
    if not isinstance(value, kind):
        raise SchemaException("field {} must be of type {}, got {!r}".format(key, kind.__name__, value))
    return value


def parse_policy (item):
    """ "theory-d" or {"name": "adaptive", "zeta": 0.1} or {"name": "fixed", "s": 200} """
    if isinstance(item, str):
        item = {"name": item}
    if not isinstance(item, dict):
        raise SchemaException("bad s-policy: {!r}".format(item))
    unknown = [key for key in item if key not in ("name", "zeta", "s")]
    if unknown:
        raise SchemaException("unknown s-policy fields: {}".format(", ".join(unknown)))
    name = item.get("name")
    if name not in S_POLICIES:
        raise SchemaException("unknown s-policy {} (expected one of {})".format(name, ", ".join(S_POLICIES)))
    if name == "fixed":
        s = _typed(item, "s", int)
        if s is None:
            raise SchemaException("fixed s-policy needs s")
        return SPolicy(name, s=s)
    zeta = _typed(item, "zeta", float, 0.1)
    if zeta < 0:
        raise SchemaException("zeta must be non-negative")
    return SPolicy(name, zeta=zeta)


def parse_generator (data):
    if not isinstance(data, dict):
        raise SchemaException("generator must be an object")
    unknown = [key for key in data if key not in GENERATOR_FIELDS]
    if unknown:
        raise SchemaException("unknown generator fields: {}".format(", ".join(unknown)))
    defaults = GeneratorSpec()
    spec = GeneratorSpec(
        kind=_typed(data, "kind", str, defaults.kind),
        n=_typed(data, "n", int, defaults.n),
        D=_typed(data, "D", int, defaults.D),
        d=_typed(data, "d", int, defaults.d),
        noise_sd=_typed(data, "noise_sd", float, defaults.noise_sd),
        mean_function=_typed(data, "mean_function", str, defaults.mean_function),
        mean_constant=_typed(data, "mean_constant", float, defaults.mean_constant),
        mixture_dims=None if data.get("mixture_dims") is None else tuple(_typed(data, "mixture_dims", list)),
        product_dims=None if data.get("product_dims") is None else tuple(_typed(data, "product_dims", list)),
    )
    return spec.validate()


def config_from_dict (data):
    """ Build and check an ExperimentConfig; bad or unknown fields raise SchemaException """
    if not isinstance(data, dict):
        raise SchemaException("config must be a JSON object")
    unknown = [key for key in data if key not in CONFIG_FIELDS]
    if unknown:
        raise SchemaException("unknown config fields: {}".format(", ".join(unknown)))
    for key in ("seed", "generator", "replicas"):
        if key not in data:
            raise SchemaException("config needs {}".format(key))

    k_list = data.get("k", [1])
    if isinstance(k_list, int) and not isinstance(k_list, bool):
        k_list = [k_list]
    if not isinstance(k_list, list) or not k_list or not all(isinstance(k, int) and k >= 1 for k in k_list):
        raise SchemaException("k must be a positive integer or a non-empty list of them")

    policies = data.get("policies", [{"name": "adaptive", "zeta": 0.1}])
    if not isinstance(policies, list) or not policies:
        raise SchemaException("policies must be a non-empty list")

    experiment = _typed(data, "experiment", str)
    if experiment is not None and experiment not in EXPERIMENTS:
        raise SchemaException("unknown experiment {}".format(experiment))

    weight_mode = _typed(data, "weight_mode", str, "complete")
    if weight_mode not in WEIGHT_MODES:
        raise SchemaException("unknown weight mode {}".format(weight_mode))

    n_list = data.get("n_list", [])
    if not isinstance(n_list, list) or not all(isinstance(n, int) and n >= 2 for n in n_list):
        raise SchemaException("n_list must be a list of integers >= 2")

    moment = _typed(data, "moment", str, "regression")
    moment_by_name(moment)

    config = ExperimentConfig(
        seed=_typed(data, "seed", int),
        generator=parse_generator(data["generator"]),
        replicas=_typed(data, "replicas", int),
        name=_typed(data, "name", str, "experiment"),
        experiment=experiment,
        moment=moment,
        k_list=tuple(k_list),
        policies=tuple(parse_policy(item) for item in policies),
        test_points=_typed(data, "test_points", int, 1),
        test_point_first_coordinate=_typed(data, "test_point_first_coordinate", float),
        gamma=_typed(data, "gamma", float, 0.98),
        weight_mode=weight_mode,
        B=_typed(data, "B", int),
        n_list=tuple(n_list),
        n_jobs=_typed(data, "n_jobs", int, 1),
        variance_inflation=_typed(data, "variance_inflation", float, 1.0),
        finite_sample=_typed(data, "finite_sample", bool, False),
        exact_scan=_typed(data, "exact_scan", bool, False),
        m_neighbors=_typed(data, "m_neighbors", int),
    )

    if config.replicas < 1:
        raise SchemaException("replicas must be at least 1")
    if config.test_points < 1:
        raise SchemaException("test_points must be at least 1")
    if not 0 < config.gamma < 1:
        raise SchemaException("gamma must be in (0, 1)")
    if config.variance_inflation <= 0:
        raise SchemaException("variance_inflation must be positive")
    for n in (config.n_list or (config.generator.n,)):
        for k in config.k_list:
            if not n > k + 1:
                raise SchemaException("n={} is too small for k={}".format(n, k))
            for policy in config.policies:
                if policy.name == "fixed" and not k <= policy.s < n:
                    raise SchemaException("fixed s={} not in [k={}, n={})".format(policy.s, k, n))
    return config


def load_config (path):
    """ Read an ExperimentConfig from a JSON file """
    try:
        data = get_dataset(path)
    except OSError as e:
        raise SchemaException("can't read config {}: {}".format(path, e))
    return config_from_dict(data)


#
# s-policies
#

def policy_s (policy, n, k, spec):
    """ s for a non-adaptive policy, clamped to [k, n-1]; None for adaptive """
    if policy.name == "adaptive":
        return None
    elif policy.name == "theory-d":
        s = int(math.floor(n ** (1.05 * spec.d / (spec.d + 2))))
    elif policy.name == "theory-D":
        s = int(math.floor(n ** (1.05 * spec.D / (spec.D + 2))))
    else:
        s = int(policy.s)
    return min(max(s, k), n - 1)


#
# Replicas
#

def frozen_design (config):
    """ The embedding and test points, drawn once on stream 0 and kept for every replica """
    spec = dataclasses.replace(config.generator, rng=RngSpec(config.seed, 0))
    spec = spec.with_embedding(make_embedding(spec))
    if config.test_point_first_coordinate is not None:
        first = point_with_first_coordinate(spec, config.test_point_first_coordinate)
        rest = sample_test_points(spec, config.test_points - 1) if config.test_points > 1 else np.empty((0, spec.D))
        points = np.vstack([first, rest])
    else:
        points = sample_test_points(spec, config.test_points)
    return spec.embedding, points


def _truth (moment, truth, x):
    if moment.name == "quantile":
        return truth.quantile(x, moment.alpha)
    return float(truth.theta(x)[0])


def _density (moment, spec):
    """ Conditional density of Y at its alpha-quantile for Gaussian noise """
    if moment.smoothness != "piecewise-constant":
        return None
    if not spec.noise_sd > 0:
        raise UnsupportedInferenceException("quantile intervals need noise_sd > 0")
    return float(norm.pdf(norm.ppf(moment.alpha)) / spec.noise_sd)


def run_replica (config, replica, embedding, test_points, n=None):
    """ All (test point, k, policy) estimates and intervals for one replica.
    Returns (rows, trace rows, seconds); only replica 0 records s-traces.

    """
    started = time.perf_counter()
    spec = dataclasses.replace(
        config.generator,
        n=config.generator.n if n is None else n,
        rng=RngSpec(config.seed, replica + 1) if n is None else RngSpec(config.seed, replica + 1).child(n),
        embedding=embedding,
    )
    dataset, truth = generate(spec)
    moment = moment_by_name(config.moment)
    density = _density(moment, spec)

    rows = []
    traces = []
    for t, x in enumerate(test_points):
        truth_value = _truth(moment, truth, x)
        for k in config.k_list:
            for policy in config.policies:
                result = local_inference(
                    dataset, x, moment, k,
                    s=policy_s(policy, dataset.n, k, spec),
                    gamma=config.gamma,
                    zeta_exponent=policy.zeta,
                    mode=config.weight_mode,
                    B=config.B,
                    rng=spec.rng.child(5).child(t).child(k),
                    m_neighbors=config.m_neighbors,
                    density=density,
                    exact_scan=config.exact_scan,
                    finite_sample=config.finite_sample,
                )
                variance = float(result.sigma_tilde_sq[0]) * config.variance_inflation
                lower, upper = confidence_interval(result.theta_hat, [variance], config.gamma)
                rows.append({
                    "replica": replica,
                    "n": dataset.n,
                    "test_point": t,
                    "policy": policy.label,
                    "k": k,
                    "s": result.s,
                    "theta_hat": float(result.theta_hat[0]),
                    "variance": variance,
                    "ci_lower": float(lower[0]),
                    "ci_upper": float(upper[0]),
                    "truth": truth_value,
                    "covered": int(lower[0] <= truth_value <= upper[0]),
                })
                if replica == 0 and result.adaptive is not None:
                    for s, h, g in result.adaptive.trace:
                        traces.append({"test_point": t, "policy": policy.label, "k": k, "s": s, "H": h, "G": g})
    return rows, traces, time.perf_counter() - started


def run_replicas (config, embedding, test_points, n=None):
    """ Run every replica, in parallel, merged in replica order """
    started = time.perf_counter()
    results = Parallel(n_jobs=config.n_jobs)(
        delayed(run_replica)(config, replica, embedding, test_points, n)
        for replica in range(config.replicas)
    )
    rows = [row for result in results for row in result[0]]
    traces = [row for result in results for row in result[1]]
    seconds = [result[2] for result in results]
    logger.info("Ran {} replicas (n={}) in {:.1f}s".format(
        config.replicas, config.generator.n if n is None else n, time.perf_counter() - started
    ))
    return pd.DataFrame(rows), pd.DataFrame(traces, columns=["test_point", "policy", "k", "s", "H", "G"]), seconds


#
# Experiments
#

@dataclass
class DistributionResult:
    estimates: pd.DataFrame
    qq: pd.DataFrame
    summary: pd.DataFrame
    traces: pd.DataFrame
    replica_seconds: list = field(default_factory=list)

    def tables (self):
        return {"estimates": self.estimates, "qq": self.qq, "summary": self.summary, "s_trace": self.traces}


@dataclass
class CoverageReport:
    """ Interval coverage per test point and overall, per (policy, k) """
    intervals: pd.DataFrame
    points: pd.DataFrame
    aggregate: pd.DataFrame
    traces: pd.DataFrame
    replica_seconds: list = field(default_factory=list)

    def _lookup (self, column, policy, k=None):
        rows = self.intervals[self.intervals.policy == policy]
        if k is not None:
            rows = rows[rows.k == k]
        if column == "coverage":
            return float(rows.covered.mean())
        return float((rows.ci_upper - rows.ci_lower).mean())

    def coverage (self, policy, k=None):
        return self._lookup("coverage", policy, k)

    def width (self, policy, k=None):
        return self._lookup("width", policy, k)

    def tables (self):
        return {"intervals": self.intervals, "coverage_points": self.points, "coverage": self.aggregate, "s_trace": self.traces}


@dataclass
class RateResult:
    errors: pd.DataFrame
    table: pd.DataFrame
    slopes: pd.DataFrame
    replica_seconds: list = field(default_factory=list)

    def slope (self, policy, k):
        rows = self.slopes[(self.slopes.policy == policy) & (self.slopes.k == k)]
        return float(rows.slope.iloc[0])

    def tables (self):
        return {"errors": self.errors, "rate": self.table, "slopes": self.slopes}


def _qq_deviation (estimates, mean, sd):
    """ Largest gap between empirical and N(mean, sd^2) quantiles, tails trimmed """
    if estimates.size < 10:
        return math.nan
    frame = qq_data(estimates, mean, sd)
    positions = (np.arange(1, estimates.size + 1) - 0.5) / estimates.size
    central = (positions >= QQ_TRIM) & (positions <= 1 - QQ_TRIM)
    return float(np.max(np.abs(frame.empirical.values[central] - frame.theoretical.values[central])))


def run_distribution_experiment (config):
    """ Replicated estimates at one test point: mean, sd and QQ data against
    the plug-in normal N(theta(x), mean plug-in variance).

    """
    if moment_by_name(config.moment).name != "regression":
        raise SchemaException("the distribution experiment uses the regression moment")
    if config.test_points != 1:
        raise SchemaException("the distribution experiment uses a single test point")

    embedding, test_points = frozen_design(config)
    estimates, traces, seconds = run_replicas(config, embedding, test_points)

    summary = []
    qq_frames = []
    for (policy, k), group in estimates.groupby(["policy", "k"], sort=False):
        values = group.theta_hat.values
        truth = float(group.truth.iloc[0])
        plugin_sd = float(math.sqrt(group.variance.mean()))
        sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        mean = float(np.mean(values))
        row = {
            "policy": policy,
            "k": k,
            "replicas": int(values.size),
            "truth": truth,
            "mean": mean,
            "sd": sd,
            "plugin_sd": plugin_sd,
            "mean_s": float(group.s.mean()),
            "qq_max_deviation": _qq_deviation(values, truth, plugin_sd),
            "qq_shape_deviation": _qq_deviation(values, mean, sd),
            "ad_statistic": math.nan,
            "ad_critical": math.nan,
            "normal": None,
        }
        if values.size >= 10:
            frame = qq_data(values, truth, plugin_sd)
            frame.insert(0, "k", k)
            frame.insert(0, "policy", policy)
            qq_frames.append(frame)
            if sd > 0:
                statistic, critical, passed = normality_check((values - mean) / sd)
                row.update(ad_statistic=statistic, ad_critical=critical, normal=passed)
        summary.append(row)

    qq = pd.concat(qq_frames, ignore_index=True) if qq_frames else pd.DataFrame(columns=["policy", "k", "theoretical", "empirical"])
    columns = ["replica", "policy", "k", "s", "theta_hat", "variance", "truth"]
    return DistributionResult(
        estimates=estimates[columns],
        qq=qq,
        summary=pd.DataFrame(summary),
        traces=traces,
        replica_seconds=seconds,
    )


def run_coverage_experiment (config):
    """ Fraction of (replica, test point) intervals that contain theta(x) """
    embedding, test_points = frozen_design(config)
    intervals, traces, seconds = run_replicas(config, embedding, test_points)
    intervals["width"] = intervals.ci_upper - intervals.ci_lower

    spec = config.generator
    theory_d = {k: policy_s(SPolicy("theory-d"), spec.n, k, spec) for k in config.k_list}

    points = []
    for (policy, k, t), group in intervals.groupby(["policy", "k", "test_point"], sort=False):
        points.append({
            "policy": policy,
            "k": k,
            "test_point": t,
            "truth": float(group.truth.iloc[0]),
            "coverage": float(group.covered.mean()),
            "mean_width": float(group.width.mean()),
            "mean_estimate": float(group.theta_hat.mean()),
            "sd_estimate": float(np.std(group.theta_hat.values, ddof=1)) if len(group) > 1 else 0.0,
            "mean_s": float(group.s.mean()),
            "theory_d_s": theory_d[k],
        })

    aggregate = []
    for (policy, k), group in intervals.groupby(["policy", "k"], sort=False):
        aggregate.append({
            "policy": policy,
            "k": k,
            "coverage": float(group.covered.mean()),
            "mean_width": float(group.width.mean()),
            "mean_s": float(group.s.mean()),
            "nominal": config.gamma,
        })

    return CoverageReport(
        intervals=intervals,
        points=pd.DataFrame(points),
        aggregate=pd.DataFrame(aggregate),
        traces=traces,
        replica_seconds=seconds,
    )


def fit_log_slope (n_values, rmse):
    """ Least-squares slope of log RMSE on log n (nan when an RMSE is 0) """
    n_values = np.asarray(n_values, dtype=float)
    rmse = np.asarray(rmse, dtype=float)
    if np.any(rmse <= 0):
        logger.warning("zero RMSE; no log-log slope")
        return math.nan
    slope, _ = np.polyfit(np.log(n_values), np.log(rmse), 1)
    return float(slope)


def run_rate_experiment (config):
    """ RMSE of theta-hat against theta(x) for each n in n_list, and the fitted
    log-log slope per (policy, k).

    """
    n_list = sorted(config.n_list)
    if len(n_list) < 3:
        raise PreconditionException("the rate experiment needs at least 3 values of n")
    if n_list[-1] < 10 * n_list[0]:
        raise PreconditionException("the values of n must span at least a decade")

    embedding, test_points = frozen_design(config)
    frames = []
    seconds = []
    for n in n_list:
        rows, _, replica_seconds = run_replicas(config, embedding, test_points, n)
        frames.append(rows)
        seconds += replica_seconds
    errors = pd.concat(frames, ignore_index=True)
    errors["squared_error"] = (errors.theta_hat - errors.truth) ** 2

    table = []
    for (policy, k, n), group in errors.groupby(["policy", "k", "n"], sort=False):
        table.append({
            "policy": policy,
            "k": k,
            "n": n,
            "rmse": float(math.sqrt(group.squared_error.mean())),
            "mean_s": float(group.s.mean()),
        })
    table = pd.DataFrame(table)

    slopes = []
    for (policy, k), group in table.groupby(["policy", "k"], sort=False):
        slopes.append({
            "policy": policy,
            "k": k,
            "d": config.generator.d,
            "slope": fit_log_slope(group.n.values, group.rmse.values),
            "theory": -1.0 / (config.generator.d + 2),
        })

    columns = ["replica", "n", "test_point", "policy", "k", "s", "theta_hat", "truth", "squared_error"]
    return RateResult(errors=errors[columns], table=table, slopes=pd.DataFrame(slopes), replica_seconds=seconds)


RUNNERS = {
    "distribution": run_distribution_experiment,
    "coverage": run_coverage_experiment,
    "rate": run_rate_experiment,
}


#
# Output
#

def write_outputs (out_dir, experiment, config, result, seconds):
    """ One CSV per table plus manifest.json (the only file with timings) """
    os.makedirs(out_dir, exist_ok=True)
    outputs = []
    for name, table in result.tables().items():
        filename = "{}.csv".format(name)
        table.to_csv(os.path.join(out_dir, filename), index=False)
        outputs.append(filename)

    manifest = {
        "experiment": experiment,
        "config": config.to_dict(),
        "outputs": outputs,
        "timings": {
            "total_seconds": seconds,
            "replica_seconds": result.replica_seconds,
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as output:
        dump_json(manifest, output)
    return outputs


def run_experiment (experiment, config, out_dir=None):
    """ Run a named experiment and (optionally) write its files """
    if experiment not in RUNNERS:
        raise SchemaException("unknown experiment {} (expected one of {})".format(experiment, ", ".join(EXPERIMENTS)))
    if config.experiment is not None and config.experiment != experiment:
        logger.warning("config {} is meant for the {} experiment".format(config.name, config.experiment))
    started = time.perf_counter()
    result = RUNNERS[experiment](config)
    seconds = time.perf_counter() - started
    logger.info("{} experiment {} finished in {:.1f}s".format(experiment, config.name, seconds))
    if out_dir is not None:
        write_outputs(out_dir, experiment, config, result, seconds)
    return result


# end
