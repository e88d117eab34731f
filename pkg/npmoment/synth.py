""" Synthetic data with a known intrinsic dimension and a known theta(x)

Usage:

    npmoment synth --kind linear-embedding --n 20000 --D 20 --d 2 --mean logistic3 --seed 7 --out data.csv

writes data.csv plus a sidecar data.json with the embedding, the test
points and the ground truth at each test point.

Generators:

* linear-embedding: X = A X_low, A (D x d) and X_low both uniform on [-1, 1]
* sparse: at most d non-zero coordinates per point, uniform on [-1, 1]
* mixture: equal-weight mixture of linear embeddings of different dimensions (d is the largest)
* product: concatenation of two independent linear embeddings of dimensions d1 + d2 = d
* manifold-circle: the unit circle on a random 2-plane of R^D (d = 1)

"""

import dataclasses, logging, math

from dataclasses import dataclass

import numpy as np
import pandas as pd

from scipy.special import expit
from scipy.stats import norm

from .common import *
from .dataset import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "linear-embedding"
    D: int = 20
    d: int = 2
    n: int = 1000
    noise_sd: float = 1.0
    mean_function: str = "logistic3"
    mean_constant: float = 0.0
    rng: RngSpec = RngSpec(0)
    embedding: object = None
    mixture_dims: tuple = None
    product_dims: tuple = None

    def validate (self):
        if self.kind not in GENERATOR_KINDS:
            raise SchemaException("unknown generator kind {} (expected one of {})".format(self.kind, ", ".join(GENERATOR_KINDS)))
        if self.mean_function not in MEAN_FUNCTIONS:
            raise SchemaException("unknown mean function {}".format(self.mean_function))
        require(self.n >= 1, "n must be at least 1")
        require(self.D >= 1 and self.d >= 1, "D and d must be at least 1")
        require(self.d <= self.D, "intrinsic dimension d={} exceeds D={}".format(self.d, self.D))
        require(self.noise_sd >= 0, "noise_sd must be non-negative")
        if self.kind == "manifold-circle":
            require(self.d == 1 and self.D >= 2, "manifold-circle needs d = 1 and D >= 2")
        if self.kind == "product":
            d1, d2 = self.parts()
            require(d1 >= 1 and d2 >= 1, "product generator needs d >= 2")
            require(self.D >= 2 and d1 <= self.D // 2 and d2 <= self.D - self.D // 2, "product parts don't fit in D")
        if self.kind == "mixture":
            require(max(self.components()) == self.d, "largest mixture component must have dimension d")
            require(min(self.components()) >= 1, "mixture components need dimension >= 1")
        return self

    def components (self):
        """ Dimensions of the mixture components """
        if self.mixture_dims:
            return tuple(int(v) for v in self.mixture_dims)
        return (self.d, max(1, self.d - 1))

    def parts (self):
        """ (d1, d2) of the product generator """
        if self.product_dims:
            return tuple(int(v) for v in self.product_dims)
        d1 = int(math.ceil(self.d / 2))
        return (d1, self.d - d1)

    def with_embedding (self, embedding):
        return dataclasses.replace(self, embedding=embedding)


@dataclass(frozen=True)
class GroundTruth:
    """ theta(x) for the generated model """
    spec: GeneratorSpec
    theta_function: object = None

    def theta (self, x):
        if self.theta_function is not None:
            return np.atleast_1d(np.asarray(self.theta_function(np.asarray(x, dtype=float)), dtype=float))
        return np.array([mean_value(self.spec, np.atleast_2d(x))[0]])

    def quantile (self, x, alpha):
        """ The conditional alpha-quantile f(x) + sigma_e z_alpha """
        return self.theta(x)[0] + self.spec.noise_sd * float(norm.ppf(alpha))


#
# Covariate processes
#

def make_embedding (spec, generator=None):
    """ Draw the fixed part of the covariate process (matrices, frames) """
    if spec.embedding is not None:
        return spec.embedding
    if generator is None:
        generator = spec.rng.child(0).generator()

    if spec.kind == "linear-embedding":
        return generator.uniform(-1.0, 1.0, size=(spec.D, spec.d))
    elif spec.kind == "mixture":
        return tuple(generator.uniform(-1.0, 1.0, size=(spec.D, d)) for d in spec.components())
    elif spec.kind == "product":
        d1, d2 = spec.parts()
        D1 = spec.D // 2
        return (
            generator.uniform(-1.0, 1.0, size=(D1, d1)),
            generator.uniform(-1.0, 1.0, size=(spec.D - D1, d2)),
        )
    elif spec.kind == "manifold-circle":
        frame, _ = np.linalg.qr(generator.normal(size=(spec.D, 2)))
        return frame
    else:
        return None


def sample_covariates (spec, count, generator, embedding=None):
    """ count x D covariates from the spec's process """
    if embedding is None:
        embedding = make_embedding(spec)

    if spec.kind == "linear-embedding":
        low = generator.uniform(-1.0, 1.0, size=(count, spec.d))
        return low @ np.asarray(embedding).T
    elif spec.kind == "sparse":
        X = np.zeros((count, spec.D))
        support = np.argsort(generator.random((count, spec.D)), axis=1)[:, :spec.d]
        values = generator.uniform(-1.0, 1.0, size=(count, spec.d))
        np.put_along_axis(X, support, values, axis=1)
        return X
    elif spec.kind == "mixture":
        labels = generator.integers(0, len(embedding), size=count)
        X = np.zeros((count, spec.D))
        for c, A in enumerate(embedding):
            rows = np.flatnonzero(labels == c)
            X[rows] = generator.uniform(-1.0, 1.0, size=(rows.size, A.shape[1])) @ A.T
        return X
    elif spec.kind == "product":
        A1, A2 = embedding
        first = generator.uniform(-1.0, 1.0, size=(count, A1.shape[1])) @ A1.T
        second = generator.uniform(-1.0, 1.0, size=(count, A2.shape[1])) @ A2.T
        return np.hstack([first, second])
    elif spec.kind == "manifold-circle":
        angles = generator.uniform(0.0, 2 * math.pi, size=count)
        return np.column_stack([np.cos(angles), np.sin(angles)]) @ np.asarray(embedding).T
    else:
        raise SchemaException("unknown generator kind {}".format(spec.kind))


def sample_test_points (spec, count, rng=None):
    """ Test points from the same covariate process (on their own stream) """
    spec.validate()
    if rng is None:
        rng = spec.rng.child(4)
    return sample_covariates(spec, count, as_generator(rng), make_embedding(spec))


def point_with_first_coordinate (spec, value, rng=None, attempts=1000):
    """ A linear-embedding test point A z with (A z)[0] = value and z in [-1, 1]^d.
    z is drawn uniformly, then moved along A[0] onto the hyperplane.

    """
    spec.validate()
    if spec.kind != "linear-embedding":
        raise SchemaException("a fixed first coordinate needs the linear-embedding generator")
    A = np.asarray(make_embedding(spec))
    row = A[0]
    norm_sq = float(row @ row)
    if norm_sq == 0:
        raise PreconditionException("first coordinate is identically zero")
    generator = as_generator(spec.rng.child(4) if rng is None else rng)
    for attempt in range(attempts):
        z = generator.uniform(-1.0, 1.0, size=spec.d)
        z = z + (value - row @ z) / norm_sq * row
        if np.all(np.abs(z) <= 1.0):
            return A @ z
    raise PreconditionException("no test point with first coordinate {} on the support".format(value))


def mean_value (spec, X):
    """ f(X) row by row """
    X = np.atleast_2d(X)
    if spec.mean_function == "logistic3":
        return expit(3.0 * X[:, 0])
    elif spec.mean_function == "linear":
        return X[:, 0].copy()
    else:
        return np.full(X.shape[0], float(spec.mean_constant))


#
# Generators
#

def generate (spec):
    """ (Dataset, GroundTruth) with Y = f(X) + N(0, noise_sd^2) """
    spec.validate()
    embedding = make_embedding(spec)
    X = sample_covariates(spec, spec.n, spec.rng.child(1).generator(), embedding)
    noise = spec.rng.child(2).generator().normal(0.0, 1.0, size=spec.n)
    Y = mean_value(spec, X) + spec.noise_sd * noise
    return Dataset(X, Y), GroundTruth(spec.with_embedding(embedding))


def generate_het_effect (spec, theta_function, n_treatments):
    """ Y = <theta(X), T> + noise with T_j i.i.d. uniform on [0, 1] """
    spec.validate()
    require(n_treatments >= 0, "n_treatments must be non-negative")
    embedding = make_embedding(spec)
    X = sample_covariates(spec, spec.n, spec.rng.child(1).generator(), embedding)
    T = spec.rng.child(3).generator().uniform(0.0, 1.0, size=(spec.n, n_treatments))
    thetas = np.array([np.atleast_1d(theta_function(x)) for x in X], dtype=float).reshape(spec.n, n_treatments)
    noise = spec.rng.child(2).generator().normal(0.0, 1.0, size=spec.n)
    Y = np.sum(thetas * T, axis=1) + spec.noise_sd * noise
    return Dataset(X, Y, T), GroundTruth(spec.with_embedding(embedding), theta_function)


def doubling_diagnostic (dataset, x, radii, thetas):
    """ Empirical mu(B(x, r)) / mu(B(x, theta r)) for each (r, theta).
    An empty inner ball gives an infinite ratio.

    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != dataset.D:
        raise DimensionException("target has dimension {}, data has D={}".format(x.size, dataset.D))
    distances = np.sqrt(np.sum((dataset.X - x) ** 2, axis=1))
    rows = []
    for r in radii:
        require(r > 0, "radii must be positive")
        outer = int(np.count_nonzero(distances <= r))
        for theta in thetas:
            require(0 < theta <= 1, "theta must be in (0, 1]")
            inner = int(np.count_nonzero(distances <= theta * r))
            ratio = outer / inner if inner > 0 else math.inf
            rows.append({
                "radius": float(r),
                "theta": float(theta),
                "outer_count": outer,
                "inner_count": inner,
                "ratio": ratio,
            })
    return pd.DataFrame(rows, columns=["radius", "theta", "outer_count", "inner_count", "ratio"])


#
# Sidecar files
#

def sidecar_data (spec, truth, test_points):
    embedding = truth.spec.embedding
    if isinstance(embedding, tuple):
        embedding = [np.asarray(A).tolist() for A in embedding]
    elif embedding is not None:
        embedding = np.asarray(embedding).tolist()
    return {
        "spec": {
            "kind": spec.kind,
            "D": spec.D,
            "d": spec.d,
            "n": spec.n,
            "noise_sd": spec.noise_sd,
            "mean_function": spec.mean_function,
            "mean_constant": spec.mean_constant,
            "seed": spec.rng.seed,
            "stream_id": spec.rng.stream_id,
        },
        "embedding": embedding,
        "test_points": np.asarray(test_points).tolist(),
        "truth": [float(truth.theta(x)[0]) for x in test_points],
    }


def write_sidecar (path, spec, truth, test_points):
    with open(path, "w") as output:
        dump_json(sidecar_data(spec, truth, test_points), output)


# end
