""" Moment functions psi(Z; theta) for conditional moment models

Built-ins cover local regression, quantiles, heterogeneous treatment
effects and instrumental variables. Each one evaluates a whole Dataset at
once (n x p scores, n x p x p Jacobians); the per-observation evaluate()
and jacobian() calls are thin wrappers over the batch forms.

"""

import logging

import numpy as np

from .common import *

logger = logging.getLogger(__name__)


class MomentFunction:
    """ A score psi: Z x R^p -> R^p with an optional analytic Jacobian.

    Subclasses implement scores() and (optionally) jacobians() over a
    Dataset. p may be None when it is fixed by the data (het_effect takes
    p from the number of treatment columns); use dimension(dataset).

    """

    name = "custom"
    smoothness = "smooth"
    p = None

    def dimension (self, dataset):
        """ Parameter dimension for this dataset """
        return self.p

    def check (self, dataset):
        """ Raise a ConfigException if the dataset can't feed this moment """
        pass

    def scores (self, dataset, theta):
        """ n x p array of psi(Z_i; theta) """
        raise NotImplementedError

    def has_jacobian (self):
        return type(self).jacobians is not MomentFunction.jacobians

    def jacobians (self, dataset, theta):
        """ n x p x p array of d psi(Z_i; theta) / d theta """
        raise NotImplementedError

    def candidates (self, dataset):
        """ Sorted points where a piecewise-constant Psi can change value """
        return np.unique(dataset.Y[:, 0])

    #
    # Per-observation forms
    #

    def evaluate (self, observation, theta):
        from .dataset import Dataset
        row = Dataset.from_observations([observation])
        return self.scores(row, _as_theta(theta))[0]

    def jacobian (self, observation, theta):
        from .dataset import Dataset
        row = Dataset.from_observations([observation])
        if self.has_jacobian():
            return self.jacobians(row, _as_theta(theta))[0]
        return finite_difference_jacobians(self, row, _as_theta(theta))[0]

    def __repr__ (self):
        return "{}(p={}, {})".format(self.name, self.p, self.smoothness)


def _as_theta (theta):
    return np.atleast_1d(np.asarray(theta, dtype=float))


def finite_difference_jacobians (moment, dataset, theta, step=1e-6):
    """ Central finite differences of scores(), n x p x p """
    theta = _as_theta(theta)
    p = theta.size
    result = np.empty((dataset.n, p, p))
    for j in range(p):
        h = step * max(1.0, abs(theta[j]))
        up = theta.copy()
        down = theta.copy()
        up[j] += h
        down[j] -= h
        result[:, :, j] = (moment.scores(dataset, up) - moment.scores(dataset, down)) / (2 * h)
    return result


#
# Built-in moments
#

class RegressionMoment(MomentFunction):
    """ psi = y - theta """

    name = "regression"
    p = 1

    def check (self, dataset):
        if dataset.q != 1:
            raise DimensionException("regression moment needs a scalar outcome, got {} columns".format(dataset.q))

    def scores (self, dataset, theta):
        return dataset.Y[:, :1] - _as_theta(theta)[0]

    def jacobians (self, dataset, theta):
        return np.full((dataset.n, 1, 1), -1.0)


class QuantileMoment(MomentFunction):
    """ psi = 1{y <= theta} - alpha (the indicator is inclusive) """

    name = "quantile"
    smoothness = "piecewise-constant"
    p = 1

    def __init__ (self, alpha):
        if not 0 < alpha < 1:
            raise PreconditionException("quantile level must be in (0, 1), got {}".format(alpha))
        self.alpha = float(alpha)

    def check (self, dataset):
        if dataset.q != 1:
            raise DimensionException("quantile moment needs a scalar outcome, got {} columns".format(dataset.q))

    def scores (self, dataset, theta):
        return (dataset.Y[:, :1] <= _as_theta(theta)[0]).astype(float) - self.alpha

    def __repr__ (self):
        return "quantile:{}".format(self.alpha)


class HetEffectMoment(MomentFunction):
    """ psi = (y - <theta, T>) T """

    name = "het_effect"

    def __init__ (self, p=None):
        self.p = p

    def dimension (self, dataset):
        return dataset.T.shape[1] if dataset.T is not None else self.p

    def check (self, dataset):
        if dataset.T is None:
            raise SchemaException("het_effect moment needs treatment columns")
        if dataset.q != 1:
            raise DimensionException("het_effect moment needs a scalar outcome")
        if self.p is not None and dataset.T.shape[1] != self.p:
            raise DimensionException("expected {} treatments, got {}".format(self.p, dataset.T.shape[1]))

    def scores (self, dataset, theta):
        T = dataset.T
        residual = dataset.Y[:, 0] - T @ _as_theta(theta)
        return residual[:, None] * T

    def jacobians (self, dataset, theta):
        T = dataset.T
        return -T[:, :, None] * T[:, None, :]


class IVMoment(MomentFunction):
    """ psi = (y - theta T) W for a scalar treatment and instrument """

    name = "iv"
    p = 1

    def check (self, dataset):
        if dataset.T is None or dataset.W is None:
            raise SchemaException("iv moment needs a treatment and an instrument column")
        if dataset.T.shape[1] != 1:
            raise DimensionException("iv moment needs a scalar treatment")
        if dataset.q != 1:
            raise DimensionException("iv moment needs a scalar outcome")

    def scores (self, dataset, theta):
        residual = dataset.Y[:, 0] - _as_theta(theta)[0] * dataset.T[:, 0]
        return (residual * dataset.W)[:, None]

    def jacobians (self, dataset, theta):
        return (-dataset.T[:, 0] * dataset.W)[:, None, None]


class CustomMoment(MomentFunction):
    """ A user plug-in built from per-observation callables.
    evaluate(observation, theta) -> length-p vector;
    jacobian(observation, theta) -> p x p matrix (optional).

    """

    def __init__ (self, p, evaluate, jacobian=None, smoothness="smooth", name="custom"):
        if smoothness not in SMOOTHNESS_CLASSES:
            raise PreconditionException("unknown smoothness class {}".format(smoothness))
        self.p = p
        self.name = name
        self.smoothness = smoothness
        self._evaluate = evaluate
        self._jacobian = jacobian

    def has_jacobian (self):
        return self._jacobian is not None

    def scores (self, dataset, theta):
        theta = _as_theta(theta)
        return np.array([np.atleast_1d(self._evaluate(obs, theta)) for obs in dataset], dtype=float).reshape(dataset.n, -1)

    def jacobians (self, dataset, theta):
        theta = _as_theta(theta)
        if self._jacobian is None:
            return finite_difference_jacobians(self, dataset, theta)
        return np.array([np.atleast_2d(self._jacobian(obs, theta)) for obs in dataset], dtype=float)

    def evaluate (self, observation, theta):
        return np.atleast_1d(np.asarray(self._evaluate(observation, _as_theta(theta)), dtype=float))

    def jacobian (self, observation, theta):
        if self._jacobian is None:
            return super().jacobian(observation, theta)
        return np.atleast_2d(np.asarray(self._jacobian(observation, _as_theta(theta)), dtype=float))


def regression_moment ():
    return RegressionMoment()


def quantile_moment (alpha):
    return QuantileMoment(alpha)


def het_effect_moment (p=None):
    return HetEffectMoment(p)


def iv_moment ():
    return IVMoment()


def moment_by_name (name):
    """ Parse a CLI moment name: regression | quantile:<alpha> | het_effect | iv """
    name = str(name).strip()
    kind, _, arg = name.partition(":")
    if kind == "regression":
        return regression_moment()
    elif kind == "quantile":
        if not arg:
            raise SchemaException("quantile moment needs a level, e.g. quantile:0.5")
        try:
            alpha = float(arg)
        except ValueError:
            raise SchemaException("bad quantile level: {}".format(arg))
        return quantile_moment(alpha)
    elif kind == "het_effect":
        return het_effect_moment()
    elif kind == "iv":
        return iv_moment()
    else:
        raise SchemaException("unknown moment {} (expected one of {})".format(name, ", ".join(MOMENT_NAMES)))

# end
