""" Solve the locally weighted moment equation Psi(x; theta) = sum_i alpha_i psi(Z_i; theta) = 0

Regression, het_effect and iv have closed forms (a weighted mean or a
weighted linear system). Quantile moments are solved exactly on the
order statistics. Anything else smooth goes through damped Newton.

"""

import logging

from dataclasses import dataclass

import numpy as np

from .common import *
from .moments import MomentFunction, finite_difference_jacobians

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveResult:
    theta_hat: np.ndarray
    residual_norm: float
    iterations: int
    method: str


@dataclass(frozen=True)
class LossDiagnostic:
    """ Outcome of weighted_loss_gradient_check() """
    descent: bool
    stationary: bool
    directional_derivative: float
    step_norm: float
    loss: float


#
# Utility functions
#

def reciprocal_condition (matrix):
    """ smallest / largest singular value (0 for an empty or zero matrix) """
    matrix = np.atleast_2d(matrix)
    if matrix.size == 0:
        return 0.0
    singular_values = np.linalg.svd(matrix, compute_uv=False)
    if singular_values[0] == 0 or not np.all(np.isfinite(singular_values)):
        return 0.0
    return float(singular_values[-1] / singular_values[0])


def checked_solve (matrix, rhs, what="weighted Jacobian"):
    """ np.linalg.solve that refuses near-singular systems """
    matrix = np.atleast_2d(matrix)
    if reciprocal_condition(matrix) < RCOND_THRESHOLD:
        raise SingularityException("{} is singular (rcond < {})".format(what, RCOND_THRESHOLD))
    return np.linalg.solve(matrix, rhs)


def weight_array (weights):
    """ The alpha array of a WeightVector (or any 1-D array) """
    alpha = getattr(weights, "alpha", weights)
    return np.asarray(alpha, dtype=float)


def _active (weights, dataset):
    """ (alpha, rows) restricted to the positive weights """
    alpha = weight_array(weights)
    if alpha.shape != (dataset.n,):
        raise DimensionException("{} weights for {} observations".format(alpha.size, dataset.n))
    if np.any(alpha < 0):
        raise PreconditionException("weights must be non-negative")
    total = alpha.sum()
    if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise PreconditionException("weights sum to {}, not 1".format(total))
    ids = np.flatnonzero(alpha > 0)
    return alpha[ids], dataset.subset(ids)


def weighted_moment (alpha, rows, moment, theta):
    """ Psi(theta) = sum_i alpha_i psi(Z_i; theta) """
    return alpha @ moment.scores(rows, theta)


def weighted_jacobian (alpha, rows, moment, theta):
    """ sum_i alpha_i d psi(Z_i; theta)/d theta (finite differences if no analytic form) """
    if moment.has_jacobian():
        jacobians = moment.jacobians(rows, theta)
    else:
        jacobians = finite_difference_jacobians(moment, rows, theta)
    return np.tensordot(alpha, jacobians, axes=1)


#
# Solvers
#

def _solve_closed_form (alpha, rows, moment):
    """ Exact answers for the linear built-ins; None if there isn't one """
    if moment.name == "regression":
        theta = np.array([alpha @ rows.Y[:, 0]])
    elif moment.name == "het_effect":
        T = rows.T
        if T.shape[1] == 0:
            raise SingularityException("het_effect with no treatments")
        gram = (T * alpha[:, None]).T @ T
        theta = checked_solve(gram, (alpha * rows.Y[:, 0]) @ T, "weighted treatment second moment")
    elif moment.name == "iv":
        cross = alpha @ (rows.T[:, 0] * rows.W)
        if abs(cross) < RCOND_THRESHOLD * max(1.0, float(np.max(np.abs(rows.T[:, 0] * rows.W)))):
            raise SingularityException("weighted treatment-instrument moment is zero")
        theta = np.array([(alpha @ (rows.Y[:, 0] * rows.W)) / cross])
    else:
        return None
    residual = float(np.linalg.norm(weighted_moment(alpha, rows, moment, theta)))
    return SolveResult(theta_hat=theta, residual_norm=residual, iterations=0, method="closed-form")


def _solve_order_statistic (alpha, rows, moment):
    """ Smallest candidate c with Psi(c) >= 0 for a non-decreasing step Psi.
    For the quantile moment this is the smallest y with cumulative weight
    (ordered by y) >= alpha.

    """
    if moment.dimension(rows) != 1:
        raise PreconditionException("order-statistic solving needs p = 1")

    if moment.name == "quantile":
        order = np.argsort(rows.Y[:, 0], kind="stable")
        y_sorted = rows.Y[order, 0]
        cumulative = np.cumsum(alpha[order])
        j = int(np.searchsorted(cumulative, moment.alpha - 1e-12, side="left"))
        j = min(j, y_sorted.size - 1)
        theta = np.array([y_sorted[j]])
        residual = float(abs(cumulative[j] - moment.alpha))
        return SolveResult(theta_hat=theta, residual_norm=residual, iterations=1, method="order-statistic")

    candidates = moment.candidates(rows)
    psi = lambda c: float(weighted_moment(alpha, rows, moment, np.array([c]))[0])
    low, high = 0, candidates.size - 1
    iterations = 0
    if psi(candidates[high]) < -1e-12:
        raise ConvergenceException("step moment never reaches zero on the candidates", np.array([candidates[high]]))
    while low < high:
        iterations += 1
        middle = (low + high) // 2
        if psi(candidates[middle]) >= -1e-12:
            high = middle
        else:
            low = middle + 1
    theta = np.array([candidates[low]])
    return SolveResult(theta_hat=theta, residual_norm=abs(psi(candidates[low])), iterations=iterations, method="order-statistic")


def newton_solve (alpha, rows, moment, init):
    """ Damped Newton on Psi(theta) = 0; halve the step until ||Psi|| drops """
    theta = np.array(init, dtype=float)
    value = weighted_moment(alpha, rows, moment, theta)
    norm = float(np.linalg.norm(value))

    for iteration in range(SOLVER_MAX_ITERATIONS + 1):
        if norm <= SOLVER_TOLERANCE:
            return SolveResult(theta_hat=theta, residual_norm=norm, iterations=iteration, method="newton")
        if iteration == SOLVER_MAX_ITERATIONS:
            break

        jacobian = weighted_jacobian(alpha, rows, moment, theta)
        step = checked_solve(jacobian, -value)

        scale = 1.0
        for halving in range(SOLVER_MAX_HALVINGS + 1):
            candidate = theta + scale * step
            candidate_value = weighted_moment(alpha, rows, moment, candidate)
            candidate_norm = float(np.linalg.norm(candidate_value))
            if candidate_norm < norm:
                break
            scale /= 2
        else:
            raise ConvergenceException(
                "no decrease in ||Psi|| after {} step halvings (||Psi|| = {})".format(SOLVER_MAX_HALVINGS, norm),
                last_iterate=theta,
            )
        theta, value, norm = candidate, candidate_value, candidate_norm
        logger.debug("Newton iteration {}: ||Psi|| = {}".format(iteration + 1, norm))

    raise ConvergenceException(
        "Newton did not reach ||Psi|| <= {} in {} iterations".format(SOLVER_TOLERANCE, SOLVER_MAX_ITERATIONS),
        last_iterate=theta,
    )


def solve (weights, dataset, moment, init=None, closed_form=True):
    """ theta-hat for sum_i alpha_i psi(Z_i; theta) = 0 """
    moment.check(dataset)
    alpha, rows = _active(weights, dataset)

    if moment.smoothness == "piecewise-constant":
        return _solve_order_statistic(alpha, rows, moment)

    if closed_form:
        result = _solve_closed_form(alpha, rows, moment)
        if result is not None:
            return result

    p = moment.dimension(dataset)
    if not p:
        raise SingularityException("moment has no parameters to solve for")
    if init is None:
        # Newton from the closed-form pilot where there is one
        pilot = None if closed_form else _solve_closed_form(alpha, rows, moment)
        init = np.zeros(p) if pilot is None else pilot.theta_hat
    init = np.atleast_1d(np.asarray(init, dtype=float))
    if init.size != p:
        raise DimensionException("initial value has length {}, moment has p={}".format(init.size, p))
    return newton_solve(alpha, rows, moment, init)


#
# Diagnostics
#

def weighted_loss_gradient_check (weights, dataset, moment, theta, step=1e-6):
    """ Check that the Newton step at theta descends the weighted squared-residual
    loss L(theta) = ||Psi(theta)||^2 / 2, by a central finite difference.

    """
    if moment.smoothness != "smooth":
        raise PreconditionException("the loss check needs a smooth moment")
    moment.check(dataset)
    alpha, rows = _active(weights, dataset)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))

    loss = lambda t: 0.5 * float(np.sum(weighted_moment(alpha, rows, moment, t) ** 2))
    value = weighted_moment(alpha, rows, moment, theta)
    direction = checked_solve(weighted_jacobian(alpha, rows, moment, theta), -value)
    step_norm = float(np.linalg.norm(direction))

    if step_norm < 1e-8:
        return LossDiagnostic(descent=True, stationary=True, directional_derivative=0.0, step_norm=step_norm, loss=loss(theta))

    unit = direction / step_norm
    h = step * max(1.0, float(np.linalg.norm(theta)))
    derivative = (loss(theta + h * unit) - loss(theta - h * unit)) / (2 * h)
    descent = derivative < 0
    if not descent:
        logger.warning("Newton direction is not a descent direction (slope {})".format(derivative))
    return LossDiagnostic(descent=descent, stationary=False, directional_derivative=derivative, step_norm=step_norm, loss=loss(theta))

# end
