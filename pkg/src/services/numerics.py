"""
Scalar special functions shared by the estimators.

All functions accept scalars or numpy arrays and are evaluated element-wise.
Normal-tail quantities go through the scaled complementary error function
so that log Φ and the inverse Mills ratio stay finite far into the lower tail.
"""
import logging
import math
from typing import Callable, Tuple

import numpy as np
from scipy import special

from src.exceptions import NumericalError
from src.schemas import GradCheckReport

logger = logging.getLogger(__name__)

SQRT_2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
TAIL_CUTOVER = -1.0


def phi(z):
    """
    Standard normal density.

    :param z: float | np.ndarray: Argument
    :return: (2π)^(-1/2) exp(-z²/2)
    """
    z = np.asarray(z, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * z * z)


def Phi(z):
    """
    Standard normal cumulative distribution function.

    :param z: float | np.ndarray: Argument
    :return: P(N(0, 1) <= z)
    """
    return special.ndtr(np.asarray(z, dtype=float))


def log_Phi(z):
    """
    log Φ(z), finite for arguments far in the lower tail.

    Below the cutover Φ(z) = erfcx(-z/√2)·exp(-z²/2)/2, so the logarithm is
    taken of the scaled function; above it log1p avoids cancellation near 1.

    :param z: float | np.ndarray: Argument
    :return: log Φ(z)
    """
    z = np.asarray(z, dtype=float)
    t = z / SQRT_2
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = np.log(special.erfcx(-t) / 2.0) - t * t
        upper = np.log1p(-special.erfc(t) / 2.0)
    return np.where(z < TAIL_CUTOVER, lower, upper)


def inverse_mills(z):
    """
    Inverse Mills ratio φ(z)/Φ(z), the derivative of log Φ.

    :param z: float | np.ndarray: Argument
    :return: φ(z)/Φ(z)
    """
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lower = SQRT_2_OVER_PI / special.erfcx(-z / SQRT_2)
        upper = phi(z) / special.ndtr(z)
    return np.where(z < TAIL_CUTOVER, lower, upper)


def sigmoid(z):
    return special.expit(np.asarray(z, dtype=float))


def log_sigmoid(z):
    """
    log σ(z) = -log(1 + exp(-z)) without overflow.

    :param z: float | np.ndarray: Argument
    :return: log σ(z)
    """
    return -np.logaddexp(0.0, -np.asarray(z, dtype=float))


def grad_check(loss_fn: Callable[[np.ndarray], Tuple[float, np.ndarray]], params: np.ndarray,
               step: float = 1e-5) -> GradCheckReport:
    """
    Compares the analytic gradient of ``loss_fn`` with central differences.

    :param loss_fn: Callable: Maps a flat parameter vector to (loss, gradient)
    :param params: np.ndarray: Point to check at, not modified
    :param step: float: Finite-difference step
    :return: The largest relative error and where it occurs
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = np.array(params, dtype=float).ravel()
    loss, analytic = loss_fn(params.copy())
    if not np.isfinite(loss):
        raise NumericalError(f"loss is not finite at the check point: {loss}")
    analytic = np.asarray(analytic, dtype=float).ravel()

    numeric = np.empty_like(params)
    for i in range(params.size):
        shifted = params.copy()
        shifted[i] += step
        up, _ = loss_fn(shifted)
        shifted[i] -= 2 * step
        down, _ = loss_fn(shifted)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericalError(f"loss is not finite around parameter {i}")
        numeric[i] = (up - down) / (2 * step)

    denominator = np.maximum.reduce([np.abs(analytic), np.abs(numeric), np.full_like(numeric, 1e-8)])
    rel = np.abs(analytic - numeric) / denominator
    worst = int(np.argmax(rel)) if rel.size else 0
    report = GradCheckReport(max_rel_error=float(rel.max()) if rel.size else 0.0, worst_index=worst)
    logger.debug("grad check: max rel error %.3e at %d", report.max_rel_error, report.worst_index)
    return report
