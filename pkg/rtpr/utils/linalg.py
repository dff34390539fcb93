import logging
from typing import Callable, Tuple

import numdifftools as nd
import numpy as np
from scipy import linalg

from rtpr.utils.errors import NumericError

logger = logging.getLogger(__name__)

JITTER_SCALE = 1e-8


def jittered(K: np.ndarray) -> np.ndarray:
    """
    Returns K with a fixed diagonal jitter of JITTER_SCALE * mean(diag(K)) added.
    This is applied to every Gram matrix before it enters a factorization.

    Parameters
    ----------
    K : np.ndarray
        Square symmetric matrix.

    Returns
    -------
    np.ndarray
        Copy of K with the jitter added on the diagonal.
    """
    K = np.array(K, dtype=float, copy=True)
    jitter = JITTER_SCALE * np.mean(np.diag(K))
    K[np.diag_indices_from(K)] += max(jitter, 0.0)
    return K


def safe_cholesky(M: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    Lower Cholesky factor of M in scipy's cho_factor form.

    Raises
    ------
    NumericError
        If M has non-finite entries or is not positive definite.
    """
    if not np.all(np.isfinite(M)):
        raise NumericError("Matrix to factorize contains non-finite entries.")
    try:
        return linalg.cho_factor(M, lower=True, check_finite=False)
    except linalg.LinAlgError as err:
        raise NumericError("Matrix is not positive definite ({}); shape {}.".format(err, M.shape)) from err


def cho_logdet(factor: Tuple[np.ndarray, bool]) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(factor[0]))))


def cho_inverse(factor: Tuple[np.ndarray, bool]) -> np.ndarray:
    n = factor[0].shape[0]
    inv = linalg.cho_solve(factor, np.eye(n), check_finite=False)
    return 0.5 * (inv + inv.T)


def symmetric_inverse(M: np.ndarray) -> np.ndarray:
    """
    Inverse of a symmetric (not necessarily definite) matrix.

    Raises
    ------
    NumericError
        If M is singular.
    """
    try:
        inv = linalg.inv(M, check_finite=True)
    except (linalg.LinAlgError, ValueError) as err:
        raise NumericError("Symmetric matrix is singular: {}".format(err)) from err
    return 0.5 * (inv + inv.T)


def central_gradient(func: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """
    Central finite-difference gradient of a scalar function from numdifftools,
    extrapolated over steps starting at `step`.
    """
    x = np.asarray(x, dtype=float)
    return np.atleast_1d(nd.Gradient(func, step=step, method="central")(x)).astype(float).reshape(x.shape)


def _partial(func: Callable[[np.ndarray], float], x: np.ndarray, l: int, step: float, method: str) -> float:
    def along(t):
        shifted = x.copy()
        shifted[l] += t
        return func(shifted)

    try:
        with np.errstate(invalid="ignore", over="ignore"):
            return float(nd.Derivative(along, step=step, method=method)(0.0))
    except (ValueError, FloatingPointError):
        return np.nan


def guarded_gradient(func: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    """
    Central differences where func is finite on both sides of x_l, forward
    or backward differences where only one side is, and 0 where neither is.
    func may return +inf outside its domain.
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for l in range(x.size):
        for method in ("central", "forward", "backward"):
            value = _partial(func, x, l, step, method)
            if np.isfinite(value):
                grad[l] = value
                break
        else:
            logger.debug("No finite difference for coordinate %d; using 0", l)
    return grad


def central_hessian(func: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """
    Central finite-difference Hessian of a scalar function from numdifftools.
    """
    x = np.asarray(x, dtype=float)
    H = np.atleast_2d(nd.Hessian(func, step=step, method="central")(x)).astype(float).reshape(x.size, x.size)
    return 0.5 * (H + H.T)
