"""
Squared-exponential-plus-linear covariance kernel

    k(u, v) = theta0 * exp(-1/2 * sum_l eta_l (u_l - v_l)^2) + sum_l xi_l u_l v_l

with Gram matrix assembly, cross-covariance vectors and analytic gradients
with respect to the free (log-scale) parameters.
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from rtpr.utils.errors import InputError, DomainError, NumericError

XI_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class KernelParams():
    """
    Kernel hyperparameters of one group.

    Parameters
    ----------
    theta0 : float
        Signal variance, > 0.
    eta : np.ndarray
        p inverse squared length-scales, all > 0.
    xi : np.ndarray
        p linear-term weights, all >= 0.
    """
    theta0: float
    eta: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float)).copy()
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float)).copy()
        if eta.ndim != 1 or xi.shape != eta.shape:
            raise InputError("eta and xi must be vectors of the same length p; got shapes {} and {}".format(eta.shape, xi.shape))
        if not float(self.theta0) > 0:
            raise DomainError("theta0 must be positive, got {}".format(self.theta0))
        if not np.all(eta > 0):
            raise DomainError("all eta must be positive, got {}".format(eta))
        if not np.all(xi >= 0):
            raise DomainError("all xi must be non-negative, got {}".format(xi))
        eta.flags.writeable = False
        xi.flags.writeable = False
        object.__setattr__(self, "theta0", float(self.theta0))
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "xi", xi)

    @property
    def p(self) -> int:
        return self.eta.size

    @property
    def n_free(self) -> int:
        return 1 + 2 * self.p

    def to_free(self) -> np.ndarray:
        """Free vector [log theta0, log eta_1..p, log(xi_1..p + XI_FLOOR)]."""
        return np.concatenate([[np.log(self.theta0)], np.log(self.eta), np.log(self.xi + XI_FLOOR)])

    @classmethod
    def from_free(cls, vec: np.ndarray, p: int) -> "KernelParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != 1 + 2 * p:
            raise InputError("free kernel vector must have length {}, got {}".format(1 + 2 * p, vec.size))
        xi = np.maximum(np.exp(vec[1 + p:]) - XI_FLOOR, 0.0)
        return cls(float(np.exp(vec[0])), np.exp(vec[1:1 + p]), xi)

    def to_dict(self) -> dict:
        return {"theta0": self.theta0, "eta": self.eta.tolist(), "xi": self.xi.tolist()}


def _as_design(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if p == 1 else X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != p:
        raise InputError("design must have {} covariate columns, got shape {}".format(p, X.shape))
    return X


def _as_point(u, p: int) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (p,):
        raise InputError("point must have dimension {}, got shape {}".format(p, u.shape))
    return u


def eval_kernel(params: KernelParams, u, v) -> float:
    u = _as_point(u, params.p)
    v = _as_point(v, params.p)
    se = params.theta0 * np.exp(-0.5 * np.sum(params.eta * (u - v) ** 2))
    return float(se + np.sum(params.xi * u * v))


def _se_part(params: KernelParams, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    sq = np.zeros((U.shape[0], V.shape[0]))
    for l in range(params.p):
        sq += params.eta[l] * (U[:, l, None] - V[None, :, l]) ** 2
    return params.theta0 * np.exp(-0.5 * sq)


def cross_matrix(params: KernelParams, U, V) -> np.ndarray:
    """Matrix of k(U[a], V[b])."""
    U = _as_design(U, params.p)
    V = _as_design(V, params.p)
    K = _se_part(params, U, V) + (U * params.xi) @ V.T
    if not np.all(np.isfinite(K)):
        raise NumericError("kernel matrix has non-finite entries for params {}".format(params.to_dict()))
    return K


def gram_matrix(params: KernelParams, X) -> np.ndarray:
    """
    n x n Gram matrix K[a, b] = k(X[a], X[b]). No jitter is added here; see
    rtpr.utils.linalg.jittered.
    """
    X = _as_design(X, params.p)
    if X.shape[0] < 1:
        raise InputError("design must have at least one row")
    K = cross_matrix(params, X, X)
    return 0.5 * (K + K.T)


def cross_vector(params: KernelParams, z, X) -> np.ndarray:
    z = _as_point(z, params.p)
    return cross_matrix(params, z.reshape(1, -1), X)[0]


def gram_gradients(params: KernelParams, X, log_scale: bool = True) -> List[np.ndarray]:
    """
    Element-wise derivatives of the Gram matrix, one per free parameter, in the
    order of KernelParams.to_free().

    Parameters
    ----------
    params : KernelParams
    X : array-like
        n x p design.
    log_scale : bool, optional
        If True (default), derivatives are taken with respect to the free
        parameters log(theta0), log(eta_l), log(xi_l + XI_FLOOR). If False, with
        respect to theta0, eta_l, xi_l themselves.

    Returns
    -------
    List[np.ndarray]
        1 + 2p matrices of shape n x n.
    """
    X = _as_design(X, params.p)
    se = _se_part(params, X, X)
    grads = [se if log_scale else se / params.theta0]
    for l in range(params.p):
        half_sq = 0.5 * (X[:, l, None] - X[None, :, l]) ** 2
        d_eta = -se * half_sq
        grads.append(d_eta * params.eta[l] if log_scale else d_eta)
    for l in range(params.p):
        outer = np.outer(X[:, l], X[:, l])
        grads.append(outer * (params.xi[l] + XI_FLOOR) if log_scale else outer)
    return grads
