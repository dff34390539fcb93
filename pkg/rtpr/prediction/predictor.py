"""
Predictive distributions of the latent curves at training and new inputs.

Independent-error models use the BLUP mean at (beta_hat, r_hat) and the
Hessian-corrected variances. The joint-error eTPR baseline reports the GPR
mean and the GPR covariance scaled by s_0i.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from rtpr.estimation.fitter import FitResult
from rtpr.estimation.hlikelihood import GroupSystem, group_system, h0_curvature, ig_prior_terms
from rtpr.kernels.kernel import cross_matrix, gram_matrix
from rtpr.models.batch import RandomEffects
from rtpr.models.covariance import group_components
from rtpr.utils.errors import InputError
from rtpr.utils.linalg import JITTER_SCALE, safe_cholesky, symmetric_inverse

logger = logging.getLogger(__name__)

Z95 = 1.96


@dataclass(frozen=True, eq=False)
class Prediction():
    """
    Attributes
    ----------
    mean : np.ndarray
    variance : np.ndarray
        Per-point variance, >= 0.
    covariance : np.ndarray, optional
        Full predictive covariance when requested.
    at : np.ndarray
        m x p inputs the prediction refers to.
    group : int
        Zero-based group index.
    """
    mean: np.ndarray
    variance: np.ndarray
    covariance: Optional[np.ndarray]
    at: np.ndarray
    group: int

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def lower95(self) -> np.ndarray:
        return self.mean - Z95 * self.sd

    @property
    def upper95(self) -> np.ndarray:
        return self.mean + Z95 * self.sd


def _as_inputs(fit: FitResult, i: int, Z) -> np.ndarray:
    p = fit.data.p
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(-1, 1) if p == 1 else Z.reshape(1, -1)
    if Z.ndim != 2 or Z.shape[1] != p:
        raise InputError("new inputs for group {} must have {} covariate columns, got shape {}".format(i, p, Z.shape))
    return Z


def _joint_gpr_system(fit: FitResult, i: int) -> GroupSystem:
    """C_i = A kron K + phi I: the joint-error covariance with r = 1."""
    return group_system(fit.config, fit.beta_hat, RandomEffects.ones(fit.data), fit.data, i)


def etpr_variance_factor(y: np.ndarray, C: np.ndarray, nu0: float, n: int, J: int = 1) -> float:
    """
    s_0 = (2(nu0 - 1) + y^T C^-1 y) / (2(nu0 - 1) + nJ).

    The factor by which the joint-error eTPR predictive covariance exceeds
    the GPR one. As nJ grows it tends to 1 for data from the model.
    """
    y = np.asarray(y, dtype=float)
    factor = safe_cholesky(np.asarray(C, dtype=float))
    quad = float(y @ linalg.cho_solve(factor, y, check_finite=False))
    return (2.0 * (nu0 - 1.0) + quad) / (2.0 * (nu0 - 1.0) + n * J)


def conditional_moments(fit: FitResult, i: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Plug-in mean and covariance of f_in given (r_hat, data):

        mu    = r_0 (b_J^T kron K) C^-1 y
        Sigma = r_0 K - r_0^2 (b_J^T kron K) C^-1 (b_J kron K)
    """
    system = group_system(fit.config, fit.beta_hat, fit.r_hat, fit.data, i)
    r0 = system.rc[0]
    K = system.K
    mu = r0 * K @ system.alpha.sum(axis=0)
    Sigma = r0 * K - r0 ** 2 * K @ system.block_sum @ K
    return mu, 0.5 * (Sigma + Sigma.T)


def predict_train(fit: FitResult, i: int) -> Prediction:
    """
    Prediction at the training design of group i: the BLUP mean with the
    corrected covariance H_in (s_0i times the GPR covariance for the joint
    model).
    """
    X = fit.data.groups[i].X
    if fit.config.joint_error:
        system = _joint_gpr_system(fit, i)
        mean = system.K @ system.alpha.sum(axis=0)
        cov = system.K - system.K @ system.block_sum @ system.K
        cov = _joint_scale(fit, i, system) * 0.5 * (cov + cov.T)
    else:
        system = group_system(fit.config, fit.beta_hat, fit.r_hat, fit.data, i)
        mean = system.rc[0] * system.K @ system.alpha.sum(axis=0)
        cov = fit.H_in[i]
    return Prediction(mean, np.clip(np.diag(cov), 0.0, None), cov, X, i)


def _joint_scale(fit: FitResult, i: int, system: GroupSystem) -> float:
    g = fit.data.groups[i]
    return etpr_variance_factor(g.y, system.C, fit.config.nu0, g.n, g.J)


def predict_new(fit: FitResult, i: int, Z, full_covariance: bool = False) -> Prediction:
    """
    Prediction of f_i at new inputs Z.

    The mean is r_0 k_Z^T (b_J^T kron I) C^-1 y at (beta_hat, r_hat). The
    variance of each point is the f(z) diagonal entry of the inverse negative
    Hessian of h_z over (f(z), y(z), f_in, r_i) at the plug-in values; in
    closed form r_0 s^2(z) + w^T Sigma' w with w = K^-1 k_z,
    s^2(z) = k(z, z) - k_z^T K^-1 k_z and Sigma' the corrected covariance with
    one more latent point sharing r_0. See hz_negative_hessian.

    Parameters
    ----------
    fit : FitResult
    i : int
        Zero-based group index.
    Z : array-like
        m x p new inputs.
    full_covariance : bool, optional
        Also return the joint m x m covariance, built with all m points
        sharing r_0.
    """
    Z = _as_inputs(fit, i, Z)
    g = fit.data.groups[i]
    theta = fit.beta_hat.thetas[i]
    K_zx = cross_matrix(theta, Z, g.X)
    jitter = _jitter(theta, g.X)
    k_zz = np.array([float(cross_matrix(theta, z[None, :], z[None, :])[0, 0]) for z in Z]) + jitter

    if fit.config.joint_error:
        system = _joint_gpr_system(fit, i)
        scale = _joint_scale(fit, i, system)
        mean = K_zx @ system.alpha.sum(axis=0)
        S = system.block_sum
        variance = scale * (k_zz - np.einsum("ma,ab,mb->m", K_zx, S, K_zx))
        cov = None
        if full_covariance:
            K_zz = _jittered_cross(theta, Z, jitter)
            cov = scale * (K_zz - K_zx @ S @ K_zx.T)
        return Prediction(mean, np.clip(variance, 0.0, None), _sym(cov), Z, i)

    system = group_system(fit.config, fit.beta_hat, fit.r_hat, fit.data, i)
    r0 = system.rc[0]
    mean = r0 * K_zx @ system.alpha.sum(axis=0)
    W = linalg.cho_solve(safe_cholesky(system.K), K_zx.T, check_finite=False).T
    curvature = h0_curvature(fit.config, fit.beta_hat, fit.r_hat, fit.f_hat[i], fit.data, i)
    sigma_one = curvature.leading_inverse(extra_points=1)
    residual = np.clip(k_zz - np.sum(W * K_zx, axis=1), 0.0, None)
    variance = r0 * residual + np.einsum("ma,ab,mb->m", W, sigma_one, W)
    cov = None
    if full_covariance:
        sigma_all = curvature.leading_inverse(extra_points=Z.shape[0])
        K_zz = _jittered_cross(theta, Z, jitter)
        cov = r0 * (K_zz - W @ K_zx.T) + W @ sigma_all @ W.T
    return Prediction(mean, np.clip(variance, 0.0, None), _sym(cov), Z, i)


def _jitter(theta, X) -> float:
    return max(JITTER_SCALE * float(np.mean(np.diag(gram_matrix(theta, X)))), 0.0)


def _jittered_cross(theta, Z, jitter: float) -> np.ndarray:
    K_zz = cross_matrix(theta, Z, Z)
    K_zz[np.diag_indices_from(K_zz)] += jitter
    return K_zz


def _sym(M):
    return None if M is None else 0.5 * (M + M.T)


def hz_negative_hessian(fit: FitResult, i: int, z) -> np.ndarray:
    """
    Negative Hessian of h_z for one new point z of group i over
    (f(z), y(z), f_in, s), s the free random effects of the group, at
    f(z) = y(z) = f_hat(z), f_in = f_hat_in and (beta_hat, r_hat). The new
    observation y(z) has noise variance phi_i.

    Returns
    -------
    np.ndarray
        Square matrix of size 2 + n + q.
    """
    z = _as_inputs(fit, i, z)
    if z.shape[0] != 1:
        raise InputError("hz_negative_hessian takes a single new point, got {}".format(z.shape[0]))
    model = fit.config
    g = fit.data.groups[i]
    n, J = g.n, g.J
    theta = fit.beta_hat.thetas[i]
    phi = model.phi(i)
    rc = group_components(model, fit.r_hat, i, J)
    r0 = float(rc[0])
    layout = model.free_layout(J)
    P = layout.projection
    q = layout.q
    f = np.asarray(fit.f_hat[i], dtype=float)
    system = group_system(model, fit.beta_hat, fit.r_hat, fit.data, i)
    f_z = float(r0 * cross_matrix(theta, z, g.X)[0] @ system.alpha.sum(axis=0))

    latent = np.concatenate([[f_z], f])
    K_full = _jittered_cross(theta, np.vstack([z, g.X]), _jitter(theta, g.X))
    K_full_inv = symmetric_inverse(K_full)

    N = np.zeros((2 + n + q, 2 + n + q))
    lat = np.concatenate([[0], np.arange(2, 2 + n)])
    f_idx = np.arange(2, 2 + n)
    s_idx = np.arange(2 + n, 2 + n + q)

    N[0, 0] += 1.0 / phi
    N[1, 1] += 1.0 / phi
    N[0, 1] = N[1, 0] = -1.0 / phi
    N[np.ix_(lat, lat)] += K_full_inv / r0
    N[f_idx, f_idx] += np.sum(1.0 / (phi * rc[1:]))

    resid = g.Y - f[None, :]
    cross = np.zeros((n + 1, J + 1))
    kinv_latent = K_full_inv @ latent
    cross[:, 0] = -kinv_latent / r0 ** 2
    cross[1:, 1:] = (resid / (phi * rc[1:, None] ** 2)).T
    curv = np.empty(J + 1)
    curv[0] = -(n + 1) / (2.0 * r0 ** 2) + float(latent @ kinv_latent) / r0 ** 3
    curv[1:] = -n / (2.0 * rc[1:] ** 2) + np.sum(resid ** 2, axis=1) / (phi * rc[1:] ** 3)
    _, _, prior_curv = ig_prior_terms(model, layout, layout.free_values(rc))

    N[np.ix_(lat, s_idx)] = cross @ P
    N[np.ix_(s_idx, lat)] = (cross @ P).T
    N[np.ix_(s_idx, s_idx)] = P.T @ np.diag(curv) @ P - np.diag(prior_curv)
    return 0.5 * (N + N.T)
