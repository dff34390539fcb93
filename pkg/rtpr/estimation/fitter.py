"""
Outer estimation of beta by maximizing the adjusted profile likelihood m.

r_hat(beta) is re-solved at every evaluation of m, so finite differences of m
in beta carry the dm/dr * dr/dbeta terms of the beta score. The quasi-Newton
search runs on the free (log-scale) parameterization of Beta.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg, optimize

from rtpr.estimation.beta import Beta
from rtpr.estimation.hlikelihood import (INNER_TOL, MAX_INNER, Profile, adjusted_profile_m, blup_f,
                                         h0_curvature)
from rtpr.kernels.kernel import KernelParams
from rtpr.models.batch import BatchData, RandomEffects
from rtpr.models.config import ModelConfig, NuMode, DEFAULT_NU
from rtpr.utils.errors import EstimationError, RtprError
from rtpr.utils.linalg import guarded_gradient

logger = logging.getLogger(__name__)

OUTER_STEP = 1e-4


@dataclass(frozen=True)
class FitOptions():
    """
    Parameters
    ----------
    inner_tol : float
        Absolute tolerance on every random-effect score.
    outer_tol : float
        Gradient tolerance of the (scaled) outer objective.
    max_inner, max_outer : int
        Iteration limits of the inner solve and the outer search.
    n_starts : int
        Number of outer starts; starts after the first perturb the initial
        free beta by N(0, 0.5^2) draws seeded from ``seed``.
    seed : int
    kernel_init : KernelParams, optional
        Starting kernel for every group instead of the data heuristics.
    phi_init : float, optional
    laplace : str
        "analytic" or "finite-difference" Laplace matrix.
    strict : bool
        If True, a fit whose outer search did not converge raises
        EstimationError; otherwise it is returned with converged=False.
    """
    inner_tol: float = INNER_TOL
    outer_tol: float = 1e-5
    max_inner: int = MAX_INNER
    max_outer: int = 500
    n_starts: int = 1
    seed: int = 0
    kernel_init: Optional[KernelParams] = None
    phi_init: Optional[float] = None
    laplace: str = "analytic"
    strict: bool = True

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["kernel_init"] = None if self.kernel_init is None else self.kernel_init.to_dict()
        return d


@dataclass(frozen=True)
class FitDiagnostics():
    converged: bool
    message: str = ""
    status: int = 0
    outer_iterations: int = 0
    evaluations: int = 0
    gradient_norm: float = 0.0
    inner_iterations: int = 0
    inner_score_norm: float = 0.0
    saddle: bool = False
    start: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class FitResult():
    """
    Everything estimated by one fit.

    Attributes
    ----------
    config : ModelConfig
        The fitted model, with phi and nu set to their estimates.
    data : BatchData
    beta_hat : Beta
    r_hat : RandomEffects
    f_hat : tuple of np.ndarray
        BLUP of every group's latent curve at (beta_hat, r_hat).
    B : tuple of np.ndarray
        Laplace matrix block of each group.
    H_in : tuple of np.ndarray
        Corrected n x n covariance of each f_hat.
    m_value : float
    diagnostics : FitDiagnostics
    options : FitOptions
    """
    config: ModelConfig
    data: BatchData
    beta_hat: Beta
    r_hat: RandomEffects
    f_hat: Tuple[np.ndarray, ...]
    B: Tuple[np.ndarray, ...]
    H_in: Tuple[np.ndarray, ...]
    m_value: float
    diagnostics: FitDiagnostics
    options: FitOptions = field(default_factory=FitOptions)

    @property
    def laplace_matrix(self) -> np.ndarray:
        return linalg.block_diag(*self.B)


class _Objective():
    """-m(beta) / scale on the free beta vector, memoized, with +inf where m cannot be evaluated."""

    def __init__(self, config: ModelConfig, data: BatchData, options: FitOptions, scale: float = 1.0):
        self.config = config
        self.data = data
        self.options = options
        self.scale = scale
        self.evaluations = 0
        self._memo = {}

    def beta(self, x: np.ndarray) -> Beta:
        return Beta.from_free(x, self.config, self.data.I, self.data.p)

    def profile(self, x: np.ndarray) -> Profile:
        return adjusted_profile_m(self.config, self.beta(x), self.data, self.options.inner_tol,
                                  self.options.max_inner, self.options.laplace)

    def __call__(self, x: np.ndarray) -> float:
        key = np.asarray(x, dtype=float).tobytes()
        if key not in self._memo:
            self.evaluations += 1
            try:
                self._memo[key] = -self.profile(x).value / self.scale
            except RtprError as err:
                logger.debug("m could not be evaluated at %s: %s", x, err)
                self._memo[key] = np.inf
        return self._memo[key]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Central differences, one-sided where the other side cannot be evaluated."""
        return guarded_gradient(self, x, OUTER_STEP)


def _coerce_nu_mode(config: ModelConfig, data: BatchData) -> ModelConfig:
    single = data.I == 1 and all(g.J == 1 for g in data.groups)
    if single and config.has_random_effects and config.nu_mode is NuMode.ESTIMATED:
        logger.warning("nu0 and nu1 are not estimable with a single curve; fixing them at %s", DEFAULT_NU)
        config = dataclasses.replace(config, nu_mode=NuMode.FIXED)
        return config.with_values(nu0=DEFAULT_NU, nu1=DEFAULT_NU)
    return config


def _run_start(objective: _Objective, x0: np.ndarray, options: FitOptions, start: int):
    evaluations_before = objective.evaluations
    res = optimize.minimize(objective, x0, jac=objective.gradient, method="BFGS",
                            options={"gtol": options.outer_tol, "maxiter": options.max_outer})
    grad_norm = float(np.max(np.abs(res.jac))) if res.jac is not None and res.jac.size else 0.0
    converged = bool(res.success) or (res.status == 2 and grad_norm < np.sqrt(options.outer_tol))
    converged = converged and np.isfinite(res.fun)
    logger.debug("Start %d: m = %.6f after %d iterations, |grad| = %.3e, status %d (%s)",
                 start, -res.fun * objective.scale, res.nit, grad_norm, res.status, res.message)
    return res, converged, grad_norm, objective.evaluations - evaluations_before


def fit(config: ModelConfig, data: BatchData, options: Optional[FitOptions] = None) -> FitResult:
    """
    Estimates beta by maximizing m, then assembles r_hat, the BLUPs and the
    Hessian objects at beta_hat.

    Parameters
    ----------
    config : ModelConfig
        Model structure; phi values in it are ignored, nu values are the
        fixed values or the starting values when nu_mode is ESTIMATED.
    data : BatchData
    options : FitOptions, optional

    Returns
    -------
    FitResult

    Raises
    ------
    EstimationError
        If no start converges and options.strict is set, or m cannot be
        evaluated at the starting beta.
    """
    options = options or FitOptions()
    config = _coerce_nu_mode(config, data)
    beta0 = Beta.initial(config, data, options.kernel_init, options.phi_init)
    x0 = beta0.to_free(config)

    unscaled = _Objective(config, data, options)
    m0 = -unscaled(x0)
    if not np.isfinite(m0):
        raise EstimationError("m cannot be evaluated at the starting beta {}".format(beta0.to_dict()))
    objective = _Objective(config, data, options, scale=max(1.0, abs(m0)))

    rng = np.random.default_rng(options.seed)
    starts = [x0] + [x0 + rng.normal(0.0, 0.5, size=x0.size) for _ in range(max(options.n_starts, 1) - 1)]
    best = None
    for k, start in enumerate(starts):
        res, converged, grad_norm, evaluations = _run_start(objective, start, options, k)
        if not np.isfinite(res.fun):
            continue
        candidate = (converged, -res.fun, k, res, grad_norm, evaluations)
        if best is None or (candidate[0], candidate[1]) > (best[0], best[1]):
            best = candidate
    if best is None:
        raise EstimationError("m could not be evaluated from any start", diagnostics={"starts": len(starts)})

    converged, _, k, res, grad_norm, evaluations = best
    beta_hat = objective.beta(res.x)
    diagnostics = FitDiagnostics(converged=converged, message=str(res.message), status=int(res.status),
                                 outer_iterations=int(res.nit), evaluations=evaluations,
                                 gradient_norm=grad_norm, start=k)
    result = assemble_fit(config, data, beta_hat, options, diagnostics)
    if not converged:
        logger.warning("Outer optimization did not converge: %s (|grad| = %.3e)", res.message, grad_norm)
        if options.strict:
            raise EstimationError("outer optimization of m did not converge: {}".format(res.message),
                                  last_iterate=beta_hat, result=result, diagnostics=result.diagnostics.to_dict())
    return result


def assemble_fit(config: ModelConfig, data: BatchData, beta: Beta, options: Optional[FitOptions] = None,
                 diagnostics: Optional[FitDiagnostics] = None) -> FitResult:
    """
    Builds a complete FitResult at a given beta: solves r_hat, evaluates m
    and the Laplace blocks, the BLUPs and the corrected covariances H_in.
    """
    options = options or FitOptions()
    profile = adjusted_profile_m(config, beta, data, options.inner_tol, options.max_inner, options.laplace)
    f_hat = tuple(blup_f(config, beta, profile.r_hat, data, i) for i in range(data.I))
    H_in = tuple(h0_curvature(config, beta, profile.r_hat, f_hat[i], data, i).leading_inverse()
                 for i in range(data.I))
    diagnostics = diagnostics or FitDiagnostics(converged=True, message="assembled at a given beta")
    diagnostics = dataclasses.replace(diagnostics, inner_iterations=profile.inner_iterations,
                                      inner_score_norm=profile.score_norm, saddle=profile.saddle)
    return FitResult(beta.configure(config), data, beta, profile.r_hat, f_hat, profile.B, H_in,
                     profile.value, diagnostics, options)


def corrected_covariance_Hin(fit: FitResult, i: int) -> np.ndarray:
    """
    Leading n x n block of the inverse negative Hessian of h0 in (f_in, r_i)
    at (beta_hat, r_hat, f_hat): the variance estimate of f_hat that accounts
    for estimating r_i.
    """
    curvature = h0_curvature(fit.config, fit.beta_hat, fit.r_hat, fit.f_hat[i], fit.data, i)
    return curvature.leading_inverse()
