"""
h-likelihood of the independent-error process regression model.

For group i with latent curve f_i, random effects r_i and hyperparameters beta

    h0 = sum_j log N(y_ij | f_in, phi_i r_ij I_n) + log N(f_in | 0, r_i0 K_in) + log g(r_i)
    h1 = log N(y_i | 0, C_ri) + log g(r_i)                      (f_in integrated out)
    m  = h1(r_hat) - 1/2 log |B / 2 pi|,   B = -d2 h1 / dr dr^T at r_hat

where log g(r_i) sums the IG(nu, nu - 1) log densities of the free random
effects. Scores and B in r are computed from the blocks of C_ri^{-1}, which
avoids materializing the derivative matrices.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from rtpr.estimation.beta import Beta
from rtpr.kernels.kernel import gram_matrix, gram_gradients
from rtpr.models.batch import BatchData, GroupData, RandomEffects
from rtpr.models.config import ModelConfig, FreeLayout
from rtpr.models.covariance import build_covariance, covariance_partials, group_components
from rtpr.models.processes import ig_log_density, ig_log_density_dr, ig_log_density_d2r, ig_log_density_dnu
from rtpr.utils.errors import DomainError, EstimationError, InputError, NumericError
from rtpr.utils.linalg import jittered, safe_cholesky, cho_logdet, cho_inverse, central_hessian

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
INNER_TOL = 1e-8
MAX_INNER = 200
STALL_FACTOR = 1e3
MAX_LOG_STEP = 2.0
SCHUR_FLOOR = 1e-8


def _check_beta(beta: Beta, data: BatchData) -> None:
    if beta.I != data.I:
        raise InputError("beta has {} groups but the data has {}".format(beta.I, data.I))


class GroupSystem():
    """
    Factorized covariance C_ri of one group at fixed (beta, r_i).

    Attributes
    ----------
    K : np.ndarray
        Jittered Gram matrix of the group design.
    rc : np.ndarray
        Components (r_i0, r_i1, ..., r_iJ).
    alpha : np.ndarray
        C_ri^{-1} y_i reshaped to J x n (row j belongs to curve j).
    """

    def __init__(self, model: ModelConfig, K: np.ndarray, group: GroupData, effects: RandomEffects, i: int):
        self.n = group.n
        self.J = group.J
        self.phi = model.phi(i)
        self.K = K
        self.rc = group_components(model, effects, i, group.J)
        self.C = build_covariance(model, effects, K, i, group.J)
        self.factor = safe_cholesky(self.C)
        self.y = group.y
        self.alpha = linalg.cho_solve(self.factor, self.y, check_finite=False).reshape(self.J, self.n)
        self.logdet = cho_logdet(self.factor)
        self.quad = float(self.y @ self.alpha.reshape(-1))
        self._cinv = None

    @property
    def cinv_blocks(self) -> np.ndarray:
        """C_ri^{-1} as a J x n x J x n array; [j, :, l, :] is block (j, l)."""
        if self._cinv is None:
            self._cinv = cho_inverse(self.factor).reshape(self.J, self.n, self.J, self.n)
        return self._cinv

    @property
    def block_sum(self) -> np.ndarray:
        """S = sum over all blocks of C_ri^{-1}."""
        return self.cinv_blocks.sum(axis=(0, 2))

    def loglik(self) -> float:
        """log N(y_i | 0, C_ri)."""
        return -0.5 * (self.quad + self.logdet + self.n * self.J * LOG_2PI)

    def component_score(self) -> np.ndarray:
        """d loglik / d(r_i0, r_i1, ..., r_iJ)."""
        cinv = self.cinv_blocks
        w = self.K @ self.alpha.sum(axis=0)
        S = self.block_sum
        score = np.empty(self.J + 1)
        score[0] = 0.5 * (self.alpha.sum(axis=0) @ w - np.sum(self.K * S))
        diag_traces = np.einsum("jaja->j", cinv)
        score[1:] = 0.5 * self.phi * (np.sum(self.alpha ** 2, axis=1) - diag_traces)
        return score

    def component_hessian(self) -> np.ndarray:
        """
        d2 loglik / d rc d rc^T. C_ri is linear in every component, so each entry is
        1/2 tr(C^-1 D_a C^-1 D_b) - (D_a alpha)^T C^-1 (D_b alpha).
        """
        cinv = self.cinv_blocks
        phi = self.phi
        K = self.K
        S = self.block_sum
        R = cinv.sum(axis=2)
        w = K @ self.alpha.sum(axis=0)
        KS = K @ S
        H = np.empty((self.J + 1, self.J + 1))
        H[0, 0] = 0.5 * np.sum(KS * KS.T) - w @ S @ w
        cross = 0.5 * phi * np.einsum("jab,bc,jac->j", R, K, R) - phi * np.sum((R @ w) * self.alpha, axis=1)
        H[0, 1:] = cross
        H[1:, 0] = cross
        trace_jk = np.einsum("jakb,jakb->jk", cinv, cinv)
        quad_jk = np.einsum("ja,jakb,kb->jk", self.alpha, cinv, self.alpha)
        H[1:, 1:] = phi ** 2 * (0.5 * trace_jk - quad_jk)
        return 0.5 * (H + H.T)


def ig_prior_terms(model: ModelConfig, layout: FreeLayout, s: np.ndarray):
    nus = (model.nu0, model.nu1)
    value = 0.0
    grad = np.empty(layout.q)
    curv = np.empty(layout.q)
    for a in range(layout.q):
        nu = nus[layout.nu_index[a]]
        value += ig_log_density(nu, s[a])
        grad[a] = ig_log_density_dr(nu, s[a])
        curv[a] = ig_log_density_d2r(nu, s[a])
    return value, grad, curv


class GroupProblem():
    """
    h1 of one group as a function of its free random effects s (see
    ModelConfig.free_layout), with the kernel fixed.
    """

    def __init__(self, model: ModelConfig, theta, group: GroupData, i: int, effects: RandomEffects):
        self.model = model
        self.group = group
        self.i = i
        self.layout = model.free_layout(group.J)
        self.K = jittered(gram_matrix(theta, group.X))
        self.effects = effects
        self._cache_key = None
        self._cache = None

    @property
    def q(self) -> int:
        return self.layout.q

    def effects_at(self, s: np.ndarray) -> RandomEffects:
        return self.effects.replace_group(self.i, self.layout.components(s))

    def system(self, s: np.ndarray) -> GroupSystem:
        key = np.asarray(s, dtype=float).tobytes()
        if key != self._cache_key:
            self._cache = GroupSystem(self.model, self.K, self.group, self.effects_at(s), self.i)
            self._cache_key = key
        return self._cache

    def value(self, s: np.ndarray) -> float:
        return self.system(s).loglik() + ig_prior_terms(self.model, self.layout, s)[0]

    def score(self, s: np.ndarray) -> np.ndarray:
        _, prior_grad, _ = ig_prior_terms(self.model, self.layout, s)
        return self.layout.projection.T @ self.system(s).component_score() + prior_grad

    def hessian(self, s: np.ndarray) -> np.ndarray:
        P = self.layout.projection
        _, _, prior_curv = ig_prior_terms(self.model, self.layout, s)
        return P.T @ self.system(s).component_hessian() @ P + np.diag(prior_curv)


@dataclass(frozen=True)
class InnerSolve():
    """Outcome of the inner random-effect solve of one group."""
    s: np.ndarray
    iterations: int
    score_norm: float
    method: str


def _levenberg_step(H_u: np.ndarray, g_u: np.ndarray) -> np.ndarray:
    M = -H_u
    scale = max(1e-8, float(np.max(np.abs(np.diag(M)))))
    lam = 0.0
    for _ in range(80):
        try:
            L = np.linalg.cholesky(M + lam * np.eye(M.shape[0]))
        except np.linalg.LinAlgError:
            lam = max(2.0 * lam, 1e-8 * scale)
            continue
        step = linalg.cho_solve((L, True), g_u)
        biggest = float(np.max(np.abs(step)))
        if biggest > MAX_LOG_STEP:
            step *= MAX_LOG_STEP / biggest
        return step
    raise NumericError("could not regularize the random-effect Hessian into a descent direction")


def _newton(problem: GroupProblem, s0: np.ndarray, tol: float, max_iter: int) -> InnerSolve:
    """Damped Newton ascent on u = log s with Armijo backtracking."""
    u = np.log(s0)
    s = s0.copy()
    value = problem.value(s)
    for it in range(max_iter):
        g = problem.score(s)
        if np.max(np.abs(g)) < tol:
            return InnerSolve(s, it, float(np.max(np.abs(g))), "newton")
        g_u = s * g
        H_u = s[:, None] * problem.hessian(s) * s[None, :] + np.diag(g_u)
        step = _levenberg_step(H_u, g_u)
        slope = float(g_u @ step)
        slack = 64.0 * np.finfo(float).eps * max(1.0, abs(value))
        t = 1.0
        while t > 1e-10:
            trial = u + t * step
            try:
                trial_value = problem.value(np.exp(trial))
            except (NumericError, DomainError):
                trial_value = -np.inf
            if trial_value >= value + 1e-4 * t * slope - slack:
                break
            t *= 0.5
        else:
            logger.debug("Line search stalled in group %d after %d Newton steps", problem.i, it)
            return InnerSolve(s, it, float(np.max(np.abs(g))), "newton-stalled")
        u = trial
        s = np.exp(u)
        value = trial_value
    g = problem.score(s)
    return InnerSolve(s, max_iter, float(np.max(np.abs(g))), "newton")


def _bracket(func, x0: float, max_expand: int = 60) -> Tuple[float, float]:
    """Interval [lo, hi] around x0 with func(lo) > 0 > func(hi); func decreases through its root."""
    width = 1.0
    lo = x0 - width
    for _ in range(max_expand):
        if func(lo) > 0:
            break
        width *= 2.0
        lo -= width
    else:
        raise EstimationError("no positive score found below log r = {}".format(x0))
    width = 1.0
    hi = x0 + width
    for _ in range(max_expand):
        if func(hi) < 0:
            break
        width *= 2.0
        hi += width
    else:
        raise EstimationError("no negative score found above log r = {}".format(x0))
    return lo, hi


def _coordinate_sweeps(problem: GroupProblem, s0: np.ndarray, tol: float, max_sweeps: int) -> InnerSolve:
    """Gauss-Seidel root finding of each score in its own log r, the others held fixed."""
    s = s0.copy()
    for sweep in range(1, max_sweeps + 1):
        for a in range(problem.q):
            def score_a(x, a=a):
                trial = s.copy()
                trial[a] = np.exp(x)
                return problem.score(trial)[a]
            lo, hi = _bracket(score_a, float(np.log(s[a])))
            s[a] = np.exp(optimize.brentq(score_a, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=200))
        norm = float(np.max(np.abs(problem.score(s))))
        if norm < tol:
            return InnerSolve(s, sweep, norm, "coordinate")
    return InnerSolve(s, max_sweeps, float(np.max(np.abs(problem.score(s)))), "coordinate")


def _solve_group(problem: GroupProblem, tol: float, max_iter: int, start: Optional[np.ndarray] = None) -> InnerSolve:
    start = np.ones(problem.q) if start is None else np.asarray(start, dtype=float)
    if problem.q == 0:
        return InnerSolve(start, 0, 0.0, "none")
    result = _newton(problem, start, tol, max_iter)
    if result.score_norm < tol:
        return result
    logger.debug("Newton left score %.3e in group %d; switching to coordinate sweeps", result.score_norm, problem.i)
    try:
        fallback = _coordinate_sweeps(problem, result.s, tol, max_iter)
    except (EstimationError, NumericError, DomainError):
        fallback = result
    best = fallback if fallback.score_norm <= result.score_norm else result
    if best.score_norm < tol:
        return best
    if best.score_norm < STALL_FACTOR * tol:
        logger.debug("Accepting random effects of group %d with score %.3e", problem.i, best.score_norm)
        return best
    raise EstimationError(
        "random-effect scores of group {} did not converge (max |score| = {:.3e})".format(problem.i, best.score_norm),
        last_iterate=problem.effects_at(best.s),
        diagnostics={"group": problem.i, "score_norm": best.score_norm, "method": best.method})


def _problems(config: ModelConfig, beta: Beta, data: BatchData, effects: RandomEffects) -> List[GroupProblem]:
    _check_beta(beta, data)
    model = beta.configure(config)
    return [GroupProblem(model, beta.thetas[i], g, i, effects) for i, g in enumerate(data.groups)]


def group_system(config: ModelConfig, beta: Beta, effects: RandomEffects, data: BatchData, i: int) -> GroupSystem:
    """Factorized C_ri at (beta, effects)."""
    _check_beta(beta, data)
    model = beta.configure(config)
    g = data.groups[i]
    return GroupSystem(model, jittered(gram_matrix(beta.thetas[i], g.X)), g, effects, i)


def h0_value(config: ModelConfig, beta: Beta, effects: RandomEffects, f: Sequence[np.ndarray], data: BatchData) -> float:
    """
    h0 at latent curves f (one n-vector per group).

    Raises
    ------
    NumericError
        If r_i0 K_in cannot be factorized.
    """
    _check_beta(beta, data)
    model = beta.configure(config)
    if len(f) != data.I:
        raise InputError("need one latent vector per group, got {}".format(len(f)))
    total = 0.0
    for i, g in enumerate(data.groups):
        fi = np.asarray(f[i], dtype=float)
        if fi.shape != (g.n,):
            raise InputError("latent vector of group {} must have length {}".format(i, g.n))
        rc = group_components(model, effects, i, g.J)
        phi = model.phi(i)
        resid = g.Y - fi[None, :]
        noise_var = phi * rc[1:]
        total += -0.5 * np.sum(g.n * np.log(2.0 * np.pi * noise_var) + np.sum(resid ** 2, axis=1) / noise_var)
        prior = safe_cholesky(rc[0] * jittered(gram_matrix(beta.thetas[i], g.X)))
        quad = float(fi @ linalg.cho_solve(prior, fi, check_finite=False))
        total += -0.5 * (quad + cho_logdet(prior) + g.n * LOG_2PI)
        layout = model.free_layout(g.J)
        total += ig_prior_terms(model, layout, layout.free_values(rc))[0]
    return float(total)


def blup_f(config: ModelConfig, beta: Beta, effects: RandomEffects, data: BatchData, i: int) -> np.ndarray:
    """
    BLUP of the latent curve of group i,

        (sum_j r_ij^-1 I_n + (phi_i / r_i0) K_in^-1)^-1 sum_j r_ij^-1 y_ij,

    solved in the equivalent form (a K + (phi_i / r_i0) I) f = K b with
    a = sum_j 1/r_ij and b = sum_j y_ij / r_ij.
    """
    _check_beta(beta, data)
    model = beta.configure(config)
    g = data.groups[i]
    rc = group_components(model, effects, i, g.J)
    K = jittered(gram_matrix(beta.thetas[i], g.X))
    a = float(np.sum(1.0 / rc[1:]))
    b = (g.Y / rc[1:, None]).sum(axis=0)
    M = a * K
    M[np.diag_indices_from(M)] += model.phi(i) / rc[0]
    return linalg.cho_solve(safe_cholesky(M), K @ b, check_finite=False)


def h1_value(config: ModelConfig, beta: Beta, effects: RandomEffects, data: BatchData) -> float:
    """Sum over groups of log N(y_i | 0, C_ri) + log g(r_i)."""
    total = 0.0
    for problem in _problems(config, beta, data, effects):
        rc = group_components(problem.model, effects, problem.i, problem.group.J)
        total += problem.value(problem.layout.free_values(rc))
    return float(total)


def r_score(config: ModelConfig, beta: Beta, effects: RandomEffects, data: BatchData, i: int) -> np.ndarray:
    """Score of h1 in the free random effects of group i (order of ModelConfig.free_layout)."""
    problem = _problems(config, beta, data, effects)[i]
    rc = group_components(problem.model, effects, i, problem.group.J)
    return problem.score(problem.layout.free_values(rc))


def solve_r(config: ModelConfig, beta: Beta, data: BatchData, init: Optional[RandomEffects] = None,
            tol: float = INNER_TOL, max_iter: int = MAX_INNER) -> RandomEffects:
    """
    Maximizes h1 over the random effects of every group.

    The solve always starts from the IG prior mean r = 1 (or init when given),
    so r_hat is a deterministic function of beta.

    Raises
    ------
    EstimationError
        If a group's scores stay above tolerance; carries the last iterate.
    """
    return _solve_all(config, beta, data, init, tol, max_iter)[0]


def _solve_all(config, beta, data, init, tol, max_iter):
    effects = init if init is not None else RandomEffects.ones(data)
    problems = _problems(config, beta, data, effects)
    solves = []
    for problem in problems:
        start = None
        if init is not None:
            start = problem.layout.free_values(group_components(problem.model, init, problem.i, problem.group.J))
        result = _solve_group(problem, tol, max_iter, start)
        solves.append(result)
        effects = effects.replace_group(problem.i, problem.layout.components(result.s))
    return effects, problems, solves


def _laplace_block(problem: GroupProblem, s: np.ndarray, method: str) -> np.ndarray:
    if problem.q == 0:
        return np.zeros((0, 0))
    B = None
    if method == "analytic":
        B = -problem.hessian(s)
        if not np.all(np.isfinite(B)):
            logger.debug("Analytic Laplace matrix of group %d is not finite; using finite differences", problem.i)
            B = None
    elif method != "finite-difference":
        raise InputError("Laplace method {} not implemented. Valid options are analytic, finite-difference.".format(method))
    if B is None:
        B = -central_hessian(problem.value, s)
    return 0.5 * (B + B.T)


def laplace_B(config: ModelConfig, beta: Beta, r_hat: RandomEffects, data: BatchData,
              method: str = "analytic") -> np.ndarray:
    """
    B = -d2 h1 / dr dr^T over all free random effects, group blocks on the
    diagonal.

    Parameters
    ----------
    method : str, optional
        "analytic" (default, finite differences only when non-finite) or
        "finite-difference".
    """
    blocks = []
    for problem in _problems(config, beta, data, r_hat):
        rc = group_components(problem.model, r_hat, problem.i, problem.group.J)
        blocks.append(_laplace_block(problem, problem.layout.free_values(rc), method))
    return linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))


@dataclass(frozen=True, eq=False)
class Profile():
    """
    Adjusted profile likelihood at one beta.

    Attributes
    ----------
    value : float
        m(beta).
    h1 : float
        h1 at r_hat.
    r_hat : RandomEffects
    B : tuple of np.ndarray
        Laplace matrix block of each group.
    log_det_term : float
        sum_i log |B_i / 2 pi| as used in m.
    saddle : bool
        True if some B_i was not positive definite.
    inner_iterations : int
    score_norm : float
        Largest absolute r-score at r_hat.
    """
    value: float
    h1: float
    r_hat: RandomEffects
    B: Tuple[np.ndarray, ...]
    log_det_term: float
    saddle: bool
    inner_iterations: int
    score_norm: float


def adjusted_profile_m(config: ModelConfig, beta: Beta, data: BatchData, tol: float = INNER_TOL,
                       max_iter: int = MAX_INNER, laplace: str = "analytic") -> Profile:
    """
    Solves for r_hat, then returns m = h1(r_hat) - 1/2 sum_i log |B_i / 2 pi|.
    For GP-GP models there are no random effects and m is the Gaussian log
    marginal likelihood.

    The Laplace step in r is close to log integral exp(h1) dr only when the
    inverse-gamma mixing laws are concentrated. On one scalar response the
    error is roughly 2 / nu (within 0.05 from nu near 60, about 0.4 at
    nu = 5 and about 1 at nu = 1.05). At small nu, m is an approximate
    objective for beta rather than an estimate of the marginal likelihood.
    """
    r_hat, problems, solves = _solve_all(config, beta, data, None, tol, max_iter)
    h1 = 0.0
    blocks = []
    log_det_term = 0.0
    saddle = False
    for problem, solve in zip(problems, solves):
        h1 += problem.value(solve.s)
        B = _laplace_block(problem, solve.s, laplace)
        blocks.append(B)
        if problem.q == 0:
            continue
        sign, logabsdet = np.linalg.slogdet(B)
        if not np.isfinite(logabsdet):
            raise NumericError("Laplace matrix of group {} is singular".format(problem.i))
        if sign <= 0 or np.min(np.linalg.eigvalsh(B)) <= 0:
            saddle = True
            logger.warning("Laplace matrix of group %d is not positive definite (saddle point in r)", problem.i)
        log_det_term += logabsdet - problem.q * LOG_2PI
    value = h1 - 0.5 * log_det_term
    return Profile(float(value), float(h1), r_hat, tuple(blocks), float(log_det_term), saddle,
                   int(sum(s.iterations for s in solves)), float(max([s.score_norm for s in solves] + [0.0])))


def h1_beta_gradient(config: ModelConfig, beta: Beta, effects: RandomEffects, data: BatchData) -> np.ndarray:
    """
    Gradient of h1 with respect to the free beta vector (Beta.to_free order)
    at fixed random effects: 1/2 (alpha^T D alpha - tr(C^-1 D)) for each
    covariance partial D, plus the nu derivatives of the IG densities. The
    Gram jitter is held constant.
    """
    _check_beta(beta, data)
    model = beta.configure(config)
    p = data.p
    width = 1 + 2 * p
    grad = np.zeros(data.I * width + data.I + len(config.free_nus()))
    nu_grad = {0: 0.0, 1: 0.0}
    for i, g in enumerate(data.groups):
        theta = beta.thetas[i]
        system = GroupSystem(model, jittered(gram_matrix(theta, g.X)), g, effects, i)
        cinv = system.cinv_blocks.reshape(g.n * g.J, g.n * g.J)
        alpha = system.alpha.reshape(-1)
        partials = covariance_partials(model, effects, system.K, gram_gradients(theta, g.X), i)
        for l in range(width):
            D = partials["kernel{}".format(l)]
            grad[i * width + l] = 0.5 * (alpha @ D @ alpha - np.sum(cinv * D))
        D = partials["phi"]
        grad[data.I * width + i] = 0.5 * model.phi(i) * (alpha @ D @ alpha - np.sum(cinv * D))
        layout = model.free_layout(g.J)
        s = layout.free_values(system.rc)
        nus = (model.nu0, model.nu1)
        for a in range(layout.q):
            k = layout.nu_index[a]
            nu_grad[k] += float(ig_log_density_dnu(nus[k], s[a]))
    nus = (model.nu0, model.nu1)
    for offset, k in enumerate(config.free_nus()):
        grad[data.I * width + data.I + offset] = (nus[k] - 1.0) * nu_grad[k]
    return grad


@dataclass(frozen=True, eq=False)
class H0Curvature():
    """
    Negative Hessian of h0 in (f_in, s) for one group, s the free random
    effects, held in blocks:

        [[N_ff,    N_fs],
         [N_fs^T,  N_ss]]

    with N_ff = a I + K^-1 / r_0 and a = sum_j 1 / (phi r_j). base is N_ff^-1,
    stored as (a K + I / r_0)^-1 K so K is never inverted on its own.
    """
    N_ff: np.ndarray
    base: np.ndarray
    N_fs: np.ndarray
    N_ss: np.ndarray
    projection: np.ndarray
    r0: float

    @property
    def q(self) -> int:
        return self.N_ss.shape[0]

    def full(self) -> np.ndarray:
        return np.block([[self.N_ff, self.N_fs], [self.N_fs.T, self.N_ss]])

    def leading_inverse(self, extra_points: int = 0) -> np.ndarray:
        """
        Leading n x n block of the inverse of the negative Hessian.

        Parameters
        ----------
        extra_points : int, optional
            Number of additional latent points sharing r_0; each lowers the
            r_0 curvature by 1 / (2 r_0^2). Used for new-point predictions.
        """
        if self.q == 0:
            return self.base
        N_ss = self.N_ss
        if extra_points:
            p0 = self.projection[0]
            N_ss = N_ss - extra_points / (2.0 * self.r0 ** 2) * np.outer(p0, p0)
        V = self.N_fs
        base_V = self.base @ V
        schur = N_ss - V.T @ base_V
        try:
            evals, evecs = np.linalg.eigh(0.5 * (schur + schur.T))
        except np.linalg.LinAlgError as err:
            raise NumericError("negative Hessian of h0 has no eigendecomposition in the random effects") from err
        if not np.all(np.isfinite(evals)):
            raise NumericError("negative Hessian of h0 is not finite in the random effects")
        floor = SCHUR_FLOOR * max(float(np.max(np.abs(evals))), 1.0)
        if evals[0] < floor:
            # h0 is not concave in s here. Negative curvature is mirrored so the
            # correction stays positive semi-definite and H_in >= N_ff^-1.
            logger.warning("Schur complement of the h0 Hessian is not positive definite (smallest eigenvalue %.3e); "
                           "using absolute eigenvalues", evals[0])
            evals = np.maximum(np.abs(evals), floor)
        proj = base_V @ evecs
        out = self.base + (proj / evals[None, :]) @ proj.T
        return 0.5 * (out + out.T)


def h0_curvature(config: ModelConfig, beta: Beta, effects: RandomEffects, f: np.ndarray, data: BatchData,
                 i: int) -> H0Curvature:
    """Negative Hessian of h0 of group i at (beta, effects, f)."""
    _check_beta(beta, data)
    model = beta.configure(config)
    g = data.groups[i]
    n, J = g.n, g.J
    f = np.asarray(f, dtype=float)
    rc = group_components(model, effects, i, J)
    phi = model.phi(i)
    layout = model.free_layout(J)
    P = layout.projection
    K = jittered(gram_matrix(beta.thetas[i], g.X))
    K_factor = safe_cholesky(K)
    kinv_f = linalg.cho_solve(K_factor, f, check_finite=False)
    r0 = float(rc[0])
    a = float(np.sum(1.0 / (phi * rc[1:])))

    M = a * K
    M[np.diag_indices_from(M)] += 1.0 / r0
    base = linalg.cho_solve(safe_cholesky(M), K, check_finite=False)
    N_ff = a * np.eye(n) + cho_inverse(K_factor) / r0

    resid = g.Y - f[None, :]
    cross = np.empty((n, J + 1))
    cross[:, 0] = -kinv_f / r0 ** 2
    cross[:, 1:] = (resid / (phi * rc[1:, None] ** 2)).T
    curv = np.empty(J + 1)
    curv[0] = -n / (2.0 * r0 ** 2) + float(f @ kinv_f) / r0 ** 3
    curv[1:] = -n / (2.0 * rc[1:] ** 2) + np.sum(resid ** 2, axis=1) / (phi * rc[1:] ** 3)
    _, _, prior_curv = ig_prior_terms(model, layout, layout.free_values(rc))
    N_ss = P.T @ np.diag(curv) @ P - np.diag(prior_curv)
    return H0Curvature(N_ff, 0.5 * (base + base.T), cross @ P, 0.5 * (N_ss + N_ss.T), P, r0)
