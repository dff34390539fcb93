"""
Batch covariance of one group

    C_ri = r_i0 * (A kron K_in) + phi_i * (diag(r_i1, ..., r_iJ) kron I_n)

where A is the J x J matrix of ones. Responses are stacked curve by curve,
so block (j, l) of C_ri belongs to curves j and l.
"""
import logging
from typing import Dict, List, Optional

import numpy as np

from rtpr.models.batch import RandomEffects
from rtpr.models.config import ModelConfig
from rtpr.utils.errors import InputError

logger = logging.getLogger(__name__)


def group_components(config: ModelConfig, effects: RandomEffects, i: int, J: int) -> np.ndarray:
    rc = np.asarray(effects.group(i), dtype=float)
    if rc.size != J + 1:
        raise InputError("group {} has {} curves but {} random-effect components".format(i, J, rc.size))
    if not config.signal.is_etp and not config.joint_error and rc[0] != 1.0:
        logger.debug("Ignoring r_0 = %s of group %d for a Gaussian signal process", rc[0], i)
        rc = rc.copy()
        rc[0] = 1.0
    if not config.noise.is_etp and np.any(rc[1:] != 1.0):
        logger.debug("Ignoring curve random effects of group %d for Gaussian noise", i)
        rc = rc.copy()
        rc[1:] = 1.0
    return rc


def build_covariance(config: ModelConfig, effects: RandomEffects, K_in: np.ndarray, i: int, J: int) -> np.ndarray:
    """
    Dense nJ x nJ covariance C_ri of the stacked responses of group i.

    Parameters
    ----------
    config : ModelConfig
        Model with phis set.
    effects : RandomEffects
        Random effects of all groups; only group i is used. Components of
        Gaussian processes are read as 1.
    K_in : np.ndarray
        n x n Gram matrix of the group design. Jitter, if any, must already
        be included.
    i : int
        Zero-based group index.
    J : int
        Number of curves in the group.

    Returns
    -------
    np.ndarray
        Symmetric nJ x nJ matrix.
    """
    K_in = np.asarray(K_in, dtype=float)
    n = K_in.shape[0]
    if K_in.shape != (n, n):
        raise InputError("K_in must be square, got shape {}".format(K_in.shape))
    rc = group_components(config, effects, i, J)
    C = rc[0] * np.kron(np.ones((J, J)), K_in)
    C[np.diag_indices_from(C)] += config.phi(i) * np.repeat(rc[1:], n)
    return 0.5 * (C + C.T)


def covariance_partials(config: ModelConfig, effects: RandomEffects, K_in: np.ndarray,
                        gram_grads: Optional[List[np.ndarray]], i: int) -> Dict[str, np.ndarray]:
    """
    Partial derivatives of C_ri with respect to every free variable of group i.

    Keys are the free random-effect names of ModelConfig.free_layout ("r0",
    "r1".."rJ", or "r" for the joint-error model), "phi" (derivative with
    respect to phi_i itself) and "kernel0", "kernel1", ... in the order of
    gram_grads, which are derivatives of K_in supplied by the caller
    (rtpr.kernels.kernel.gram_gradients).
    """
    K_in = np.asarray(K_in, dtype=float)
    n = K_in.shape[0]
    J = np.asarray(effects.group(i)).size - 1
    rc = group_components(config, effects, i, J)
    phi = config.phi(i)
    ones = np.ones((J, J))
    layout = config.free_layout(J)

    def component_partial(c: int) -> np.ndarray:
        if c == 0:
            return np.kron(ones, K_in)
        E = np.zeros((J, J))
        E[c - 1, c - 1] = 1.0
        return phi * np.kron(E, np.eye(n))

    partials = {}
    for a, name in enumerate(layout.names):
        D = np.zeros((n * J, n * J))
        for c in np.flatnonzero(layout.projection[:, a]):
            D += component_partial(int(c))
        partials[name] = D
    partials["phi"] = np.kron(np.diag(rc[1:]), np.eye(n))
    for l, dK in enumerate(gram_grads or []):
        partials["kernel{}".format(l)] = rc[0] * np.kron(ones, dK)
    return partials
