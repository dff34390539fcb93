"""
Hyperparameters beta = (theta_1, ..., theta_I, phi_1, ..., phi_I, nu0, nu1)
and their unconstrained free-vector form.

Free vector layout, for p covariates and I groups:

    [kernel free params of group 1 (1 + 2p), ..., of group I,
     log phi_1, ..., log phi_I,
     log(nu0 - 1) if nu0 is free, log(nu1 - 1) if nu1 is free]
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from rtpr.kernels.kernel import KernelParams
from rtpr.models.batch import BatchData
from rtpr.models.config import ModelConfig
from rtpr.models.processes import NU_FLOOR
from rtpr.utils.errors import InputError, DomainError

logger = logging.getLogger(__name__)

XI_INIT = 1e-3


@dataclass(frozen=True, eq=False)
class Beta():
    """
    Parameters
    ----------
    thetas : tuple of KernelParams
        Kernel parameters per group.
    phis : tuple of float
        Noise scale per group.
    nu0, nu1 : float, optional
        Shapes of the signal / noise mixing laws; None for Gaussian processes.
    """
    thetas: Tuple[KernelParams, ...]
    phis: Tuple[float, ...]
    nu0: Optional[float] = None
    nu1: Optional[float] = None

    def __post_init__(self):
        thetas = tuple(self.thetas)
        phis = tuple(float(v) for v in np.atleast_1d(self.phis))
        if len(thetas) != len(phis):
            raise InputError("beta needs one kernel and one phi per group; got {} and {}".format(len(thetas), len(phis)))
        if not all(v > 0 for v in phis):
            raise DomainError("all phi_i must be positive, got {}".format(phis))
        for nu in (self.nu0, self.nu1):
            if nu is not None and not nu > 1.0:
                raise DomainError("nu must exceed 1, got {}".format(nu))
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "phis", phis)

    @property
    def I(self) -> int:
        return len(self.thetas)

    def configure(self, config: ModelConfig) -> ModelConfig:
        """config with this beta's phi and nu values."""
        return config.with_values(phis=self.phis, nu0=self.nu0, nu1=self.nu1)

    def to_free(self, config: ModelConfig) -> np.ndarray:
        parts = [theta.to_free() for theta in self.thetas]
        parts.append(np.log(np.asarray(self.phis)))
        nus = (self.nu0, self.nu1)
        parts.append(np.array([np.log(nus[k] - 1.0) for k in config.free_nus()]))
        return np.concatenate(parts)

    @classmethod
    def from_free(cls, vec: np.ndarray, config: ModelConfig, I: int, p: int) -> "Beta":
        """
        Inverse of to_free. Fixed nu's are taken from config; free ones are
        floored at NU_FLOOR.
        """
        vec = np.asarray(vec, dtype=float)
        free_nus = config.free_nus()
        width = 1 + 2 * p
        expected = I * width + I + len(free_nus)
        if vec.size != expected:
            raise InputError("free beta vector must have length {}, got {}".format(expected, vec.size))
        thetas = tuple(KernelParams.from_free(vec[i * width:(i + 1) * width], p) for i in range(I))
        phis = tuple(np.exp(vec[I * width:I * width + I]))
        nus = [config.nu0, config.nu1]
        for offset, k in enumerate(free_nus):
            nus[k] = max(1.0 + float(np.exp(vec[I * width + I + offset])), NU_FLOOR)
        if config.joint_error:
            nus[1] = nus[0]
        return cls(thetas, phis, nus[0], nus[1])

    @classmethod
    def initial(cls, config: ModelConfig, data: BatchData, kernel_init: Optional[KernelParams] = None,
                phi_init: Optional[float] = None) -> "Beta":
        """
        Starting values: theta0 = var(y)/2, eta = 1/median squared distance,
        xi = 1e-3 and phi = var(y)/2 per group, unless overridden. nu's start
        at the config values.
        """
        thetas = []
        phis = []
        for g in data.groups:
            half_var = 0.5 * float(np.var(g.Y)) if g.Y.size > 1 else 0.5
            half_var = half_var if half_var > 0 else 0.5
            if kernel_init is not None:
                if kernel_init.p != g.p:
                    raise InputError("kernel_init has {} covariates but the data has {}".format(kernel_init.p, g.p))
                thetas.append(kernel_init)
            else:
                thetas.append(KernelParams(half_var, _inverse_median_sq_distance(g.X), np.full(g.p, XI_INIT)))
            phis.append(float(phi_init) if phi_init is not None else half_var)
        return cls(tuple(thetas), tuple(phis), config.nu0, config.nu1)

    def to_dict(self) -> dict:
        return {"thetas": [theta.to_dict() for theta in self.thetas], "phis": list(self.phis),
                "nu0": self.nu0, "nu1": self.nu1}

    @classmethod
    def from_dict(cls, d: dict) -> "Beta":
        thetas = tuple(KernelParams(t["theta0"], t["eta"], t["xi"]) for t in d["thetas"])
        return cls(thetas, tuple(d["phis"]), d.get("nu0"), d.get("nu1"))


def _inverse_median_sq_distance(X: np.ndarray) -> np.ndarray:
    """1 / median of the squared pairwise distances, per covariate."""
    eta = np.ones(X.shape[1])
    if X.shape[0] < 2:
        return eta
    rows, cols = np.triu_indices(X.shape[0], k=1)
    for l in range(X.shape[1]):
        sq = (X[rows, l] - X[cols, l]) ** 2
        sq = sq[sq > 0]
        if sq.size:
            eta[l] = 1.0 / float(np.median(sq))
    return eta
