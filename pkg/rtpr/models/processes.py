"""
Process specifications and the inverse-gamma mixing law IG(nu, nu - 1) that
turns a Gaussian process into an extended t-process (ETP).

The density is

    g_nu(r) = 1/Gamma(nu) * ((nu - 1)/r)^(nu + 1) * 1/(nu - 1) * exp(-(nu - 1)/r)

with E(r) = 1. A Gaussian process is the nu -> infinity limit with r fixed at 1.
"""
import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special

from rtpr.utils.errors import DomainError

NU_FLOOR = 1.0 + 1e-6

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


class ProcessKind(enum.Enum):
    GAUSSIAN = "gp"
    EXTENDED_T = "tp"


@dataclass(frozen=True)
class ProcessSpec():
    """
    Either a Gaussian process or an extended t-process with shape nu.

    Parameters
    ----------
    kind : ProcessKind
    nu : float, optional
        Shape of the IG(nu, nu - 1) mixing law; required (and > 1) for
        ProcessKind.EXTENDED_T, ignored for Gaussian processes.
    """
    kind: ProcessKind
    nu: Optional[float] = None

    def __post_init__(self):
        if self.kind is ProcessKind.EXTENDED_T:
            if self.nu is None or not float(self.nu) > 1.0:
                raise DomainError("An extended t-process needs nu > 1 so that IG(nu, nu - 1) is proper; got {}".format(self.nu))
            object.__setattr__(self, "nu", float(self.nu))
        else:
            object.__setattr__(self, "nu", None)

    @property
    def is_etp(self) -> bool:
        return self.kind is ProcessKind.EXTENDED_T

    @classmethod
    def gaussian(cls) -> "ProcessSpec":
        return cls(ProcessKind.GAUSSIAN)

    @classmethod
    def extended_t(cls, nu: float) -> "ProcessSpec":
        return cls(ProcessKind.EXTENDED_T, nu)


def _check_domain(nu, r=None):
    if np.any(np.asarray(nu) <= 1.0):
        raise DomainError("IG(nu, nu - 1) requires nu > 1, got {}".format(nu))
    if r is not None and np.any(np.asarray(r) <= 0.0):
        raise DomainError("IG density is supported on r > 0, got {}".format(r))


def ig_log_density(nu: float, r):
    """
    log g_nu(r). Vectorized over r.

    Raises
    ------
    DomainError
        If nu <= 1 or any r <= 0.
    """
    _check_domain(nu, r)
    r = np.asarray(r, dtype=float)
    s = nu - 1.0
    out = -special.gammaln(nu) + (nu + 1.0) * (np.log(s) - np.log(r)) - np.log(s) - s / r
    return float(out) if out.ndim == 0 else out


def ig_log_density_dr(nu: float, r):
    """First derivative of log g_nu with respect to r."""
    r = np.asarray(r, dtype=float)
    return -(nu + 1.0) / r + (nu - 1.0) / r ** 2


def ig_log_density_d2r(nu: float, r):
    """Second derivative of log g_nu with respect to r."""
    r = np.asarray(r, dtype=float)
    return (nu + 1.0) / r ** 2 - 2.0 * (nu - 1.0) / r ** 3


def ig_log_density_dnu(nu: float, r):
    """First derivative of log g_nu(r) with respect to nu."""
    r = np.asarray(r, dtype=float)
    return -special.digamma(nu) + np.log(nu - 1.0) - np.log(r) + nu / (nu - 1.0) - 1.0 / r


def sample_ig(nu: float, seed: SeedLike = None, size=None):
    """
    Draws from IG(nu, nu - 1) as the reciprocal of a Gamma(shape=nu, rate=nu - 1) draw.

    Parameters
    ----------
    nu : float
        Shape, > 1.
    seed : int, SeedSequence or Generator, optional
        Seed material; the same seed always gives the same draw.
    size : int or tuple, optional
        Number of draws; a single float is returned when None.
    """
    _check_domain(nu)
    rng = np.random.default_rng(seed)
    draw = 1.0 / rng.gamma(shape=nu, scale=1.0 / (nu - 1.0), size=size)
    return float(draw) if size is None else draw
