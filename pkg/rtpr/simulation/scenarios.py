"""
Error laws and curve disturbances of the simulation scenarios.
"""
import abc
from dataclasses import dataclass

import numpy as np

from rtpr.models.processes import sample_ig
from rtpr.utils.errors import DomainError, InputError


class ErrorKind(abc.ABC):
    """Law of the errors epsilon_ij of one curve."""

    @abc.abstractmethod
    def sample(self, phi: float, n: int, rng: np.random.Generator) -> np.ndarray:
        pass

    @property
    @abc.abstractmethod
    def label(self) -> str:
        pass

    @abc.abstractmethod
    def to_dict(self) -> dict:
        pass

    def __str__(self) -> str:
        return self.label


class GaussianErrors(ErrorKind):
    """iid N(0, phi)."""

    def sample(self, phi: float, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(0.0, np.sqrt(phi), size=n)

    @property
    def label(self) -> str:
        return "Gaussian"

    def to_dict(self) -> dict:
        return {"error": "gaussian"}


class EtpErrors(ErrorKind):
    """
    Extended t-process errors with kernel phi * I(u = v): one r ~ IG(nu, nu - 1)
    per curve, then iid N(0, r * phi) given r.
    """

    def __init__(self, nu: float) -> None:
        if not nu > 1.0:
            raise DomainError("ETP errors need nu > 1, got {}".format(nu))
        self.nu = float(nu)

    def sample(self, phi: float, n: int, rng: np.random.Generator) -> np.ndarray:
        r = sample_ig(self.nu, rng)
        return rng.normal(0.0, np.sqrt(r * phi), size=n)

    @property
    def label(self) -> str:
        return "ETP(nu={:g})".format(self.nu)

    def to_dict(self) -> dict:
        return {"error": "etp", "nu": self.nu}


class Disturbance(abc.ABC):
    """Extra error added to the training responses of the disturbed curve."""

    def __init__(self, gamma: float = 0.0) -> None:
        self.gamma = float(gamma)

    @abc.abstractmethod
    def apply(self, y_curve: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        pass

    @property
    @abc.abstractmethod
    def label(self) -> str:
        pass

    def to_dict(self) -> dict:
        return {"disturbance": self.label, "gamma": self.gamma}

    def __str__(self) -> str:
        return "{}({:g})".format(self.label, self.gamma)


class NoDisturbance(Disturbance):

    def apply(self, y_curve: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.array(y_curve, dtype=float, copy=True)

    @property
    def label(self) -> str:
        return "none"

    def __str__(self) -> str:
        return "none"


class ConstantDisturbance(Disturbance):
    """y + gamma on every response."""

    def apply(self, y_curve: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(y_curve, dtype=float) + self.gamma

    @property
    def label(self) -> str:
        return "constant"


class RandomT2Disturbance(Disturbance):
    """
    y + t_2 + gamma. With per_response (default) every response gets its own
    t_2 draw; otherwise one draw shifts the whole curve.
    """

    def __init__(self, gamma: float = 0.0, per_response: bool = True) -> None:
        super().__init__(gamma)
        self.per_response = bool(per_response)

    def apply(self, y_curve: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        y_curve = np.asarray(y_curve, dtype=float)
        size = y_curve.shape if self.per_response else None
        return y_curve + rng.standard_t(2.0, size=size) + self.gamma

    @property
    def label(self) -> str:
        return "t2"

    def to_dict(self) -> dict:
        return {"disturbance": self.label, "gamma": self.gamma, "per_response": self.per_response}


@dataclass(frozen=True, eq=False)
class Scenario():
    """One row of a simulation table."""
    error: ErrorKind
    disturbance: Disturbance

    @property
    def label(self) -> str:
        return "{} | {}".format(self.error, self.disturbance)

    def to_dict(self) -> dict:
        d = self.error.to_dict()
        d.update(self.disturbance.to_dict())
        return d


def error_kind_from_name(name: str, nu: float = None) -> ErrorKind:
    if name.lower() == "gaussian":
        return GaussianErrors()
    elif name.lower() == "etp":
        if nu is None:
            raise InputError("ETP errors need a nu value.")
        return EtpErrors(nu)
    else:
        raise InputError("Error kind {} not implemented. Valid options are gaussian and etp.".format(name))


def disturbance_from_name(name: str, gamma: float = 0.0, per_response: bool = True) -> Disturbance:
    if name is None or name.lower() == "none":
        return NoDisturbance(0.0)
    elif name.lower() == "constant":
        return ConstantDisturbance(gamma)
    elif name.lower() in ("t2", "random"):
        return RandomT2Disturbance(gamma, per_response)
    else:
        raise InputError("Disturbance {} not implemented. Valid options are none, constant and t2.".format(name))
