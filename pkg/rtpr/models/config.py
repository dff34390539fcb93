"""
Model configuration for the independent-error process regression models
(GP-GP, GP-TP, TP-TP, TP-GP) and the joint-error eTPR baseline.
"""
import enum
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from rtpr.models.processes import ProcessSpec
from rtpr.utils.errors import InputError, DomainError

MODEL_NAMES = ("gp-gp", "gp-tp", "tp-tp", "tp-gp", "etpr-joint")
DEFAULT_NU = 1.05


class NuMode(enum.Enum):
    FIXED = "fixed"
    ESTIMATED = "estimate"


@dataclass(frozen=True, eq=False)
class FreeLayout():
    """
    Map from the free random-effect variables of one group to the components
    (r_i0, r_i1, ..., r_iJ).

    projection[c, a] = 1 when free variable a sets component c; components
    with an all-zero row are fixed at 1. nu_index[a] is 0 when variable a is
    governed by nu0 and 1 when governed by nu1.
    """
    projection: np.ndarray
    nu_index: Tuple[int, ...]
    names: Tuple[str, ...]

    @property
    def q(self) -> int:
        return len(self.names)

    def components(self, free: np.ndarray) -> np.ndarray:
        """Full component vector (r_i0, ..., r_iJ) from the free values."""
        fixed = 1.0 - self.projection.sum(axis=1)
        return self.projection @ np.asarray(free, dtype=float) + fixed

    def free_values(self, components: np.ndarray) -> np.ndarray:
        """Free values read back from a component vector (first component of each variable)."""
        components = np.asarray(components, dtype=float)
        return np.array([components[np.argmax(self.projection[:, a])] for a in range(self.q)])


@dataclass(frozen=True)
class ModelConfig():
    """
    Parameters
    ----------
    signal : ProcessSpec
        Process of the latent curves f_i (houses nu0).
    noise : ProcessSpec
        Process of the errors epsilon_ij (houses nu1).
    phis : tuple of float, optional
        Noise scale phi_i per group. During estimation these are the current
        values of beta; a user-supplied config may leave them unset.
    nu_mode : NuMode
        Whether nu0 / nu1 are held fixed or estimated with beta.
    joint_error : bool
        If True, r_i0 = r_i1 = ... = r_iJ (the joint-error eTPR baseline).
    """
    signal: ProcessSpec
    noise: ProcessSpec
    phis: Optional[Tuple[float, ...]] = None
    nu_mode: NuMode = NuMode.FIXED
    joint_error: bool = False

    def __post_init__(self):
        if self.phis is not None:
            phis = tuple(float(v) for v in np.atleast_1d(self.phis))
            if not all(v > 0 for v in phis):
                raise DomainError("all phi_i must be positive, got {}".format(phis))
            object.__setattr__(self, "phis", phis)
        if self.joint_error and not (self.signal.is_etp and self.noise.is_etp):
            raise InputError("The joint-error model needs extended t-processes for both signal and noise.")

    @classmethod
    def from_name(cls, name: str, phis=None, nu0: float = DEFAULT_NU, nu1: float = DEFAULT_NU,
                  nu_mode: NuMode = NuMode.FIXED) -> "ModelConfig":
        """
        Builds one of the named models: gp-gp, gp-tp, tp-tp, tp-gp or etpr-joint.
        """
        key = name.lower()
        if key not in MODEL_NAMES:
            raise InputError("Model {} not implemented. Valid options are {}.".format(name, ", ".join(MODEL_NAMES)))
        if key == "etpr-joint":
            return cls(ProcessSpec.extended_t(nu0), ProcessSpec.extended_t(nu0), phis, nu_mode, joint_error=True)
        signal_kind, noise_kind = key.split("-")
        signal = ProcessSpec.extended_t(nu0) if signal_kind == "tp" else ProcessSpec.gaussian()
        noise = ProcessSpec.extended_t(nu1) if noise_kind == "tp" else ProcessSpec.gaussian()
        return cls(signal, noise, phis, nu_mode, joint_error=False)

    @property
    def name(self) -> str:
        if self.joint_error:
            return "etpr-joint"
        return "{}-{}".format("tp" if self.signal.is_etp else "gp", "tp" if self.noise.is_etp else "gp")

    @property
    def nu0(self) -> Optional[float]:
        return self.signal.nu

    @property
    def nu1(self) -> Optional[float]:
        return self.signal.nu if self.joint_error else self.noise.nu

    @property
    def has_random_effects(self) -> bool:
        return self.signal.is_etp or self.noise.is_etp

    @property
    def estimates_noise_effects(self) -> bool:
        """True when each curve has its own free noise random effect r_ij."""
        return self.noise.is_etp and not self.joint_error

    def free_nus(self) -> List[int]:
        """Indices (0 for nu0, 1 for nu1) of the nu's that are free in beta."""
        if self.nu_mode is NuMode.FIXED:
            return []
        if self.joint_error:
            return [0]
        return [k for k, spec in enumerate((self.signal, self.noise)) if spec.is_etp]

    def with_values(self, phis=None, nu0: float = None, nu1: float = None) -> "ModelConfig":
        """Copy with phis and/or nu values replaced (used while beta moves)."""
        signal = self.signal
        noise = self.noise
        if nu0 is not None and signal.is_etp:
            signal = ProcessSpec.extended_t(nu0)
            if self.joint_error:
                noise = ProcessSpec.extended_t(nu0)
        if nu1 is not None and noise.is_etp and not self.joint_error:
            noise = ProcessSpec.extended_t(nu1)
        return replace(self, signal=signal, noise=noise, phis=self.phis if phis is None else tuple(phis))

    def phi(self, i: int) -> float:
        if self.phis is None:
            raise InputError("ModelConfig.phis is unset; supply phi values before building covariances.")
        return self.phis[i]

    def free_layout(self, J: int) -> FreeLayout:
        """
        Free random-effect variables of a group with J curves.
        """
        if self.joint_error:
            return FreeLayout(np.ones((J + 1, 1)), (0,), ("r",))
        columns = []
        nu_index = []
        names = []
        if self.signal.is_etp:
            col = np.zeros(J + 1)
            col[0] = 1.0
            columns.append(col)
            nu_index.append(0)
            names.append("r0")
        if self.noise.is_etp:
            for j in range(1, J + 1):
                col = np.zeros(J + 1)
                col[j] = 1.0
                columns.append(col)
                nu_index.append(1)
                names.append("r{}".format(j))
        projection = np.column_stack(columns) if columns else np.zeros((J + 1, 0))
        return FreeLayout(projection, tuple(nu_index), tuple(names))

    def to_dict(self) -> dict:
        return {"model": self.name, "nu0": self.nu0, "nu1": self.nu1, "nu_mode": self.nu_mode.value,
                "phis": None if self.phis is None else list(self.phis)}
