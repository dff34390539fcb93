"""
Value objects for functional batch data and random effects.
"""
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from rtpr.utils.errors import InputError, DomainError


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GroupData():
    """
    One group of curves observed on a shared design.

    Parameters
    ----------
    label : int
        Group identifier as it appears in the dataset file (>= 1).
    X : np.ndarray
        n x p design shared by all curves of the group.
    Y : np.ndarray
        J x n responses; row j is curve j.
    curve_ids : tuple of int
        Curve identifiers as they appear in the dataset file, one per row of Y.
    """
    label: int
    X: np.ndarray
    Y: np.ndarray
    curve_ids: Tuple[int, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.ndim != 2:
            raise InputError("design of group {} must be 2-dimensional, got shape {}".format(self.label, X.shape))
        if Y.ndim != 2 or Y.shape[1] != X.shape[0]:
            raise InputError("every curve of group {} must have {} responses (rows of X); got Y shape {}".format(
                self.label, X.shape[0], Y.shape))
        curve_ids = tuple(int(c) for c in self.curve_ids) if self.curve_ids is not None else tuple(range(1, Y.shape[0] + 1))
        if len(curve_ids) != Y.shape[0]:
            raise InputError("group {} has {} curves but {} curve ids".format(self.label, Y.shape[0], len(curve_ids)))
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError("group {} contains missing or non-finite values".format(self.label))
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Y", _frozen(Y))
        object.__setattr__(self, "curve_ids", curve_ids)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def J(self) -> int:
        return self.Y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def y(self) -> np.ndarray:
        """Stacked responses (y_i1^T, ..., y_iJ^T)^T of length nJ."""
        return self.Y.reshape(-1)


@dataclass(frozen=True, eq=False)
class BatchData():
    """
    I groups of curves. Groups may differ in their number of curves and design
    points, but all share the covariate dimension p.
    """
    groups: Tuple[GroupData, ...]

    def __post_init__(self):
        groups = tuple(self.groups)
        if len(groups) < 1:
            raise InputError("batch data needs at least one group")
        if len({g.p for g in groups}) != 1:
            raise InputError("all groups must share the covariate dimension p")
        for g in groups:
            if g.J < 1:
                raise InputError("group {} has no curves".format(g.label))
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_arrays(cls, designs: Sequence, responses: Sequence) -> "BatchData":
        """Builds batch data from per-group designs and J x n response arrays, labelling groups and curves from 1."""
        return cls(tuple(GroupData(i + 1, X, Y, None) for i, (X, Y) in enumerate(zip(designs, responses))))

    @property
    def I(self) -> int:
        return len(self.groups)

    @property
    def p(self) -> int:
        return self.groups[0].p

    def negated(self) -> "BatchData":
        return BatchData(tuple(GroupData(g.label, g.X, -g.Y, g.curve_ids) for g in self.groups))


@dataclass(frozen=True, eq=False)
class RandomEffects():
    """
    Random effects r_i = (r_i0, r_i1, ..., r_iJ) for every group. Components
    belonging to Gaussian processes are held at 1.
    """
    r: Tuple[np.ndarray, ...]

    def __post_init__(self):
        r = tuple(_frozen(np.atleast_1d(v)) for v in self.r)
        for i, v in enumerate(r):
            if v.ndim != 1 or v.size < 2:
                raise InputError("random effects of group {} must be a vector (r_i0, ..., r_iJ)".format(i))
            if not np.all(v > 0):
                raise DomainError("random effects must be strictly positive; group {} has {}".format(i, v))
        object.__setattr__(self, "r", r)

    @classmethod
    def ones(cls, data: BatchData) -> "RandomEffects":
        return cls(tuple(np.ones(g.J + 1) for g in data.groups))

    def group(self, i: int) -> np.ndarray:
        return self.r[i]

    def replace_group(self, i: int, values: np.ndarray) -> "RandomEffects":
        r = list(self.r)
        r[i] = values
        return RandomEffects(tuple(r))

    def to_lists(self) -> list:
        return [v.tolist() for v in self.r]
