"""
Outlying-curve detection from the estimated noise random effects r_hat_ij.

A curve with gross errors inflates its r_hat_ij, which in turn downweights it
in the BLUP. The default rule flags r_hat_ij > c_mult * median_j' r_hat_ij'.
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd

from rtpr.estimation.fitter import FitResult
from rtpr.utils.errors import DomainError, UnsupportedModelError

logger = logging.getLogger(__name__)

DEFAULT_MULTIPLIER = 3.0


@dataclass(frozen=True)
class OutlierRule():
    """Multiplicative median rule."""
    c_mult: float = DEFAULT_MULTIPLIER

    def __post_init__(self):
        if not float(self.c_mult) > 0:
            raise DomainError("outlier rule multiplier must be positive, got {}".format(self.c_mult))

    def flags(self, r_curves: np.ndarray) -> np.ndarray:
        return r_curves > self.c_mult * np.median(r_curves)

    def to_dict(self) -> dict:
        return {"rule": "median-multiple", "c_mult": float(self.c_mult)}


@dataclass(frozen=True, eq=False)
class OutlierReport():
    """
    Attributes
    ----------
    r_hat : tuple of np.ndarray
        Per group, r_hat_ij for j = 1..J.
    flagged : tuple of tuple of int
        Per group, zero-based indices of flagged curves.
    curve_ids : tuple of tuple of int
        Per group, the curve identifiers of the dataset.
    group_labels : tuple of int
    rule : OutlierRule
    """
    r_hat: Tuple[np.ndarray, ...]
    flagged: Tuple[Tuple[int, ...], ...]
    curve_ids: Tuple[Tuple[int, ...], ...]
    group_labels: Tuple[int, ...]
    rule: OutlierRule

    def flagged_ids(self) -> List[Tuple[int, int]]:
        """(group label, curve id) of every flagged curve."""
        return [(self.group_labels[i], self.curve_ids[i][j]) for i, idx in enumerate(self.flagged) for j in idx]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, r in enumerate(self.r_hat):
            for j, value in enumerate(r):
                rows.append({"group": self.group_labels[i], "curve": self.curve_ids[i][j], "r_hat": float(value),
                             "flag": j in self.flagged[i], "c_mult": float(self.rule.c_mult)})
        return pd.DataFrame(rows, columns=["group", "curve", "r_hat", "flag", "c_mult"])


def outlier_scores(fit: FitResult, rule: OutlierRule = None) -> OutlierReport:
    """
    Flags curves whose estimated noise random effect is large relative to
    the other curves of their group.

    Raises
    ------
    UnsupportedModelError
        If the fitted model has no per-curve noise random effects (Gaussian
        noise or the joint-error model).
    """
    rule = rule or OutlierRule()
    if not fit.config.estimates_noise_effects:
        raise UnsupportedModelError(
            "Model {} has no per-curve noise random effects; outlier scores need gp-tp or tp-tp.".format(fit.config.name))
    r_hat = []
    flagged = []
    for i, g in enumerate(fit.data.groups):
        r_curves = np.array(fit.r_hat.group(i)[1:], dtype=float)
        idx = tuple(int(j) for j in np.flatnonzero(rule.flags(r_curves)))
        if idx:
            logger.info("Group %d: curves %s flagged as outlying", g.label, [g.curve_ids[j] for j in idx])
        r_hat.append(r_curves)
        flagged.append(idx)
    return OutlierReport(tuple(r_hat), tuple(flagged), tuple(g.curve_ids for g in fit.data.groups),
                         tuple(g.label for g in fit.data.groups), rule)
