"""
Comma-delimited dataset files: one row per observation with columns
group, curve, x1..xp, y.
"""
import logging
import os
import re
from typing import Iterable, List

import numpy as np
import pandas as pd

from rtpr.models.batch import BatchData, GroupData
from rtpr.utils.errors import InputError

logger = logging.getLogger(__name__)

COVARIATE = re.compile(r"^x(\d+)$")


def _leading_comments(path: str) -> int:
    count = 0
    with open(path, "r") as stream:
        for line in stream:
            if not line.startswith("#"):
                break
            count += 1
    return count


def _covariate_columns(columns: List[str], path: str) -> List[str]:
    if len(columns) < 4 or columns[0] != "group" or columns[1] != "curve" or columns[-1] != "y":
        raise InputError("\"{}\" must have the header group,curve,x1,...,xp,y; got {}".format(path, ",".join(columns)))
    covariates = columns[2:-1]
    expected = ["x{}".format(l + 1) for l in range(len(covariates))]
    if covariates != expected:
        raise InputError("\"{}\": covariate columns must be {}, got {}".format(path, ",".join(expected), ",".join(covariates)))
    return covariates


def load_dataset(path: str) -> BatchData:
    """Reads a dataset file into BatchData.

    Each curve's rows are sorted by their covariates; every curve of a group
    must then carry the same design. Groups and curves are ordered by their
    identifiers.

    Parameters
    ----------
    path : str

    Returns
    -------
    BatchData

    Raises
    ------
    InputError
        On a missing or empty file, missing values, non-integer identifiers
        or a design that differs between curves of a group. Messages give the
        offending line of the file.
    """
    path = os.path.expanduser(path)
    if not os.path.isfile(path):
        raise InputError("Dataset file \"{}\" does not exist.".format(path))
    skipped = _leading_comments(path)
    try:
        df = pd.read_csv(path, comment="#", float_precision="round_trip", skipinitialspace=True)
    except pd.errors.EmptyDataError as err:
        raise InputError("Dataset file \"{}\" is empty.".format(path)) from err
    except pd.errors.ParserError as err:
        raise InputError("Dataset file \"{}\" could not be parsed: {}".format(path, err)) from err
    df.columns = [str(c).strip() for c in df.columns]
    covariates = _covariate_columns(list(df.columns), path)
    if df.empty:
        raise InputError("Dataset file \"{}\" has a header but no rows.".format(path))

    def line(row: int) -> int:
        return int(row) + 2 + skipped

    values = df.apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise InputError("\"{}\" line {}: missing or non-numeric value.".format(path, line(row)))
    for k in ("group", "curve"):
        ids = values[k].to_numpy()
        wrong = (ids != np.round(ids)) | (ids < 1)
        if wrong.any():
            row = int(np.flatnonzero(wrong)[0])
            raise InputError("\"{}\" line {}: {} must be an integer >= 1, got {}".format(path, line(row), k, ids[row]))
    values["group"] = values["group"].astype(int)
    values["curve"] = values["curve"].astype(int)

    groups = []
    for label, gdf in values.groupby("group", sort=True):
        X = None
        Y = []
        curve_ids = []
        for curve, cdf in gdf.groupby("curve", sort=True):
            cdf = cdf.sort_values(covariates[::-1], kind="mergesort")
            Xc = cdf[covariates].to_numpy(dtype=float)
            if X is None:
                X = Xc
            elif Xc.shape != X.shape or not np.array_equal(Xc, X):
                row = int(cdf.index[0])
                raise InputError("\"{}\" line {}: curve {} of group {} does not share the design of the group's other curves."
                                 .format(path, line(row), curve, label))
            Y.append(cdf["y"].to_numpy(dtype=float))
            curve_ids.append(int(curve))
        groups.append(GroupData(int(label), X, np.array(Y), tuple(curve_ids)))
    data = BatchData(tuple(groups))
    logger.info("Loaded %d group(s) from %s: %s", data.I, path,
                ", ".join("group {} with {} curves x {} points".format(g.label, g.J, g.n) for g in data.groups))
    return data


def dataset_frame(data: BatchData) -> pd.DataFrame:
    rows = []
    p = data.p
    for g in data.groups:
        for j, curve in enumerate(g.curve_ids):
            for k in range(g.n):
                row = {"group": g.label, "curve": curve}
                row.update({"x{}".format(l + 1): g.X[k, l] for l in range(p)})
                row["y"] = g.Y[j, k]
                rows.append(row)
    columns = ["group", "curve"] + ["x{}".format(l + 1) for l in range(p)] + ["y"]
    return pd.DataFrame(rows, columns=columns)


def save_dataset(data: BatchData, path: str) -> None:
    """Writes BatchData so that load_dataset gives back identical arrays."""
    dataset_frame(data).to_csv(os.path.expanduser(path), index=False, float_format="%.17g")


def drop_curves(data: BatchData, specs: Iterable[str]) -> BatchData:
    """Removes curves named "group:curve" (dataset identifiers) from the batch.

    Raises
    ------
    InputError
        On a malformed spec, an unknown group or curve, or a group left
        without curves.
    """
    drops = set()
    for spec in specs:
        try:
            group, curve = (int(part) for part in str(spec).split(":"))
        except ValueError as err:
            raise InputError("--drop takes group:curve, got \"{}\"".format(spec)) from err
        drops.add((group, curve))
    if not drops:
        return data
    labels = {g.label: g for g in data.groups}
    for group, curve in sorted(drops):
        if group not in labels or curve not in labels[group].curve_ids:
            raise InputError("cannot drop curve {} of group {}: no such curve".format(curve, group))
    groups = []
    for g in data.groups:
        keep = [j for j, c in enumerate(g.curve_ids) if (g.label, c) not in drops]
        if not keep:
            raise InputError("dropping every curve of group {} leaves it empty".format(g.label))
        groups.append(GroupData(g.label, g.X, g.Y[keep], tuple(g.curve_ids[j] for j in keep)))
        if len(keep) < g.J:
            logger.info("Group %d: dropped curve(s) %s", g.label, sorted(c for gl, c in drops if gl == g.label))
    return BatchData(tuple(groups))
