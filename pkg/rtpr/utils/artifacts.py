"""
Fit artifacts (one JSON document per fit) and provenance-stamped tables.
"""
import json
import logging
import os

import numpy as np
import pandas as pd

from rtpr.estimation.beta import Beta
from rtpr.estimation.fitter import FitDiagnostics, FitOptions, FitResult, assemble_fit
from rtpr.kernels.kernel import KernelParams
from rtpr.models.batch import BatchData, GroupData
from rtpr.models.config import DEFAULT_NU, ModelConfig, NuMode
from rtpr.utils.errors import InputError

logger = logging.getLogger(__name__)

SCHEMA = "rtpr.fit/1"
PROVENANCE_PREFIX = "# config: "


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError("{} is not JSON serializable".format(type(obj).__name__))


def dumps(obj, **kwargs) -> str:
    return json.dumps(obj, default=_plain, **kwargs)


def fit_document(fit: FitResult, provenance: dict = None) -> dict:
    groups = []
    random_effects = []
    for i, g in enumerate(fit.data.groups):
        groups.append({"label": g.label, "curve_ids": list(g.curve_ids), "X": g.X, "Y": g.Y})
        r = fit.r_hat.group(i)
        random_effects.append({"group": g.label, "r0": float(r[0]),
                               "curves": [{"curve": c, "r_hat": float(r[j + 1])} for j, c in enumerate(g.curve_ids)]})
    return {
        "schema": SCHEMA,
        "config": provenance or {},
        "model": fit.config.to_dict(),
        "options": fit.options.to_dict(),
        "data": {"groups": groups},
        "beta_hat": fit.beta_hat.to_dict(),
        "r_hat": fit.r_hat.to_lists(),
        "random_effects": random_effects,
        "f_hat": [f for f in fit.f_hat],
        "m_value": fit.m_value,
        "diagnostics": fit.diagnostics.to_dict(),
    }


def write_fit_artifact(fit: FitResult, path: str, provenance: dict = None) -> None:
    """
    Writes beta_hat, r_hat, f_hat, the data, diagnostics and the echoed config
    as a single self-describing document.
    """
    with open(os.path.expanduser(path), "w") as fp:
        fp.write(dumps(fit_document(fit, provenance), indent=2))
        fp.write("\n")
    logger.info("Wrote fit artifact %s", path)


def _model(d: dict) -> ModelConfig:
    return ModelConfig.from_name(d["model"], phis=d.get("phis"), nu0=d.get("nu0") or DEFAULT_NU,
                                 nu1=d.get("nu1") or DEFAULT_NU, nu_mode=NuMode(d.get("nu_mode", "fixed")))


def _options(d: dict) -> FitOptions:
    d = dict(d)
    if d.get("kernel_init") is not None:
        k = d["kernel_init"]
        d["kernel_init"] = KernelParams(k["theta0"], k["eta"], k["xi"])
    return FitOptions(**d)


def _data(d: dict) -> BatchData:
    return BatchData(tuple(GroupData(g["label"], np.array(g["X"], dtype=float), np.array(g["Y"], dtype=float),
                                     tuple(g["curve_ids"])) for g in d["groups"]))


def read_fit_artifact(path: str):
    """
    Loads a fit artifact and rebuilds the full FitResult at its beta_hat.

    Returns
    -------
    tuple of (FitResult, dict)
        The fit and the echoed config it was produced with.

    Raises
    ------
    InputError
        If the file is missing, not JSON, or of another schema.
    """
    path = os.path.expanduser(path)
    if not os.path.isfile(path):
        raise InputError("Fit artifact \"{}\" does not exist.".format(path))
    try:
        with open(path, "r") as fp:
            doc = json.load(fp)
    except json.JSONDecodeError as err:
        raise InputError("Fit artifact \"{}\" is not valid JSON: {}".format(path, err)) from err
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise InputError("\"{}\" is not a fit artifact of schema {}.".format(path, SCHEMA))
    try:
        config = _model(doc["model"])
        options = _options(doc["options"])
        data = _data(doc["data"])
        beta = Beta.from_dict(doc["beta_hat"])
        diagnostics = FitDiagnostics(**doc["diagnostics"])
    except (KeyError, TypeError) as err:
        raise InputError("Fit artifact \"{}\" is incomplete: {}".format(path, err)) from err
    fit = assemble_fit(config, data, beta, options, diagnostics)
    stored = [np.asarray(r, dtype=float) for r in doc["r_hat"]]
    if not all(np.allclose(a, b, rtol=1e-6, atol=0.0) for a, b in zip(stored, fit.r_hat.r)):
        logger.warning("Random effects re-solved from %s differ from the stored ones", path)
    return fit, doc.get("config", {})


def write_table(frame: pd.DataFrame, path: str, provenance: dict = None) -> None:
    """Writes a comma-delimited table whose first line echoes the config it came from."""
    with open(os.path.expanduser(path), "w") as fp:
        fp.write(PROVENANCE_PREFIX + dumps(provenance or {}, sort_keys=True) + "\n")
        frame.to_csv(fp, index=False, float_format="%.10g", lineterminator="\n")
    logger.info("Wrote %s (%d rows)", path, len(frame))


def read_table(path: str):
    """Reads a table written by write_table; returns (frame, provenance)."""
    path = os.path.expanduser(path)
    with open(path, "r") as fp:
        first = fp.readline()
    provenance = json.loads(first[len(PROVENANCE_PREFIX):]) if first.startswith(PROVENANCE_PREFIX) else {}
    return pd.read_csv(path, comment="#"), provenance
