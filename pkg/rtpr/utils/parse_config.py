import logging
import os

import yaml

from rtpr.estimation.fitter import FitOptions
from rtpr.estimation.hlikelihood import INNER_TOL, MAX_INNER
from rtpr.kernels.kernel import KernelParams
from rtpr.models.config import DEFAULT_NU, ModelConfig, NuMode
from rtpr.prediction.outliers import DEFAULT_MULTIPLIER, OutlierRule
from rtpr.simulation.scenarios import Scenario, disturbance_from_name, error_kind_from_name
from rtpr.simulation.simulator import SimConfig
from rtpr.utils.errors import InputError

logger = logging.getLogger(__name__)

ESTIMATE = "estimate"

RUN_DEFAULTS = {
    "model": "gp-tp",
    "nu0": DEFAULT_NU,
    "nu1": DEFAULT_NU,
    "inner_tol": INNER_TOL,
    "outer_tol": 1e-5,
    "max_inner": MAX_INNER,
    "max_outer": 500,
    "n_starts": 1,
    "seed": 0,
    "kernel_init": None,
    "phi_init": None,
    "rule_mult": DEFAULT_MULTIPLIER,
    "strict": True,
}

SIM_DEFAULTS = {
    "I": 1,
    "J": 6,
    "n_train": 10,
    "grid_size": 30,
    "grid_range": [0.0, 3.0],
    "truth": {"theta0": 0.1, "eta": 10.0, "xi": 0.1, "phi": 0.2},
    "disturbed_curve": 6,
    "reps": 100,
    "seed": 0,
    "train_offset": 0,
    "models": ["gp-gp", "gp-tp"],
    "nu0": DEFAULT_NU,
    "nu1": DEFAULT_NU,
    "per_response": True,
    "scenarios": [{"error": "gaussian", "disturbance": "constant", "gammas": [2.0]}],
    "inner_tol": INNER_TOL,
    "outer_tol": 1e-5,
    "max_inner": MAX_INNER,
    "max_outer": 500,
    "n_starts": 1,
    "strict": False,
}


def read_yaml(yaml_path: str) -> dict:
    """Loads a YAML mapping, turning every failure into an InputError."""
    yaml_path = os.path.expanduser(yaml_path)
    if not os.path.isfile(yaml_path):
        raise InputError("Config file \"{}\" does not exist.".format(yaml_path))
    try:
        with open(yaml_path, "r") as stream:
            inputs = yaml.full_load(stream)
    except yaml.YAMLError as err:
        raise InputError("Config file \"{}\" is not valid YAML: {}".format(yaml_path, err)) from err
    if inputs is None:
        inputs = {}
    if not isinstance(inputs, dict):
        raise InputError("Config file \"{}\" must hold a key-value mapping.".format(yaml_path))
    return inputs


def _with_defaults(inputs: dict, defaults: dict, yaml_path: str) -> dict:
    unknown = sorted(set(inputs) - set(defaults))
    if unknown:
        raise InputError("Unknown key(s) {} in \"{}\". Valid keys are {}.".format(
            ", ".join(map(str, unknown)), yaml_path, ", ".join(defaults)))
    resolved = {}
    for k, default in defaults.items():
        if k in inputs:
            resolved[k] = inputs[k]
        else:
            logger.warning("No %s specified in \"%s\"; using default of %s.", k, yaml_path, default)
            resolved[k] = default
    return resolved


def _positive(k: str, v, cast=float):
    try:
        value = cast(v)
    except (TypeError, ValueError) as err:
        raise InputError("{} must be a number, got {!r}".format(k, v)) from err
    if not value > 0:
        raise InputError("{} must be positive, got {}".format(k, v))
    return value


def _nu(k: str, v):
    """Number or "estimate"; returns (value, estimated)."""
    if isinstance(v, str) and v.lower() == ESTIMATE:
        return DEFAULT_NU, True
    value = _positive(k, v)
    if not value > 1.0:
        raise InputError("{} must exceed 1, got {}".format(k, v))
    return value, False


def _kernel(k: str, v) -> KernelParams:
    if not isinstance(v, dict) or set(v) - {"theta0", "eta", "xi"}:
        raise InputError("{} must be a mapping with keys theta0, eta and xi, got {!r}".format(k, v))
    try:
        return KernelParams(v["theta0"], v["eta"], v["xi"])
    except KeyError as err:
        raise InputError("{} is missing {}".format(k, err)) from err


def parse_run_config(yaml_path: str, overrides: dict = None) -> dict:
    """Parses a run config yaml into typed objects.

    Parameters
    ----------
    yaml_path : str
        full file path to config yaml. Check out rtpr/config_files/base_example.yaml.
    overrides : dict, optional
        Values replacing keys of the file (command line flags such as seed or
        rule_mult).

    Returns
    -------
    dict
        "model" (ModelConfig), "fit_options" (FitOptions), "rule"
        (OutlierRule), "seed" (int) and "echo", the resolved plain-value
        config embedded in every output.

    Raises
    ------
    InputError
        On unknown keys, unknown model names or out-of-range values.
    """
    inputs = read_yaml(yaml_path)
    inputs.update({k: v for k, v in (overrides or {}).items() if v is not None})
    resolved = _with_defaults(inputs, RUN_DEFAULTS, yaml_path)

    new_dict = {}
    nus = {}
    estimated = False
    for k, v in resolved.items():
        if k == "model":
            new_dict[k] = str(v).lower()
        elif k in ("nu0", "nu1"):
            nus[k], free = _nu(k, v)
            estimated = estimated or free
        elif k in ("inner_tol", "outer_tol"):
            new_dict[k] = _positive(k, v)
        elif k in ("max_inner", "max_outer", "n_starts"):
            new_dict[k] = _positive(k, v, int)
        elif k == "seed":
            try:
                new_dict[k] = int(v)
            except (TypeError, ValueError) as err:
                raise InputError("seed must be an integer, got {!r}".format(v)) from err
        elif k == "kernel_init":
            new_dict[k] = None if v is None else _kernel(k, v)
        elif k == "phi_init":
            new_dict[k] = None if v is None else _positive(k, v)
        elif k == "rule_mult":
            new_dict[k] = _positive(k, v)
        elif k == "strict":
            new_dict[k] = bool(v)

    nu_mode = NuMode.ESTIMATED if estimated else NuMode.FIXED
    model = ModelConfig.from_name(new_dict["model"], nu0=nus["nu0"], nu1=nus["nu1"], nu_mode=nu_mode)
    options = FitOptions(inner_tol=new_dict["inner_tol"], outer_tol=new_dict["outer_tol"],
                         max_inner=new_dict["max_inner"], max_outer=new_dict["max_outer"],
                         n_starts=new_dict["n_starts"], seed=new_dict["seed"],
                         kernel_init=new_dict["kernel_init"], phi_init=new_dict["phi_init"],
                         strict=new_dict["strict"])
    echo = dict(resolved)
    echo["kernel_init"] = None if new_dict["kernel_init"] is None else new_dict["kernel_init"].to_dict()
    return {"model": model, "fit_options": options, "rule": OutlierRule(new_dict["rule_mult"]),
            "seed": new_dict["seed"], "echo": echo}


def _scenarios(v, per_response: bool) -> list:
    if not isinstance(v, list) or not v:
        raise InputError("scenarios must be a non-empty list, got {!r}".format(v))
    scenarios = []
    for entry in v:
        if not isinstance(entry, dict) or set(entry) - {"error", "nu", "disturbance", "gammas"}:
            raise InputError("each scenario is a mapping of error, nu, disturbance and gammas; got {!r}".format(entry))
        error = error_kind_from_name(str(entry.get("error", "gaussian")), entry.get("nu"))
        name = entry.get("disturbance", "none")
        gammas = entry.get("gammas", [0.0])
        if not isinstance(gammas, list):
            gammas = [gammas]
        if name is None or str(name).lower() == "none":
            scenarios.append(Scenario(error, disturbance_from_name(None)))
            continue
        for gamma in gammas:
            scenarios.append(Scenario(error, disturbance_from_name(str(name), float(gamma), per_response)))
    return scenarios


def parse_sim_config(yaml_path: str, overrides: dict = None) -> dict:
    """Parses a simulation config yaml.

    Each scenario entry expands into one table row per gamma.

    Returns
    -------
    dict
        "sim" (SimConfig, error and disturbance of the first scenario),
        "scenarios" (list of Scenario), "models" (list of model names),
        "fit_options" (FitOptions) and "echo".
    """
    inputs = read_yaml(yaml_path)
    inputs.update({k: v for k, v in (overrides or {}).items() if v is not None})
    resolved = _with_defaults(inputs, SIM_DEFAULTS, yaml_path)

    new_dict = {}
    for k, v in resolved.items():
        if k in ("I", "J", "n_train", "grid_size", "disturbed_curve", "reps", "max_inner", "max_outer", "n_starts"):
            new_dict[k] = _positive(k, v, int)
        elif k == "train_offset":
            new_dict[k] = int(v)
        elif k == "grid_range":
            if not isinstance(v, (list, tuple)) or len(v) != 2 or not float(v[1]) > float(v[0]):
                raise InputError("grid_range must be [start, end] with end > start, got {!r}".format(v))
            new_dict[k] = (float(v[0]), float(v[1]))
        elif k == "truth":
            if not isinstance(v, dict) or set(v) - {"theta0", "eta", "xi", "phi"}:
                raise InputError("truth must be a mapping with keys theta0, eta, xi and phi, got {!r}".format(v))
            truth = dict(SIM_DEFAULTS["truth"])
            truth.update(v)
            new_dict[k] = KernelParams(truth["theta0"], truth["eta"], truth["xi"])
            new_dict["phi"] = _positive("phi", truth["phi"])
            resolved[k] = truth
        elif k == "seed":
            new_dict[k] = tuple(int(s) for s in v) if isinstance(v, list) else int(v)
        elif k == "models":
            names = [v] if isinstance(v, str) else list(v)
            for name in names:
                ModelConfig.from_name(str(name))
            new_dict[k] = [str(name).lower() for name in names]
        elif k in ("nu0", "nu1"):
            value, free = _nu(k, v)
            if free:
                raise InputError("simulations fit models with fixed {}; got \"estimate\"".format(k))
            new_dict[k] = value
        elif k in ("inner_tol", "outer_tol"):
            new_dict[k] = _positive(k, v)
        elif k in ("per_response", "strict"):
            new_dict[k] = bool(v)
        elif k == "scenarios":
            pass
    scenarios = _scenarios(resolved["scenarios"], new_dict["per_response"])

    sim = SimConfig(I=new_dict["I"], J=new_dict["J"], n_train=new_dict["n_train"], grid_size=new_dict["grid_size"],
                    grid_range=new_dict["grid_range"], truth=new_dict["truth"], phi=new_dict["phi"],
                    error=scenarios[0].error, disturbance=scenarios[0].disturbance,
                    disturbed_curve=new_dict["disturbed_curve"], reps=new_dict["reps"], seed=new_dict["seed"],
                    train_offset=new_dict["train_offset"], nu0=new_dict["nu0"], nu1=new_dict["nu1"])
    options = FitOptions(inner_tol=new_dict["inner_tol"], outer_tol=new_dict["outer_tol"],
                         max_inner=new_dict["max_inner"], max_outer=new_dict["max_outer"],
                         n_starts=new_dict["n_starts"], strict=new_dict["strict"])
    return {"sim": sim, "scenarios": scenarios, "models": new_dict["models"], "fit_options": options,
            "echo": resolved}
