"""
Replication engine for the simulation study: synthetic batch curves from the
assumed model, disturbance of one curve, fits of several models and MSE
scoring on held-out grid points.

Every replication draws from its own SeedSequence child, so results do not
depend on the number of worker processes (RTPR_NUM_PROC).
"""
import dataclasses
import logging
import multiprocessing
import os
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from rtpr.estimation.fitter import FitOptions, fit
from rtpr.kernels.kernel import KernelParams, gram_matrix
from rtpr.models.batch import BatchData
from rtpr.models.config import ModelConfig, DEFAULT_NU
from rtpr.prediction.outliers import OutlierRule, outlier_scores
from rtpr.prediction.predictor import predict_new
from rtpr.simulation.scenarios import ConstantDisturbance, Disturbance, ErrorKind, GaussianErrors
from rtpr.utils.errors import InputError, RtprError
from rtpr.utils.linalg import jittered, safe_cholesky

logger = logging.getLogger(__name__)

NUM_PROC_ENV = "RTPR_NUM_PROC"


def _default_truth() -> KernelParams:
    return KernelParams(0.1, [10.0], [0.1])


@dataclass(frozen=True, eq=False)
class SimConfig():
    """
    Parameters
    ----------
    I, J : int
        Groups and curves per group.
    n_train : int
        Training points per curve.
    grid_size : int
        Points of the full grid S.
    grid_range : tuple of float
        Ends of S.
    truth : KernelParams
        Kernel of the true latent curves.
    phi : float
        True noise scale.
    error : ErrorKind
    disturbance : Disturbance
    disturbed_curve : int
        1-based curve that receives the disturbance in every group.
    reps : int
    seed : int or tuple of int
        Entropy of the root SeedSequence.
    train_offset : int
        Grid index of the first training point.
    nu0, nu1 : float
        nu values of the fitted ETP models.
    """
    I: int = 1
    J: int = 6
    n_train: int = 10
    grid_size: int = 30
    grid_range: Tuple[float, float] = (0.0, 3.0)
    truth: KernelParams = field(default_factory=_default_truth)
    phi: float = 0.2
    error: ErrorKind = field(default_factory=GaussianErrors)
    disturbance: Disturbance = field(default_factory=lambda: ConstantDisturbance(2.0))
    disturbed_curve: int = 6
    reps: int = 100
    seed: Union[int, Tuple[int, ...]] = 0
    train_offset: int = 0
    nu0: float = DEFAULT_NU
    nu1: float = DEFAULT_NU

    def __post_init__(self):
        if self.I < 1 or self.J < 1:
            raise InputError("I and J must be at least 1, got I={} J={}".format(self.I, self.J))
        if self.n_train < 1 or self.n_train > self.grid_size:
            raise InputError("n_train must lie in [1, grid_size={}], got {}".format(self.grid_size, self.n_train))
        if not 1 <= self.disturbed_curve <= self.J:
            raise InputError("disturbed_curve must lie in [1, J={}], got {}".format(self.J, self.disturbed_curve))
        if self.reps < 1:
            raise InputError("reps must be at least 1, got {}".format(self.reps))
        if not self.phi > 0:
            raise InputError("phi must be positive, got {}".format(self.phi))
        if self.truth.p != 1:
            raise InputError("the simulation grid is one-dimensional; the truth kernel has p = {}".format(self.truth.p))

    @property
    def seed_entropy(self):
        return list(self.seed) if isinstance(self.seed, (tuple, list)) else int(self.seed)

    def to_dict(self) -> dict:
        return {"I": self.I, "J": self.J, "n_train": self.n_train, "grid_size": self.grid_size,
                "grid_range": list(self.grid_range), "truth": self.truth.to_dict(), "phi": self.phi,
                "error": self.error.to_dict(), "disturbance": self.disturbance.to_dict(),
                "disturbed_curve": self.disturbed_curve, "reps": self.reps, "seed": self.seed_entropy,
                "train_offset": self.train_offset, "nu0": self.nu0, "nu1": self.nu1}


def make_design(config: SimConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Full grid S and the training / test index sets: every
    (grid_size // n_train)-th grid point from train_offset is a training point.
    """
    S = np.linspace(config.grid_range[0], config.grid_range[1], config.grid_size)
    step = config.grid_size // config.n_train
    train = config.train_offset + step * np.arange(config.n_train)
    if train[-1] >= config.grid_size or config.train_offset < 0:
        raise InputError("train_offset {} leaves no room for {} training points".format(config.train_offset, config.n_train))
    test = np.setdiff1d(np.arange(config.grid_size), train)
    return S, train, test


def sample_truth(config: SimConfig, group: int, seed) -> np.ndarray:
    """One zero-mean GP draw of the true curve of a group on the full grid."""
    S, _, _ = make_design(config)
    factor = safe_cholesky(jittered(gram_matrix(config.truth, S)))
    rng = np.random.default_rng(seed)
    return np.tril(factor[0]) @ rng.standard_normal(S.size)


def sample_errors(config: SimConfig, group: int, curve: int, seed) -> np.ndarray:
    """n_train errors of one curve from config.error."""
    return config.error.sample(config.phi, config.n_train, np.random.default_rng(seed))


def inject_disturbance(y_curve: np.ndarray, config: SimConfig, seed) -> np.ndarray:
    return config.disturbance.apply(y_curve, np.random.default_rng(seed))


def mse(f_hat_on_test, f0_on_test, I: int, n: int) -> float:
    """sum_i sum_k (f_hat_i(x_k) - f0_i(x_k))^2 / (n I)."""
    f_hat_on_test = np.asarray(f_hat_on_test, dtype=float)
    f0_on_test = np.asarray(f0_on_test, dtype=float)
    if f_hat_on_test.shape != f0_on_test.shape:
        raise InputError("prediction shape {} does not match truth shape {}".format(f_hat_on_test.shape, f0_on_test.shape))
    return float(np.sum((f_hat_on_test - f0_on_test) ** 2) / (n * I))


@dataclass(frozen=True, eq=False)
class Replication():
    """Outcome of one replication."""
    index: int
    spawn_key: Tuple[int, ...]
    mse: Dict[str, float]
    r_hat: Dict[str, np.ndarray]
    flagged: Dict[str, np.ndarray]
    any_flag: Dict[str, bool]
    failures: Dict[str, str]
    curves: Optional[pd.DataFrame] = None


def _child(seed_seq: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    """Child stream of seed_seq, derived without advancing its spawn counter."""
    return np.random.SeedSequence(seed_seq.entropy, spawn_key=tuple(seed_seq.spawn_key) + tuple(key))


def simulate_data(config: SimConfig, seed_seq: np.random.SeedSequence):
    """Training data of one replication plus the true curves on the full grid."""
    S, train, _ = make_design(config)
    truth_seeds = [_child(seed_seq, 0, i) for i in range(config.I)]
    error_seeds = [_child(seed_seq, 1, k) for k in range(config.I * config.J)]
    disturbance_seeds = [_child(seed_seq, 2, i) for i in range(config.I)]
    truths = []
    responses = []
    for i in range(config.I):
        f0 = sample_truth(config, i, truth_seeds[i])
        Y = np.empty((config.J, config.n_train))
        for j in range(config.J):
            Y[j] = f0[train] + sample_errors(config, i, j, error_seeds[i * config.J + j])
        d = config.disturbed_curve - 1
        Y[d] = inject_disturbance(Y[d], config, disturbance_seeds[i])
        truths.append(f0)
        responses.append(Y)
    data = BatchData.from_arrays([S[train].reshape(-1, 1)] * config.I, responses)
    return data, np.array(truths)


def _curve_frame(config: SimConfig, data: BatchData, truths: np.ndarray, fits: dict) -> pd.DataFrame:
    S, train, _ = make_design(config)
    keep = [j for j in range(config.J) if j != config.disturbed_curve - 1]
    frames = []
    for i in range(config.I):
        frame = pd.DataFrame({"group": i + 1, "x": S, "truth": truths[i]})
        clean_mean = np.full(S.size, np.nan)
        clean_mean[train] = data.groups[i].Y[keep].mean(axis=0) if keep else np.nan
        frame["clean_curve_mean"] = clean_mean
        for name, result in fits.items():
            prediction = predict_new(result, i, S.reshape(-1, 1))
            frame[name + "_mean"] = prediction.mean
            frame[name + "_lower95"] = prediction.lower95
            frame[name + "_upper95"] = prediction.upper95
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def _replicate(task) -> Replication:
    config, models, options, index, seed_seq, with_curves = task
    data, truths = simulate_data(config, seed_seq)
    S, _, test = make_design(config)
    mses, r_hats, flagged, any_flag, failures, fits = {}, {}, {}, {}, {}, {}
    for model in models:
        name = model.name
        try:
            result = fit(model, data, options)
            prediction = np.array([predict_new(result, i, S[test].reshape(-1, 1)).mean for i in range(config.I)])
        except RtprError as err:
            logger.warning("Replication %d (seed %s, spawn key %s) failed for %s: %s",
                           index, config.seed_entropy, seed_seq.spawn_key, name, err)
            failures[name] = str(err)
            continue
        fits[name] = result
        mses[name] = mse(prediction, truths[:, test], config.I, config.n_train)
        if result.config.estimates_noise_effects:
            r_hats[name] = np.array([result.r_hat.group(i)[1:] for i in range(config.I)])
            report = outlier_scores(result, OutlierRule())
            flagged[name] = np.array([config.disturbed_curve - 1 in idx for idx in report.flagged])
            any_flag[name] = any(len(idx) for idx in report.flagged)
    curves = _curve_frame(config, data, truths, fits) if with_curves else None
    return Replication(index, tuple(seed_seq.spawn_key), mses, r_hats, flagged, any_flag, failures, curves)


@dataclass(frozen=True, eq=False)
class SimResult():
    """
    Attributes
    ----------
    config : SimConfig
    models : tuple of str
    replications : tuple of Replication
        Sorted by replication index.
    """
    config: SimConfig
    models: Tuple[str, ...]
    replications: Tuple[Replication, ...]

    def mse_values(self, model: str) -> np.ndarray:
        return np.array([rep.mse[model] for rep in self.replications if model in rep.mse])

    def mse_mean(self, model: str) -> float:
        values = self.mse_values(model)
        return float(np.mean(values)) if values.size else float("nan")

    def mse_sd(self, model: str) -> float:
        values = self.mse_values(model)
        return float(np.std(values, ddof=1)) if values.size > 1 else 0.0

    def failures(self, model: str) -> int:
        return sum(model in rep.failures for rep in self.replications)

    def r_hat_values(self, model: str) -> np.ndarray:
        """reps x I x J array of the estimated curve random effects."""
        return np.array([rep.r_hat[model] for rep in self.replications if model in rep.r_hat])

    def r_hat_mean(self, model: str) -> np.ndarray:
        return self.r_hat_values(model).mean(axis=0)

    def r_hat_sd(self, model: str) -> np.ndarray:
        values = self.r_hat_values(model)
        return values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1:])

    def flag_rate(self, model: str) -> np.ndarray:
        """Per group, fraction of replications in which the disturbed curve was flagged."""
        values = np.array([rep.flagged[model] for rep in self.replications if model in rep.flagged])
        return values.mean(axis=0)

    def any_flag_rate(self, model: str) -> float:
        values = [rep.any_flag[model] for rep in self.replications if model in rep.any_flag]
        return float(np.mean(values)) if values else float("nan")

    @property
    def curves(self) -> Optional[pd.DataFrame]:
        return self.replications[0].curves if self.replications else None

    def to_frame(self) -> pd.DataFrame:
        """One row per (replication, model) with MSE and failure message."""
        rows = []
        for rep in self.replications:
            for model in self.models:
                row = {"replication": rep.index, "model": model, "mse": rep.mse.get(model, np.nan),
                       "failed": model in rep.failures}
                if model in rep.r_hat:
                    for i, r in enumerate(rep.r_hat[model]):
                        for j, value in enumerate(r):
                            row["r_hat_{}_{}".format(i + 1, j + 1)] = value
                rows.append(row)
        return pd.DataFrame(rows)


def num_processes() -> int:
    value = os.environ.get(NUM_PROC_ENV, "1")
    try:
        return max(int(value), 1)
    except ValueError:
        raise InputError("{} must be a positive integer, got {}".format(NUM_PROC_ENV, value))


def run_experiment(config: SimConfig, models: Sequence[Union[ModelConfig, str]], options: Optional[FitOptions] = None,
                   num_proc: Optional[int] = None, curves: bool = False) -> SimResult:
    """
    Runs config.reps replications, fitting every model to every replication.

    Parameters
    ----------
    config : SimConfig
    models : sequence of ModelConfig or model names
        Names are built with config.nu0 / config.nu1.
    options : FitOptions, optional
    num_proc : int, optional
        Worker processes; defaults to RTPR_NUM_PROC (1 when unset).
    curves : bool, optional
        Keep the plot-ready curve table of the first replication.

    Raises
    ------
    InputError
        If the design leaves no test points.
    """
    _, _, test = make_design(config)
    if test.size == 0:
        raise InputError("n_train = grid_size leaves no test points for the MSE")
    models = [m if isinstance(m, ModelConfig) else ModelConfig.from_name(m, nu0=config.nu0, nu1=config.nu1)
              for m in models]
    if len({m.name for m in models}) != len(models):
        raise InputError("each model may appear only once in a simulation")
    options = options or FitOptions()
    seeds = np.random.SeedSequence(config.seed_entropy).spawn(config.reps)
    tasks = [(config, models, options, k, seeds[k], curves and k == 0) for k in range(config.reps)]
    num_proc = num_processes() if num_proc is None else max(int(num_proc), 1)
    logger.info("Running %d replications of %s | %s on %d process(es)", config.reps, config.error,
                config.disturbance, num_proc)
    if num_proc > 1:
        with multiprocessing.Pool(processes=num_proc) as pool:
            outcomes = pool.map(_replicate, tasks)
    else:
        outcomes = [_replicate(task) for task in tasks]
    outcomes = sorted(outcomes, key=lambda rep: rep.index)
    for m in models:
        failed = sum(m.name in rep.failures for rep in outcomes)
        if failed:
            logger.warning("%s failed in %d of %d replications", m.name, failed, config.reps)
    return SimResult(config, tuple(m.name for m in models), tuple(outcomes))


def scenario_config(config: SimConfig, scenario, index: int) -> SimConfig:
    """Copy of config running one scenario with its own seed stream [seed, index]."""
    base = config.seed_entropy if isinstance(config.seed_entropy, list) else [config.seed_entropy]
    return dataclasses.replace(config, error=scenario.error, disturbance=scenario.disturbance,
                               seed=tuple(base) + (int(index),))
