"""
Table-shaped summaries of simulation results: one row per scenario with a
"mean(sd)" MSE column per model, and per-curve random-effect tables.
"""
from typing import List, Sequence, Tuple

import pandas as pd

from rtpr.simulation.scenarios import Scenario
from rtpr.simulation.simulator import SimResult


def mean_sd(mean: float, sd: float, digits: int = 3) -> str:
    return "{m:.{d}f}({s:.{d}f})".format(m=mean, s=sd, d=digits)


def _scenario_columns(scenario: Scenario) -> dict:
    return {"error": scenario.error.label, "disturbance": scenario.disturbance.label,
            "gamma": scenario.disturbance.gamma}


def summarize_scenarios(results: Sequence[Tuple[Scenario, SimResult]], digits: int = 3) -> pd.DataFrame:
    """Rows per (error kind, disturbance, gamma); a "mean(sd)" MSE cell and a failure count per model."""
    rows = []
    for scenario, result in results:
        row = _scenario_columns(scenario)
        for model in result.models:
            row[model] = mean_sd(result.mse_mean(model), result.mse_sd(model), digits)
        for model in result.models:
            row[model + "_failed"] = result.failures(model)
        rows.append(row)
    return pd.DataFrame(rows)


def r_hat_table(results: Sequence[Tuple[Scenario, SimResult]], digits: int = 3) -> pd.DataFrame:
    """
    Rows per (scenario, model, group), one "mean(sd)" column per curve, plus
    the rate at which the disturbed curve was flagged.
    """
    rows = []
    for scenario, result in results:
        for model in result.models:
            values = result.r_hat_values(model)
            if values.size == 0:
                continue
            means = result.r_hat_mean(model)
            sds = result.r_hat_sd(model)
            rates = result.flag_rate(model)
            for i in range(means.shape[0]):
                row = _scenario_columns(scenario)
                row.update({"model": model, "group": i + 1})
                for j in range(means.shape[1]):
                    row["r{}".format(j + 1)] = mean_sd(means[i, j], sds[i, j], digits)
                row["flag_rate"] = float(rates[i])
                rows.append(row)
    return pd.DataFrame(rows)


def replications_frame(results: Sequence[Tuple[Scenario, SimResult]]) -> pd.DataFrame:
    """Raw per-replication rows of every scenario."""
    frames: List[pd.DataFrame] = []
    for index, (scenario, result) in enumerate(results):
        frame = result.to_frame()
        for key, value in reversed(list(_scenario_columns(scenario).items())):
            frame.insert(0, key, value)
        frame.insert(0, "scenario", index)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def curves_frame(results: Sequence[Tuple[Scenario, SimResult]]) -> pd.DataFrame:
    """Plot-ready curves of the first replication of every scenario that kept them."""
    frames = []
    for index, (scenario, result) in enumerate(results):
        if result.curves is None:
            continue
        frame = result.curves.copy()
        for key, value in reversed(list(_scenario_columns(scenario).items())):
            frame.insert(0, key, value)
        frame.insert(0, "scenario", index)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
