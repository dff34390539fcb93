import argparse
import logging
import os
import sys

import numpy as np
import pandas as pd

from rtpr.estimation.fitter import fit
from rtpr.prediction.outliers import OutlierRule, outlier_scores
from rtpr.prediction.predictor import predict_new
from rtpr.simulation.simulator import run_experiment, scenario_config
from rtpr.simulation.tables import curves_frame, r_hat_table, replications_frame, summarize_scenarios
from rtpr.utils.artifacts import read_fit_artifact, write_fit_artifact, write_table
from rtpr.utils.datasets import drop_curves, load_dataset
from rtpr.utils.errors import EstimationError, InputError, RtprError
from rtpr.utils.parse_config import parse_run_config, parse_sim_config

logger = logging.getLogger("rtpr")

DEFAULT_RUN_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config_files", "base_example.yaml")


def parse_grid(spec: str) -> np.ndarray:
    """ "a:b:m" -> m evenly spaced points from a to b inclusive."""
    try:
        a, b, m = spec.split(":")
        a, b, m = float(a), float(b), int(m)
    except ValueError as err:
        raise InputError("--grid takes start:end:count, got \"{}\"".format(spec)) from err
    if m < 1:
        raise InputError("--grid needs a positive point count, got {}".format(m))
    return np.linspace(a, b, m)


def _with_suffix(path: str, suffix: str) -> str:
    stem, ext = os.path.splitext(path)
    return "{}_{}{}".format(stem, suffix, ext or ".csv")


def cmd_fit(args) -> int:
    parsed = parse_run_config(args.config, overrides={"seed": args.seed, "rule_mult": args.rule_mult})
    data = drop_curves(load_dataset(args.data), args.drop or [])
    provenance = {"command": "fit", "config": parsed["echo"], "seed": parsed["seed"], "data": args.data,
                  "drop": sorted(args.drop or [])}
    try:
        result = fit(parsed["model"], data, parsed["fit_options"])
    except EstimationError as err:
        if err.result is not None:
            write_fit_artifact(err.result, args.out, provenance)
            logger.error("Wrote the non-converged fit to %s for inspection", args.out)
        raise
    write_fit_artifact(result, args.out, provenance)
    for i, g in enumerate(result.data.groups):
        logger.info("Group %d: r_hat = %s", g.label, np.array2string(result.r_hat.group(i), precision=4))
    return 0


def _query_points(args, result):
    """(group index, m x p inputs) pairs from --grid or a --query file."""
    if args.grid is not None:
        if result.data.p != 1:
            raise InputError("--grid needs a one-dimensional design; this fit has p = {}".format(result.data.p))
        Z = parse_grid(args.grid).reshape(-1, 1)
        return [(i, Z) for i in range(result.data.I)]
    if args.query is None:
        return [(i, g.X) for i, g in enumerate(result.data.groups)]
    query = pd.read_csv(os.path.expanduser(args.query), comment="#", float_precision="round_trip")
    covariates = ["x{}".format(l + 1) for l in range(result.data.p)]
    if "group" not in query.columns or any(c not in query.columns for c in covariates):
        raise InputError("query file needs columns group,{}; got {}".format(",".join(covariates), ",".join(query.columns)))
    labels = {g.label: i for i, g in enumerate(result.data.groups)}
    points = []
    for label, qdf in query.groupby("group", sort=True):
        if int(label) not in labels:
            raise InputError("query group {} is not in the fit".format(label))
        points.append((labels[int(label)], qdf[covariates].to_numpy(dtype=float)))
    return points


def cmd_predict(args) -> int:
    result, config = read_fit_artifact(args.fit)
    frames = []
    for i, Z in _query_points(args, result):
        prediction = predict_new(result, i, Z)
        frame = pd.DataFrame(index=range(Z.shape[0]))
        frame["group"] = result.data.groups[i].label
        if Z.shape[1] == 1:
            frame["x"] = Z[:, 0]
        else:
            for l in range(Z.shape[1]):
                frame["x{}".format(l + 1)] = Z[:, l]
        frame["mean"] = prediction.mean
        frame["sd"] = prediction.sd
        frame["lower95"] = prediction.lower95
        frame["upper95"] = prediction.upper95
        frames.append(frame)
    provenance = {"command": "predict", "config": config, "fit": args.fit, "grid": args.grid, "query": args.query}
    write_table(pd.concat(frames, ignore_index=True), args.out, provenance)
    return 0


def cmd_diagnose(args) -> int:
    result, config = read_fit_artifact(args.fit)
    c_mult = args.rule_mult if args.rule_mult is not None else config.get("config", {}).get("rule_mult")
    rule = OutlierRule() if c_mult is None else OutlierRule(float(c_mult))
    report = outlier_scores(result, rule)
    provenance = {"command": "diagnose", "config": config, "fit": args.fit, "rule": rule.to_dict()}
    write_table(report.to_frame(), args.out, provenance)
    flagged = report.flagged_ids()
    if flagged:
        logger.info("Flagged curves (group, curve): %s", flagged)
    else:
        logger.info("No curve flagged at c_mult = %g", rule.c_mult)
    return 0


def cmd_simulate(args) -> int:
    parsed = parse_sim_config(args.config, overrides={"reps": args.reps, "seed": args.seed})
    sim = parsed["sim"]
    results = []
    for k, scenario in enumerate(parsed["scenarios"]):
        config = scenario_config(sim, scenario, k)
        logger.info("Scenario %d of %d: %s", k + 1, len(parsed["scenarios"]), scenario.label)
        results.append((scenario, run_experiment(config, parsed["models"], parsed["fit_options"],
                                                 num_proc=args.num_proc, curves=True)))
    provenance = {"command": "simulate", "config": parsed["echo"], "seed": parsed["echo"]["seed"]}
    write_table(summarize_scenarios(results), args.out, provenance)
    write_table(replications_frame(results), _with_suffix(args.out, "replications"), provenance)
    write_table(curves_frame(results), _with_suffix(args.out, "curves"), provenance)
    r_table = r_hat_table(results)
    if not r_table.empty:
        write_table(r_table, _with_suffix(args.out, "rhat"), provenance)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtpr", description="Robust process regression for batches of curves.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    commands = parser.add_subparsers(dest="command", required=True)

    fit_parser = commands.add_parser("fit", help="Estimate a model and write a fit artifact.")
    fit_parser.add_argument("--data", required=True, help="Dataset csv: group,curve,x1..xp,y.")
    fit_parser.add_argument("--config", default=DEFAULT_RUN_CONFIG,
                            help="Run config yaml; see rtpr/config_files/base_example.yaml.")
    fit_parser.add_argument("--out", required=True, help="Fit artifact (json) to write.")
    fit_parser.add_argument("--drop", action="append", metavar="GROUP:CURVE",
                            help="Leave a curve out of the fit; repeatable.")
    fit_parser.add_argument("--seed", type=int, default=None)
    fit_parser.add_argument("--rule-mult", type=float, default=None)
    fit_parser.set_defaults(func=cmd_fit)

    predict_parser = commands.add_parser("predict", help="Predict the latent curves from a fit artifact.")
    predict_parser.add_argument("--fit", required=True)
    where = predict_parser.add_mutually_exclusive_group()
    where.add_argument("--grid", default=None, help="start:end:count grid for every group (p = 1).")
    where.add_argument("--query", default=None, help="csv of new inputs: group,x1..xp.")
    predict_parser.add_argument("--out", required=True)
    predict_parser.set_defaults(func=cmd_predict)

    simulate_parser = commands.add_parser("simulate", help="Run a simulation config.")
    simulate_parser.add_argument("--config", required=True)
    simulate_parser.add_argument("--out", required=True, help="Summary table; raw replications, curves and r_hat "
                                                              "tables are written next to it.")
    simulate_parser.add_argument("--reps", type=int, default=None)
    simulate_parser.add_argument("--seed", type=int, default=None)
    simulate_parser.add_argument("--num-proc", type=int, default=None,
                                 help="Worker processes; defaults to $RTPR_NUM_PROC or 1.")
    simulate_parser.set_defaults(func=cmd_simulate)

    diagnose_parser = commands.add_parser("diagnose", help="Flag outlying curves of a fit artifact.")
    diagnose_parser.add_argument("--fit", required=True)
    diagnose_parser.add_argument("--out", required=True)
    diagnose_parser.add_argument("--rule-mult", type=float, default=None)
    diagnose_parser.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    logger.debug(args)
    try:
        return args.func(args)
    except RtprError as err:
        sys.stderr.write("rtpr: {}: {}\n".format(type(err).__name__, err))
        return err.exit_code
    except OSError as err:
        sys.stderr.write("rtpr: InputError: {}\n".format(err))
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
