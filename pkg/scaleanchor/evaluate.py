import os
import sys
import argparse
import logging

import numpy as np

from .solver import read_dataset, downsample_dataset, split_indices
from .model import load_checkpoint
from .frl import Forecaster, DEPLOY_MODES
from .diagnostics import (
    error_table,
    rollout_band_energy,
    expected_solver_error_ratio,
    write_eval_report,
    write_band_energy,
    write_summary,
)
from .errors import UsageError
from .utils import (
    check_positive_int,
    check_cutoff,
    check_resolution,
    check_input_file,
    int_list,
    band_list,
    write_resolved_config,
    run_command,
)


def summary_path(out):
    return os.path.splitext(out)[0] + ".summary.json"


def evaluate_parser(parser):
    parser.description = "Equal physical-time rollout errors of a checkpoint at several test resolutions (zero-shot super-resolution)."

    io_opts = parser.add_argument_group("Input/output")

    io_opts.add_argument(
        "--checkpoint",
        dest="checkpoint",
        required=True,
        help="checkpoint written by the train command",
        type=os.path.abspath,
    )

    io_opts.add_argument(
        "--data",
        dest="data",
        required=True,
        help="reference dataset at or above the highest test resolution",
        type=os.path.abspath,
    )

    io_opts.add_argument(
        "-o",
        "--out",
        dest="out",
        required=True,
        help="name of the eval report csv. A summary json is written next to it.",
        type=os.path.abspath,
    )

    io_opts.add_argument(
        "--config",
        dest="config",
        default=None,
        help="INI file of default flag values. Flags given on the command line take precedence.",
        type=os.path.abspath,
    )

    ev = parser.add_argument_group("Evaluation options")

    ev.add_argument(
        "--resolutions",
        dest="resolutions",
        help="comma separated test resolutions, must include the training resolution (default=32,64,128)",
        type=int_list,
        default=[32, 64, 128],
    )

    ev.add_argument(
        "--horizon",
        dest="horizon",
        help="rollout horizon in snapshots (default=10)",
        type=check_positive_int,
        default=10,
    )

    ev.add_argument(
        "--cutoff",
        dest="cutoff",
        help="radial cutoff of the Error Ratio, or auto for the training Nyquist (default=auto)",
        type=check_cutoff,
        default=None,
    )

    ev.add_argument(
        "--deploy",
        dest="deploy",
        help="how the checkpoint runs on grids finer than its training grid: auto uses the training grid only for checkpoints without frequency encoding (default=auto)",
        choices=DEPLOY_MODES,
        default="auto",
    )

    ev.add_argument(
        "--solver-order",
        dest="solver_order",
        help="order p of the numerical scheme whose error ratio alpha^-p is reported for comparison (default=2)",
        type=check_positive_int,
        default=2,
    )

    band = parser.add_argument_group("Band energy options")

    band.add_argument(
        "--band-energy-res",
        dest="band_energy_res",
        help="also track radial band energies of a rollout at this resolution (default=off)",
        type=check_resolution,
        default=None,
    )

    band.add_argument(
        "--band-energy-steps",
        dest="band_energy_steps",
        help="rollout steps tracked for band energies (default=50)",
        type=check_positive_int,
        default=50,
    )

    band.add_argument(
        "--bands",
        dest="bands",
        help="comma separated radial bands lo:hi (default=10:20,20:30,30:40,40:50)",
        type=band_list,
        default=[(10.0, 20.0), (20.0, 30.0), (30.0, 40.0), (40.0, 50.0)],
    )

    band.add_argument(
        "--band-energy-out",
        dest="band_energy_out",
        help="band energy csv (default=band_energy.csv next to the eval report)",
        type=os.path.abspath,
        default=None,
    )

    parser.add_argument(
        "--loglevel",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Set the logging threshold.",
    )

    parser.set_defaults(func=evaluate)

    return parser


def evaluate(args):
    # set logging up
    logging.basicConfig(
        level=args.loglevel,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    if len(args.resolutions) == 0:
        raise UsageError("--resolutions must list at least one resolution")

    ckpt = load_checkpoint(check_input_file(args.checkpoint))
    truth = read_dataset(check_input_file(args.data))
    train_res = int(ckpt.metadata.get("train_res", min(args.resolutions)))
    forecaster = Forecaster(ckpt, deploy=args.deploy)

    logging.info(
        f"Evaluating {ckpt.metadata.get('mode', 'unknown')} checkpoint trained at "
        f"{train_res}x{train_res} on {args.resolutions}"
    )
    report = error_table(
        forecaster, truth, args.resolutions, args.horizon, train_res, args.cutoff
    )
    write_eval_report(report, args.out)

    alpha = max(args.resolutions) / train_res
    summary = {
        "train_res": train_res,
        "mode": ckpt.metadata.get("mode"),
        "seed": ckpt.metadata.get("seed"),
        "checkpoint": os.path.basename(args.checkpoint),
        "dataset": os.path.basename(args.data),
        "horizon": args.horizon,
        "deploy": args.deploy,
        "cutoff": report.provenance["cutoff"],
        "rmse_ratio": report.rmse_ratio,
        "solver_error_ratio": expected_solver_error_ratio(args.solver_order, alpha),
    }
    logging.info(
        f"RMSE_Ratio {report.rmse_ratio_label} vs {summary['solver_error_ratio']:.4g} "
        f"for an order {args.solver_order} solver refined by {alpha:g}"
    )

    if args.band_energy_res is not None:
        test_idx = split_indices(truth.n_traj)[2]
        u0 = downsample_dataset(truth.subset(test_idx[:1]), args.band_energy_res).data[0, 0]
        energies = rollout_band_energy(
            forecaster, np.asarray(u0, dtype=np.float64), args.band_energy_steps, args.bands
        )
        band_out = args.band_energy_out or os.path.join(
            os.path.dirname(args.out), "band_energy.csv"
        )
        logging.info(f"Writing band energies to {band_out}")
        write_band_energy(energies, band_out)

    write_summary(summary, summary_path(args.out))
    write_resolved_config(args, args.out, "eval")

    return report


def main():
    # set up and parse arguments
    parser = argparse.ArgumentParser()
    parser = evaluate_parser(parser)

    # run eval command
    run_command(parser, sys.argv[1:])

    return


if __name__ == "__main__":
    main()
