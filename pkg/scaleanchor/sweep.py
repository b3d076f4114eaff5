import os
import sys
import argparse
import logging

import pandas as pd

from .train import train_parser
from .evaluate import evaluate_parser
from .diagnostics import FLOAT_FORMAT
from .errors import UsageError
from .utils import (
    check_positive_int,
    check_nonnegative_int,
    check_resolution,
    check_input_file,
    int_list,
    float_list,
    write_resolved_config,
    run_command,
)

SWEEP_COLUMNS = ["levels", "lambda", "rmse_ratio", "train_rmse"]


def sweep_parser(parser):
    parser.description = "Grid search over the number of resolution levels and the frequency loss weight of FRL training."

    io_opts = parser.add_argument_group("Input/output")

    io_opts.add_argument(
        "--data",
        dest="data",
        required=True,
        help="reference dataset written by the gen-data command",
        type=os.path.abspath,
    )

    io_opts.add_argument(
        "-o",
        "--out",
        dest="out",
        required=True,
        help="output directory. Holds sweep.csv and one sub-directory per cell.",
        type=os.path.abspath,
    )

    io_opts.add_argument(
        "--config",
        dest="config",
        default=None,
        help="INI file of default flag values. Flags given on the command line take precedence.",
        type=os.path.abspath,
    )

    grid = parser.add_argument_group("Sweep options")

    grid.add_argument(
        "--levels-list",
        dest="levels_list",
        help="comma separated numbers of resolution levels (default=2,3)",
        type=int_list,
        default=[2, 3],
    )

    grid.add_argument(
        "--lambda-list",
        dest="lambda_list",
        help="comma separated frequency loss weights (default=0.01,0.1)",
        type=float_list,
        default=[0.01, 0.1],
    )

    grid.add_argument(
        "--train-res",
        dest="train_res",
        help="training resolution (default=32)",
        type=check_resolution,
        default=32,
    )

    grid.add_argument(
        "--resolutions",
        dest="resolutions",
        help="comma separated test resolutions (default=32,64,128)",
        type=int_list,
        default=[32, 64, 128],
    )

    grid.add_argument(
        "--horizon",
        dest="horizon",
        help="rollout horizon in snapshots (default=10)",
        type=check_positive_int,
        default=10,
    )

    grid.add_argument(
        "--n-freq",
        dest="n_freq",
        help="number of encoding frequencies per axis (default=8)",
        type=check_positive_int,
        default=8,
    )

    grid.add_argument(
        "--warmup",
        dest="warmup",
        help="frequency loss warm-up epochs (default=5)",
        type=check_nonnegative_int,
        default=5,
    )

    grid.add_argument(
        "--epochs",
        dest="epochs",
        help="maximum number of epochs per cell (default=100)",
        type=check_positive_int,
        default=100,
    )

    grid.add_argument(
        "--patience",
        dest="patience",
        help="early stopping patience in epochs (default=10)",
        type=check_positive_int,
        default=10,
    )

    grid.add_argument(
        "--seed",
        dest="seed",
        help="random seed shared by every cell (default=42)",
        type=int,
        default=42,
    )

    parser.add_argument(
        "--loglevel",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Set the logging threshold.",
    )

    parser.set_defaults(func=sweep)

    return parser


def cell_dir(out, levels, lam):
    return os.path.join(out, f"levels{levels}_lambda{lam:g}")


def sweep(args):
    # set logging up
    logging.basicConfig(
        level=args.loglevel,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    if len(args.levels_list) == 0 or len(args.lambda_list) == 0:
        raise UsageError("--levels-list and --lambda-list must both be non-empty")
    check_input_file(args.data)
    os.makedirs(args.out, exist_ok=True)

    resolutions = ",".join(str(r) for r in args.resolutions)
    rows = []
    for levels in args.levels_list:
        for lam in args.lambda_list:
            outdir = cell_dir(args.out, levels, lam)
            os.makedirs(outdir, exist_ok=True)
            ckpt_file = os.path.join(outdir, "model.ckpt")
            report_file = os.path.join(outdir, "eval_report.csv")
            logging.info(f"Sweep cell J={levels}, lambda={lam:g}")

            train_args = train_parser(argparse.ArgumentParser()).parse_args(
                [
                    "--data", args.data,
                    "--out", ckpt_file,
                    "--mode", "frl",
                    "--train-res", str(args.train_res),
                    "--levels", str(levels),
                    "--lambda", repr(lam),
                    "--warmup", str(args.warmup),
                    "--n-freq", str(args.n_freq),
                    "--epochs", str(args.epochs),
                    "--patience", str(args.patience),
                    "--seed", str(args.seed),
                    "--loglevel", args.loglevel,
                    "--quiet",
                ]
            )
            train_args.func(train_args)

            eval_args = evaluate_parser(argparse.ArgumentParser()).parse_args(
                [
                    "--checkpoint", ckpt_file,
                    "--data", args.data,
                    "--out", report_file,
                    "--resolutions", resolutions,
                    "--horizon", str(args.horizon),
                    "--loglevel", args.loglevel,
                ]
            )
            report = eval_args.func(eval_args)

            train_rmse = report.rows.loc[
                report.rows["resolution"] == args.train_res, "rmse"
            ].iloc[0]
            rows.append([levels, lam, report.rmse_ratio, train_rmse])

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    out_file = os.path.join(args.out, "sweep.csv")
    table.to_csv(out_file, index=False, float_format=FLOAT_FORMAT, na_rep="exact")
    write_resolved_config(args, out_file, "sweep")
    logging.info(f"Sweep table written to {out_file}")

    return table


def main():
    # set up and parse arguments
    parser = argparse.ArgumentParser()
    parser = sweep_parser(parser)

    # run sweep command
    run_command(parser, sys.argv[1:])

    return


if __name__ == "__main__":
    main()
