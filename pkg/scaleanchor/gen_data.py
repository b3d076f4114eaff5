import os
import sys
import argparse
import logging

from .solver import SolverConfig, generate_dataset, write_dataset
from .utils import (
    check_positive_int,
    check_nonnegative_float,
    check_positive_float,
    check_resolution,
    write_resolved_config,
    run_command,
)

os.environ["OPENBLAS_NUM_THREADS"] = "1"


def gen_data_parser(parser):
    parser.description = "Generates reference trajectories of the 2D periodic convection-diffusion equation with a pseudo-spectral RK4 solver."

    io_opts = parser.add_argument_group("Input/output")

    io_opts.add_argument(
        "-o",
        "--out",
        dest="out",
        required=True,
        help="name of the dataset file to write.",
        type=os.path.abspath,
    )

    io_opts.add_argument(
        "--config",
        dest="config",
        default=None,
        help="INI file of default flag values. Flags given on the command line take precedence.",
        type=os.path.abspath,
    )

    solver = parser.add_argument_group("Solver options")

    solver.add_argument(
        "--resolution",
        dest="resolution",
        help="reference grid resolution (even, >= 4) (default=128)",
        type=check_resolution,
        default=128,
    )

    solver.add_argument(
        "--trajectories",
        dest="trajectories",
        help="number of independent trajectories (default=200)",
        type=check_positive_int,
        default=200,
    )

    solver.add_argument(
        "--snapshots",
        dest="snapshots",
        help="snapshots per trajectory, the initial condition included (default=50)",
        type=check_positive_int,
        default=50,
    )

    solver.add_argument(
        "--steps-per-snapshot",
        dest="steps_per_snapshot",
        help="RK4 steps between stored snapshots (default=10)",
        type=check_positive_int,
        default=10,
    )

    solver.add_argument(
        "--dt",
        dest="dt",
        help="RK4 timestep (default=0.001)",
        type=check_positive_float,
        default=1e-3,
    )

    solver.add_argument(
        "--nu",
        dest="nu",
        help="diffusion coefficient (default=0.01)",
        type=check_nonnegative_float,
        default=0.01,
    )

    solver.add_argument(
        "--vx",
        dest="vx",
        help="convection velocity along x (default=1.0)",
        type=float,
        default=1.0,
    )

    solver.add_argument(
        "--vy",
        dest="vy",
        help="convection velocity along y (default=0.5)",
        type=float,
        default=0.5,
    )

    solver.add_argument(
        "--forcing",
        dest="forcing",
        help="forcing term: none, or a fixed low mode k=(1,1) of amplitude 0.1 (default=none)",
        choices=["none", "lowmode"],
        default="none",
    )

    solver.add_argument(
        "--seed",
        dest="seed",
        help="random seed for the initial conditions (default=42)",
        type=int,
        default=42,
    )

    # Other options
    parser.add_argument(
        "-t",
        "--threads",
        dest="threads",
        help="number of threads to use (default=1)",
        type=check_positive_int,
        default=1,
    )

    parser.add_argument(
        "--loglevel",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Set the logging threshold.",
    )

    parser.set_defaults(func=gen_data)

    return parser


def gen_data(args):
    # set logging up
    logging.basicConfig(
        level=args.loglevel,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    cfg = SolverConfig(
        nu=args.nu,
        vx=args.vx,
        vy=args.vy,
        dt=args.dt,
        steps_per_snapshot=args.steps_per_snapshot,
        n_snapshots=args.snapshots,
        forcing=args.forcing,
        resolution=(args.resolution, args.resolution),
        seed=args.seed,
    )
    logging.info(f"Solver CFL number {cfg.cfl_number():.3f}")

    ds = generate_dataset(cfg, args.trajectories, n_jobs=args.threads)

    logging.info(f"Writing dataset to {args.out}")
    write_dataset(ds, args.out)
    write_resolved_config(args, args.out, "gen-data")

    return


def main():
    # set up and parse arguments
    parser = argparse.ArgumentParser()
    parser = gen_data_parser(parser)

    # run gen-data command
    run_command(parser, sys.argv[1:])

    return


if __name__ == "__main__":
    main()
