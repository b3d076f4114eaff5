import os
import sys
import argparse
import logging

import numpy as np

from .model import load_checkpoint
from .frl import Forecaster, DEPLOY_MODES
from .diagnostics import (
    probe_frequency_response,
    bandwidth,
    anchoring_ratio,
    write_freq_response,
    write_summary,
)
from .errors import UsageError
from .utils import (
    check_positive_int,
    check_nonnegative_int,
    check_positive_float,
    check_resolution,
    check_input_file,
    write_resolved_config,
    run_command,
)


def probe_parser(parser):
    parser.description = "Measures the empirical frequency response H(f) of a checkpoint with sinusoidal probes and reports its Bandwidth and Anchoring Ratio."

    io_opts = parser.add_argument_group("Input/output")

    io_opts.add_argument(
        "--checkpoint",
        dest="checkpoint",
        required=True,
        help="checkpoint written by the train command",
        type=os.path.abspath,
    )

    io_opts.add_argument(
        "-o",
        "--out",
        dest="out",
        required=True,
        help="name of the frequency response csv. A summary json is written next to it.",
        type=os.path.abspath,
    )

    io_opts.add_argument(
        "--config",
        dest="config",
        default=None,
        help="INI file of default flag values. Flags given on the command line take precedence.",
        type=os.path.abspath,
    )

    pr = parser.add_argument_group("Probe options")

    pr.add_argument(
        "--probe-res",
        dest="probe_res",
        help="probe grid resolution (default=128)",
        type=check_resolution,
        default=128,
    )

    pr.add_argument(
        "--f-min",
        dest="f_min",
        help="lowest probe frequency in cycles per unit length (default=0)",
        type=check_nonnegative_int,
        default=0,
    )

    pr.add_argument(
        "--f-max",
        dest="f_max",
        help="highest probe frequency, below the probe Nyquist (default=min(50, probe Nyquist - 1))",
        type=check_nonnegative_int,
        default=None,
    )

    pr.add_argument(
        "--f-step",
        dest="f_step",
        help="spacing of the probe frequencies (default=1)",
        type=check_positive_int,
        default=1,
    )

    pr.add_argument(
        "--amplitude",
        dest="amplitude",
        help="probe amplitude A (default=1.0)",
        type=check_positive_float,
        default=1.0,
    )

    pr.add_argument(
        "--repeats",
        dest="repeats",
        help="phase-shifted probes per frequency (default=10)",
        type=check_positive_int,
        default=10,
    )

    pr.add_argument(
        "--steps",
        dest="steps",
        help="predictor steps applied to each probe (default=1)",
        type=check_positive_int,
        default=1,
    )

    pr.add_argument(
        "--deploy",
        dest="deploy",
        help="how the checkpoint runs on grids finer than its training grid: auto uses the training grid only for checkpoints without frequency encoding (default=auto)",
        choices=DEPLOY_MODES,
        default="auto",
    )

    pr.add_argument(
        "--delta",
        dest="delta",
        help="offset around the training Nyquist for the Anchoring Ratio (default=4)",
        type=check_positive_float,
        default=4.0,
    )

    parser.add_argument(
        "--loglevel",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Set the logging threshold.",
    )

    parser.set_defaults(func=probe)

    return parser


def probe(args):
    # set logging up
    logging.basicConfig(
        level=args.loglevel,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    nyq = args.probe_res // 2
    f_max = min(50, nyq - 1) if args.f_max is None else args.f_max
    if f_max >= nyq:
        raise UsageError(f"--f-max {f_max} must be below the probe Nyquist {nyq}")
    if args.f_min > f_max:
        raise UsageError(f"--f-min {args.f_min} exceeds --f-max {f_max}")
    freqs = np.arange(args.f_min, f_max + 1, args.f_step)

    ckpt = load_checkpoint(check_input_file(args.checkpoint))
    train_res = ckpt.metadata.get("train_res")
    f_nyq = None if train_res is None else train_res / 2

    logging.info(
        f"Probing {len(freqs)} frequencies in [{freqs[0]}, {freqs[-1]}] at "
        f"{args.probe_res}x{args.probe_res}"
    )
    curve = probe_frequency_response(
        Forecaster(ckpt, deploy=args.deploy),
        args.probe_res,
        freqs,
        amplitude=args.amplitude,
        repeats=args.repeats,
        steps=args.steps,
        train_nyquist=f_nyq,
    )
    write_freq_response(curve, args.out)

    bw = bandwidth(curve)
    ar = None
    if f_nyq is None:
        logging.warning("checkpoint has no training resolution, Anchoring Ratio skipped")
    elif f_nyq - args.delta < freqs[0] or f_nyq + args.delta > freqs[-1]:
        logging.warning(
            f"probed range does not cover {f_nyq:g} +/- {args.delta:g}, Anchoring Ratio skipped"
        )
    else:
        ar = anchoring_ratio(curve, f_nyq, args.delta)
    logging.info(f"Bandwidth {bw}, Anchoring Ratio {ar}")

    summary = {
        "train_res": train_res,
        "train_nyquist": f_nyq,
        "probe_res": args.probe_res,
        "mode": ckpt.metadata.get("mode"),
        "seed": ckpt.metadata.get("seed"),
        "checkpoint": os.path.basename(args.checkpoint),
        "steps": args.steps,
        "deploy": args.deploy,
        "delta": args.delta,
        "bandwidth": bw,
        "anchoring_ratio": ar,
    }
    write_summary(summary, os.path.splitext(args.out)[0] + ".summary.json")
    write_resolved_config(args, args.out, "probe")

    return curve


def main():
    # set up and parse arguments
    parser = argparse.ArgumentParser()
    parser = probe_parser(parser)

    # run probe command
    run_command(parser, sys.argv[1:])

    return


if __name__ == "__main__":
    main()
