import os
import sys
import argparse
import logging

from .solver import read_dataset, downsample_dataset
from .model import PredictorConfig, OptimizerConfig, ACTIVATIONS, save_checkpoint
from .frl import FrlConfig, TrainConfig, train as train_predictor
from .errors import UsageError, DataValidityError
from .utils import (
    check_positive_int,
    check_nonnegative_int,
    check_positive_float,
    check_nonnegative_float,
    check_resolution,
    check_input_file,
    float_list,
    write_resolved_config,
    run_command,
)

DEFAULT_LAMBDA = 0.1
ABLATIONS = ("multires", "freqenc", "freqloss")


def train_parser(parser):
    parser.description = "Trains a one-step predictor at a low resolution, either as a plain baseline or with Frequency Representation Learning (FRL)."

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
        help="name of the checkpoint file to write.",
        type=os.path.abspath,
    )

    io_opts.add_argument(
        "--config",
        dest="config",
        default=None,
        help="INI file of default flag values. Flags given on the command line take precedence.",
        type=os.path.abspath,
    )

    frl = parser.add_argument_group("FRL options")

    frl.add_argument(
        "--mode",
        dest="mode",
        help="training mode (default=frl)",
        choices=["baseline", "frl"],
        default="frl",
    )

    frl.add_argument(
        "--train-res",
        dest="train_res",
        help="training resolution; the reference data are low-pass downsampled to it (default=32)",
        type=check_resolution,
        default=32,
    )

    frl.add_argument(
        "--levels",
        dest="levels",
        help="number of resolution levels J of the multi-resolution data (default=3)",
        type=check_positive_int,
        default=3,
    )

    frl.add_argument(
        "--level-sampling",
        dest="level_sampling",
        help="comma separated sampling probabilities, one per level (default=0.5,0.5 over the two finest levels)",
        type=float_list,
        default=None,
    )

    frl.add_argument(
        "--lambda",
        "--lam",
        dest="lam",
        help="weight of the frequency consistency loss (default=0.1)",
        type=check_nonnegative_float,
        default=None,
    )

    frl.add_argument(
        "--warmup",
        dest="warmup",
        help="epochs over which the frequency loss weight ramps up linearly (default=5)",
        type=check_nonnegative_int,
        default=5,
    )

    frl.add_argument(
        "--n-freq",
        dest="n_freq",
        help="number of Nyquist-normalised encoding frequencies per axis (default=8)",
        type=check_positive_int,
        default=8,
    )

    frl.add_argument(
        "--alpha",
        dest="alpha",
        help="exponent of the radial frequency weights (default=1.0)",
        type=check_nonnegative_float,
        default=1.0,
    )

    frl.add_argument(
        "--mu",
        dest="mu",
        help="weight of the mean-conservation loss (default=0)",
        type=check_nonnegative_float,
        default=0.0,
    )

    frl.add_argument(
        "--ablate",
        dest="ablate",
        help="FRL components to switch off",
        choices=ABLATIONS,
        nargs="+",
        default=None,
    )

    model = parser.add_argument_group("Model options")

    model.add_argument(
        "--hidden",
        dest="hidden",
        help="hidden channels (default=32)",
        type=check_positive_int,
        default=32,
    )

    model.add_argument(
        "--blocks",
        dest="blocks",
        help="number of residual conv blocks (default=4)",
        type=check_nonnegative_int,
        default=4,
    )

    model.add_argument(
        "--kernel",
        dest="kernel",
        help="odd convolution kernel size (default=3)",
        type=check_positive_int,
        default=3,
    )

    model.add_argument(
        "--activation",
        dest="activation",
        help="activation function (default=tanh)",
        choices=sorted(ACTIVATIONS),
        default="tanh",
    )

    opt = parser.add_argument_group("Training options")

    opt.add_argument(
        "--epochs",
        dest="epochs",
        help="maximum number of epochs (default=100)",
        type=check_positive_int,
        default=100,
    )

    opt.add_argument(
        "--patience",
        dest="patience",
        help="early stopping patience in epochs (default=10)",
        type=check_positive_int,
        default=10,
    )

    opt.add_argument(
        "--batch-size",
        dest="batch_size",
        help="pairs per batch (default=8)",
        type=check_positive_int,
        default=8,
    )

    opt.add_argument(
        "--lr",
        dest="lr",
        help="AdamW learning rate (default=1e-3)",
        type=check_positive_float,
        default=1e-3,
    )

    opt.add_argument(
        "--weight-decay",
        dest="weight_decay",
        help="AdamW decoupled weight decay (default=1e-5)",
        type=check_nonnegative_float,
        default=1e-5,
    )

    opt.add_argument(
        "--max-norm",
        dest="max_norm",
        help="global gradient norm clipping threshold (default=1.0)",
        type=check_positive_float,
        default=1.0,
    )

    opt.add_argument(
        "--seed",
        dest="seed",
        help="random seed for initialisation and batching (default=42)",
        type=int,
        default=42,
    )

    # Other options
    parser.add_argument(
        "--quiet",
        dest="quiet",
        help="hide the epoch progress bar",
        action="store_true",
        default=False,
    )

    parser.add_argument(
        "--loglevel",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Set the logging threshold.",
    )

    parser.set_defaults(func=train)

    return parser


def frl_config_from_args(args):
    ablate = set(args.ablate or [])
    if args.mode == "baseline":
        if ablate:
            raise UsageError("--ablate only applies to --mode frl")
        if args.lam is not None:
            logging.warning("--lambda is ignored in baseline mode")

    cfg = FrlConfig(
        levels=args.levels,
        level_sampling=args.level_sampling,
        n_freq=args.n_freq,
        lam=DEFAULT_LAMBDA if args.lam is None else args.lam,
        warmup_epochs=args.warmup,
        alpha_radial=args.alpha,
        mu_phys=args.mu,
        use_multires="multires" not in ablate,
        use_freq_enc="freqenc" not in ablate,
        use_freq_loss="freqloss" not in ablate,
    )
    try:
        return cfg.validate()
    except DataValidityError as e:
        raise UsageError(str(e))


def train(args):
    # set logging up
    logging.basicConfig(
        level=args.loglevel,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    cfg = frl_config_from_args(args)
    model_cfg = PredictorConfig(
        in_channels=cfg.in_channels,
        hidden_channels=args.hidden,
        n_blocks=args.blocks,
        kernel=args.kernel,
        activation=args.activation,
    )
    train_cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        patience=args.patience,
        seed=args.seed,
        optimizer=OptimizerConfig(
            lr=args.lr, weight_decay=args.weight_decay, max_norm=args.max_norm
        ),
        show_progress=not args.quiet,
    )

    logging.info(f"Loading {check_input_file(args.data)}")
    reference = read_dataset(args.data)
    ds = downsample_dataset(reference, args.train_res)

    ckpt = train_predictor(ds, args.mode, cfg, train_cfg, model_cfg)
    ckpt.metadata["dataset"] = os.path.basename(args.data)
    ckpt.metadata["reference_res"] = reference.resolution[0]

    logging.info(f"Saving checkpoint to {args.out}")
    save_checkpoint(ckpt, args.out)
    write_resolved_config(args, args.out, "train")

    return


def main():
    # set up and parse arguments
    parser = argparse.ArgumentParser()
    parser = train_parser(parser)

    # run train command
    run_command(parser, sys.argv[1:])

    return


if __name__ == "__main__":
    main()
