import sys
import argparse
from .__init__ import __version__

from .gen_data import gen_data_parser
from .train import train_parser
from .evaluate import evaluate_parser
from .probe import probe_parser
from .sweep import sweep_parser
from .utils import run_command


def main():

    parser = argparse.ArgumentParser()
    subparsers = parser.add_subparsers(help="select a subcommand", dest="command")

    parser.add_argument(
        "--version", action="version", version="%(prog)s " + __version__
    )

    # add subcommands
    gen_data_subparser = subparsers.add_parser("gen-data")
    gen_data_subparser = gen_data_parser(gen_data_subparser)

    train_subparser = subparsers.add_parser("train")
    train_subparser = train_parser(train_subparser)

    eval_subparser = subparsers.add_parser("eval")
    eval_subparser = evaluate_parser(eval_subparser)

    probe_subparser = subparsers.add_parser("probe")
    probe_subparser = probe_parser(probe_subparser)

    sweep_subparser = subparsers.add_parser("sweep")
    sweep_subparser = sweep_parser(sweep_subparser)

    # parse arguments and run function, config flags go after the subcommand
    run_command(parser, sys.argv[1:], offset=1)

    return


if __name__ == "__main__":
    main()
