import os
import sys
import argparse
import logging
import configparser

from .errors import ScaleAnchorError, UsageError, FormatError


def check_positive_int(value):
    ivalue = int(value)
    if ivalue <= 0:
        raise argparse.ArgumentTypeError("%s is an invalid positive int value" % value)
    return ivalue


def check_nonnegative_int(value):
    ivalue = int(value)
    if ivalue < 0:
        raise argparse.ArgumentTypeError(
            "%s is an invalid non-negative int value" % value
        )
    return ivalue


def check_positive_float(value):
    ivalue = float(value)
    if ivalue <= 0:
        raise argparse.ArgumentTypeError(
            "%s is an invalid positive float value" % value
        )
    return ivalue


def check_cutoff(value):
    if str(value).strip().lower() == "auto":
        return None
    return check_positive_float(value)


def check_nonnegative_float(value):
    ivalue = float(value)
    if ivalue < 0:
        raise argparse.ArgumentTypeError(
            "%s is an invalid non-negative float value" % value
        )
    return ivalue


def check_resolution(value):
    ivalue = int(value)
    if ivalue < 4 or ivalue % 2 != 0:
        raise argparse.ArgumentTypeError(
            "%s is an invalid resolution (must be even and >= 4)" % value
        )
    return ivalue


def int_list(value):
    try:
        values = [int(v) for v in value.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError("%s is not a comma separated int list" % value)
    return values


def float_list(value):
    try:
        values = [float(v) for v in value.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            "%s is not a comma separated float list" % value
        )
    return values


def band_list(value):
    # "10:20,20:30" -> [(10.0, 20.0), (20.0, 30.0)]
    bands = []
    for item in value.replace(" ", "").split(","):
        if item == "":
            continue
        try:
            lo, hi = item.split(":")
            bands.append((float(lo), float(hi)))
        except ValueError:
            raise argparse.ArgumentTypeError("%s is not a valid band list" % value)
    return bands


def check_input_file(path):
    if not os.path.isfile(path):
        raise FormatError(f"Path does not exist or is not a file! {path}")
    return path


def config_to_argv(config_file):
    """Expands a flat INI config file into command line flags.

    Section names are labels only. Keys are flag names written with dashes or
    underscores. Boolean values switch store_true flags on or off, lists are
    written space or comma separated.
    """
    if not os.path.isfile(config_file):
        raise UsageError(f"Config file not found: {config_file}")

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(config_file, "r", encoding="utf8") as infile:
            parser.read_file(infile)
    except configparser.Error as e:
        raise UsageError(f"Could not parse config file {config_file}: {e}")

    argv = []
    for section in parser.sections():
        for key, value in parser.items(section):
            flag = "--" + key.strip().replace("_", "-")
            value = value.strip()
            if value.lower() in ("true", "yes", "on"):
                argv.append(flag)
            elif value.lower() in ("false", "no", "off", ""):
                continue
            elif key in ("ablate",):
                argv.append(flag)
                argv += value.replace(",", " ").split()
            else:
                argv += [flag, value]
    return argv


def write_resolved_config(args, output_file, section):
    """Writes the resolved arguments of a command next to its output."""
    config = configparser.ConfigParser(interpolation=None)
    config.optionxform = str
    config[section] = {}
    for key in sorted(vars(args)):
        value = getattr(args, key)
        if key in ("func", "config", "command") or value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            if len(value) > 0 and isinstance(value[0], (list, tuple)):
                value = ",".join(f"{lo:g}:{hi:g}" for lo, hi in value)
            elif key == "ablate":
                value = " ".join(str(v) for v in value)
            else:
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        config[section][key.replace("_", "-")] = str(value)

    config_file = output_file + ".config.ini"
    with open(config_file, "w", encoding="utf8") as outfile:
        config.write(outfile)
    logging.debug("Resolved configuration written to %s", config_file)

    return config_file


def expand_config(argv, offset=0):
    """Inserts the flags of a ``--config`` file at ``argv[offset]``.

    Flags given on the command line come later and therefore win.
    """
    argv = list(argv)
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            return argv[:offset] + config_to_argv(argv[i + 1]) + argv[offset:]
        if arg.startswith("--config="):
            return argv[:offset] + config_to_argv(arg.split("=", 1)[1]) + argv[offset:]
    return argv


def run_command(parser, argv=None, offset=0):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parser.parse_args(expand_config(argv, offset))
    except ScaleAnchorError as e:
        logging.error(str(e))
        sys.exit(e.exit_code)

    try:
        func = args.func
    except AttributeError:
        parser.error("Too few inputs. For help, run scaleanchor --help")

    try:
        func(args)
    except ScaleAnchorError as e:
        logging.error(str(e))
        sys.exit(e.exit_code)

    return
