"""
Command-line entry point.

Usage:
    repmode gen-data
    repmode train --config run.toml --set train.epochs=5
    repmode eval --checkpoint runs/default/best.rpmk
    repmode check-equiv
    repmode extend --checkpoint runs/default/best.rpmk
    repmode bench
    repmode gates --checkpoint runs/default/best.rpmk

Exit codes: 0 success, 1 contract or tolerance failure, 2 usage or
configuration error, 3 I/O or file format error.
"""

from __future__ import annotations

import argparse
import importlib
import logging
import sys
from collections.abc import Sequence

from . import __version__
from .commands import COMMANDS
from .commands.base import Subcommand
from .conf import load_config
from .exceptions import ConfigError, FormatError, RepModeError

logger = logging.getLogger("repmode")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3

LOG_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG, 3: logging.DEBUG}


def load_command(name: str) -> Subcommand:
    module = importlib.import_module(f"repmode.commands.{COMMANDS[name]}")
    return module  # type: ignore[return-value]


def _common_options() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", "-c", type=str, help="TOML run configuration")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one setting (value parsed as TOML); repeatable",
    )
    parser.add_argument("--preset", choices=["desk", "smoke", "large"], help="Settings preset")
    parser.add_argument(
        "--verbosity",
        "-v",
        type=int,
        choices=[0, 1, 2, 3],
        default=1,
        help="0 warnings only, 1 progress (default), 2-3 debug output",
    )
    return parser


def build_parser(commands: dict[str, Subcommand]) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repmode",
        description="Task-conditional re-parameterizable 3D convolution toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    common = _common_options()
    for name, command in commands.items():
        sub = subparsers.add_parser(name, help=command.HELP, parents=[common])
        command.add_arguments(sub)
    return parser


def configure_logging(verbosity: int) -> None:
    logging.basicConfig(
        level=LOG_LEVELS.get(verbosity, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


def main(argv: Sequence[str] | None = None) -> int:
    commands = {name: load_command(name) for name in COMMANDS}
    parser = build_parser(commands)
    options = vars(parser.parse_args(argv))
    configure_logging(options["verbosity"])
    command = commands[options["command"]]

    try:
        config = load_config(options["config"], options["overrides"], options["preset"])
        command.run(config, options)
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        logger.error(f"I/O error: {exc}")
        return EXIT_IO
    except RepModeError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
