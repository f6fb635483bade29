import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from noisegen import __version__
from noisegen.commands import COMMANDS
from noisegen.config import settings
from noisegen.config.logging import configure_logging
from noisegen.errors import NoisegenError

logger = logging.getLogger("noisegen")

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_USAGE = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisegen", description="Camera-aware raw noise generation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help=f"default: {settings.log_level} (NOISEGEN_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse sort avec 2 sur erreur d'usage, 0 sur --help
        return int(e.code or 0)

    configure_logging(args.log_level or settings.log_level)
    logger.debug("Commande %s (noisegen %s, Python %s)", args.command, __version__, sys.version.split()[0])
    try:
        return args.handler(args)
    except NoisegenError as e:
        logger.error("%s: %s", type(e).__name__, e)
        if getattr(e, "snapshot", None):
            logger.error("Instantané: %s", e.snapshot)
        return e.exit_code
    except ValidationError as e:
        logger.error("Configuration invalide: %s", e)
        return EXIT_USAGE
    except OSError as e:
        logger.error("Erreur d'E/S: %s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
