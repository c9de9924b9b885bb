"""
Command-line entry point: `python -m pacile <command> [options]`
"""
from typing import List, Optional
import argparse
import logging
import sys

from pydantic import ValidationError

from pacile.cli.commands_v1 import register_commands
from pacile.config import settings
from pacile.errors import ConfigError, PacIleError

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: Optional[str] = None) -> None:
    """Stream handler plus an optional file handler from settings.LOG_FILE"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if settings.LOG_FILE:
        handlers.append(logging.FileHandler(settings.LOG_FILE))
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
    logging.captureWarnings(True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        type=str.upper,
        help="logging level (default from PACILE_LOG_LEVEL)",
    )

    parser = argparse.ArgumentParser(
        prog=settings.PROJECT_NAME,
        description="PAC-Bayes learning and certificates for structured prediction with implicit loss embeddings",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_commands(subparsers, common)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        return args.handler(args)
    except ValidationError as e:
        error = ConfigError(f"invalid configuration: {e}")
        logger.error(error.detail)
        return error.exit_code
    except PacIleError as e:
        logger.error(f"{args.command} failed: {e.detail}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
