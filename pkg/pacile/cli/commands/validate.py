"""
`validate`: run the numerical experiments and fail on any broken check
"""
import argparse
import logging

from pacile.cli.deps import load_config, output_dir
from pacile.errors import ValidationFailure
from pacile.schemas import ValidateConfig
from pacile.validation_suite import resolve_names, run_all

logger = logging.getLogger(__name__)


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("validate", parents=[common], help="run validation experiments")
    parser.add_argument("experiments", nargs="*", help="experiment names, or 'all' (default)")
    parser.set_defaults(handler=cmd_validate)


def cmd_validate(args: argparse.Namespace) -> int:
    if args.experiments:
        args.set = list(args.set) + [f"experiments={','.join(args.experiments)}"]
    config = load_config(ValidateConfig, args)
    names = resolve_names(config.experiments)
    results = run_all(output_dir(config), config.seed, config.threads, names)

    failed = [f"{r.name}: {c.name}" for r in results for c in r.checks if not c.passed]
    if failed:
        raise ValidationFailure(f"{len(failed)} check(s) failed: " + "; ".join(failed))
    logger.info(f"All {len(results)} experiments passed")
    return 0
