import argparse

from pacile.cli.commands import certify, sweep, train, validate


def register_commands(subparsers, common: argparse.ArgumentParser) -> None:
    """Attach every command parser"""
    train.register(subparsers, common)
    certify.register(subparsers, common)
    sweep.register(subparsers, common)
    validate.register(subparsers, common)
