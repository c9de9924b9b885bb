"""
`sweep`: J_hat, sigma and lambda over an (alpha, t) grid
"""
from concurrent.futures import ThreadPoolExecutor
import argparse
import logging
import math

import pandas as pd

from pacile.cli.deps import dataset_record, get_dataset, get_stream, load_config, output_dir, write_manifest
from pacile.runs import train_posterior
from pacile.schemas import SweepConfig
from pacile.storage import write_frame
from pacile.utils import generate_report_filename

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["alpha", "t", "J_hat", "J_hat_se", "sigma", "lambda", "selected"]


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("sweep", parents=[common], help="train over an (alpha, t) grid")
    parser.set_defaults(handler=cmd_sweep)


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(SweepConfig, args)
    dataset, task = get_dataset(config)
    out_dir = output_dir(config)
    stream = get_stream(config)
    cells = [(alpha, t) for alpha in config.alphas for t in config.ts]

    def run_cell(cell):
        alpha, t = cell
        outcome = train_posterior(config.cell(alpha, t), dataset, stream.child(f"alpha={alpha!r},t={t!r}"))
        logger.info(f"Sweep cell alpha={alpha:g}, t={t:g}: J_hat={outcome.j_hat:.6g}")
        return {
            "alpha": alpha,
            "t": t,
            "J_hat": outcome.j_hat,
            "J_hat_se": outcome.j_hat_se,
            "sigma": math.sqrt(outcome.prior.sigma0_sq),
            "lambda": outcome.prior.penalty_lambda,
            "selected": next(iter(outcome.selected.values())),
        }

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        rows = list(pool.map(run_cell, cells))

    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    path = write_frame(out_dir / generate_report_filename("sweep", config.seed), frame)
    write_manifest(
        "sweep",
        config,
        out_dir,
        files=[path],
        extra={"dataset": dataset_record(dataset, task, config.standardize), "cells": len(cells)},
    )
    logger.info(f"Sweep finished: {len(cells)} cells written to {path.name}")
    return 0
