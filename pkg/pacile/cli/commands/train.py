"""
`train`: fit a posterior with ile, relax-pb or mc-pb
"""
import argparse
import logging

from pacile.cli.deps import dataset_record, get_dataset, get_stream, load_config, output_dir, write_manifest
from pacile.runs import train_posterior
from pacile.schemas import TrainConfig
from pacile.storage import save_posterior, write_frame
from pacile.utils import generate_report_filename

logger = logging.getLogger(__name__)


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("train", parents=[common], help="train a posterior and write its artifacts")
    parser.set_defaults(handler=cmd_train)


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(TrainConfig, args)
    dataset, task = get_dataset(config)
    out_dir = output_dir(config)

    outcome = train_posterior(config, dataset, get_stream(config))

    posterior_path = save_posterior(
        out_dir / generate_report_filename("posterior", config.seed, ".txt"), outcome.posterior, outcome.prior
    )
    candidates_path = write_frame(out_dir / generate_report_filename("candidates", config.seed), outcome.candidates)
    trace_path = write_frame(out_dir / generate_report_filename("trace", config.seed), outcome.trace)

    manifest = write_manifest(
        "train",
        config,
        out_dir,
        files=[posterior_path, candidates_path],
        undigested=[trace_path],
        extra={
            "dataset": dataset_record(dataset, task, config.standardize),
            "prior": outcome.prior.as_dict(),
            "posterior": {
                "variance": outcome.posterior.variance,
                "parametrization": outcome.posterior.parametrization,
                "n_params": outcome.posterior.n_params,
                "frobenius_norm": outcome.posterior.mean.frobenius_norm(),
            },
            "selection": {**outcome.selected, "J_hat": outcome.j_hat, "J_hat_se": outcome.j_hat_se},
            "flags": [f.value for f in outcome.flags],
        },
    )
    logger.info(f"Training finished: posterior {posterior_path.name}, manifest {manifest.name}")
    return 0
