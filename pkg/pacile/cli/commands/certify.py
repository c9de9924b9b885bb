"""
`certify`: evaluate every applicable bound for a trained posterior
"""
from pathlib import Path
import argparse
import logging

import numpy as np

from pacile.certificates import (
    augmented_excess_bound,
    certificate_frame,
    classification_bound,
    estimate_expected_empirical_task_risk,
    kde_bound,
)
from pacile.cli.deps import dataset_record, get_dataset, get_stream, load_config, output_dir, write_manifest
from pacile.datasets import oracle_empirical_abs_term, oracle_g_star_weights
from pacile.errors import ConfigError, PreconditionError
from pacile.gaussian_posterior import kl_isotropic
from pacile.loss_embedding import build_embedding
from pacile.models import EmpiricalMode, GStarSource, KernelKind
from pacile.optimizers import build_problem, expected_absolute_risk
from pacile.schemas import CertifyConfig
from pacile.storage import load_posterior, write_frame
from pacile.utils import generate_report_filename

logger = logging.getLogger(__name__)


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("certify", parents=[common], help="compute PAC-Bayes certificates")
    parser.set_defaults(handler=cmd_certify)


def cmd_certify(args: argparse.Namespace) -> int:
    config = load_config(CertifyConfig, args)
    dataset, task = get_dataset(config)
    out_dir = output_dir(config)
    stream = get_stream(config)

    q, prior = load_posterior(config.posterior)
    if prior is None:
        raise ConfigError(f"{config.posterior} records no prior; write it with `train`")
    if prior.m != dataset.m:
        raise ConfigError(f"prior was set for m={prior.m} but the dataset has m={dataset.m}")
    if q.mean.dataset_sha256 and q.mean.dataset_sha256 != dataset.digest:
        raise ConfigError("the posterior was trained on a different dataset (sha256 mismatch)")
    embedding = build_embedding(config.loss, dataset.n_labels)
    if q.mean.dim_h != embedding.dim_h:
        raise ConfigError(f"posterior dim_h={q.mean.dim_h} does not match the {config.loss.value} embedding ({embedding.dim_h})")

    recorded = dict(
        alpha=prior.alpha,
        t=prior.t,
        kappa=prior.kappa,
        mc_samples=config.mc_samples,
        seed=config.seed,
    )
    shared = dict(
        n_params=q.n_params,
        c_delta=embedding.c_delta,
        parametrization=q.parametrization,
        posterior_variance=q.variance,
    )

    empirical, empirical_se = estimate_expected_empirical_task_risk(
        q, embedding, dataset.xs, dataset.ys, config.mc_samples, stream.child("task-risk")
    )
    kl = kl_isotropic(q, prior)
    certificates = [
        classification_bound(empirical, kl, dataset.m, config.delta, config.a, embedding, **recorded, **shared)
    ]
    logger.info(f"E_Q empirical task risk {empirical:.6g} (se {empirical_se:.2g}), KL {kl:.6g}")

    if task is not None:
        g_star_norm = float(np.linalg.norm(oracle_g_star_weights(task, q.mean.kernel)))
        abs_term, _ = oracle_empirical_abs_term(task, q, dataset.xs, config.mc_samples, stream.child("excess"))
        mode, source = EmpiricalMode.EXACT, GStarSource.ORACLE
    else:
        g_star_norm = q.mean.frobenius_norm()
        problem = build_problem(embedding, q.mean.kernel, dataset.xs, dataset.ys)
        abs_term, _ = expected_absolute_risk(q, problem, config.mc_samples, stream.child("excess"))
        mode, source = EmpiricalMode.SURROGATE, GStarSource.PLUG_IN
        logger.warning("g* is unknown for this dataset: using ||W||_F as a plug-in, the excess-risk value is not certified")
    certificates.append(
        augmented_excess_bound(
            q, prior, embedding, abs_term, g_star_norm, config.delta, mode, source,
            mc_samples=config.mc_samples, seed=config.seed,
        )
    )

    if q.mean.kernel.kind is KernelKind.COSINE:
        try:
            certificates.append(
                kde_bound(q.mean, q.mean.kernel, embedding, dataset.xs, dataset.ys, config.delta, seed=config.seed)
            )
        except PreconditionError as e:
            logger.warning(f"KDE bound skipped: {e.detail}")
    else:
        logger.info(f"KDE bound skipped: the {q.mean.kernel.kind.value} kernel is not normalized")

    path = write_frame(out_dir / generate_report_filename("certificates", config.seed), certificate_frame(certificates))
    write_manifest(
        "certify",
        config,
        out_dir,
        files=[path, Path(config.posterior)],
        extra={
            "dataset": dataset_record(dataset, task, config.standardize),
            "prior": prior.as_dict(),
            "certificates": [c.to_record() for c in certificates],
        },
    )
    for c in certificates:
        logger.info(f"{c.bound_kind.value} bound: {c.total:.6g} ({c.status})")
    return 0
