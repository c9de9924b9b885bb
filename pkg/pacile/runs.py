"""
Training orchestration shared by the train and sweep commands: fit every
candidate of the hyperparameter menu, score it by Monte Carlo J_hat and keep
the best one.
"""
from dataclasses import dataclass, field
from typing import List, Optional
import logging
import math

import numpy as np
import pandas as pd

from pacile.errors import ConfigError, OptimizationDiverged
from pacile.gaussian_posterior import GaussianPosterior, PriorConfig, posterior_variance_for
from pacile.kernel_features import Kernel, empirical_kappa
from pacile.loss_embedding import LossEmbedding, build_embedding
from pacile.models import Algorithm, CertificateFlag, KernelKind, ScheduleMode
from pacile.optimizers import (
    TRACE_COLUMNS,
    ControlVariateConfig,
    OptimState,
    RegressionProblem,
    StepSchedule,
    StoppingRule,
    build_problem,
    objective_J_hat_mc,
    q_ssgd,
    relax_gd,
    sf_gd,
    trace_frame,
)
from pacile.rng import SeedStream
from pacile.schemas import TrainConfig
from pacile.surrogate_regression import LinearRegressor, fit_krr, solve_ridge
from pacile.datasets import MultiLabelDataset

logger = logging.getLogger(__name__)

CANDIDATE_COLUMNS = ["parameter", "value", "J_hat", "J_hat_se", "iterations", "stop_reason", "status"]


@dataclass
class TrainingOutcome:
    """Selected posterior with the prior it was trained against and the selection record"""
    posterior: GaussianPosterior
    prior: PriorConfig
    embedding: LossEmbedding
    j_hat: float
    j_hat_se: float
    selected: dict
    candidates: pd.DataFrame
    trace: pd.DataFrame
    flags: List[CertificateFlag] = field(default_factory=list)


def build_kernel(config: TrainConfig) -> Kernel:
    if config.kernel is KernelKind.GAUSSIAN:
        raise ConfigError(
            "training needs an explicit feature map; use the linear or cosine kernel "
            "(the gaussian kernel is available through fit_krr_dual)"
        )
    return Kernel(config.kernel, config.bandwidth)


def build_prior(config: TrainConfig, kernel: Kernel, dataset: MultiLabelDataset) -> PriorConfig:
    kappa = config.kappa if config.kappa is not None else empirical_kappa(kernel, dataset.xs)
    return PriorConfig(alpha=config.alpha, t=config.t, kappa=kappa, m=dataset.m)


def _stopping_rule(config: TrainConfig) -> StoppingRule:
    return StoppingRule(
        max_iter=config.max_iter,
        grad_tol=config.grad_tol,
        plateau_window=config.plateau_window,
        plateau_rtol=config.plateau_rtol,
    )


def _schedule(config: TrainConfig, rate: Optional[float]) -> StepSchedule:
    if config.schedule is ScheduleMode.DECAYING:
        return StepSchedule(nu=config.nu, w=config.schedule_w)
    return StepSchedule.constant(rate)


def _initial_weights(config: TrainConfig, problem: RegressionProblem, prior: PriorConfig, kernel: Kernel, digest: str) -> LinearRegressor:
    if config.warm_start:
        w = solve_ridge(problem.features, problem.targets, prior.penalty_lambda)
    else:
        w = np.zeros((problem.dim_h, problem.dim_f))
    return LinearRegressor(w, kernel, dataset_sha256=digest)


def _optimize(
    config: TrainConfig,
    rate: Optional[float],
    init: LinearRegressor,
    prior: PriorConfig,
    variance: float,
    problem: RegressionProblem,
    stream: SeedStream,
) -> OptimState:
    schedule = _schedule(config, rate)
    stop = _stopping_rule(config)
    if config.algorithm is Algorithm.RELAX_PB:
        return relax_gd(init, schedule, prior, variance, problem, stop=stop, seed=stream)
    if not config.use_cv:
        return sf_gd(init, schedule, prior, variance, problem, m_samples=config.mc_samples, stop=stop, seed=stream)
    cv = ControlVariateConfig(
        m_samples=config.mc_samples,
        m_prime_samples=config.m_prime_samples,
        use_cv=True,
        fixed_a=config.fixed_a,
    )
    return q_ssgd(init, schedule, cv, prior, variance, problem, stop=stop, seed=stream)


def train_posterior(config: TrainConfig, dataset: MultiLabelDataset, stream: SeedStream) -> TrainingOutcome:
    """Run the configured algorithm over its menu and select by J_hat"""
    embedding = build_embedding(config.loss, dataset.n_labels)
    kernel = build_kernel(config)
    prior = build_prior(config, kernel, dataset)
    variance = posterior_variance_for(config.parametrization, prior, config.posterior_variance)
    problem = build_problem(embedding, kernel, dataset.xs, dataset.ys)
    eval_stream = stream.child("eval")

    logger.info(
        f"Training {config.algorithm.value} on {dataset.name} (m={dataset.m}, N={problem.dim_h * problem.dim_f}) "
        f"with alpha={prior.alpha}, t={prior.t}, kappa={prior.kappa:.6g}, variance={variance:.6g}"
    )

    rows = []
    best = None
    last_error = None
    if config.algorithm is Algorithm.ILE:
        parameter, menu = "lambda", list(config.lambdas)
    else:
        parameter, menu = "learning_rate", config.rate_menu()

    for value in menu:
        state = None
        try:
            if config.algorithm is Algorithm.ILE:
                mean = fit_krr(embedding, kernel, dataset.xs, dataset.ys, value, dataset.digest)
            else:
                init = _initial_weights(config, problem, prior, kernel, dataset.digest)
                state = _optimize(config, value, init, prior, variance, problem, stream.child("optimize"))
                mean = state.w
        except OptimizationDiverged as e:
            logger.warning(f"Candidate {parameter}={value} diverged: {e.detail}")
            last_error = e
            rows.append({"parameter": parameter, "value": value, "J_hat": math.nan, "J_hat_se": math.nan,
                         "iterations": e.state.iteration if e.state is not None else 0,
                         "stop_reason": "diverged", "status": "diverged"})
            continue

        q = GaussianPosterior(mean, variance, config.parametrization)
        j_hat, j_hat_se = objective_J_hat_mc(q, prior, problem, config.eval_samples, eval_stream)
        rows.append({
            "parameter": parameter,
            "value": value,
            "J_hat": j_hat,
            "J_hat_se": j_hat_se,
            "iterations": state.iteration if state is not None else 0,
            "stop_reason": state.stop_reason if state is not None else "closed-form",
            "status": "ok",
        })
        if best is None or j_hat < best[0]:
            best = (j_hat, j_hat_se, value, q, state, len(rows) - 1)

    if best is None:
        raise last_error
    j_hat, j_hat_se, value, q, state, best_row = best
    rows[best_row]["status"] = "selected"
    candidates = pd.DataFrame(rows, columns=CANDIDATE_COLUMNS)

    flags = []
    if len(menu) > 1:
        flags.append(CertificateFlag.DATA_DEPENDENT_SELECTION)
        logger.warning(f"{parameter} chosen by J_hat on the training data: {CertificateFlag.DATA_DEPENDENT_SELECTION.value}")

    trace = trace_frame(state) if state is not None else pd.DataFrame(columns=TRACE_COLUMNS)
    logger.info(f"Selected {parameter}={value}: J_hat={j_hat:.6g} (se {j_hat_se:.2g})")
    return TrainingOutcome(
        posterior=q,
        prior=prior,
        embedding=embedding,
        j_hat=j_hat,
        j_hat_se=j_hat_se,
        selected={parameter: value},
        candidates=candidates,
        trace=trace,
        flags=flags,
    )
