"""
Bound-derived learning algorithms.

All objectives work on a RegressionProblem (explicit features and embedded
targets):

    J_hat(W) = E_{V~Q(W)} L(V) + lambda ||W||^2,   L(V) = (1/m) sum_k ||phi(y_k) - V x_k||
    J_c(W)   = (1/m) sum_k sqrt(beta_k + ||phi(y_k) - W x_k||^2) + lambda ||W||^2

with beta_k = sigma'^2 dim_h ||x_k||^2 and lambda = 1 / (2 sigma0^2 m^alpha).
Relax-GD descends J_c with its exact gradient; SF-GD and Q-SSGD descend J_hat
with the score-function estimator, Q-SSGD adding the quadratic control variate
B(V) = (1/m) sum_k ||phi(y_k) - V x_k||^2.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple
import logging
import math
import time
import warnings

import numpy as np
import pandas as pd

from pacile.config import settings
from pacile.errors import InputError, OptimizationDiverged, PacIleWarning
from pacile.gaussian_posterior import GaussianPosterior, PriorConfig, mc_values, sample_weights
from pacile.kernel_features import Kernel, feature_map
from pacile.loss_embedding import LossEmbedding, as_labels
from pacile.models import ScheduleMode
from pacile.rng import SeedLike, SeedStream, as_stream, make_generator
from pacile.surrogate_regression import LinearRegressor
from pacile.utils import frobenius_norm_sq, standard_error

logger = logging.getLogger(__name__)

LossFn = Callable[[np.ndarray, "RegressionProblem"], np.ndarray]

TRACE_COLUMNS = ["iteration", "objective", "grad_norm", "step_size", "wall_time_ms"]


# ========== Problem ==========

@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """Explicit features x_k (m, dim_f) and embedded targets phi(y_k) (m, dim_h)"""
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        features = np.array(self.features, dtype=float)
        targets = np.array(self.targets, dtype=float)
        if features.ndim != 2 or targets.ndim != 2 or features.shape[0] != targets.shape[0]:
            raise InputError(f"features {features.shape} and targets {targets.shape} do not align")
        if features.shape[0] < 1:
            raise InputError("a regression problem needs at least one sample")
        features.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def dim_f(self) -> int:
        return self.features.shape[1]

    @property
    def dim_h(self) -> int:
        return self.targets.shape[1]

    @property
    def sq_norms(self) -> np.ndarray:
        """||x_k||^2 = k(x_k, x_k)"""
        return np.einsum("ij,ij->i", self.features, self.features)

    def residuals(self, w) -> np.ndarray:
        return self.targets - self.features @ _weights(w).T

    def check_weights(self, w) -> np.ndarray:
        w = _weights(w)
        if w.shape != (self.dim_h, self.dim_f):
            raise InputError(f"weights {w.shape} do not match problem ({self.dim_h}, {self.dim_f})")
        return w


def build_problem(embedding: LossEmbedding, kernel: Kernel, xs, ys) -> RegressionProblem:
    features = feature_map(kernel, xs)
    targets = embedding.phi_matrix(as_labels(ys, embedding.n_labels))
    return RegressionProblem(features, targets)


def _weights(w) -> np.ndarray:
    if isinstance(w, LinearRegressor):
        return w.w
    return np.asarray(w, dtype=float)


def _batch_residuals(batch: np.ndarray, problem: RegressionProblem) -> np.ndarray:
    """(n, m, dim_h) residuals for a stack of weight matrices"""
    return problem.targets[None, :, :] - np.einsum("nhd,md->nmh", batch, problem.features)


def absolute_losses(batch: np.ndarray, problem: RegressionProblem) -> np.ndarray:
    """L(V) = (1/m) sum_k ||phi(y_k) - V x_k|| for each V of a (n, dim_h, dim_f) batch"""
    residuals = _batch_residuals(batch, problem)
    return np.mean(np.sqrt(np.einsum("nmh,nmh->nm", residuals, residuals)), axis=1)


def quadratic_losses(batch: np.ndarray, problem: RegressionProblem) -> np.ndarray:
    """B(V) = (1/m) sum_k ||phi(y_k) - V x_k||^2 for each V of a batch"""
    residuals = _batch_residuals(batch, problem)
    return np.mean(np.einsum("nmh,nmh->nm", residuals, residuals), axis=1)


# ========== Objectives ==========

def expected_absolute_risk(
    q: GaussianPosterior,
    problem: RegressionProblem,
    n_samples: int,
    seed: SeedLike,
) -> Tuple[float, float]:
    """Monte Carlo E_{V~Q} L(V) and its standard error"""
    w = problem.check_weights(q.mean)
    if n_samples < 1:
        raise InputError(f"need at least one Monte Carlo sample, got {n_samples}")
    if q.variance == 0:
        return float(absolute_losses(w[None], problem)[0]), 0.0
    values = mc_values(q, lambda batch: absolute_losses(batch, problem), n_samples, seed)
    return float(np.mean(values)), standard_error(values)


def objective_J_hat_mc(
    q: GaussianPosterior,
    prior: PriorConfig,
    problem: RegressionProblem,
    n_samples: int,
    seed: SeedLike,
) -> Tuple[float, float]:
    """Monte Carlo J_hat and the standard error of its data term"""
    data, se = expected_absolute_risk(q, problem, n_samples, seed)
    return data + prior.penalty_lambda * frobenius_norm_sq(q.mean.w), se


def relaxation_beta(problem: RegressionProblem, variance: float) -> np.ndarray:
    """beta_k = sigma'^2 dim_h k(x_k, x_k)"""
    if not variance >= 0:
        raise InputError(f"posterior variance must be >= 0, got {variance}")
    return variance * problem.dim_h * problem.sq_norms


def objective_J_c(
    w,
    prior: PriorConfig,
    variance: float,
    problem: RegressionProblem,
    beta: Optional[np.ndarray] = None,
) -> float:
    w = problem.check_weights(w)
    beta = relaxation_beta(problem, variance) if beta is None else beta
    residuals = problem.residuals(w)
    data = np.mean(np.sqrt(beta + np.einsum("ij,ij->i", residuals, residuals)))
    return float(data) + prior.penalty_lambda * frobenius_norm_sq(w)


def grad_J_c(
    w,
    prior: PriorConfig,
    variance: float,
    problem: RegressionProblem,
    beta: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    -(1/m) sum_k r_k x_k^T / sqrt(beta_k + ||r_k||^2) + 2 lambda W, r_k = phi(y_k) - W x_k.

    Terms with a zero denominator contribute nothing (the subgradient at 0).
    """
    w = problem.check_weights(w)
    beta = relaxation_beta(problem, variance) if beta is None else beta
    residuals = problem.residuals(w)
    denominators = np.sqrt(beta + np.einsum("ij,ij->i", residuals, residuals))
    scale = np.divide(1.0, denominators, out=np.zeros_like(denominators), where=denominators > 0)
    data = -(residuals * scale[:, None]).T @ problem.features / problem.m
    return data + 2.0 * prior.penalty_lambda * w


def smoothness_constant(prior: PriorConfig, variance: float, problem: RegressionProblem) -> float:
    """
    Upper bound on the Lipschitz constant of grad_J_c:
    lambda_max((1/m) sum_k x_k x_k^T / sqrt(beta_k)) + 2 lambda.
    """
    beta = relaxation_beta(problem, variance)
    if np.any(beta <= 0):
        raise InputError("smoothness bound needs positive variance and non-zero feature rows")
    weighted = problem.features / np.sqrt(np.sqrt(beta))[:, None]
    top = float(np.linalg.eigvalsh(weighted.T @ weighted / problem.m)[-1])
    return top + 2.0 * prior.penalty_lambda


# ========== Schedules and stopping ==========

@dataclass(frozen=True)
class StepSchedule:
    """gamma_t = 1 / (w + t)^nu for t = 1, 2, ... or a constant rate `gamma`"""
    nu: float = 1.0
    w: float = 0.0
    mode: ScheduleMode = ScheduleMode.DECAYING
    gamma: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", ScheduleMode(self.mode))
        if not 0.5 < self.nu <= 1:
            raise InputError(f"nu must lie in (0.5, 1], got {self.nu}")
        if not self.w >= 0:
            raise InputError(f"schedule offset w must be >= 0, got {self.w}")
        if self.mode is ScheduleMode.CONSTANT and not (self.gamma is not None and self.gamma > 0):
            raise InputError("a constant schedule needs a positive learning rate")

    @classmethod
    def constant(cls, gamma: float) -> "StepSchedule":
        return cls(mode=ScheduleMode.CONSTANT, gamma=gamma)

    def step_size(self, t: int) -> float:
        if t < 1:
            raise InputError(f"iterations are counted from 1, got {t}")
        if self.mode is ScheduleMode.CONSTANT:
            return float(self.gamma)
        return 1.0 / (self.w + t) ** self.nu


@dataclass(frozen=True)
class StoppingRule:
    """Zero disables the gradient test (grad_tol) or the plateau test (plateau_window)"""
    max_iter: int = field(default_factory=lambda: settings.MAX_ITER)
    grad_tol: float = field(default_factory=lambda: settings.GRAD_TOL)
    plateau_window: int = field(default_factory=lambda: settings.PLATEAU_WINDOW)
    plateau_rtol: float = field(default_factory=lambda: settings.PLATEAU_RTOL)
    divergence_factor: float = field(default_factory=lambda: settings.DIVERGENCE_FACTOR)

    def __post_init__(self):
        if self.max_iter < 0 or self.plateau_window < 0:
            raise InputError("max_iter and plateau_window must be >= 0")
        if self.grad_tol < 0 or self.plateau_rtol < 0:
            raise InputError("tolerances must be >= 0")
        if not self.divergence_factor > 1:
            raise InputError(f"divergence factor must be > 1, got {self.divergence_factor}")

    def plateaued(self, trace: Tuple[float, ...]) -> bool:
        window = self.plateau_window
        if window == 0 or len(trace) <= window:
            return False
        previous, current = trace[-1 - window], trace[-1]
        return abs(current - previous) <= self.plateau_rtol * max(abs(previous), 1e-300)


# ========== Optimization state ==========

@dataclass(frozen=True)
class OptimState:
    """
    W^t plus per-iteration traces. Entry t - 1 of each trace describes W^(t-1),
    the iterate the t-th step started from.
    """
    w: LinearRegressor
    seed_stream: SeedStream
    iteration: int = 0
    objective_trace: Tuple[float, ...] = ()
    grad_norm_trace: Tuple[float, ...] = ()
    step_size_trace: Tuple[float, ...] = ()
    wall_time_trace: Tuple[float, ...] = ()
    stop_reason: Optional[str] = None

    def advance(self, new_w: np.ndarray, objective: float, grad_norm: float, step: float, elapsed_ms: float) -> "OptimState":
        return replace(
            self,
            w=self.w.with_weights(new_w),
            iteration=self.iteration + 1,
            objective_trace=self.objective_trace + (objective,),
            grad_norm_trace=self.grad_norm_trace + (grad_norm,),
            step_size_trace=self.step_size_trace + (step,),
            wall_time_trace=self.wall_time_trace + (elapsed_ms,),
        )


def trace_frame(state: OptimState) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "iteration": np.arange(1, state.iteration + 1),
            "objective": state.objective_trace,
            "grad_norm": state.grad_norm_trace,
            "step_size": state.step_size_trace,
            "wall_time_ms": state.wall_time_trace,
        },
        columns=TRACE_COLUMNS,
    )


Evaluate = Callable[[np.ndarray, int], Tuple[float, np.ndarray]]


def _step(state: OptimState, schedule: StepSchedule, evaluate: Evaluate, reference: Optional[float], stop: StoppingRule):
    """One descent step; returns (new state or None when the gradient test fires, objective)"""
    started = time.perf_counter()
    t = state.iteration + 1
    w = state.w.w
    objective, direction = evaluate(w, t)
    reference = objective if reference is None else reference
    grad_norm = math.sqrt(frobenius_norm_sq(direction))

    if (
        not math.isfinite(objective)
        or not math.isfinite(grad_norm)
        or objective > stop.divergence_factor * abs(reference) + 1e-12
    ):
        logger.error(f"Optimization diverged at iteration {t}: objective {objective:.6g}, initial {reference:.6g}")
        raise OptimizationDiverged(
            f"objective {objective:.6g} at iteration {t} exceeds {stop.divergence_factor:g}x the initial value {reference:.6g}",
            state=state,
        )
    if stop.grad_tol > 0 and grad_norm <= stop.grad_tol * (1.0 + state.w.frobenius_norm()):
        return None, objective

    gamma = schedule.step_size(t)
    new_w = w - gamma * direction
    if not np.all(np.isfinite(new_w)):
        raise OptimizationDiverged(f"non-finite iterate after step {t}", state=state)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return state.advance(new_w, objective, grad_norm, gamma, elapsed_ms), objective


def _descend(
    state: OptimState,
    schedule: StepSchedule,
    stop: StoppingRule,
    evaluate: Evaluate,
    algorithm: str,
) -> OptimState:
    reference = None
    while state.iteration < stop.max_iter:
        new_state, objective = _step(state, schedule, evaluate, reference, stop)
        reference = objective if reference is None else reference
        if new_state is None:
            state = replace(state, stop_reason="gradient")
            break
        state = new_state
        if stop.plateaued(state.objective_trace):
            state = replace(state, stop_reason="plateau")
            break
    else:
        state = replace(state, stop_reason="max_iter")

    final = state.objective_trace[-1] if state.objective_trace else float("nan")
    logger.info(
        f"{algorithm} stopped ({state.stop_reason}) after {state.iteration} iterations, "
        f"last objective {final:.6g}, ||W||_F={state.w.frobenius_norm():.6g}"
    )
    return state


def _initial_state(init: LinearRegressor, problem: RegressionProblem, seed: SeedLike) -> OptimState:
    problem.check_weights(init)
    if isinstance(seed, np.random.Generator):
        raise InputError("optimizers need an integer seed or a SeedStream")
    return OptimState(w=init, seed_stream=as_stream(seed))


# ========== Relax-GD ==========

def relax_gd(
    init: LinearRegressor,
    schedule: StepSchedule,
    prior: PriorConfig,
    variance: float,
    problem: RegressionProblem,
    stop: Optional[StoppingRule] = None,
    seed: SeedLike = 0,
) -> OptimState:
    """Gradient descent on J_c with beta precomputed once"""
    stop = stop or StoppingRule()
    beta = relaxation_beta(problem, variance)

    def evaluate(w: np.ndarray, t: int):
        return (
            objective_J_c(w, prior, variance, problem, beta=beta),
            grad_J_c(w, prior, variance, problem, beta=beta),
        )

    return _descend(_initial_state(init, problem, seed), schedule, stop, evaluate, "relax-gd")


# ========== Score-function estimation ==========

def _scores(batch: np.ndarray, w: np.ndarray, variance: float) -> np.ndarray:
    """grad_W log Q(V | W) = (V - W) / sigma'^2"""
    return (batch - w) / variance


def score_function_gradient(
    q: GaussianPosterior,
    problem: RegressionProblem,
    n_samples: int,
    seed: SeedLike,
    loss_fn: Optional[LossFn] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    eta_M = (1/M) sum_k L(V_k) (V_k - W) / sigma'^2 and its per-entry variance
    (sample variance / M). The penalty gradient is not included.
    """
    if n_samples < 1:
        raise InputError(f"need at least one sample, got {n_samples}")
    w = problem.check_weights(q.mean)
    if q.variance == 0:
        return np.zeros_like(w), np.zeros_like(w)
    loss_fn = loss_fn or absolute_losses
    batch = sample_weights(q, n_samples, make_generator(seed))
    contributions = loss_fn(batch, problem)[:, None, None] * _scores(batch, w, q.variance)
    if n_samples < 2:
        return contributions[0], np.full_like(w, np.inf)
    return contributions.mean(axis=0), contributions.var(axis=0, ddof=1) / n_samples


def control_variate_B(v, problem: RegressionProblem) -> float:
    """B(V), the quadratic empirical risk of the sampled regressor"""
    v = problem.check_weights(v)
    return float(quadratic_losses(v[None], problem)[0])


def expected_B(q: GaussianPosterior, problem: RegressionProblem) -> float:
    """E_Q B(V) = B(W) + sigma'^2 dim_h (1/m) sum_k k(x_k, x_k)"""
    return control_variate_B(q.mean, problem) + q.variance * problem.dim_h * float(np.mean(problem.sq_norms))


def grad_expected_B(q, problem: RegressionProblem) -> np.ndarray:
    """-(2/m) sum_k (phi(y_k) - W x_k) x_k^T; does not depend on the variance"""
    w = problem.check_weights(q.mean if isinstance(q, GaussianPosterior) else q)
    return -2.0 * problem.residuals(w).T @ problem.features / problem.m


def estimate_a_hat(
    q: GaussianPosterior,
    problem: RegressionProblem,
    n_samples: int,
    seed: SeedLike,
    loss_fn: Optional[LossFn] = None,
    baseline_fn: Optional[LossFn] = None,
) -> float:
    """
    a_hat = sum cov(L s, B s) / sum var(B s) over all entries, s = grad log Q,
    from n_samples draws. A vanishing denominator returns 0.
    """
    if n_samples < 2:
        raise InputError(f"a_hat needs at least two samples, got {n_samples}")
    w = problem.check_weights(q.mean)
    if q.variance == 0:
        return 0.0
    loss_fn = loss_fn or absolute_losses
    baseline_fn = baseline_fn or quadratic_losses
    batch = sample_weights(q, n_samples, make_generator(seed))
    scores = _scores(batch, w, q.variance)
    f = loss_fn(batch, problem)[:, None, None] * scores
    g = baseline_fn(batch, problem)[:, None, None] * scores
    f_centered = f - f.mean(axis=0)
    g_centered = g - g.mean(axis=0)
    numerator = float(np.sum(f_centered * g_centered))
    denominator = float(np.sum(g_centered * g_centered))
    if denominator == 0 or not math.isfinite(denominator) or not math.isfinite(numerator):
        message = "control variate has zero variance, a_hat set to 0 for this step"
        logger.warning(message)
        warnings.warn(message, PacIleWarning, stacklevel=2)
        return 0.0
    return numerator / denominator


@dataclass(frozen=True)
class ControlVariateConfig:
    """M gradient samples and M' samples for a_hat; `fixed_a` bypasses the estimate"""
    m_samples: int = 20
    m_prime_samples: Optional[int] = None
    use_cv: bool = True
    fixed_a: Optional[float] = None

    def __post_init__(self):
        if self.m_samples < 1:
            raise InputError(f"M must be >= 1, got {self.m_samples}")
        if self.m_prime_samples is None:
            object.__setattr__(self, "m_prime_samples", max(5, self.m_samples // 4))
        if self.use_cv and self.fixed_a is None and self.m_prime_samples < 2:
            raise InputError(f"M' must be >= 2, got {self.m_prime_samples}")


def _stochastic_direction(
    w: np.ndarray,
    t: int,
    stream: SeedStream,
    cv: ControlVariateConfig,
    prior: PriorConfig,
    variance: float,
    problem: RegressionProblem,
    loss_fn: LossFn,
    template: LinearRegressor,
) -> Tuple[float, np.ndarray]:
    """(L sample mean + penalty, mean((L - a B) s) + a eta_B + 2 lambda W)"""
    q = GaussianPosterior(template.with_weights(w), variance)
    penalty_grad = 2.0 * prior.penalty_lambda * w
    penalty = prior.penalty_lambda * frobenius_norm_sq(w)

    a = 0.0
    if cv.use_cv:
        if cv.fixed_a is not None:
            a = float(cv.fixed_a)
        else:
            a = estimate_a_hat(q, problem, cv.m_prime_samples, stream.child("a_hat").generator(t), loss_fn)

    if variance == 0:
        losses = loss_fn(w[None], problem)
        direction = penalty_grad if a == 0 else a * grad_expected_B(w, problem) + penalty_grad
        return float(losses[0]) + penalty, direction

    batch = sample_weights(q, cv.m_samples, stream.child("gradient").generator(t))
    losses = loss_fn(batch, problem)
    weights = losses if a == 0 else losses - a * quadratic_losses(batch, problem)
    estimate = np.mean(weights[:, None, None] * _scores(batch, w, variance), axis=0)
    if a == 0:
        direction = estimate + penalty_grad
    else:
        direction = estimate + a * grad_expected_B(w, problem) + penalty_grad
    return float(np.mean(losses)) + penalty, direction


def q_ssgd_step(
    state: OptimState,
    schedule: StepSchedule,
    cv: ControlVariateConfig,
    prior: PriorConfig,
    variance: float,
    problem: RegressionProblem,
    loss_fn: Optional[LossFn] = None,
) -> OptimState:
    """One Q-SSGD iteration W^(t+1) = W^t - gamma_t (eta_hat + a eta_B + eta_P)"""
    loss_fn = loss_fn or absolute_losses
    started = time.perf_counter()
    t = state.iteration + 1
    objective, direction = _stochastic_direction(
        state.w.w, t, state.seed_stream, cv, prior, variance, problem, loss_fn, state.w
    )
    gamma = schedule.step_size(t)
    new_w = state.w.w - gamma * direction
    if not (math.isfinite(objective) and np.all(np.isfinite(new_w))):
        raise OptimizationDiverged(f"non-finite iterate after step {t}", state=state)
    grad_norm = math.sqrt(frobenius_norm_sq(direction))
    return state.advance(new_w, objective, grad_norm, gamma, (time.perf_counter() - started) * 1000.0)


def q_ssgd(
    init: LinearRegressor,
    schedule: StepSchedule,
    cv: ControlVariateConfig,
    prior: PriorConfig,
    variance: float,
    problem: RegressionProblem,
    stop: Optional[StoppingRule] = None,
    seed: SeedLike = 0,
    loss_fn: Optional[LossFn] = None,
) -> OptimState:
    """
    Stochastic search descent on J_hat. Gradient samples for step t come from
    stream.child("gradient").generator(t) and a_hat samples from
    stream.child("a_hat").generator(t), so the two are independent.
    """
    stop = stop or StoppingRule()
    loss_fn = loss_fn or absolute_losses
    state = _initial_state(init, problem, seed)
    stream = state.seed_stream
    if variance < 0:
        raise InputError(f"posterior variance must be >= 0, got {variance}")

    def evaluate(w: np.ndarray, t: int):
        return _stochastic_direction(w, t, stream, cv, prior, variance, problem, loss_fn, init)

    name = "q-ssgd" if cv.use_cv else "sf-gd"
    return _descend(state, schedule, stop, evaluate, name)


def sf_gd(
    init: LinearRegressor,
    schedule: StepSchedule,
    prior: PriorConfig,
    variance: float,
    problem: RegressionProblem,
    m_samples: int = 20,
    stop: Optional[StoppingRule] = None,
    seed: SeedLike = 0,
    loss_fn: Optional[LossFn] = None,
) -> OptimState:
    """Naive score-function descent: Q-SSGD with the control variate switched off"""
    cv = ControlVariateConfig(m_samples=m_samples, use_cv=False)
    return q_ssgd(init, schedule, cv, prior, variance, problem, stop=stop, seed=seed, loss_fn=loss_fn)
