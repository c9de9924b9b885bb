"""
Isotropic Gaussian prior and posterior over regressor matrices
"""
from dataclasses import dataclass
from typing import Callable, Optional
import logging
import math
import warnings

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from pacile.config import settings
from pacile.errors import InputError, PacIleWarning
from pacile.models import Parametrization
from pacile.rng import SeedLike, make_generator
from pacile.surrogate_regression import LinearRegressor
from pacile.utils import chunk_ranges, frobenius_norm_sq

logger = logging.getLogger(__name__)


# ========== Prior ==========

@dataclass(frozen=True)
class PriorConfig:
    """
    Zero-mean prior N(0, sigma0_sq I_N) with sigma0_sq = t m^(1 - 2 alpha) / kappa^2.

    `sigma_sq` is the t = 1 supremum m^(1 - 2 alpha) / kappa^2 and `f_ratio` is
    F(t) = (1 - t) / t.
    """
    alpha: float
    t: float
    kappa: float
    m: int

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InputError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 < self.t < 1:
            raise InputError(f"t must lie in (0, 1), got {self.t}")
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise InputError(f"kappa must be positive and finite, got {self.kappa}")
        if int(self.m) != self.m or self.m < 1:
            raise InputError(f"m must be a positive integer, got {self.m}")
        if self.alpha > 0.5:
            message = (
                f"alpha = {self.alpha} > 1/2: the prior variance shrinks with m, "
                "a regime that degrades in the large-data limit"
            )
            logger.warning(message)
            warnings.warn(message, PacIleWarning, stacklevel=3)

    @property
    def sigma_sq(self) -> float:
        return float(self.m) ** (1.0 - 2.0 * self.alpha) / self.kappa ** 2

    @property
    def sigma0_sq(self) -> float:
        return self.t * float(self.m) ** (1.0 - 2.0 * self.alpha) / self.kappa ** 2

    @property
    def f_ratio(self) -> float:
        return (1.0 - self.t) / self.t

    @property
    def m_alpha(self) -> float:
        return float(self.m) ** self.alpha

    @property
    def penalty_lambda(self) -> float:
        """lambda_m^alpha(t) = 1 / (2 sigma0_sq m^alpha)"""
        return 1.0 / (2.0 * self.sigma0_sq * self.m_alpha)

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "t": self.t,
            "kappa": self.kappa,
            "m": self.m,
            "sigma_sq": self.sigma_sq,
            "sigma0_sq": self.sigma0_sq,
            "penalty_lambda": self.penalty_lambda,
        }


# ========== Posterior ==========

@dataclass(frozen=True, eq=False)
class GaussianPosterior:
    """Q = N(mean, variance I_N); variance 0 is accepted as a degenerate point mass"""
    mean: LinearRegressor
    variance: float
    parametrization: Parametrization = Parametrization.CUSTOM

    def __post_init__(self):
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise InputError(f"posterior variance must be finite and >= 0, got {self.variance}")
        object.__setattr__(self, "parametrization", Parametrization(self.parametrization))

    @property
    def n_params(self) -> int:
        return self.mean.n_params

    @property
    def shape(self):
        return self.mean.w.shape

    def with_mean(self, w) -> "GaussianPosterior":
        return GaussianPosterior(self.mean.with_weights(w), self.variance, self.parametrization)


def posterior_variance_for(
    parametrization: Parametrization,
    prior: PriorConfig,
    custom: Optional[float] = None,
) -> float:
    """UNIT -> 1, WIDE -> sigma^2 (the t = 1 prior variance), CUSTOM -> `custom`"""
    parametrization = Parametrization(parametrization)
    if parametrization is Parametrization.UNIT:
        return 1.0
    if parametrization is Parametrization.WIDE:
        return prior.sigma_sq
    if custom is None or not custom >= 0:
        raise InputError("custom parametrization needs a non-negative posterior variance")
    return float(custom)


# ========== KL divergences ==========

def gaussian_kl(mean_norm_sq: float, n_params: int, variance: float, prior_variance: float) -> float:
    """KL(N(mu, variance I_N) || N(0, prior_variance I_N)) from ||mu||^2"""
    if not (variance > 0 and prior_variance > 0):
        raise InputError(f"variances must be positive, got {variance} and {prior_variance}")
    if mean_norm_sq < 0 or n_params < 1:
        raise InputError("mean norm must be >= 0 and N >= 1")
    n = float(n_params)
    value = 0.5 * (
        n * math.log(prior_variance / variance)
        - n
        + n * variance / prior_variance
        + mean_norm_sq / prior_variance
    )
    return max(value, 0.0)


def kl_isotropic(q: GaussianPosterior, prior: PriorConfig) -> float:
    """KL(Q || P) for the isotropic posterior and the zero-mean prior"""
    return gaussian_kl(frobenius_norm_sq(q.mean.w), q.n_params, q.variance, prior.sigma0_sq)


def _check_parametrization_inputs(mean_norm_sq: float, n_params: int) -> None:
    if mean_norm_sq < 0:
        raise InputError(f"mean norm must be >= 0, got {mean_norm_sq}")
    if int(n_params) != n_params or n_params < 1:
        raise InputError(f"N must be a positive integer, got {n_params}")


def kl_unit_parametrization(prior: PriorConfig, mean_norm_sq: float, n_params: int) -> float:
    """K_U(t): KL with unit posterior variance"""
    _check_parametrization_inputs(mean_norm_sq, n_params)
    t, s = prior.t, prior.sigma_sq
    return mean_norm_sq / (2.0 * t * s) + 0.5 * n_params * (math.log(t) + math.log(s) - 1.0 + 1.0 / (t * s))


def kl_wide_parametrization(prior: PriorConfig, mean_norm_sq: float, n_params: int) -> float:
    """K_W(t): KL with posterior variance sigma^2"""
    _check_parametrization_inputs(mean_norm_sq, n_params)
    t, s = prior.t, prior.sigma_sq
    return mean_norm_sq / (2.0 * t * s) + 0.5 * n_params * (math.log(t) - 1.0 + 1.0 / t)


def parametrization_gap(prior: PriorConfig, n_params: int) -> float:
    """K_U(t) - K_W(t) = (N/2)(log sigma^2 + 1/(t sigma^2) - 1/t); independent of the mean"""
    t, s = prior.t, prior.sigma_sq
    return 0.5 * n_params * (math.log(s) + 1.0 / (t * s) - 1.0 / t)


def parametrization_threshold(sigma_sq: float) -> float:
    """
    t0(sigma) = (1 - 1/sigma^2) / log sigma^2.

    For sigma^2 > 1 the gap K_U - K_W is positive iff t > t0; for sigma^2 < 1
    it is positive iff t < t0, and t0 > 1 there, so it is positive on all of (0, 1).
    """
    if not sigma_sq > 0:
        raise InputError(f"sigma^2 must be positive, got {sigma_sq}")
    if sigma_sq == 1.0:
        raise InputError("t0 is undefined at sigma^2 = 1 (the limit is 1)")
    return (1.0 - 1.0 / sigma_sq) / math.log(sigma_sq)


def kl_gaussian_full(mu1, cov1, mu2, cov2) -> float:
    """KL(N(mu1, cov1) || N(mu2, cov2)) for full covariance matrices"""
    mu1 = np.ravel(np.asarray(mu1, dtype=float))
    mu2 = np.ravel(np.asarray(mu2, dtype=float))
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=float))
    n = mu1.size
    if mu2.size != n or cov1.shape != (n, n) or cov2.shape != (n, n):
        raise InputError("means and covariances must share the same dimension")
    sign1, logdet1 = np.linalg.slogdet(cov1)
    sign2, logdet2 = np.linalg.slogdet(cov2)
    if sign1 <= 0 or sign2 <= 0:
        raise InputError("covariances must be positive definite")
    factor = cho_factor(cov2)
    diff = mu2 - mu1
    trace_term = float(np.trace(cho_solve(factor, cov1)))
    quad_term = float(diff @ cho_solve(factor, diff))
    return 0.5 * (trace_term + quad_term - n + logdet2 - logdet1)


# ========== Sampling ==========

def _draw_noise(rng: np.random.Generator, n: int, shape) -> np.ndarray:
    return rng.standard_normal((n,) + tuple(shape))


def sample_regressor(q: GaussianPosterior, seed: SeedLike) -> LinearRegressor:
    """One draw mean + sqrt(variance) * Z; the mean itself when variance is 0"""
    if q.variance == 0:
        return q.mean
    rng = make_generator(seed)
    noise = _draw_noise(rng, 1, q.shape)[0]
    return q.mean.with_weights(q.mean.w + math.sqrt(q.variance) * noise)


def sample_weights(q: GaussianPosterior, n: int, rng: np.random.Generator) -> np.ndarray:
    """n weight matrices stacked as (n, dim_h, dim_f)"""
    if q.variance == 0:
        return np.broadcast_to(q.mean.w, (n,) + q.shape).copy()
    return q.mean.w + math.sqrt(q.variance) * _draw_noise(rng, n, q.shape)


def mc_values(
    q: GaussianPosterior,
    fn: Callable[[np.ndarray], np.ndarray],
    n_samples: int,
    seed: SeedLike,
) -> np.ndarray:
    """
    fn evaluated on n_samples posterior draws, drawn in fixed-size chunks.

    fn maps a (k, dim_h, dim_f) batch to k values. Chunks are consumed in order
    from one generator, so results do not depend on the chunk size.
    """
    if n_samples < 1:
        raise InputError(f"need at least one Monte Carlo sample, got {n_samples}")
    if q.variance == 0:
        value = fn(q.mean.w[None, :, :])
        return np.full(n_samples, float(np.asarray(value)[0]))
    rng = make_generator(seed)
    values = np.empty(n_samples)
    for start, stop in chunk_ranges(n_samples, settings.MC_CHUNK_SIZE):
        values[start:stop] = fn(sample_weights(q, stop - start, rng))
    return values


def log_density(q: GaussianPosterior, v: LinearRegressor) -> float:
    """log N(v; mean, variance I)"""
    if not q.variance > 0:
        raise InputError("log density needs a positive variance")
    diff = np.asarray(v.w if isinstance(v, LinearRegressor) else v, dtype=float) - q.mean.w
    return -0.5 * q.n_params * math.log(2.0 * math.pi * q.variance) - frobenius_norm_sq(diff) / (2.0 * q.variance)


def log_density_gradient(q: GaussianPosterior, v: LinearRegressor) -> np.ndarray:
    """Gradient in the mean: (v - mean) / variance"""
    w = v.w if isinstance(v, LinearRegressor) else np.asarray(v, dtype=float)
    if w.shape != q.shape:
        raise InputError(f"sample shape {w.shape} does not match posterior shape {q.shape}")
    if not q.variance > 0:
        raise InputError("log density gradient needs a positive variance")
    return (w - q.mean.w) / q.variance
