"""
PAC-Bayes certificates: the classification bound, the augmented-regression
excess-risk bound with its penalty, the KDE bound, the exponential identity
bound and HYPE constants.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence
import logging
import math
import warnings

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from pacile.errors import InputError, PacIleWarning, PreconditionError
from pacile.gaussian_posterior import (
    GaussianPosterior,
    PriorConfig,
    kl_isotropic,
    mc_values,
    sample_weights,
)
from pacile.kernel_features import Kernel, feature_map, kernel_diagonal
from pacile.loss_embedding import LossEmbedding, as_labels, decode_rows
from pacile.models import BoundKind, CertificateFlag, EmpiricalMode, GStarSource, Parametrization
from pacile.rng import SeedLike, make_generator
from pacile.surrogate_regression import (
    DualRegressor,
    LinearRegressor,
    Regressor,
    empirical_quadratic_risk,
    empirical_task_risk,
)
from pacile.utils import frobenius_norm_sq, standard_error

logger = logging.getLogger(__name__)

E_RATIO = math.e / (math.e - 1.0)

# Column order of certificate records (CSV output)
CERTIFICATE_FIELDS = [
    "bound_kind",
    "status",
    "total",
    "empirical_term",
    "kl_term",
    "penalty_term",
    "delta",
    "a",
    "alpha",
    "t",
    "m",
    "n_params",
    "kappa",
    "c_delta",
    "g_star_norm",
    "mc_samples",
    "seed",
    "parametrization",
    "posterior_variance",
    "flags",
]


# ========== Certificate records ==========

class CertificateParams(BaseModel):
    """Parameters that produced a certificate"""
    model_config = ConfigDict(frozen=True)

    delta: float = Field(..., gt=0, lt=1, description="Confidence level")
    m: int = Field(..., ge=1, description="Number of samples")
    a: Optional[float] = Field(None, gt=1, description="Slack of the exponential identity bound")
    alpha: Optional[float] = Field(None, description="Prior exponent")
    t: Optional[float] = Field(None, description="Prior variance fraction")
    n_params: Optional[int] = Field(None, description="N = dim_h * dim_f")
    kappa: Optional[float] = None
    c_delta: Optional[float] = None
    g_star_norm: Optional[float] = Field(None, description="Norm of g* or its plug-in proxy")
    mc_samples: Optional[int] = None
    seed: Optional[int] = None
    parametrization: Optional[Parametrization] = None
    posterior_variance: Optional[float] = None

    @field_validator("a", "alpha", "t", "kappa", "c_delta", "g_star_norm", "posterior_variance")
    @classmethod
    def validate_finite(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not math.isfinite(v):
            raise ValueError("recorded parameters must be finite")
        return v


class BoundCertificate(BaseModel):
    """
    A decomposed bound value.

    Term meaning per kind:
      classification:   empirical = E_Q E_m(f), kl = KL(Q||P), penalty = (KL + log 1/delta) / m
      augmented-excess: empirical = E_Q (1/m) sum ||g*(x) - g(x)||, kl = KL(Q||P), penalty = epsilon
      kde:              empirical = R_m(g), kl = (9/8) ||w||^2, penalty = (kl + log 1/delta) / m
    """
    model_config = ConfigDict(frozen=True)

    bound_kind: BoundKind
    empirical_term: float
    kl_term: float
    penalty_term: float
    total: float
    params: CertificateParams
    flags: List[CertificateFlag] = Field(default_factory=list)

    @property
    def certified(self) -> bool:
        return not self.flags

    @property
    def status(self) -> str:
        return "certified" if self.certified else "non-certified"

    def recompute_total(self) -> float:
        """Re-derive the total from the stored parts"""
        p = self.params
        if self.bound_kind is BoundKind.CLASSIFICATION:
            return p.a * E_RATIO * -math.expm1(-self.empirical_term / p.a - self.penalty_term)
        if self.bound_kind is BoundKind.AUGMENTED_EXCESS:
            complexity = (self.kl_term + math.log(2.0 / p.delta)) / float(p.m) ** p.alpha
            return 2.0 * p.c_delta * (self.empirical_term + complexity + self.penalty_term)
        return 5.0 * E_RATIO * -math.expm1(-2.0 * self.empirical_term - self.penalty_term)

    def with_flags(self, *flags: CertificateFlag) -> "BoundCertificate":
        merged = list(self.flags) + [f for f in flags if f not in self.flags]
        return self.model_copy(update={"flags": merged})

    def to_record(self) -> Dict[str, Any]:
        """Flat record in CERTIFICATE_FIELDS order"""
        params = self.params.model_dump(mode="json")
        record: Dict[str, Any] = {
            "bound_kind": self.bound_kind.value,
            "status": self.status,
            "total": self.total,
            "empirical_term": self.empirical_term,
            "kl_term": self.kl_term,
            "penalty_term": self.penalty_term,
            "flags": ";".join(f.value for f in self.flags),
        }
        for key in CERTIFICATE_FIELDS:
            if key not in record:
                record[key] = params.get(key)
        return {key: record[key] for key in CERTIFICATE_FIELDS}


def certificate_frame(certificates: Sequence[BoundCertificate]) -> pd.DataFrame:
    return pd.DataFrame([c.to_record() for c in certificates], columns=CERTIFICATE_FIELDS)


# ========== Bounds ==========

def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise InputError(f"delta must lie in (0, 1), got {delta}")


def _check_slack(a: float) -> None:
    if not a > 1:
        raise InputError(f"slack a must be > 1, got {a}")


def exp_identity_bound(x, a: float):
    """(a e / (e - 1)) (1 - exp(-x / a)), which dominates x on [0, 1] for a > 1"""
    _check_slack(a)
    arr = np.asarray(x, dtype=float)
    if np.any(~((arr >= 0) & (arr <= 1))):
        raise InputError("x must lie in [0, 1]")
    value = a * E_RATIO * -np.expm1(-arr / a)
    return float(value) if np.ndim(value) == 0 else value


def ensure_unit_loss(embedding: LossEmbedding) -> None:
    low, high = embedding.loss_range
    if low < 0 or high > 1:
        raise PreconditionError(f"{embedding.loss_name.value} loss is not valued in [0, 1]")


def classification_bound(
    empirical_risk: float,
    kl: float,
    m: int,
    delta: float,
    a: float,
    embedding: Optional[LossEmbedding] = None,
    **params: Any,
) -> BoundCertificate:
    """
    Bound on E_{f~Q} E(f):

        (a e / (e - 1)) (1 - exp(-empirical_risk / a - (kl + log(1/delta)) / m))
    """
    _check_delta(delta)
    _check_slack(a)
    if embedding is not None:
        ensure_unit_loss(embedding)
    if empirical_risk < 0 or kl < 0:
        raise InputError("empirical risk and KL must be non-negative")
    if m < 1:
        raise InputError(f"m must be positive, got {m}")

    penalty = (kl + math.log(1.0 / delta)) / m
    total = a * E_RATIO * -math.expm1(-empirical_risk / a - penalty)
    return BoundCertificate(
        bound_kind=BoundKind.CLASSIFICATION,
        empirical_term=empirical_risk,
        kl_term=kl,
        penalty_term=penalty,
        total=total,
        params=CertificateParams(delta=delta, m=m, a=a, **params),
    )


def estimate_expected_empirical_task_risk(
    q: GaussianPosterior,
    embedding: LossEmbedding,
    xs,
    ys,
    n_samples: int,
    seed: SeedLike,
) -> tuple:
    """
    Monte Carlo estimate of E_{f~Q} E_m(f) and its standard error.

    Each sampled regressor is decoded and scored on its own; predictions are
    never averaged across samples.
    """
    ys = np.atleast_2d(as_labels(ys, embedding.n_labels))
    if q.variance == 0:
        return empirical_task_risk(q.mean, embedding, xs, ys), 0.0
    features = q.mean.features(xs)

    def risks(batch: np.ndarray) -> np.ndarray:
        out = np.empty(batch.shape[0])
        for k, w in enumerate(batch):
            decoded = decode_rows(embedding, features @ w.T)
            out[k] = np.mean(embedding.loss_rows(decoded, ys))
        return out

    values = mc_values(q, risks, n_samples, seed)
    return float(np.mean(values)), standard_error(values)


def stochastic_predict(q: GaussianPosterior, embedding: LossEmbedding, xs, seed: SeedLike) -> np.ndarray:
    """Stochastic predictor: a fresh regressor is drawn for every input"""
    features = q.mean.features(xs)
    rng = make_generator(seed)
    weights = sample_weights(q, features.shape[0], rng)
    outputs = np.einsum("nhd,nd->nh", weights, features)
    return decode_rows(embedding, outputs)


def _check_penalty_inputs(prior: PriorConfig, g_star_norm: float, n_params: int) -> bool:
    """Raises on invalid inputs; returns whether the excess-risk bound applies (N >= 6)"""
    if g_star_norm < 0:
        raise InputError(f"||g*|| must be >= 0, got {g_star_norm}")
    if int(n_params) != n_params or n_params < 1:
        raise InputError(f"N must be a positive integer, got {n_params}")
    return n_params >= 6


def _warn_small_n(n_params: int) -> None:
    message = f"N = {n_params} < 6: the excess-risk bound does not apply, value is not certified"
    logger.warning(message)
    warnings.warn(message, PacIleWarning, stacklevel=3)


def penalty_epsilon(prior: PriorConfig, g_star_norm: float, n_params: int) -> float:
    """
    epsilon = ||g*||^2 / (2 m^(1-alpha)) (1 + 1/F)
              + (N / m^alpha) [log(1 + ||g*|| / sqrt(2 F m^(1-2alpha))) + log(1 / sqrt(1 - t))]
    """
    if not _check_penalty_inputs(prior, g_star_norm, n_params):
        _warn_small_n(n_params)
    return _epsilon(prior, g_star_norm, n_params)


def _epsilon(prior: PriorConfig, g_star_norm: float, n_params: int) -> float:
    m, alpha, t, f = float(prior.m), prior.alpha, prior.t, prior.f_ratio
    g = g_star_norm
    first = g ** 2 / (2.0 * m ** (1.0 - alpha)) * (1.0 + 1.0 / f)
    bracket = math.log1p(g / math.sqrt(2.0 * f * m ** (1.0 - 2.0 * alpha))) - 0.5 * math.log1p(-t)
    return first + n_params / m ** alpha * bracket


def penalty_epsilon_prime(prior: PriorConfig, g_star_norm: float, n_params: int) -> float:
    """
    KL part at the posterior centred on g* (unit variance) regrouped with epsilon:

        (N / m^alpha) [log(1 + ||g*|| / sqrt(2 F m^(1-2alpha))) + log sqrt(1/F)
                       + (1/2) log(m^(1-2alpha) / kappa^2) - 1/2]
        + (N / (2 m^(1-alpha))) [kappa^2 / t (1 + ||g*||^2 / N) + ||g*||^2 / N (1 + 1/F)]
    """
    if not _check_penalty_inputs(prior, g_star_norm, n_params):
        _warn_small_n(n_params)
    m, alpha, t, f, kappa = float(prior.m), prior.alpha, prior.t, prior.f_ratio, prior.kappa
    g_sq_per_n = g_star_norm ** 2 / n_params
    log_part = (
        math.log1p(g_star_norm / math.sqrt(2.0 * f * m ** (1.0 - 2.0 * alpha)))
        + 0.5 * math.log(1.0 / f)
        + 0.5 * math.log(m ** (1.0 - 2.0 * alpha) / kappa ** 2)
        - 0.5
    )
    linear_part = kappa ** 2 / t * (1.0 + g_sq_per_n) + g_sq_per_n * (1.0 + 1.0 / f)
    return n_params / m ** alpha * log_part + n_params / (2.0 * m ** (1.0 - alpha)) * linear_part


def augmented_excess_bound(
    q: GaussianPosterior,
    prior: PriorConfig,
    embedding: LossEmbedding,
    empirical_abs_term: float,
    g_star_norm: float,
    delta: float,
    empirical_mode: EmpiricalMode = EmpiricalMode.EXACT,
    g_star_source: GStarSource = GStarSource.ORACLE,
    **params: Any,
) -> BoundCertificate:
    """
    Excess-risk bound E_Q E(f) - E(f*) <= 2 c_Delta [emp + (KL + log(2/delta)) / m^alpha + epsilon].

    `empirical_abs_term` must be E_Q (1/m) sum ||g*(x_i) - g(x_i)|| in EXACT mode,
    which needs g* (ORACLE). Otherwise the caller passes a surrogate and the
    certificate is flagged.
    """
    _check_delta(delta)
    empirical_mode = EmpiricalMode(empirical_mode)
    g_star_source = GStarSource(g_star_source)
    if empirical_mode is EmpiricalMode.EXACT and g_star_source is not GStarSource.ORACLE:
        raise InputError("an exact empirical term needs the oracle g*; use surrogate mode")
    if empirical_abs_term < 0:
        raise InputError("empirical term must be non-negative")

    n_params = q.n_params
    applies = _check_penalty_inputs(prior, g_star_norm, n_params)
    epsilon = _epsilon(prior, g_star_norm, n_params)
    kl = kl_isotropic(q, prior)
    complexity = (kl + math.log(2.0 / delta)) / prior.m_alpha
    total = 2.0 * embedding.c_delta * (empirical_abs_term + complexity + epsilon)

    flags = []
    if empirical_mode is EmpiricalMode.SURROGATE:
        flags.append(CertificateFlag.SURROGATE_EMPIRICAL)
    if g_star_source is GStarSource.PLUG_IN:
        flags.append(CertificateFlag.PLUG_IN_G_STAR)
    if not applies:
        flags.append(CertificateFlag.N_BELOW_SIX)

    certificate = BoundCertificate(
        bound_kind=BoundKind.AUGMENTED_EXCESS,
        empirical_term=empirical_abs_term,
        kl_term=kl,
        penalty_term=epsilon,
        total=total,
        params=CertificateParams(
            delta=delta,
            m=prior.m,
            alpha=prior.alpha,
            t=prior.t,
            n_params=n_params,
            kappa=prior.kappa,
            c_delta=embedding.c_delta,
            g_star_norm=g_star_norm,
            parametrization=q.parametrization,
            posterior_variance=q.variance,
            **params,
        ),
        flags=flags,
    )
    if flags:
        logger.warning(f"Excess-risk certificate reported as non-certified: {[f.value for f in flags]}")
    return certificate


def _regressor_norm_sq(regressor: Regressor) -> float:
    if isinstance(regressor, DualRegressor):
        return regressor.rkhs_norm_sq()
    return frobenius_norm_sq(regressor.w)


def kde_bound(
    regressor: Regressor,
    kernel: Kernel,
    embedding: LossEmbedding,
    xs,
    ys,
    delta: float,
    **params: Any,
) -> BoundCertificate:
    """
    (5e / (e - 1)) [1 - exp(-2 R_m(g) - ((9/8) ||w||^2 + log(1/delta)) / m)]

    Needs a normalized kernel, k(x, x) = 1 on every training input.
    """
    _check_delta(delta)
    if kernel != regressor.kernel:
        raise InputError("kernel does not match the regressor's kernel")
    diagonal = kernel_diagonal(kernel, xs)
    if np.max(np.abs(diagonal - 1.0)) > 1e-9:
        raise PreconditionError("the KDE bound needs k(x, x) = 1 on every input")

    m = diagonal.shape[0]
    risk = empirical_quadratic_risk(regressor, embedding, xs, ys)
    complexity = 9.0 / 8.0 * _regressor_norm_sq(regressor)
    penalty = (complexity + math.log(1.0 / delta)) / m
    total = 5.0 * E_RATIO * -math.expm1(-2.0 * risk - penalty)
    return BoundCertificate(
        bound_kind=BoundKind.KDE,
        empirical_term=risk,
        kl_term=complexity,
        penalty_term=penalty,
        total=total,
        params=CertificateParams(delta=delta, m=m, **params),
    )


@dataclass(frozen=True)
class HypeConstants:
    """K(h) = B ||h||_F + C"""
    b: float
    c: float
    k: float


def hype_constants(
    regressor: LinearRegressor,
    kernel: Kernel,
    xs,
    g_star_values=None,
    assumed_c: Optional[float] = None,
) -> HypeConstants:
    """B = max ||X(x)||, C = max ||g*(x)|| (or an assumed bound), K = B ||W||_F + C"""
    if kernel != regressor.kernel:
        raise InputError("kernel does not match the regressor's kernel")
    features = feature_map(kernel, xs)
    b = float(np.max(np.linalg.norm(features, axis=1)))
    if g_star_values is not None:
        g_star_values = np.atleast_2d(np.asarray(g_star_values, dtype=float))
        c = float(np.max(np.linalg.norm(g_star_values, axis=1)))
    elif assumed_c is not None:
        if assumed_c < 0:
            raise InputError("assumed C must be non-negative")
        c = float(assumed_c)
    else:
        raise InputError("hype constants need g* values or an assumed bound on ||g*||")
    return HypeConstants(b=b, c=c, k=b * regressor.frobenius_norm() + c)
