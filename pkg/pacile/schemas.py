"""
Pydantic schemas for command configurations
"""
from typing import Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pacile.config import settings
from pacile.models import Algorithm, KernelKind, LossName, Parametrization, ScheduleMode

# ========== Base Schemas ==========

class BaseSchema(BaseModel):
    """Base schema: unknown keys are rejected, enums kept as members"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True, validate_default=True)

    @model_validator(mode="before")
    @classmethod
    def blank_to_none(cls, data: Any) -> Any:
        if isinstance(data, dict):
            return {k: (None if isinstance(v, str) and v.strip() == "" else v) for k, v in data.items()}
        return data


def _split_list(v: Any) -> Any:
    if isinstance(v, str):
        return [item.strip() for item in v.split(",") if item.strip()]
    return v


class RunOptions(BaseSchema):
    """Options shared by every command"""
    seed: int = Field(settings.DEFAULT_SEED, ge=0, description="Master seed")
    out_dir: str = Field(settings.OUTPUT_DIR, description="Output directory")
    threads: int = Field(settings.DEFAULT_THREADS, ge=1, description="Worker threads for independent cells")


class DataOptions(BaseSchema):
    """Either a CSV dataset or a synthetic task sampled from a fixed seed"""
    dataset: Optional[str] = Field(None, description="Path to a dataset CSV; synthetic data when empty")
    loss: LossName = Field(LossName.HAMMING, description="Task loss")
    synthetic_seed: int = Field(0, ge=0, description="Seed of the synthetic task and its training sample")
    synthetic_support: int = Field(16, ge=1, le=64, description="Number of support points")
    synthetic_labels: int = Field(3, ge=1, le=8, description="Label length l")
    synthetic_concentration: float = Field(1.0, gt=0, description="Dirichlet concentration of rho(y|x)")
    synthetic_features: Optional[int] = Field(None, ge=1, description="Gaussian features; one-hot when empty")
    synthetic_m: int = Field(100, ge=1, description="Training set size")
    standardize: bool = Field(False, description="Standardize feature columns (mean 0, variance 1) before use")


# ========== Command Schemas ==========

class TrainConfig(RunOptions, DataOptions):
    """Configuration of `train` (and of each `sweep` cell)"""
    algorithm: Algorithm = Field(Algorithm.ILE, description="ile, relax-pb or mc-pb")
    kernel: KernelKind = Field(KernelKind.LINEAR, description="Input kernel")
    bandwidth: Optional[float] = Field(None, gt=0, description="Gaussian kernel bandwidth")

    alpha: float = Field(0.5, gt=0, le=1, description="Prior exponent")
    t: float = Field(0.5, gt=0, lt=1, description="Prior variance fraction")
    kappa: Optional[float] = Field(None, gt=0, description="Kernel bound; estimated from data when empty")
    parametrization: Parametrization = Field(Parametrization.UNIT, description="Posterior variance choice")
    posterior_variance: Optional[float] = Field(None, ge=0, description="Variance for the custom parametrization")

    lambdas: List[float] = Field([1e-3, 1e-2, 1e-1, 1.0], description="Ridge grid for ile")
    learning_rates: Optional[List[float]] = Field(None, description="Learning-rate menu (constant schedule)")
    schedule: ScheduleMode = Field(ScheduleMode.CONSTANT, description="Step-size schedule")
    nu: float = Field(1.0, gt=0.5, le=1, description="Decay exponent of the decaying schedule")
    schedule_w: float = Field(0.0, ge=0, description="Offset of the decaying schedule")
    warm_start: bool = Field(False, description="Start gradient methods from the ridge fit at the prior penalty")

    max_iter: int = Field(settings.MAX_ITER, ge=1)
    grad_tol: float = Field(settings.GRAD_TOL, ge=0)
    plateau_window: int = Field(settings.PLATEAU_WINDOW, ge=0)
    plateau_rtol: float = Field(settings.PLATEAU_RTOL, ge=0)

    mc_samples: int = Field(20, ge=1, description="M, gradient samples per step")
    m_prime_samples: Optional[int] = Field(None, ge=2, description="M', samples for a_hat")
    use_cv: bool = Field(True, description="Quadratic control variate in mc-pb")
    fixed_a: Optional[float] = Field(None, description="Fixed baseline coefficient instead of a_hat")
    eval_samples: int = Field(200, ge=1, description="Monte Carlo samples of J_hat for selection")

    @field_validator("lambdas", "learning_rates", mode="before")
    @classmethod
    def split_lists(cls, v):
        return _split_list(v)

    @field_validator("lambdas", "learning_rates")
    @classmethod
    def validate_positive_grid(cls, v):
        if v is not None:
            if not v:
                raise ValueError("grid must not be empty")
            if any(not x > 0 for x in v):
                raise ValueError("grid values must be positive")
        return v

    @model_validator(mode="after")
    def validate_kernel(self):
        if self.kernel is KernelKind.GAUSSIAN and self.bandwidth is None:
            raise ValueError("the gaussian kernel needs a bandwidth")
        if self.kernel is not KernelKind.GAUSSIAN and self.bandwidth is not None:
            raise ValueError(f"bandwidth is only used by the gaussian kernel, not {self.kernel.value}")
        if self.parametrization is Parametrization.CUSTOM and self.posterior_variance is None:
            raise ValueError("the custom parametrization needs posterior_variance")
        return self

    def rate_menu(self) -> List[Optional[float]]:
        """Candidate learning rates; a single None for the decaying schedule"""
        if self.schedule is ScheduleMode.DECAYING:
            return [None]
        if self.learning_rates is not None:
            return list(self.learning_rates)
        if self.algorithm is Algorithm.MC_PB:
            return [1e-5, 1e-4, 1e-3]
        return [1e-8, 1e-4, 1e-3, 1e-2]


class SweepConfig(TrainConfig):
    """Grid of (alpha, t) cells, each trained as in `train`"""
    alphas: List[float] = Field([0.1, 0.3, 0.5], description="alpha grid")
    ts: List[float] = Field([0.1, 0.3, 0.5, 0.7, 0.9], description="t grid")

    @field_validator("alphas", "ts", mode="before")
    @classmethod
    def split_grids(cls, v):
        return _split_list(v)

    @field_validator("alphas")
    @classmethod
    def validate_alphas(cls, v):
        if not v or any(not 0 < a <= 1 for a in v):
            raise ValueError("alphas must lie in (0, 1]")
        return v

    @field_validator("ts")
    @classmethod
    def validate_ts(cls, v):
        if not v or any(not 0 < t < 1 for t in v):
            raise ValueError("ts must lie in (0, 1)")
        return v

    def cell(self, alpha: float, t: float) -> TrainConfig:
        values = self.model_dump(exclude={"alphas", "ts"})
        values.update(alpha=alpha, t=t)
        return TrainConfig(**values)


class CertifyConfig(RunOptions, DataOptions):
    """Configuration of `certify`"""
    posterior: str = Field(..., description="Posterior container written by `train`")
    delta: float = Field(0.05, gt=0, lt=1, description="Confidence level")
    a: float = Field(1.5, gt=1, description="Slack of the classification bound")
    mc_samples: int = Field(1000, ge=1, description="Posterior samples for the empirical terms")


class ValidateConfig(RunOptions):
    """Configuration of `validate`"""
    experiments: List[str] = Field(["all"], description="Experiment names or 'all'")

    @field_validator("experiments", mode="before")
    @classmethod
    def split_names(cls, v):
        return _split_list(v)
