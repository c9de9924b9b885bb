"""
Configuration settings for the pacile toolkit
"""
from typing import Optional
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """
    Toolkit settings loaded from environment variables (prefix PACILE_)
    """
    # Application
    PROJECT_NAME: str = "pacile"
    VERSION: str = "1.2.0"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    # Runs
    DEFAULT_SEED: int = 0
    OUTPUT_DIR: str = "runs"
    DEFAULT_THREADS: int = 1

    # Linear algebra
    KRR_CONDITION_LIMIT: float = 1e12
    KRR_RESIDUAL_TOL: float = 1e-8

    # Enumeration over {0,1}^l
    ENUMERATION_MAX_LABELS: int = 20
    DECODE_CHUNK_SIZE: int = 4096

    # Monte Carlo
    MC_CHUNK_SIZE: int = 256

    # Optimization defaults
    MAX_ITER: int = 10_000
    GRAD_TOL: float = 1e-6
    PLATEAU_WINDOW: int = 50
    PLATEAU_RTOL: float = 1e-8
    DIVERGENCE_FACTOR: float = 10.0

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        v = str(v).upper()
        if v not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return v

    @field_validator("MC_CHUNK_SIZE", "DECODE_CHUNK_SIZE", "DEFAULT_THREADS")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be a positive integer")
        return v

    model_config = SettingsConfigDict(
        env_prefix="PACILE_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )


# Create settings instance
settings = Settings()

# Export settings
__all__ = ["settings", "Settings"]
