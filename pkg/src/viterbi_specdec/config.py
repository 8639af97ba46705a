"""
Configuration management with pydantic-settings.

All defaults can be overridden from environment variables with the SPECDEC_ prefix.
CLI flags take precedence over settings.
"""

from enum import Enum
from functools import lru_cache
from typing import Any

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class DecodeMode(str, Enum):
    """Path selection strategy for one decode step."""

    VITERBI = "viterbi"
    GREEDY = "greedy"
    STOCHASTIC = "stochastic"


class MaskMode(str, Enum):
    """How union tokens outside a head's own top-k are scored."""

    RETAIN = "retain"  # head's true probability
    STRICT = "strict"  # -inf


class Settings(BaseSettings):
    """
    Viterbi SpecDec configuration.

    All values read from environment variables with SPECDEC_ prefix.
    """

    model_config = SettingsConfigDict(
        env_prefix="SPECDEC_",
        env_file=None,
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Estimation
    alpha: float = Field(default=1.0, ge=0.0, description="Additive smoothing constant")

    # Decoding defaults (n=8, k=3 is the best reported configuration)
    heads: int = Field(default=8, ge=1, le=64, description="Number of prediction heads n")
    top_k: int = Field(default=3, ge=1, description="Candidates retained per head")
    mode: DecodeMode = Field(default=DecodeMode.VITERBI, description="Path selection mode")
    mask_mode: MaskMode = Field(default=MaskMode.RETAIN, description="Out-of-top-k scoring")
    anchored: bool = Field(
        default=False, description="Condition the first head on the last committed token"
    )

    # Numerics
    log_floor: float = Field(
        default=1e-12, gt=0.0, lt=1.0, description="Probability floor applied before log"
    )
    brute_force_limit: int = Field(
        default=10_000_000, ge=1, description="Maximum m**n paths the oracle enumerates"
    )

    # Synthetic head source
    head_gamma: float = Field(
        default=0.5, ge=0.0, description="Temperature exponent t**gamma for far heads"
    )

    # Parallelism
    shards: int = Field(default=1, ge=1, description="Corpus shards for bigram counting")
    workers: int = Field(default=1, ge=1, le=64, description="Thread pool size")

    log_level: str = Field(default="INFO", description="Logging level name")

    @field_validator("log_level", mode="before")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        """Upper-case and strip the level name."""
        if isinstance(v, str):
            return v.strip().upper()
        return v

    def get_safe_config_summary(self) -> dict[str, Any]:
        """Return a flat summary of configuration for logging."""
        return {
            "alpha": self.alpha,
            "heads": self.heads,
            "top_k": self.top_k,
            "mode": self.mode.value,
            "mask_mode": self.mask_mode.value,
            "anchored": self.anchored,
            "log_floor": self.log_floor,
            "brute_force_limit": self.brute_force_limit,
            "head_gamma": self.head_gamma,
            "shards": self.shards,
            "workers": self.workers,
        }


@lru_cache
def get_settings() -> Settings:
    """
    Get cached settings instance.

    Uses lru_cache to ensure single instance across the application.
    """
    return Settings()
