"""
⚙️ PROCESS SETTINGS
===================

Environment-backed defaults (prefix GHARTREE_, optional .env file).
Run configs override these per experiment.
"""

from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

ZeroMode = Literal["zero", "cellavg", "strict"]
ChirpConvention = Literal["quarter", "half"]


class GHartreeSettings(BaseSettings):
    """Defaults shared by the library, the CLI and the presets"""

    model_config = SettingsConfigDict(
        env_prefix="GHARTREE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = Field(default="INFO", description="structlog/stdlib level name")
    log_json: bool = Field(default=False, description="Render logs as JSON lines")
    output_dir: str = Field(default="runs", description="Default run output root")
    fft_workers: int = Field(default=1, ge=1, description="scipy.fft worker threads")
    zero_mode: ZeroMode = Field(default="cellavg", description="Riesz potential zero-mode policy")
    chirp_convention: ChirpConvention = Field(
        default="quarter", description="quarter: exp(ib|x|^2/4), half: exp(ib|x|^2/2)"
    )
    contraction_c: float = Field(default=1.0, gt=0)
    contraction_c1: float = Field(default=1.0, gt=0)
    contraction_c3: float = Field(default=1.0, gt=0)
    bisection_rtol: float = Field(default=1e-10, gt=0)


@lru_cache(maxsize=1)
def get_settings() -> GHartreeSettings:
    """Global settings instance"""
    return GHartreeSettings()
