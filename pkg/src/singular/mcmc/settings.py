"""singular-mcmc runtime settings."""

import os

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class SamplerSettings(BaseSettings):
    """Process-wide sampler settings, read from SINGULAR_MCMC_* env variables."""

    threads: int = os.cpu_count() or 1
    debug: bool = False
    log_level: str = "INFO"
    log_json: bool = False

    # batch-means batches for every AcceptanceRecord
    n_batches: int = 20
    # sweeps worth of random numbers drawn per stream in one call
    random_block: int = 4096

    model_config = SettingsConfigDict(env_prefix="SINGULAR_MCMC_", env_file=".env")

    @field_validator("threads")
    def check_threads(cls, v):
        """Worker pools need at least one worker."""
        if v < 1:
            raise ValueError("threads must be >= 1")
        return v

    @field_validator("log_level")
    def parse_log_level(cls, v):
        """Normalize log level name."""
        return v.strip().upper()

    @field_validator("n_batches")
    def check_n_batches(cls, v):
        """Batch-means standard errors need at least 20 batches."""
        if v < 20:
            raise ValueError("n_batches must be >= 20")
        return v

    @field_validator("random_block")
    def check_random_block(cls, v):
        """Block size must be positive."""
        if v < 1:
            raise ValueError("random_block must be >= 1")
        return v


sampler_settings = SamplerSettings()
