"""
Configuration management for confir.

Uses pydantic-settings for environment variable loading with sensible defaults.
"""

from pydantic_settings import BaseSettings

KIB = 1 << 10
MIB = 1 << 20


class Settings(BaseSettings):
    """confir toolchain configuration."""

    # Reproducibility
    seed: int | None = None  # fallback for --seed on randomized subcommands

    # Compilation
    scheme: str = "mpx"
    strict: bool = True  # reject branch-on-private instead of warning
    mpx_public_size: int = 1 * MIB
    mpx_private_size: int = 1 * MIB
    mpx_stack_offset: int = 64 * KIB
    stack_size: int = 16 * KIB
    magic_max_attempts: int = 1000

    # Execution
    fuel: int = 10_000

    # Harness
    jobs: int = 1
    corpus_size: int = 200
    pairs_per_program: int = 20
    runs_per_program: int = 10

    model_config = {
        "env_prefix": "CONFIR_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
    }


# Global settings instance
settings = Settings()
