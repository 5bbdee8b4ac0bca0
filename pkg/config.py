"""
Configuration management for the MW operator toolkit
"""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide tunables loaded from environment variables (MW_*)"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="MW_",
        case_sensitive=False
    )

    # Application Settings
    log_level: str = "INFO"
    log_format: str = "console"  # console | json
    default_workers: int = 1

    # Budgets
    word_budget: int = 2_000_000  # max |I|^p for word sums
    expansion_budget: int = 20_000_000  # max nodes in one composition level
    admissible_budget: int = 500_000  # max |S_k|
    quadrature_budget: int = 4_000_000  # max tensor-grid nodes
    evaluation_chunk: int = 262_144  # points per vectorised field call

    # Numerical tolerances
    fd_relative_step: float = 1e-4
    fd_max_groups: int = 3
    dedup_tolerance: float = 1e-12
    memo_quantum: float = 1e-15
    overlap_threshold: float = 1e-9  # relative to the tile volume
    beta_tolerance: float = 1e-12
    lambda_sign_tolerance: float = 1e-10

    # Defaults for experiments
    default_quadrature_depth: int = 6
    default_samples: int = 20_000
    orbit_trajectory_limit: int = 10_000


# Global settings instance
settings = Settings()
