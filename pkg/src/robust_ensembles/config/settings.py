"""Configuration via pydantic-settings with .env support."""

from __future__ import annotations

from pathlib import Path

from dotenv import dotenv_values
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from robust_ensembles.core.exceptions import ConfigError
from robust_ensembles.core.models import OptimizerOptions


class RobustEnsemblesSettings(BaseSettings):
    """Application settings loaded from environment variables and .env file."""

    model_config = SettingsConfigDict(
        env_prefix="ROBUST_ENSEMBLES_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Parallelism (1 = serial)
    threads: int = 1

    # Search
    seed: int = 1729
    t_max: float = 1e3
    grid_gamma_points: int = 24
    grid_beta_points: int = 25
    n_starts: int = 4
    tie_tolerance: float = 1e-3

    # Output paths
    output_dir: Path = Path("output")

    # Run ledger
    ledger_path: Path = Path("data/robust_ensembles.db")
    record_runs: bool = False

    # SVG timestamp comment
    svg_timestamp: bool = True

    # Logging
    log_level: str = "INFO"

    def optimizer_options(self, workers: int | None = None) -> OptimizerOptions:
        """Search options derived from these settings."""
        return OptimizerOptions(
            grid_gamma_points=self.grid_gamma_points,
            grid_beta_points=self.grid_beta_points,
            n_starts=self.n_starts,
            seed=self.seed,
            tie_tolerance=self.tie_tolerance,
            t_max=self.t_max,
            workers=max(1, workers if workers is not None else self.threads),
        )

    def ensure_directories(self) -> None:
        """Create output and ledger directories if they don't exist."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if self.record_runs:
            self.ledger_path.parent.mkdir(parents=True, exist_ok=True)


def read_config_file(path: Path) -> dict[str, str]:
    """Parse a key=value config file whose keys mirror the long CLI flags.

    Keys are normalized to lower case with dashes turned into underscores,
    so ``--gamma-min`` may be written ``gamma_min`` or ``gamma-min``.

    Raises:
        ConfigError: if the file does not exist.
    """
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    values = dotenv_values(path, encoding="utf-8")
    return {
        key.strip().lower().replace("-", "_"): value
        for key, value in values.items()
        if value is not None
    }


def load_settings(**overrides: object) -> RobustEnsemblesSettings:
    """Build settings from the environment with explicit overrides on top.

    Raises:
        ConfigError: if a value fails validation.
    """
    try:
        return RobustEnsemblesSettings(**{k: v for k, v in overrides.items() if v is not None})
    except ValidationError as exc:
        raise ConfigError(f"Invalid settings: {exc}") from exc
