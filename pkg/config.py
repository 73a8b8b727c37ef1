"""Application-wide configuration helpers for the secrecy-bounds toolkit."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from models.specs import OptimizerSpec, QuadratureSpec, SimConfig


class SecrecySettings(BaseSettings):
    """Load configuration from environment variables or a .env file."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        populate_by_name=True,
    )

    log_level: str = Field(
        "INFO",
        validation_alias="LOG_LEVEL",
        description="Root logging level (DEBUG, INFO, etc.)",
    )
    log_directory: Path = Field(
        Path("logs"),
        validation_alias="LOG_DIRECTORY",
        description="Directory where log files should be written",
    )
    output_directory: Path = Field(
        Path("out"),
        validation_alias="SECRECY_OUTPUT_DIR",
        description="Directory used when --out names a directory or is omitted with --json",
    )
    quad_abs_tol: float = Field(
        1e-9,
        validation_alias="SECRECY_QUAD_ABS_TOL",
        description="Absolute tolerance handed to the adaptive quadrature",
    )
    quad_rel_tol: float = Field(
        1e-7,
        validation_alias="SECRECY_QUAD_REL_TOL",
        description="Relative tolerance handed to the adaptive quadrature",
    )
    quad_max_subdivisions: int = Field(
        200,
        validation_alias="SECRECY_QUAD_MAX_SUBDIVISIONS",
        description="Maximum number of adaptive subintervals",
    )
    tail_truncation_mass: float = Field(
        1e-12,
        validation_alias="SECRECY_TAIL_MASS",
        description="Residual probability mass below which improper tails are cut",
    )
    empirical_grid: int = Field(
        1024,
        validation_alias="SECRECY_EMPIRICAL_GRID",
        description="Quantile grid size used when a continuous law meets a sampled one",
    )
    workers: int = Field(
        4,
        validation_alias="SECRECY_WORKERS",
        description="Thread pool size for sweeps, restarts and simulation shards",
    )
    default_seed: int = Field(
        20240101,
        validation_alias="SECRECY_SEED",
        description="Seed used when neither the scenario nor the CLI supplies one",
    )
    scenario_path: Optional[Path] = Field(
        None,
        validation_alias="SECRECY_SCENARIO",
        description="Scenario document used when --scenario is not given",
    )

    @field_validator("log_directory", "output_directory", mode="before")
    @classmethod
    def _expand_directory(cls, value: Optional[Path], info) -> Path:
        fallback = "logs" if info.field_name == "log_directory" else "out"
        path = Path(value) if value not in (None, "") else Path(fallback)
        return path.expanduser().resolve()

    @field_validator("scenario_path", mode="before")
    @classmethod
    def _expand_scenario_path(cls, value: Optional[Path]) -> Optional[Path]:
        if value in (None, ""):
            return None
        return Path(value).expanduser().resolve()

    def build_quadrature_spec(self) -> QuadratureSpec:
        """Return the tolerance bundle shared by every expectation."""
        return QuadratureSpec(
            abs_tol=self.quad_abs_tol,
            rel_tol=self.quad_rel_tol,
            max_subdivisions=self.quad_max_subdivisions,
            tail_truncation_mass=self.tail_truncation_mass,
            empirical_grid=self.empirical_grid,
        )

    def build_optimizer_spec(self, **overrides: object) -> OptimizerSpec:
        """Optimizer knobs seeded from the environment, overridable per run."""
        params: dict[str, object] = {"seed": self.default_seed, "workers": self.workers}
        params.update({key: value for key, value in overrides.items() if value is not None})
        return OptimizerSpec(**params)

    def build_sim_config(self, **overrides: object) -> SimConfig:
        params: dict[str, object] = {"seed": self.default_seed, "workers": self.workers}
        params.update({key: value for key, value in overrides.items() if value is not None})
        return SimConfig(**params)
