"""Immutable numerical knobs: quadrature, optimizer and simulation settings."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for every expectation computed by quadrature."""

    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_subdivisions: int = 200
    tail_truncation_mass: float = 1e-12
    # continuous laws are discretized on this many quantile cells when paired with samples
    empirical_grid: int = 1024

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")
        if not 0 < self.tail_truncation_mass < 1:
            raise ValueError("tail_truncation_mass must lie in (0, 1)")
        if self.empirical_grid < 2:
            raise ValueError("empirical_grid must be at least 2")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class OptimizerMethod(str, Enum):
    NELDER_MEAD_LAGRANGIAN = "nelder_mead_lagrangian"
    GRID_REFINE = "grid_refine"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class OptimizerSpec:
    """Search settings for thresholds, powers, power functions and BCCM splits."""

    method: OptimizerMethod = OptimizerMethod.NELDER_MEAD_LAGRANGIAN
    restarts: int = 8
    power_line_search_points: int = 64
    lambda_bisect_tol: float = 1e-8
    seed: int = 0
    max_iterations: int = 400
    perfect_csit_knots: int = 256
    refine_rounds: int = 2
    bccm_theta_tol: float = 1e-10
    partition_sweeps: int = 2
    workers: int = 1

    def __post_init__(self) -> None:
        if isinstance(self.method, str) and not isinstance(self.method, OptimizerMethod):
            object.__setattr__(self, "method", OptimizerMethod(self.method))
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.power_line_search_points < 4:
            raise ValueError("power_line_search_points must be at least 4")
        if self.lambda_bisect_tol <= 0:
            raise ValueError("lambda_bisect_tol must be positive")
        if self.perfect_csit_knots < 2:
            raise ValueError("perfect_csit_knots must be at least 2")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["method"] = self.method.value
        return data


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo block-simulation settings."""

    num_blocks: int = 1_000_000
    seed: int = 0
    batch_size: int = 100_000
    num_batches: int = 100
    report_stderr: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        if self.num_blocks < 2:
            raise ValueError("num_blocks must be at least 2")
        if self.num_batches < 2:
            raise ValueError("num_batches must be at least 2 for batch-means errors")
        if self.num_blocks < self.num_batches:
            raise ValueError("num_blocks must be at least num_batches")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def acceptance_grade(self) -> bool:
        return self.num_blocks >= 1_000

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


__all__ = ["OptimizerMethod", "OptimizerSpec", "QuadratureSpec", "SimConfig"]
