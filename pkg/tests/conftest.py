"""Shared fixtures: small Rayleigh scenarios and cheap numerical settings."""
from __future__ import annotations

import logging

import pytest

from models.gain_distribution import ExponentialGain
from models.quantizer_policy import Scenario
from models.specs import OptimizerSpec, QuadratureSpec, SimConfig


@pytest.fixture
def unit_exp() -> ExponentialGain:
    return ExponentialGain(1.0)


@pytest.fixture
def quadrature() -> QuadratureSpec:
    return QuadratureSpec()


@pytest.fixture
def coarse_quadrature() -> QuadratureSpec:
    return QuadratureSpec(abs_tol=1e-8, rel_tol=1e-6, empirical_grid=256)


@pytest.fixture
def fast_optimizer() -> OptimizerSpec:
    return OptimizerSpec(
        restarts=2,
        power_line_search_points=24,
        max_iterations=80,
        perfect_csit_knots=32,
        refine_rounds=1,
        partition_sweeps=1,
        seed=7,
    )


@pytest.fixture
def small_sim() -> SimConfig:
    return SimConfig(num_blocks=200_000, seed=11, batch_size=50_000, num_batches=40)


@pytest.fixture
def quiet_logger() -> logging.Logger:
    logger = logging.getLogger("secrecy.tests")
    logger.setLevel(logging.WARNING)
    return logger


@pytest.fixture
def make_scenario(unit_exp: ExponentialGain):
    """Factory for iid Rayleigh scenarios; keyword overrides go to ``Scenario.iid``."""

    def build(K: int = 2, b: int = 1, p_avg: float = 1.0, eve_mean: float = 1.0, **kwargs) -> Scenario:
        return Scenario.iid(K=K, b=b, p_avg=p_avg, main=unit_exp, eve=ExponentialGain(eve_mean), **kwargs)

    return build
