from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from models.bccm_records import EveQuantileCell, FeedbackMode, IndicatorCell, PowerSplit
from models.gain_distribution import ExponentialGain
from models.quantizer_policy import FeedbackTopology, PowerFunction, QuantizerPolicy
from models.specs import SimConfig
from services.bccm import BccmEvaluator
from services.curves import CurveBuilder
from services.monte_carlo import MonteCarloOracle, quantized_index
from services.quadrature import ChannelIntegrator
from services.quantizer import quantile_edges
from services.secrecy_rates import SecrecyRateEvaluator

ONE_BIT = QuantizerPolicy((0.0, math.log(2.0)), (0.5, 1.5))
SPLIT = PowerSplit(p01=1.0, p02=2.0, p1=1.0)


def test_quantized_index_marks_gains_below_the_first_threshold():
    gains = np.array([0.1, 0.5, 1.0, 1.5, 3.0])
    assert quantized_index(gains, (0.5, 1.5)).tolist() == [-1, 0, 0, 1, 1]


def test_same_seed_reproduces_the_estimate(make_scenario, small_sim):
    scenario = make_scenario(K=2)
    first = MonteCarloOracle(scenario, small_sim).mc_cm_lower(ONE_BIT)
    second = MonteCarloOracle(scenario, small_sim).mc_cm_lower(ONE_BIT)
    assert first == second


def test_zero_power_policy_simulates_to_exactly_zero(make_scenario, small_sim):
    oracle = MonteCarloOracle(make_scenario(K=2), small_sim)
    estimate, stderr = oracle.mc_cm_lower(QuantizerPolicy((0.0, 1.0), (0.0, 0.0)))
    assert estimate == 0.0
    assert stderr == 0.0


def test_cm_lower_agrees_with_quadrature(make_scenario, small_sim, quadrature):
    scenario = make_scenario(K=1)
    analytic = SecrecyRateEvaluator(scenario, quadrature).cm_lower(ONE_BIT)
    estimate = MonteCarloOracle(scenario, small_sim).mc_cm_lower(ONE_BIT)
    assert estimate.agrees_with(analytic, sigmas=4.0)


def test_cm_upper_agrees_with_quadrature(make_scenario, small_sim, quadrature):
    scenario = make_scenario(K=1)
    analytic = SecrecyRateEvaluator(scenario, quadrature).cm_upper(ONE_BIT)
    estimate = MonteCarloOracle(scenario, small_sim).mc_cm_upper(ONE_BIT)
    assert estimate.agrees_with(analytic, sigmas=4.0)


def test_gain_ratio_estimate_matches_closed_form(small_sim):
    oracle = MonteCarloOracle(sim=small_sim)
    estimate = oracle.mc_pos_part_log_gain_ratio(ExponentialGain(1.0), ExponentialGain(1.0))
    assert estimate.agrees_with(1.0, sigmas=4.0)


def test_stderr_shrinks_like_inverse_root_of_blocks():
    oracle = MonteCarloOracle()
    unit = ExponentialGain(1.0)
    short = oracle.mc_pos_part_log_gain_ratio(unit, unit, SimConfig(num_blocks=100_000, seed=3, num_batches=200))
    long = oracle.mc_pos_part_log_gain_ratio(unit, unit, SimConfig(num_blocks=200_000, seed=3, num_batches=200))
    assert long.stderr / short.stderr == pytest.approx(1.0 / math.sqrt(2.0), rel=0.2)


def test_strongest_probabilities_are_uniform_for_iid_users(make_scenario, small_sim):
    oracle = MonteCarloOracle(make_scenario(K=4), small_sim)
    for estimate in oracle.mc_strongest_probabilities():
        assert estimate.agrees_with(0.25, sigmas=4.0)


def test_fully_erased_feedback_leaves_no_confidential_rate(make_scenario, small_sim):
    oracle = MonteCarloOracle(make_scenario(K=2, p_avg=2.0, epsilon=1.0), small_sim)
    _, r1 = oracle.mc_bccm_point(SPLIT, FeedbackMode.BEC)
    assert r1.estimate == 0.0


def test_erasure_free_bec_reproduces_errorfree_draws(make_scenario, small_sim):
    oracle = MonteCarloOracle(make_scenario(K=2, p_avg=2.0, epsilon=0.0), small_sim)
    bec = oracle.mc_bccm_point(SPLIT, FeedbackMode.BEC)
    errorfree = oracle.mc_bccm_point(SPLIT, FeedbackMode.ERRORFREE)
    assert [pair.estimate for pair in bec] == [pair.estimate for pair in errorfree]


def test_partitioned_mode_is_not_simulated_here(make_scenario, small_sim):
    oracle = MonteCarloOracle(make_scenario(K=2, p_avg=2.0), small_sim)
    with pytest.raises(ValueError):
        oracle.mc_bccm_point(SPLIT, FeedbackMode.BBIT)


def test_simulation_without_scenario_is_rejected(small_sim):
    with pytest.raises(ValueError):
        MonteCarloOracle(sim=small_sim).mc_cm_lower(ONE_BIT)


def test_scaling_experiment_rows(small_sim):
    rows = MonteCarloOracle(sim=small_sim).scaling_law_experiment(ExponentialGain(1.0), [1, 10, 100])
    assert [row.K for row in rows] == [1, 10, 100]
    first = rows[0]
    assert first.loglog_k is None
    assert first.gap_plus is None
    assert first.c_minus_hsnr == 0.0
    assert first.c_plus_hsnr == pytest.approx(1.0, rel=1e-6)
    assert rows[1].loglog_k == pytest.approx(math.log2(math.log(10.0)))
    assert rows[2].c_plus_hsnr > rows[1].c_plus_hsnr > first.c_plus_hsnr
    for row in rows:
        assert abs(row.mc_c_plus - row.c_plus_hsnr) <= 4.0 * row.mc_stderr + 1e-9


def test_scaling_experiment_rejects_unsorted_users(small_sim):
    with pytest.raises(ValueError):
        MonteCarloOracle(sim=small_sim).scaling_law_experiment(ExponentialGain(1.0), [10, 1])


def test_scheduled_sum_rate_agrees_with_quadrature(make_scenario, small_sim, quadrature):
    scenario = make_scenario(K=2)
    policy = QuantizerPolicy((0.0, math.log(2.0)), (1.0, 1.0))
    analytic = SecrecyRateEvaluator(scenario, quadrature).im_lower(policy)
    oracle = MonteCarloOracle(scenario, small_sim)
    estimate = oracle.mc_im_lower(policy)
    assert estimate.agrees_with(analytic, sigmas=4.0)
    shares = oracle.mc_per_user_shares(policy)
    assert sum(share.estimate for share in shares) == pytest.approx(estimate.estimate, rel=1e-9)


def test_interval_term_agrees_with_quadrature(small_sim, quadrature):
    main, eve = ExponentialGain(1.0), ExponentialGain(0.7)
    analytic = ChannelIntegrator(quadrature).pos_part_interval_term(main, eve, 0.3, 2.0, 4.0)
    estimate = MonteCarloOracle(sim=small_sim).mc_pos_part_interval_term(main, eve, 0.3, 2.0, 4.0)
    assert estimate.agrees_with(analytic, sigmas=4.0)


def test_threshold_ratio_limit_agrees_with_quadrature(small_sim, quadrature, unit_exp):
    analytic = ChannelIntegrator(quadrature).pos_part_log_threshold_ratio(unit_exp, 1.5)
    estimate = MonteCarloOracle(sim=small_sim).mc_pos_part_log_threshold_ratio(unit_exp, 1.5)
    assert estimate.agrees_with(analytic, sigmas=4.0)


@pytest.mark.parametrize("independent", [False, True])
def test_high_snr_bounds_agree_with_quadrature(make_scenario, small_sim, quadrature, independent):
    scenario = make_scenario(K=2, b=2)
    evaluator = SecrecyRateEvaluator(scenario, quadrature)
    thresholds = (0.0, 0.3, 0.8, 1.6)
    bounds = evaluator.im_high_snr_bounds(thresholds) if independent else evaluator.cm_high_snr_bounds(thresholds)
    lower, upper = MonteCarloOracle(scenario, small_sim).mc_high_snr_bounds(thresholds, independent=independent)
    assert lower.agrees_with(bounds.lower, sigmas=4.0)
    assert upper.agrees_with(bounds.upper, sigmas=4.0)


def test_common_message_perfect_csit_agrees_with_quadrature(make_scenario, small_sim, quadrature, unit_exp):
    scenario = make_scenario(K=2, p_avg=2.0)
    power_fn = PowerFunction.constant(quantile_edges(unit_exp, 4), 2.0)
    analytic = SecrecyRateEvaluator(scenario, quadrature).cm_capacity_perfect_csit(power_fn)
    estimate = MonteCarloOracle(scenario, small_sim).mc_perfect_csit(power_fn)
    assert estimate.agrees_with(analytic, sigmas=4.0)


def test_partitioned_point_agrees_with_the_evaluator(make_scenario, small_sim, coarse_quadrature):
    scenario = make_scenario(K=2, b=2, p_avg=2.0)
    bccm = BccmEvaluator(scenario, coarse_quadrature)
    cells = bccm.default_cells()
    splits = [PowerSplit(p01=1.5, p02=2.0, p1=1.0), PowerSplit(p01=0.5, p02=2.0, p1=1.0)]
    pair = bccm.point_bbit_errorfree(cells, splits)
    r0, r1 = MonteCarloOracle(scenario, small_sim).mc_bccm_partition_point(cells, splits)
    assert r0.agrees_with(pair.r0, sigmas=4.0)
    assert r1.agrees_with(pair.r1, sigmas=4.0)


def test_partition_cells_must_tile_the_gain_space(make_scenario, small_sim):
    oracle = MonteCarloOracle(make_scenario(K=2, b=2, p_avg=2.0), small_sim)
    overlapping = [EveQuantileCell(0.0, math.inf), IndicatorCell(lambda gains, gamma_e: gamma_e < 1.0)]
    with pytest.raises(ValueError):
        oracle.mc_bccm_partition_point(overlapping, [SPLIT, SPLIT])


@pytest.mark.slow
def test_validation_covers_every_evaluator(make_scenario, small_sim, coarse_quadrature):
    scenario = make_scenario(K=2, b=2, p_avg=2.0, epsilon=0.2)
    checks = CurveBuilder(scenario, coarse_quadrature, sim=small_sim)._scenario_checks(0, scenario, 4.0)
    names = {check.evaluator for check in checks}
    assert {
        "cm_capacity_perfect_csit",
        "pos_part_interval_term",
        "cm_high_snr_lower",
        "cm_high_snr_upper",
        "im_high_snr_lower",
        "im_high_snr_upper",
        "per_user_rate_share_0",
        "per_user_rate_share_1",
        "bccm_bbit_r0",
        "bccm_bbit_r1",
    } <= names


@pytest.mark.slow
def test_per_receiver_validation_skips_the_bccm_checks(make_scenario, small_sim, coarse_quadrature):
    scenario = make_scenario(K=2, b=1, p_avg=2.0, feedback_topology=FeedbackTopology.PER_RECEIVER)
    checks = CurveBuilder(scenario, coarse_quadrature, sim=small_sim)._scenario_checks(0, scenario, 4.0)
    names = {check.evaluator for check in checks}
    assert "cm_lower" in names
    assert not any(name.startswith("bccm_") for name in names)


def test_short_validation_runs_are_flagged(make_scenario, quiet_logger, monkeypatch, caplog):
    sim = SimConfig(num_blocks=500, num_batches=10, batch_size=100)
    builder = CurveBuilder(make_scenario(K=1), sim=sim, logger=quiet_logger)
    monkeypatch.setattr(builder, "validation_suite", lambda: [])
    with caplog.at_level(logging.WARNING, logger="secrecy.tests"):
        assert builder.validate() == []
    assert any("not acceptance grade" in record.getMessage() for record in caplog.records)
