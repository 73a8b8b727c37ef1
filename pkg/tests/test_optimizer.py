import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import optimize, special

from models.bccm_records import FeedbackMode, PowerSplit
from models.gain_distribution import EmpiricalGain, ExponentialGain
from models.quantizer_policy import QuantizerPolicy, Scenario
from models.specs import OptimizerMethod
from services.bccm import BccmEvaluator
from services.bccm_region import BccmRegionTracer
from services.optimizer import (
    BccmSplitOptimizer,
    BoundObjective,
    InfeasibleTargetError,
    PolicyOptimizer,
    _PowerProblem,
    power_grid,
    solve_lagrangian,
    split_policy,
)
from services.quadrature import LN2
from services.quantizer import FEASIBILITY_SLACK, average_power, uniform_mass_thresholds
from services.secrecy_rates import SecrecyRateEvaluator


def _optimizer(scenario, quadrature, spec):
    return PolicyOptimizer(SecrecyRateEvaluator(scenario, quadrature), spec)


# --------------------------------------------------------------- Lagrangian
def test_lagrangian_gives_stronger_intervals_more_power():
    masses = np.array([0.5, 0.5])
    gains = np.array([0.5, 4.0])
    grids = power_grid(masses, 2.0, 64)
    values = masses[:, None] * np.log2(1.0 + gains[:, None] * grids)
    solution = solve_lagrangian(_PowerProblem(masses, grids, values), 2.0, 1e-10)
    assert float(np.dot(masses, solution.powers)) <= 2.0 + FEASIBILITY_SLACK * 2.0
    assert solution.powers[1] > solution.powers[0]
    assert solution.binding
    if solution.mixed is not None:
        assert float(np.dot(masses, solution.mixed)) == pytest.approx(2.0, rel=1e-9)


def test_lagrangian_spends_nothing_when_power_only_hurts():
    masses = np.array([0.25, 0.75])
    grids = power_grid(masses, 1.0, 16)
    values = -grids
    solution = solve_lagrangian(_PowerProblem(masses, grids, values), 1.0, 1e-10)
    assert solution.lam == 0.0
    np.testing.assert_array_equal(solution.powers, [0.0, 0.0])


# ----------------------------------------------------------- policy splits
def test_split_policy_keeps_power_and_never_lowers_the_bounds(make_scenario, coarse_quadrature, unit_exp):
    scenario = make_scenario(K=1, b=2, p_avg=2.0)
    evaluator = SecrecyRateEvaluator(scenario, coarse_quadrature)
    coarse = QuantizerPolicy((0.3, 1.2), (1.0, 2.5), p0=0.5)
    fine = split_policy(coarse, 4, unit_exp)
    assert fine.Q == 4
    assert fine.thresholds[0] == coarse.thresholds[0] and fine.thresholds[2] == coarse.thresholds[1]
    assert average_power(fine, unit_exp) == pytest.approx(average_power(coarse, unit_exp), rel=1e-12)
    assert evaluator.lower_sum(unit_exp, fine) >= evaluator.lower_sum(unit_exp, coarse) - 1e-9
    assert evaluator.upper_sum(unit_exp, fine) == pytest.approx(evaluator.upper_sum(unit_exp, coarse), rel=1e-5)


def test_split_policy_needs_a_multiple_of_the_interval_count(unit_exp):
    with pytest.raises(ValueError):
        split_policy(QuantizerPolicy((0.0, 1.0), (1.0, 1.0)), 3, unit_exp)


# --------------------------------------------------------- policy search
def test_optimized_one_bit_policy_beats_the_uniform_baseline(make_scenario, coarse_quadrature, fast_optimizer, unit_exp):
    scenario = make_scenario(K=1, b=1, p_avg=4.0)
    optimizer = _optimizer(scenario, coarse_quadrature, fast_optimizer)
    optimum = optimizer.optimize_policy(BoundObjective.CM_LOWER)
    baseline = QuantizerPolicy.equal_power(uniform_mass_thresholds(unit_exp, 2), 4.0)
    assert optimum.value >= optimizer.evaluator.cm_lower(baseline) - 1e-9
    assert optimum.value == pytest.approx(optimizer.evaluator.cm_lower(optimum.policy), rel=1e-9)
    assert average_power(optimum.policy, unit_exp) <= 4.0 * (1 + 1e-9)
    assert len(optimum.diagnostics["restart_values"]) == fast_optimizer.restarts
    assert optimum.diagnostics["selected"] in optimum.diagnostics["seed_values"] or optimum.diagnostics["selected"].startswith("restart_")


def test_optimization_is_reproducible_for_a_fixed_seed(make_scenario, coarse_quadrature, fast_optimizer):
    scenario = make_scenario(K=1, b=1, p_avg=2.0)
    first = _optimizer(scenario, coarse_quadrature, fast_optimizer).optimize_policy(BoundObjective.CM_LOWER)
    second = _optimizer(scenario, coarse_quadrature, fast_optimizer).optimize_policy(BoundObjective.CM_LOWER)
    assert first.policy == second.policy
    assert first.value == second.value


def test_seeding_with_the_coarser_optimum_never_loses(make_scenario, coarse_quadrature, fast_optimizer, unit_exp):
    one_bit = _optimizer(make_scenario(K=1, b=1, p_avg=4.0), coarse_quadrature, fast_optimizer)
    seed = one_bit.optimize_policy(BoundObjective.CM_LOWER).policy
    two_bit = _optimizer(make_scenario(K=1, b=2, p_avg=4.0), coarse_quadrature, fast_optimizer)
    optimum = two_bit.optimize_policy(BoundObjective.CM_LOWER, seeds=[seed])
    assert optimum.policy.Q == 4
    assert optimum.value >= two_bit.evaluator.cm_lower(split_policy(seed, 4, unit_exp)) - 1e-9
    assert "seed_0" in optimum.diagnostics["seed_values"]


def test_upper_bound_at_the_lower_policy_dominates_the_lower_bound(make_scenario, coarse_quadrature, fast_optimizer):
    optimizer = _optimizer(make_scenario(K=2, b=1, p_avg=4.0), coarse_quadrature, fast_optimizer)
    optimum = optimizer.optimize_policy(BoundObjective.IM_LOWER)
    assert optimizer.evaluator.im_upper(optimum.policy) >= optimum.value - 1e-9


def test_perfect_objectives_need_a_power_function(make_scenario, fast_optimizer):
    optimizer = _optimizer(make_scenario(K=1), None, fast_optimizer)
    with pytest.raises(ValueError, match="power_function"):
        optimizer.optimize_policy(BoundObjective.CM_PERFECT)


def test_fixed_threshold_powers_beat_equal_power(make_scenario, coarse_quadrature, fast_optimizer, unit_exp):
    scenario = make_scenario(K=1, b=2, p_avg=2.0)
    optimizer = _optimizer(scenario, coarse_quadrature, fast_optimizer)
    thresholds = uniform_mass_thresholds(unit_exp, 4)
    policy = optimizer.optimize_powers_given_thresholds(BoundObjective.CM_LOWER, thresholds)
    assert policy.thresholds == thresholds
    assert average_power(policy, unit_exp) <= 2.0 * (1 + 1e-9)
    equal = QuantizerPolicy.equal_power(thresholds, 2.0)
    # equal power wastes a quarter of the budget on [0, tau_2), which carries no lower-bound rate
    assert optimizer.evaluator.cm_lower(policy) > optimizer.evaluator.cm_lower(equal)


def test_power_function_recovers_water_filling_without_an_eavesdropper(coarse_quadrature, fast_optimizer):
    p_avg = 1.0
    scenario = Scenario.iid(K=1, b=1, p_avg=p_avg, main=ExponentialGain(1.0), eve=EmpiricalGain([0.0]))
    optimizer = PolicyOptimizer(SecrecyRateEvaluator(scenario, coarse_quadrature), fast_optimizer)
    optimum = optimizer.optimize_power_function(BoundObjective.CM_PERFECT, knots=128)
    # water level 1/lam with E[(1/lam - 1/gamma)^+] = P_avg
    lam = optimize.brentq(lambda x: math.exp(-x) / x - special.exp1(x) - p_avg, 0.01, 5.0)
    capacity = special.exp1(lam) / LN2
    assert optimum.value <= capacity + 1e-3
    assert optimum.value >= 0.98 * capacity
    assert optimum.value >= optimum.diagnostics["constant_value"] - 1e-12


def test_high_snr_thresholds_improve_on_uniform(make_scenario, fast_optimizer, unit_exp):
    optimizer = _optimizer(make_scenario(K=1, b=1), None, fast_optimizer)
    optimum = optimizer.optimize_high_snr_thresholds(BoundObjective.CM_LOWER)
    uniform = optimizer.evaluator.high_snr_lower_sum(unit_exp, uniform_mass_thresholds(unit_exp, 2))
    assert optimum.value >= uniform
    assert len(optimum.thresholds) == 2
    assert optimum.thresholds[1] > optimum.thresholds[0] >= 0.0


# ------------------------------------------------------------------ BCCM
@pytest.fixture
def bccm(make_scenario, coarse_quadrature):
    return BccmEvaluator(make_scenario(K=2, b=2, p_avg=4.0, epsilon=0.5), coarse_quadrature)


@pytest.fixture
def split_optimizer(bccm, fast_optimizer):
    return BccmSplitOptimizer(bccm, fast_optimizer)


def test_largest_confidential_rate_is_feasible(bccm, split_optimizer):
    weights = bccm.weights(FeedbackMode.ERRORFREE)
    p1, r1 = split_optimizer.max_r1(weights)
    assert r1 > 0.0
    assert 0.0 < p1 <= 4.0 / weights.w_a * (1 + 1e-9)
    assert r1 == pytest.approx(bccm.r1_of_p1(p1, weights), rel=1e-12)


def test_zero_target_maximizes_the_common_rate(bccm, split_optimizer):
    split, pair = split_optimizer.optimize_bccm_split(FeedbackMode.ERRORFREE, 0.0)
    assert split.p1 == 0.0
    reference = bccm.point_errorfree(PowerSplit(p01=4.0, p02=4.0, p1=0.0))
    assert pair.r0 >= reference.r0 - 1e-6


def test_split_meets_the_confidential_target(bccm, split_optimizer):
    _, best = split_optimizer.max_r1(bccm.weights(FeedbackMode.BEC))
    target = 0.5 * best
    split, pair = split_optimizer.optimize_bccm_split(FeedbackMode.BEC, target)
    assert pair.r1 >= target - 1e-6
    weights = bccm.weights(FeedbackMode.BEC)
    assert split.average_power(weights.w_a, weights.w_ac) <= 4.0 * (1 + 1e-9)


def test_unreachable_target_reports_the_largest_rate(bccm, split_optimizer):
    _, best = split_optimizer.max_r1(bccm.weights(FeedbackMode.ERRORFREE))
    with pytest.raises(InfeasibleTargetError) as excinfo:
        split_optimizer.optimize_bccm_split(FeedbackMode.ERRORFREE, best * 1.5)
    assert excinfo.value.max_r1 == pytest.approx(best, rel=1e-6)


@pytest.mark.slow
def test_partitioned_split_never_loses_to_the_one_bit_split(bccm, split_optimizer):
    _, best = split_optimizer.max_r1(bccm.weights(FeedbackMode.ERRORFREE))
    target = 0.3 * best
    _, one_bit = split_optimizer.optimize_bccm_split(FeedbackMode.ERRORFREE, target)
    cells, splits, pair = split_optimizer.optimize_partitioned_split(target, search_edges=False)
    assert len(cells) == len(splits) == 2
    assert pair.r0 >= one_bit.r0 - 1e-6
    assert pair.r1 >= target - 1e-6


def test_traced_frontier_is_monotone(bccm, split_optimizer):
    curve = BccmRegionTracer(bccm, split_optimizer).trace(FeedbackMode.ERRORFREE, frontier_samples=7)
    assert len(curve.points) == 7
    assert curve.is_monotone()
    assert all(point.status in ("ok", "envelope") for point in curve.points)
    assert curve.max_r1 == pytest.approx(curve.diagnostics["max_r1"], rel=1e-6)


def test_erasures_shrink_the_confidential_axis(bccm, split_optimizer):
    errorfree = BccmRegionTracer(bccm, split_optimizer).trace(FeedbackMode.ERRORFREE, frontier_samples=3)
    erased = BccmRegionTracer(bccm, split_optimizer).trace(FeedbackMode.BEC, frontier_samples=3)
    assert erased.max_r1 < errorfree.max_r1
    assert erased.epsilon == 0.5


def test_frontier_needs_two_samples(bccm, split_optimizer):
    with pytest.raises(ValueError):
        BccmRegionTracer(bccm, split_optimizer).trace(FeedbackMode.ERRORFREE, frontier_samples=1)


# ------------------------------------------------ heterogeneous receivers
@pytest.fixture
def unequal_mains():
    return Scenario(
        K=2,
        b=1,
        p_avg=3.0,
        main_laws=(ExponentialGain(1.0), ExponentialGain(0.3)),
        eve=ExponentialGain(1.0),
    )


@pytest.mark.parametrize("objective", [BoundObjective.CM_LOWER, BoundObjective.CM_UPPER])
def test_shared_policy_is_feasible_for_every_receiver(unequal_mains, coarse_quadrature, fast_optimizer, objective):
    optimizer = _optimizer(unequal_mains, coarse_quadrature, fast_optimizer)
    optimum = optimizer.optimize_policy(objective)
    for law in unequal_mains.main_laws:
        assert average_power(optimum.policy, law) <= 3.0 * (1 + 1e-9)
    lower = optimizer.evaluator.cm_lower(optimum.policy)
    upper = optimizer.evaluator.cm_upper(optimum.policy)
    assert (upper if objective.is_upper else lower) == pytest.approx(optimum.value, rel=1e-9)
    per_receiver = optimum.diagnostics["per_receiver"]
    assert set(per_receiver) == {0, 1}
    assert optimum.value == pytest.approx(min(per_receiver.values()), rel=1e-12)
    assert set(optimum.diagnostics["per_receiver_max"]) == {0, 1}


def test_shared_policy_beats_each_single_receiver_policy_rescaled(unequal_mains, coarse_quadrature, fast_optimizer):
    optimizer = _optimizer(unequal_mains, coarse_quadrature, fast_optimizer)
    optimum = optimizer.optimize_policy(BoundObjective.CM_LOWER)
    for law in unequal_mains.main_laws:
        equal = QuantizerPolicy.equal_power(uniform_mass_thresholds(law, 2), 3.0)
        spent = max(average_power(equal, other) for other in unequal_mains.main_laws)
        assert optimum.value >= optimizer.evaluator.cm_lower(equal.scaled(3.0 / spent)) - 1e-9


def test_fixed_threshold_powers_fit_every_receiver(unequal_mains, coarse_quadrature, fast_optimizer):
    optimizer = _optimizer(unequal_mains, coarse_quadrature, fast_optimizer)
    thresholds = uniform_mass_thresholds(ExponentialGain(0.3), 2)
    for receiver in (None, 0):
        policy = optimizer.optimize_powers_given_thresholds(BoundObjective.CM_LOWER, thresholds, receiver=receiver)
        assert max(average_power(policy, law) for law in unequal_mains.main_laws) == pytest.approx(3.0, rel=1e-9)
        assert optimizer.evaluator.cm_lower(policy) >= 0.0


def test_shared_power_function_is_feasible_for_every_receiver(unequal_mains, coarse_quadrature, fast_optimizer):
    optimizer = _optimizer(unequal_mains, coarse_quadrature, fast_optimizer)
    optimum = optimizer.optimize_power_function(BoundObjective.CM_PERFECT, knots=32)
    assert optimizer.evaluator.cm_capacity_perfect_csit(optimum.power_fn) == pytest.approx(optimum.value, rel=1e-9)
    assert optimum.value >= optimum.diagnostics["constant_value"] - 1e-12


# ------------------------------------------------------------ monotonicity
@pytest.mark.slow
@pytest.mark.parametrize("objective", [BoundObjective.CM_LOWER, BoundObjective.IM_LOWER])
def test_more_feedback_bits_never_lower_the_optimized_bound(make_scenario, coarse_quadrature, fast_optimizer, objective):
    seeds: list[QuantizerPolicy] = []
    values = []
    for b in (1, 2, 3):
        optimizer = _optimizer(make_scenario(K=2, b=b, p_avg=4.0), coarse_quadrature, fast_optimizer)
        optimum = optimizer.optimize_policy(objective, seeds=seeds)
        values.append(optimum.value)
        seeds = [optimum.policy]
    assert all(later >= earlier - 1e-9 for earlier, later in zip(values, values[1:]))


def test_more_users_raise_the_scheduled_bound(make_scenario, coarse_quadrature, fast_optimizer):
    values = []
    for K in (1, 2, 4):
        optimizer = _optimizer(make_scenario(K=K, b=1, p_avg=4.0), coarse_quadrature, fast_optimizer)
        values.append(optimizer.optimize_policy(BoundObjective.IM_LOWER).value)
    # multiuser diversity gains dwarf the search tolerance
    assert values[1] > values[0]
    assert values[2] > values[1]


@pytest.mark.slow
def test_partitioned_frontier_keeps_every_cell_split(bccm, split_optimizer):
    curve = BccmRegionTracer(bccm, split_optimizer).trace(FeedbackMode.BBIT, frontier_samples=2)
    for point in curve.points:
        if point.status in ("infeasible", "failed"):
            continue
        assert len(point.cell_splits) == len(point.cell_edges) == 2
        assert point.cell_edges[0][0] == 0.0
        assert math.isinf(point.cell_edges[-1][1])
        assert len(point.to_dicts()) == 2


@pytest.mark.parametrize("method", [OptimizerMethod.GRID_REFINE, OptimizerMethod.STOCHASTIC])
def test_alternative_searches_beat_the_uniform_baseline(make_scenario, coarse_quadrature, fast_optimizer, unit_exp, method):
    spec = replace(fast_optimizer, method=method)
    optimizer = _optimizer(make_scenario(K=1, b=1, p_avg=4.0), coarse_quadrature, spec)
    optimum = optimizer.optimize_policy(BoundObjective.CM_LOWER)
    baseline = QuantizerPolicy.equal_power(uniform_mass_thresholds(unit_exp, 2), 4.0)
    assert optimum.value >= optimizer.evaluator.cm_lower(baseline) - 1e-9
    assert average_power(optimum.policy, unit_exp) <= 4.0 * (1 + FEASIBILITY_SLACK)
    assert len(optimum.diagnostics["restart_values"]) == spec.restarts


def test_partitioned_confidential_rate_reaches_the_one_bit_rate(bccm, split_optimizer):
    _, one_bit = split_optimizer.max_r1(bccm.weights(FeedbackMode.ERRORFREE))
    partitioned = split_optimizer.max_partitioned_r1(bccm.default_cells())
    assert partitioned >= one_bit * (1 - 1e-5) - 1e-9
