import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from models.gain_distribution import EmpiricalGain, ExponentialGain
from models.quantizer_policy import FeedbackTopology, PowerFunction, QuantizerPolicy, Scenario, ScenarioError
from services.quantizer import ConstraintViolationError, quantile_edges, uniform_mass_thresholds
from services.secrecy_rates import SecrecyRateEvaluator


@pytest.fixture
def evaluator(make_scenario, coarse_quadrature):
    return SecrecyRateEvaluator(make_scenario(K=2, b=2, p_avg=4.0), coarse_quadrature)


@pytest.fixture
def uniform_policy(unit_exp):
    return QuantizerPolicy.equal_power(uniform_mass_thresholds(unit_exp, 4), 4.0)


def test_zero_power_gives_zero_rates(evaluator, uniform_policy):
    silent = uniform_policy.scaled(0.0)
    assert evaluator.cm_lower(silent) == 0.0
    assert evaluator.cm_upper(silent) == 0.0
    assert evaluator.im_lower(silent) == 0.0
    assert evaluator.im_upper(silent) == 0.0


def test_lower_bound_does_not_exceed_upper_bound(evaluator, uniform_policy):
    assert evaluator.cm_lower(uniform_policy) <= evaluator.cm_upper(uniform_policy) + 1e-9
    assert evaluator.im_lower(uniform_policy) <= evaluator.im_upper(uniform_policy) + 1e-9


@settings(max_examples=15, deadline=None)
@given(
    cuts=st.lists(st.floats(min_value=0.01, max_value=4.0), min_size=3, max_size=3, unique=True),
    shares=st.lists(st.integers(min_value=0, max_value=10), min_size=4, max_size=4),
)
def test_bounds_are_ordered_for_any_feasible_policy(cuts, shares):
    scenario = Scenario.iid(K=1, b=2, p_avg=2.0, main=ExponentialGain(1.0), eve=ExponentialGain(0.8))
    evaluator = SecrecyRateEvaluator(scenario)
    thresholds = (0.0, *sorted(cuts))
    # scale the shares so that the average power is at most P_avg
    raw = QuantizerPolicy(thresholds, tuple(shares))
    spent = sum(m * p for m, p in zip(evaluator.table(scenario.main_laws[0]).masses(raw.lower_edges, raw.upper_edges), raw.powers))
    policy = raw.scaled(scenario.p_avg / spent * 0.999) if spent > 0 else raw
    assert evaluator.cm_lower(policy) <= evaluator.cm_upper(policy) + 1e-7


def test_overspending_policy_is_rejected(evaluator, uniform_policy):
    with pytest.raises(ConstraintViolationError):
        evaluator.cm_lower(uniform_policy.scaled(1.5))


def test_unknown_receiver_index_is_rejected(evaluator, uniform_policy):
    with pytest.raises(ScenarioError):
        evaluator.cm_lower(uniform_policy, receivers=[5])


def test_one_bit_lower_bound_matches_the_single_nonzero_interval(make_scenario, unit_exp):
    scenario = make_scenario(K=1, b=1, p_avg=2.0)
    evaluator = SecrecyRateEvaluator(scenario)
    tau = math.log(2.0)
    policy = QuantizerPolicy((0.0, tau), (0.0, 4.0))
    expected = 0.5 * evaluator.integrator.pos_part_log_ratio_expectation(unit_exp, tau, 4.0)
    assert evaluator.cm_lower(policy) == pytest.approx(expected, rel=1e-6)


def test_single_interval_upper_bound_matches_constant_power_capacity(make_scenario, unit_exp):
    scenario = make_scenario(K=1, b=1, p_avg=3.0)
    evaluator = SecrecyRateEvaluator(scenario)
    upper = evaluator.cm_upper(QuantizerPolicy((0.0, 1e-9), (3.0, 3.0)))
    capacity = evaluator.cm_capacity_perfect_csit(PowerFunction.constant(quantile_edges(unit_exp, 16), 3.0))
    assert upper == pytest.approx(capacity, rel=1e-5)


def test_common_message_bound_takes_the_weakest_receiver(coarse_quadrature):
    scenario = Scenario(
        K=2,
        b=1,
        p_avg=2.0,
        main_laws=(ExponentialGain(1.0), ExponentialGain(3.0)),
        eve=ExponentialGain(1.0),
    )
    evaluator = SecrecyRateEvaluator(scenario, coarse_quadrature)
    policy = QuantizerPolicy((0.0, 0.5), (1.0, 2.0))
    each = [evaluator.cm_lower(policy, receivers=[k]) for k in range(2)]
    assert evaluator.cm_lower(policy) == pytest.approx(min(each))
    assert evaluator.cm_upper(policy) == pytest.approx(min(evaluator.cm_upper(policy, receivers=[k]) for k in range(2)))


def test_perfect_csit_capacity_dominates_constant_power_bounds(evaluator, unit_exp):
    edges = quantile_edges(evaluator.scenario.max_law, 16)
    constant = PowerFunction.constant(edges, 4.0)
    capacity = evaluator.im_capacity_perfect_csit(constant)
    policy = QuantizerPolicy.equal_power(uniform_mass_thresholds(evaluator.scenario.max_law, 4), 4.0)
    assert evaluator.im_lower(policy) <= capacity + 1e-7


def test_iid_receivers_share_the_sum_rate_equally(evaluator):
    np.testing.assert_allclose(evaluator.strongest_probabilities(), [0.5, 0.5])
    assert evaluator.per_user_rate_share(1.2, 1) == pytest.approx(0.6)


def test_strongest_probabilities_of_unequal_exponentials(coarse_quadrature):
    scenario = Scenario(K=2, b=1, p_avg=1.0, main_laws=(ExponentialGain(1.0), ExponentialGain(2.0)), eve=ExponentialGain(1.0))
    shares = SecrecyRateEvaluator(scenario, coarse_quadrature).strongest_probabilities()
    np.testing.assert_allclose(shares, [1.0 / 3.0, 2.0 / 3.0], rtol=1e-6)


def test_strongest_probabilities_split_ties_for_sampled_laws():
    scenario = Scenario(
        K=2,
        b=1,
        p_avg=1.0,
        main_laws=(EmpiricalGain([1.0, 2.0]), EmpiricalGain([1.0, 3.0])),
        eve=EmpiricalGain([0.5]),
    )
    shares = SecrecyRateEvaluator(scenario).strongest_probabilities()
    # both laws sit at 1.0 with probability 1/4 and that tie is split evenly
    np.testing.assert_allclose(shares, [0.375, 0.625])


def test_per_user_share_rejects_unknown_receiver(evaluator):
    with pytest.raises(ScenarioError):
        evaluator.per_user_rate_share(1.0, 2)


def test_statistics_only_rate_vanishes_for_a_symmetric_eavesdropper(evaluator):
    assert evaluator.statistics_only_rate(4.0) == 0.0


def test_statistics_only_rate_is_a_difference_of_ergodic_rates(make_scenario):
    evaluator = SecrecyRateEvaluator(make_scenario(K=2, p_avg=2.0, eve_mean=0.25))
    integrator = evaluator.integrator
    expected = integrator.log1p_expectation(ExponentialGain(1.0), 2.0) - integrator.log1p_expectation(ExponentialGain(0.25), 2.0)
    assert evaluator.statistics_only_rate(2.0) == pytest.approx(expected, rel=1e-9)
    with pytest.raises(ConstraintViolationError):
        evaluator.statistics_only_rate(3.0)


def test_erased_feedback_falls_back_to_statistics(make_scenario):
    evaluator = SecrecyRateEvaluator(make_scenario(K=1, p_avg=2.0, eve_mean=0.25))
    fallback = evaluator.statistics_only_rate(2.0)
    assert evaluator.erased_feedback_fallback(0.0, 2.0, 5.0) == pytest.approx(fallback)
    assert evaluator.erased_feedback_fallback(1.0, 2.0, 5.0) == pytest.approx(max(fallback, 5.0))
    with pytest.raises(ValueError):
        evaluator.erased_feedback_fallback(1.5, 2.0, 5.0)


def test_high_snr_bounds_for_rayleigh(make_scenario, unit_exp):
    evaluator = SecrecyRateEvaluator(make_scenario(K=1, b=1))
    tau = math.log(2.0)
    result = evaluator.cm_high_snr_bounds((0.0, tau))
    assert result.upper == pytest.approx(1.0, rel=1e-6)
    assert result.lower == pytest.approx(0.5 * evaluator.integrator.pos_part_log_threshold_ratio(unit_exp, tau), rel=1e-9)
    assert result.ordered


def test_high_snr_lower_bound_rejects_unsorted_thresholds(evaluator, unit_exp):
    with pytest.raises(ScenarioError):
        evaluator.high_snr_lower_sum(unit_exp, (1.0, 0.5))


def test_im_high_snr_upper_bound_grows_with_K(make_scenario):
    values = [SecrecyRateEvaluator(make_scenario(K=K)).im_high_snr_bounds((0.0, 1.0)).upper for K in (1, 4, 16)]
    assert values[0] == pytest.approx(1.0, rel=1e-6)
    assert values[0] < values[1] < values[2]


@pytest.mark.parametrize("bound", ["cm_lower", "cm_upper", "im_lower", "im_upper"])
def test_policy_must_match_the_feedback_bits(evaluator, bound):
    one_bit = QuantizerPolicy((0.0, 1.0), (1.0, 1.0))
    with pytest.raises(ScenarioError, match="intervals"):
        getattr(evaluator, bound)(one_bit)


def test_bounds_do_not_depend_on_the_feedback_topology(make_scenario, coarse_quadrature, evaluator, uniform_policy):
    per_receiver = SecrecyRateEvaluator(
        make_scenario(K=2, b=2, p_avg=4.0, feedback_topology=FeedbackTopology.PER_RECEIVER), coarse_quadrature
    )
    for bound in ("cm_lower", "cm_upper", "im_lower", "im_upper"):
        assert getattr(per_receiver, bound)(uniform_policy) == getattr(evaluator, bound)(uniform_policy)
