"""Average-power bookkeeping shared by every bound evaluator."""
from __future__ import annotations

import numpy as np

from models.gain_distribution import GainDistribution
from models.quantizer_policy import PowerFunction, QuantizerPolicy

FEASIBILITY_SLACK = 1e-12


class ConstraintViolationError(ValueError):
    """Raised when a policy, split or power function exceeds the average power budget."""


def interval_masses(policy: QuantizerPolicy, gate_law: GainDistribution) -> np.ndarray:
    """Masses of [tau_q, tau_{q+1}) for q = 1..Q."""
    lower = np.asarray(gate_law.mass_below(policy.lower_edges), dtype=float)
    upper = np.append(np.asarray(gate_law.mass_below(policy.upper_edges[:-1]), dtype=float), 1.0)
    return np.clip(upper - lower, 0.0, 1.0)


def below_first_threshold(policy: QuantizerPolicy, gate_law: GainDistribution) -> float:
    return float(gate_law.mass_below(policy.thresholds[0]))


def average_power(policy: QuantizerPolicy, gate_law: GainDistribution) -> float:
    """Long-run average transmit power when ``gate_law`` selects the interval."""
    total = float(np.dot(interval_masses(policy, gate_law), policy.powers))
    if policy.p0:
        total += below_first_threshold(policy, gate_law) * policy.p0
    return total


def _slack(p_avg: float) -> float:
    return FEASIBILITY_SLACK * max(1.0, p_avg)


def feasible(policy: QuantizerPolicy, gate_law: GainDistribution, p_avg: float) -> bool:
    return average_power(policy, gate_law) <= p_avg + _slack(p_avg)


def require_feasible(policy: QuantizerPolicy, gate_law: GainDistribution, p_avg: float) -> None:
    spent = average_power(policy, gate_law)
    if spent > p_avg + _slack(p_avg):
        raise ConstraintViolationError(f"average power {spent:.6g} exceeds P_avg {p_avg:.6g}")


def power_function_average(power_fn: PowerFunction, gate_law: GainDistribution) -> float:
    lower = np.asarray(gate_law.mass_below(power_fn.lower_edges), dtype=float)
    upper = np.append(np.asarray(gate_law.mass_below(power_fn.upper_edges[:-1]), dtype=float), 1.0)
    return float(np.dot(np.clip(upper - lower, 0.0, 1.0), power_fn.levels))


def require_feasible_power_function(power_fn: PowerFunction, gate_law: GainDistribution, p_avg: float) -> None:
    spent = power_function_average(power_fn, gate_law)
    if spent > p_avg + _slack(p_avg):
        raise ConstraintViolationError(f"power function spends {spent:.6g} > P_avg {p_avg:.6g}")


def uniform_mass_thresholds(dist: GainDistribution, Q: int) -> tuple[float, ...]:
    """tau_q = F^{-1}(q / Q) for q = 0..Q-1, so tau_1 = 0 and every interval has mass 1/Q."""
    if Q < 1:
        raise ValueError("Q must be at least 1")
    levels = np.arange(Q) / Q
    thresholds = np.asarray(dist.ppf(levels), dtype=float)
    thresholds[0] = 0.0
    # sampled laws can repeat quantiles; nudge so the policy stays strictly increasing
    for index in range(1, Q):
        if thresholds[index] <= thresholds[index - 1]:
            thresholds[index] = np.nextafter(thresholds[index - 1], np.inf)
    return tuple(float(t) for t in thresholds)


def quantile_edges(dist: GainDistribution, knots: int) -> tuple[float, ...]:
    """Edges 0 = F^{-1}(0) < F^{-1}(1/n) < ... < F^{-1}((n-1)/n) < inf for a power function."""
    return uniform_mass_thresholds(dist, knots) + (float("inf"),)


__all__ = [
    "ConstraintViolationError",
    "FEASIBILITY_SLACK",
    "average_power",
    "below_first_threshold",
    "feasible",
    "interval_masses",
    "power_function_average",
    "quantile_edges",
    "require_feasible",
    "require_feasible_power_function",
    "uniform_mass_thresholds",
]
