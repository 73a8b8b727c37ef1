"""Common-message and independent-messages secrecy-rate evaluators."""
from __future__ import annotations

import logging
import math
import time
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import numpy as np
from numpy.polynomial import polynomial

from models.bound_result import BoundResult
from models.gain_distribution import GainDistribution
from models.quantizer_policy import PowerFunction, QuantizerPolicy, Scenario, ScenarioError
from models.specs import QuadratureSpec
from services.quadrature import ChannelIntegrator, interval_mass
from services.quantizer import (
    ConstraintViolationError,
    interval_masses,
    require_feasible,
    require_feasible_power_function,
)
from services.rate_tables import PositivePartTable

T = TypeVar("T")


class SecrecyRateEvaluator:
    """Evaluate the finite-feedback bounds of one scenario for given policies."""

    def __init__(
        self,
        scenario: Scenario,
        quadrature: Optional[QuadratureSpec] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.scenario = scenario
        self.quadrature = quadrature or QuadratureSpec()
        base_logger = logger or logging.getLogger("secrecy")
        self._logger = base_logger.getChild(self.__class__.__name__.lower())
        self.integrator = ChannelIntegrator(self.quadrature, logger=base_logger)
        self._tables: dict[GainDistribution, PositivePartTable] = {}
        self._base_logger = base_logger

    @property
    def eve_law(self) -> GainDistribution:
        return self.scenario.eve_law

    def table(self, main: GainDistribution) -> PositivePartTable:
        if main not in self._tables:
            self._tables[main] = PositivePartTable(main, self.eve_law, self.quadrature, logger=self._base_logger)
        return self._tables[main]

    def _timed(self, operation: str, fn: Callable[[], T]) -> T:
        started = time.perf_counter()
        result = fn()
        self._logger.debug(
            "Evaluated %s",
            operation,
            extra={
                "operation": operation,
                "K": self.scenario.K,
                "duration_ms": round((time.perf_counter() - started) * 1000, 3),
            },
        )
        return result

    def _receiver_laws(self, receivers: Optional[Iterable[int]]) -> list[GainDistribution]:
        indices = range(self.scenario.K) if receivers is None else receivers
        laws: list[GainDistribution] = []
        for index in indices:
            if not 0 <= index < self.scenario.K:
                raise ScenarioError(f"receiver index {index} out of range")
            law = self.scenario.main_laws[index]
            if law not in laws:
                laws.append(law)
        return laws

    def _require_levels(self, policy: QuantizerPolicy) -> None:
        if policy.Q != self.scenario.Q:
            raise ScenarioError(f"policy has {policy.Q} intervals but b = {self.scenario.b} feedback bits give {self.scenario.Q}")

    # ------------------------------------------------------ single-law sums
    def lower_sum(self, law: GainDistribution, policy: QuantizerPolicy) -> float:
        """sum_q Pr[tau_q <= gamma < tau_{q+1}] E[{log2((1 + tau_q P_q)/(1 + gamma_e P_q))}^+]."""
        masses = interval_masses(policy, law)
        terms = self.table(law).lower_terms(policy.lower_edges, np.asarray(policy.powers))
        return float(np.dot(masses, terms))

    def upper_sum(self, law: GainDistribution, policy: QuantizerPolicy) -> float:
        """Sum of interval terms for q = 0..Q, interval 0 being [0, tau_1) at power p0."""
        lo = np.concatenate(([0.0], policy.lower_edges))
        hi = np.concatenate((policy.lower_edges, [np.inf]))
        powers = np.concatenate(([policy.p0], policy.powers))
        return float(np.sum(self.table(law).interval_terms(lo, hi, powers)))

    def power_function_sum(self, law: GainDistribution, power_fn: PowerFunction) -> float:
        terms = self.table(law).interval_terms(power_fn.lower_edges, power_fn.upper_edges, np.asarray(power_fn.levels))
        return float(np.sum(terms))

    # ------------------------------------------------------ common message
    def cm_lower(self, policy: QuantizerPolicy, receivers: Optional[Sequence[int]] = None) -> float:
        self._require_levels(policy)

        def evaluate() -> float:
            values = []
            for law in self._receiver_laws(receivers):
                require_feasible(policy, law, self.scenario.p_avg)
                values.append(self.lower_sum(law, policy))
            return min(values)

        return self._timed("cm_lower", evaluate)

    def cm_upper(self, policy: QuantizerPolicy, receivers: Optional[Sequence[int]] = None) -> float:
        self._require_levels(policy)

        def evaluate() -> float:
            values = []
            for law in self._receiver_laws(receivers):
                require_feasible(policy, law, self.scenario.p_avg)
                values.append(self.upper_sum(law, policy))
            return min(values)

        return self._timed("cm_upper", evaluate)

    def cm_capacity_perfect_csit(self, power_fn: PowerFunction, receivers: Optional[Sequence[int]] = None) -> float:
        def evaluate() -> float:
            values = []
            for law in self._receiver_laws(receivers):
                require_feasible_power_function(power_fn, law, self.scenario.p_avg)
                values.append(self.power_function_sum(law, power_fn))
            return min(values)

        return self._timed("cm_capacity_perfect_csit", evaluate)

    # ------------------------------------------------ independent messages
    def im_lower(self, policy: QuantizerPolicy) -> float:
        self._require_levels(policy)
        law = self.scenario.max_law
        require_feasible(policy, law, self.scenario.p_avg)
        return self._timed("im_lower", lambda: self.lower_sum(law, policy))

    def im_upper(self, policy: QuantizerPolicy) -> float:
        self._require_levels(policy)
        law = self.scenario.max_law
        require_feasible(policy, law, self.scenario.p_avg)
        return self._timed("im_upper", lambda: self.upper_sum(law, policy))

    def im_capacity_perfect_csit(self, power_fn: PowerFunction) -> float:
        law = self.scenario.max_law
        require_feasible_power_function(power_fn, law, self.scenario.p_avg)
        return self._timed("im_capacity_perfect_csit", lambda: self.power_function_sum(law, power_fn))

    def strongest_probabilities(self) -> np.ndarray:
        """Pr[user k attains gamma_max], ties split uniformly."""
        laws = self.scenario.main_laws
        K = len(laws)
        if self.scenario.is_iid:
            return np.full(K, 1.0 / K)
        kinds = {law.is_discrete for law in laws}
        if len(kinds) != 1:
            raise ScenarioError("cannot mix sampled and continuous receiver laws")
        if laws[0].is_discrete:
            return self._discrete_strongest(laws)
        shares = np.empty(K)
        for k, law in enumerate(laws):
            others = [other for j, other in enumerate(laws) if j != k]
            top = law.truncation_point(self.quadrature.tail_truncation_mass)

            def integrand(x: float, law: GainDistribution = law, others: list[GainDistribution] = others) -> float:
                value = float(law.pdf(x))
                for other in others:
                    value *= float(other.cdf(x))
                return value

            shares[k] = self.integrator.quad(integrand, 0.0, top, law.quantile_breakpoints(0.0, top))
        return shares / shares.sum()

    @staticmethod
    def _discrete_strongest(laws: Sequence[GainDistribution]) -> np.ndarray:
        values = np.unique(np.concatenate([law.atoms()[0] for law in laws]))
        below = np.array([law.mass_below(values) for law in laws])
        at = np.array([law.cdf(values) for law in laws]) - below
        shares = np.zeros(len(laws))
        for column in range(values.size):
            for k in range(len(laws)):
                if at[k, column] <= 0:
                    continue
                # integral over z in [0, 1] of prod_{j != k} (a_j + e_j z)
                coefficients = np.array([1.0])
                for j in range(len(laws)):
                    if j != k:
                        coefficients = polynomial.polymul(coefficients, [below[j, column], at[j, column]])
                antiderivative = polynomial.polyint(coefficients)
                shares[k] += at[k, column] * float(polynomial.polyval(1.0, antiderivative))
        return shares

    def per_user_rate_share(self, im_lower_value: float, k: int) -> float:
        if not 0 <= k < self.scenario.K:
            raise ScenarioError(f"receiver index {k} out of range")
        return float(im_lower_value * self.strongest_probabilities()[k])

    # --------------------------------------------------------- high SNR
    def high_snr_lower_sum(self, law: GainDistribution, thresholds: Sequence[float]) -> float:
        thresholds = [float(t) for t in thresholds]
        if any(t < 0 for t in thresholds) or any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ScenarioError("thresholds must be nonnegative and strictly increasing")
        edges = thresholds + [math.inf]
        total = 0.0
        for tau, upper in zip(thresholds, edges[1:]):
            mass = interval_mass(law, tau, upper)
            if mass > 0:
                total += mass * self.integrator.pos_part_log_threshold_ratio(self.eve_law, tau)
        return total

    def cm_high_snr_bounds(self, thresholds: Sequence[float]) -> BoundResult:
        laws = self._receiver_laws(None)
        lower = min(self.high_snr_lower_sum(law, thresholds) for law in laws)
        upper = min(self.integrator.pos_part_log_gain_ratio(law, self.eve_law) for law in laws)
        return BoundResult(lower, upper, diagnostics={"thresholds": list(thresholds), "regime": "high_snr"})

    def im_high_snr_bounds(self, thresholds: Sequence[float]) -> BoundResult:
        law = self.scenario.max_law
        lower = self.high_snr_lower_sum(law, thresholds)
        upper = self.integrator.pos_part_log_gain_ratio(law, self.eve_law)
        return BoundResult(lower, upper, diagnostics={"thresholds": list(thresholds), "regime": "high_snr"})

    # ------------------------------------------------------- no feedback
    def statistics_only_rate(self, fixed_power: float) -> float:
        """max_k {E[log2(1 + gamma_k P_t)] - E[log2(1 + gamma_e P_t)]}^+."""
        if fixed_power < 0:
            raise ValueError("fixed power must be nonnegative")
        if fixed_power > self.scenario.p_avg * (1 + 1e-12):
            raise ConstraintViolationError(f"fixed power {fixed_power:.6g} exceeds P_avg {self.scenario.p_avg:.6g}")
        eve_rate = self.integrator.log1p_expectation(self.eve_law, fixed_power)
        best = max(self.integrator.log1p_expectation(law, fixed_power) for law in self._receiver_laws(None))
        return max(0.0, best - eve_rate)

    def erased_feedback_fallback(self, usable_prob: float, fixed_power: float, feedback_rate: float) -> float:
        """max(statistics-only rate, usable_prob * feedback_rate).

        ``usable_prob`` is the probability that the feedback arrives intact and
        ``feedback_rate`` is the finite-feedback lower bound it would support.
        """
        if not 0.0 <= usable_prob <= 1.0:
            raise ValueError("usable-feedback probability must lie in [0, 1]")
        return max(self.statistics_only_rate(fixed_power), usable_prob * max(0.0, feedback_rate))


__all__ = ["SecrecyRateEvaluator"]
