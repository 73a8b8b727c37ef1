"""Maximization over thresholds, powers, power functions and BCCM splits.

Powers are chosen by Lagrangian decomposition: for a multiplier lambda every
interval independently maximizes g_q(P) - lambda * pi_q * P over a log-spaced
candidate grid (no concavity is assumed), and lambda is bisected until the
average-power constraint binds. Thresholds are searched derivative-free on
unconstrained increments tau_q = sum_{j <= q} exp(z_j).
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Optional, Sequence

import numpy as np
from scipy import optimize

from models.bccm_records import EventWeights, FeedbackMode, PowerSplit, RatePair
from models.gain_distribution import GainDistribution
from models.quantizer_policy import PowerFunction, QuantizerPolicy, Scenario
from models.specs import OptimizerMethod, OptimizerSpec
from services.bccm import BccmEvaluator, PartitionCell
from services.quantizer import (
    FEASIBILITY_SLACK,
    average_power,
    power_function_average,
    quantile_edges,
    uniform_mass_thresholds,
)
from services.secrecy_rates import SecrecyRateEvaluator

_MIN_POWER_FRACTION = 1e-6


class OptimizationFailureError(RuntimeError):
    """Raised when no restart produces a feasible policy."""


class InfeasibleTargetError(ValueError):
    """Raised when a confidential-rate target exceeds the largest achievable R1."""

    def __init__(self, message: str, max_r1: float) -> None:
        super().__init__(message)
        self.max_r1 = max_r1


class BoundObjective(str, Enum):
    CM_LOWER = "cm_lower"
    CM_UPPER = "cm_upper"
    IM_LOWER = "im_lower"
    IM_UPPER = "im_upper"
    CM_PERFECT = "cm_perfect"
    IM_PERFECT = "im_perfect"

    @property
    def is_upper(self) -> bool:
        return self in (BoundObjective.CM_UPPER, BoundObjective.IM_UPPER)

    @property
    def is_independent(self) -> bool:
        return self in (BoundObjective.IM_LOWER, BoundObjective.IM_UPPER, BoundObjective.IM_PERFECT)


@dataclass(frozen=True)
class PolicyOptimum:
    policy: QuantizerPolicy
    value: float
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    def __iter__(self) -> Iterator[Any]:
        yield self.policy
        yield self.value


@dataclass(frozen=True)
class PowerFunctionOptimum:
    power_fn: PowerFunction
    value: float
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    def __iter__(self) -> Iterator[Any]:
        yield self.power_fn
        yield self.value


@dataclass(frozen=True)
class ThresholdOptimum:
    thresholds: tuple[float, ...]
    value: float
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)


@dataclass
class _PowerProblem:
    """Candidate powers and their objective contributions, one row per interval."""

    masses: np.ndarray
    grids: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class _LagrangianSolution:
    powers: np.ndarray
    value: float
    lam: float
    binding: bool
    mixed: Optional[np.ndarray] = None


def power_grid(masses: np.ndarray, p_avg: float, points: int) -> np.ndarray:
    """[0] plus log-spaced powers up to P_avg / pi_q, one row per interval."""
    caps = np.where(masses > 0, p_avg / np.maximum(masses, 1e-300), p_avg)
    unit = np.logspace(math.log10(_MIN_POWER_FRACTION), 0.0, points - 1)
    return np.column_stack([np.zeros_like(caps), caps[:, None] * unit[None, :]])


def solve_lagrangian(problem: _PowerProblem, p_avg: float, tol: float) -> _LagrangianSolution:
    """Bisection on lambda over a finite candidate set.

    Returns the feasible pick at the upper multiplier and, when the constraint
    binds, a mixture of the bracketing picks that spends exactly ``p_avg``.
    """
    masses, grids, values = problem.masses, problem.grids, problem.values
    rows = np.arange(grids.shape[0])
    slack = FEASIBILITY_SLACK * max(1.0, p_avg)

    def pick(lam: float) -> tuple[np.ndarray, np.ndarray]:
        index = np.argmax(values - lam * masses[:, None] * grids, axis=1)
        powers = grids[rows, index]
        return np.where(masses > 0, powers, 0.0), index

    def spend(powers: np.ndarray) -> float:
        return float(np.dot(masses, powers))

    powers, index = pick(0.0)
    if spend(powers) <= p_avg + slack:
        value = float(values[rows, index].sum())
        return _LagrangianSolution(powers, value, 0.0, abs(spend(powers) - p_avg) <= 1e-6 * p_avg)
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if spend(pick(hi)[0]) <= p_avg + slack:
            break
        lo, hi = hi, hi * 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if spend(pick(mid)[0]) <= p_avg + slack:
            hi = mid
        else:
            lo = mid
    powers_hi, index_hi = pick(hi)
    powers_lo, _ = pick(lo)
    spend_hi, spend_lo = spend(powers_hi), spend(powers_lo)
    mixed = None
    if spend_lo > spend_hi and spend_hi < p_avg:
        weight = (p_avg - spend_hi) / (spend_lo - spend_hi)
        mixed = powers_hi + weight * (powers_lo - powers_hi)
    value = float(values[rows, index_hi].sum())
    return _LagrangianSolution(powers_hi, value, hi, True, mixed)


def split_policy(policy: QuantizerPolicy, Q: int, law: GainDistribution) -> QuantizerPolicy:
    """Refine ``policy`` to ``Q`` intervals by halving each interval in probability.

    Both halves keep the parent's power, so the average power is unchanged and
    neither bound can decrease.
    """
    if Q % policy.Q:
        raise ValueError(f"cannot refine {policy.Q} intervals into {Q}")
    thresholds, powers = list(policy.thresholds), list(policy.powers)
    while len(thresholds) < Q:
        edges = thresholds + [math.inf]
        new_thresholds: list[float] = []
        new_powers: list[float] = []
        for lo, hi, power in zip(edges, edges[1:], powers):
            u_lo = float(law.mass_below(lo))
            u_hi = 1.0 if math.isinf(hi) else float(law.mass_below(hi))
            middle = float(law.ppf(0.5 * (u_lo + u_hi))) if u_hi > u_lo else lo
            if not lo < middle < hi:
                middle = 0.5 * (lo + hi) if math.isfinite(hi) else lo + max(law.mean(), 1.0)
            if not lo < middle < hi:
                middle = float(np.nextafter(lo, math.inf))
            new_thresholds += [lo, middle]
            new_powers += [power, power]
        thresholds, powers = new_thresholds, new_powers
    return QuantizerPolicy(tuple(thresholds), tuple(powers), p0=policy.p0)


class PolicyOptimizer:
    """Search quantizer policies and power functions for the secrecy-rate bounds."""

    def __init__(
        self,
        evaluator: SecrecyRateEvaluator,
        spec: Optional[OptimizerSpec] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.evaluator = evaluator
        self.spec = spec or OptimizerSpec()
        self._logger = (logger or logging.getLogger("secrecy")).getChild(self.__class__.__name__.lower())

    @property
    def scenario(self) -> Scenario:
        return self.evaluator.scenario

    def _gate_laws(self, objective: BoundObjective) -> list[tuple[int, GainDistribution]]:
        if objective.is_independent:
            return [(-1, self.scenario.max_law)]
        return self.scenario.distinct_main_laws

    # ----------------------------------------------------- power problems
    def _power_problem(self, law: GainDistribution, thresholds: np.ndarray, upper: bool, grids: Optional[np.ndarray] = None) -> _PowerProblem:
        table = self.evaluator.table(law)
        lower_edges = np.asarray(thresholds, dtype=float)
        upper_edges = np.append(lower_edges[1:], np.inf)
        masses = table.masses(lower_edges, upper_edges)
        if upper:
            lower_edges = np.concatenate(([0.0], lower_edges))
            upper_edges = np.concatenate(([lower_edges[1]], upper_edges))
            masses = np.concatenate(([float(law.mass_below(thresholds[0]))], masses))
        if grids is None:
            grids = power_grid(masses, self.scenario.p_avg, self.spec.power_line_search_points)
        width = grids.shape[1]
        flat_lo = np.repeat(lower_edges, width)
        flat_hi = np.repeat(upper_edges, width)
        flat_p = grids.ravel()
        if upper:
            values = table.interval_terms(flat_lo, flat_hi, flat_p)
        else:
            values = np.repeat(masses, width) * table.lower_terms(flat_lo, flat_p)
        return _PowerProblem(masses, grids, values.reshape(grids.shape))

    def _power_function_problem(self, law: GainDistribution, edges: tuple[float, ...], grids: Optional[np.ndarray] = None) -> _PowerProblem:
        table = self.evaluator.table(law)
        lower_edges = np.asarray(edges[:-1], dtype=float)
        upper_edges = np.asarray(edges[1:], dtype=float)
        masses = table.masses(lower_edges, upper_edges)
        if grids is None:
            grids = power_grid(masses, self.scenario.p_avg, self.spec.power_line_search_points)
        width = grids.shape[1]
        values = table.interval_terms(np.repeat(lower_edges, width), np.repeat(upper_edges, width), grids.ravel())
        return _PowerProblem(masses, grids, values.reshape(grids.shape))

    def _refine(self, problem: _PowerProblem, build: Any) -> _PowerProblem:
        """Add a local log grid around each interval's current pick and re-evaluate."""
        for _ in range(self.spec.refine_rounds):
            solution = solve_lagrangian(problem, self.scenario.p_avg, self.spec.lambda_bisect_tol)
            local = []
            for row, power in enumerate(solution.powers):
                grid = problem.grids[row]
                position = int(np.searchsorted(grid, power))
                left = grid[max(position - 1, 0)]
                right = grid[min(position + 1, grid.size - 1)]
                if left > 0:
                    local.append(np.geomspace(left, max(right, left), self.spec.power_line_search_points))
                else:
                    local.append(np.linspace(0.0, max(right, 0.0), self.spec.power_line_search_points))
            grids = np.sort(np.concatenate([problem.grids, np.vstack(local)], axis=1), axis=1)
            problem = build(grids)
        return problem

    def _policy_from(self, thresholds: np.ndarray, powers: np.ndarray, upper: bool) -> QuantizerPolicy:
        if upper:
            return QuantizerPolicy(tuple(thresholds), tuple(powers[1:]), p0=float(powers[0]))
        return QuantizerPolicy(tuple(thresholds), tuple(powers))

    def _exact(self, law: GainDistribution, policy: QuantizerPolicy, upper: bool) -> float:
        return self.evaluator.upper_sum(law, policy) if upper else self.evaluator.lower_sum(law, policy)

    def _fit_budget(self, policy: QuantizerPolicy, law: GainDistribution) -> QuantizerPolicy:
        spent = average_power(policy, law)
        if spent > self.scenario.p_avg:
            return policy.scaled(self.scenario.p_avg / spent)
        return policy

    def _powers_for(self, law: GainDistribution, thresholds: np.ndarray, upper: bool) -> tuple[QuantizerPolicy, float, dict[str, Any]]:
        """Refined Lagrangian powers for fixed thresholds, scored exactly."""
        problem = self._refine(
            self._power_problem(law, thresholds, upper),
            lambda grids: self._power_problem(law, thresholds, upper, grids),
        )
        solution = solve_lagrangian(problem, self.scenario.p_avg, self.spec.lambda_bisect_tol)
        candidates = [solution.powers] + ([solution.mixed] if solution.mixed is not None else [])
        best: Optional[tuple[QuantizerPolicy, float]] = None
        for powers in candidates:
            policy = self._fit_budget(self._policy_from(thresholds, powers, upper), law)
            value = self._exact(law, policy, upper)
            if best is None or value > best[1]:
                best = (policy, value)
        assert best is not None
        info = {"lambda": solution.lam, "binding": solution.binding, "average_power": average_power(best[0], law)}
        return best[0], best[1], info

    # ---------------------------------------------------- threshold search
    def _thresholds_from(self, z: np.ndarray, ceiling: float) -> np.ndarray:
        steps = np.exp(np.clip(z, -40.0, math.log(ceiling)))
        thresholds = np.cumsum(steps)
        for index in range(1, thresholds.size):
            if thresholds[index] <= thresholds[index - 1]:
                thresholds[index] = np.nextafter(thresholds[index - 1], np.inf)
        return thresholds

    def _z_from(self, thresholds: Sequence[float], floor: float) -> np.ndarray:
        increments = np.diff(np.concatenate(([0.0], np.asarray(thresholds, dtype=float))))
        return np.log(np.maximum(increments, floor))

    def _coarse_value(self, law: GainDistribution, thresholds: np.ndarray, upper: bool) -> float:
        problem = self._power_problem(law, thresholds, upper)
        return solve_lagrangian(problem, self.scenario.p_avg, self.spec.lambda_bisect_tol).value

    def _search_thresholds(self, law: GainDistribution, upper: bool, restart: int) -> tuple[np.ndarray, float]:
        Q = self.scenario.Q
        scale = max(law.mean(), 1e-12)
        ceiling = 10.0 * law.truncation_point(self.evaluator.quadrature.tail_truncation_mass)
        floor = 1e-9 * scale
        if restart == 0:
            start = np.asarray(uniform_mass_thresholds(law, Q))
        else:
            rng = np.random.default_rng([self.spec.seed, restart])
            levels = np.sort(rng.uniform(0.0, 1.0, Q))
            start = np.maximum.accumulate(np.asarray(law.ppf(levels), dtype=float))
        z0 = self._z_from(start, floor)

        def loss(z: np.ndarray) -> float:
            return -self._coarse_value(law, self._thresholds_from(z, ceiling), upper)

        method = self.spec.method
        if method is OptimizerMethod.NELDER_MEAD_LAGRANGIAN:
            result = optimize.minimize(
                loss,
                z0,
                method="Nelder-Mead",
                options={"maxiter": self.spec.max_iterations, "xatol": 1e-4, "fatol": 1e-10},
            )
            z_best, f_best = result.x, float(result.fun)
        elif method is OptimizerMethod.GRID_REFINE:
            z_best, f_best = self._coordinate_scan(loss, z0, law, ceiling, floor)
        else:
            z_best, f_best = self._evolution_strategy(loss, z0, restart)
        return self._thresholds_from(z_best, ceiling), -f_best

    def _coordinate_scan(self, loss: Any, z0: np.ndarray, law: GainDistribution, ceiling: float, floor: float) -> tuple[np.ndarray, float]:
        best_z, best_f = z0.copy(), loss(z0)
        levels = (np.arange(self.spec.power_line_search_points) + 0.5) / self.spec.power_line_search_points
        candidates = np.asarray(law.ppf(levels), dtype=float)
        for _ in range(self.spec.partition_sweeps):
            for coordinate in range(best_z.size):
                thresholds = self._thresholds_from(best_z, ceiling)
                low = thresholds[coordinate - 1] if coordinate > 0 else 0.0
                high = thresholds[coordinate + 1] if coordinate + 1 < thresholds.size else np.inf
                for value in candidates[(candidates > low) & (candidates < high)]:
                    trial = thresholds.copy()
                    trial[coordinate] = value
                    z = self._z_from(trial, floor)
                    f = loss(z)
                    if f < best_f:
                        best_z, best_f = z, f
        return best_z, best_f

    def _evolution_strategy(self, loss: Any, z0: np.ndarray, restart: int) -> tuple[np.ndarray, float]:
        rng = np.random.default_rng([self.spec.seed, restart, 1])
        best_z, best_f = z0.copy(), loss(z0)
        sigma = 0.5
        population = max(4, 2 * z0.size)
        for _ in range(max(1, self.spec.max_iterations // population)):
            offspring = best_z[None, :] + sigma * rng.standard_normal((population, z0.size))
            scores = np.array([loss(z) for z in offspring])
            winner = int(np.argmin(scores))
            if scores[winner] < best_f:
                best_z, best_f = offspring[winner], float(scores[winner])
                sigma *= 1.2
            else:
                sigma *= 0.7
            if sigma < 1e-4:
                break
        return best_z, best_f

    def _optimize_for_law(self, law: GainDistribution, upper: bool, seeds: Sequence[QuantizerPolicy] = ()) -> PolicyOptimum:
        Q = self.scenario.Q
        p_avg = self.scenario.p_avg
        uniform = np.asarray(uniform_mass_thresholds(law, Q))
        candidates: list[tuple[str, QuantizerPolicy, float]] = []
        equal = QuantizerPolicy.equal_power(uniform, p_avg)
        candidates.append(("uniform_equal_power", equal, self._exact(law, equal, upper)))
        seeded, seeded_value, _ = self._powers_for(law, uniform, upper)
        candidates.append(("uniform_lagrangian", seeded, seeded_value))
        for number, seed in enumerate(seeds):
            refined = split_policy(seed, Q, law)
            candidates.append((f"seed_{number}", refined, self._exact(law, refined, upper)))
            repowered, repowered_value, _ = self._powers_for(law, refined.lower_edges, upper)
            candidates.append((f"seed_{number}_lagrangian", repowered, repowered_value))

        with ThreadPoolExecutor(max_workers=self.spec.workers) as pool:
            searches = list(pool.map(lambda r: self._search_thresholds(law, upper, r), range(self.spec.restarts)))
        restart_values = [value for _, value in searches]
        best_index = int(np.argmax(restart_values))
        policy, value, info = self._powers_for(law, searches[best_index][0], upper)
        candidates.append((f"restart_{best_index}", policy, value))

        feasible = [c for c in candidates if average_power(c[1], law) <= p_avg + FEASIBILITY_SLACK * max(1.0, p_avg)]
        if not feasible:
            raise OptimizationFailureError("no restart produced a feasible policy")
        name, policy, value = max(feasible, key=lambda c: c[2])
        diagnostics = {
            "restart_values": restart_values,
            "seed_values": {c[0]: c[2] for c in candidates[:-1]},
            "selected": name,
            "binding": abs(average_power(policy, law) - p_avg) <= 1e-6 * p_avg,
            "lambda": info["lambda"],
        }
        return PolicyOptimum(policy, value, diagnostics)

    # ------------------------------------------------ shared CM policies
    def _shared_budget(self, policy: QuantizerPolicy, laws: Sequence[tuple[int, GainDistribution]]) -> QuantizerPolicy:
        """Scale all powers so the most demanding receiver law spends exactly P_avg.

        Every positive-part term is nondecreasing in power, so scaling up to the
        binding law never lowers a receiver's rate.
        """
        spent = max(average_power(policy, law) for _, law in laws)
        if spent <= 0.0:
            return policy
        return policy.scaled(self.scenario.p_avg / spent)

    def _shared_values(
        self, policy: QuantizerPolicy, laws: Sequence[tuple[int, GainDistribution]], upper: bool
    ) -> dict[int, float]:
        return {index: self._exact(law, policy, upper) for index, law in laws}

    def _joint_search(
        self, start: QuantizerPolicy, laws: Sequence[tuple[int, GainDistribution]], upper: bool
    ) -> tuple[QuantizerPolicy, float]:
        """Nelder-Mead over (threshold increments, log powers) of min_k rate_k."""
        Q = self.scenario.Q
        ceiling = 10.0 * max(law.truncation_point(self.evaluator.quadrature.tail_truncation_mass) for _, law in laws)
        floor = 1e-9 * max(min(law.mean() for _, law in laws), 1e-12)
        power_floor = _MIN_POWER_FRACTION * self.scenario.p_avg
        powers = np.asarray(((start.p0,) if upper else ()) + start.powers, dtype=float)
        x0 = np.concatenate((self._z_from(start.thresholds, floor), np.log(np.maximum(powers, power_floor))))

        def decode(x: np.ndarray) -> QuantizerPolicy:
            thresholds = self._thresholds_from(x[:Q], ceiling)
            policy = self._policy_from(thresholds, np.exp(np.clip(x[Q:], -60.0, 60.0)), upper)
            return self._shared_budget(policy, laws)

        def loss(x: np.ndarray) -> float:
            return -min(self._shared_values(decode(x), laws, upper).values())

        result = optimize.minimize(
            loss,
            x0,
            method="Nelder-Mead",
            options={"maxiter": self.spec.max_iterations, "xatol": 1e-4, "fatol": 1e-10},
        )
        policy = decode(result.x)
        return policy, min(self._shared_values(policy, laws, upper).values())

    def _optimize_shared(
        self, laws: Sequence[tuple[int, GainDistribution]], upper: bool, seeds: Sequence[QuantizerPolicy] = ()
    ) -> PolicyOptimum:
        """One policy feasible for every receiver law, maximizing the weakest receiver's rate."""
        Q = self.scenario.Q
        p_avg = self.scenario.p_avg
        per_law = [(index, self._optimize_for_law(law, upper, seeds)) for index, law in laws]
        starts: list[tuple[str, QuantizerPolicy]] = [(f"receiver_{index}", result.policy) for index, result in per_law]
        for index, law in laws:
            starts.append((f"receiver_{index}_uniform", QuantizerPolicy.equal_power(uniform_mass_thresholds(law, Q), p_avg)))
        weakest = self.scenario.main_laws[self.scenario.weakest_receiver]
        for number, seed in enumerate(seeds):
            starts.append((f"seed_{number}", split_policy(seed, Q, weakest)))

        candidates: list[tuple[str, QuantizerPolicy, float]] = []
        for name, policy in starts:
            projected = self._shared_budget(policy, laws)
            candidates.append((name, projected, min(self._shared_values(projected, laws, upper).values())))
        name, start, _ = max(candidates, key=lambda c: c[2])
        joint, joint_value = self._joint_search(start, laws, upper)
        candidates.append((f"joint_{name}", joint, joint_value))

        slack = FEASIBILITY_SLACK * max(1.0, p_avg)
        feasible = [c for c in candidates if all(average_power(c[1], law) <= p_avg + slack for _, law in laws)]
        if not feasible:
            raise OptimizationFailureError("no candidate is feasible for every receiver law")
        name, policy, value = max(feasible, key=lambda c: c[2])
        per_receiver = self._shared_values(policy, laws, upper)
        spends = {index: average_power(policy, law) for index, law in laws}
        tightest = max(spends, key=spends.get)
        diagnostics = {
            "restart_values": dict(per_law)[tightest].diagnostics["restart_values"],
            "seed_values": {c[0]: c[2] for c in candidates},
            "selected": name,
            "binding": abs(spends[tightest] - p_avg) <= 1e-6 * p_avg,
            "lambda": dict(per_law)[tightest].diagnostics["lambda"],
            "receiver": min(per_receiver, key=per_receiver.get),
            "per_receiver": per_receiver,
            "per_receiver_max": {index: result.value for index, result in per_law},
        }
        return PolicyOptimum(policy, value, diagnostics)

    # ------------------------------------------------------------ public
    def optimize_policy(self, objective: BoundObjective, seeds: Sequence[QuantizerPolicy] = ()) -> PolicyOptimum:
        """Best policy for one bound.

        For CM objectives with distinct receiver laws a single policy must serve
        every receiver, so the search maximizes the weakest receiver's rate over
        policies that meet the power budget under every law.
        """
        objective = BoundObjective(objective)
        if objective in (BoundObjective.CM_PERFECT, BoundObjective.IM_PERFECT):
            raise ValueError("use optimize_power_function for perfect-CSIT objectives")
        started = time.perf_counter()
        self._logger.info(
            "Optimizing %s",
            objective.value,
            extra={"objective": objective.value, "Q": self.scenario.Q, "restarts": self.spec.restarts},
        )
        laws = self._gate_laws(objective)
        if len(laws) > 1:
            best = self._optimize_shared(laws, objective.is_upper, seeds)
        else:
            index, law = laws[0]
            best = self._optimize_for_law(law, objective.is_upper, seeds)
            best.diagnostics["receiver"] = index
            best.diagnostics["per_receiver"] = {index: best.value}
        self._logger.info(
            "Optimized %s",
            objective.value,
            extra={
                "objective": objective.value,
                "value": best.value,
                "duration_ms": round((time.perf_counter() - started) * 1000, 3),
            },
        )
        return best

    def optimize_powers_given_thresholds(
        self,
        objective: BoundObjective,
        thresholds: Sequence[float],
        receiver: Optional[int] = None,
    ) -> QuantizerPolicy:
        """Lagrangian powers for fixed thresholds; the returned policy carries them.

        CM policies are rescaled to meet the budget under every receiver law. With
        ``receiver`` unset and distinct laws, the per-law solution serving the
        weakest receiver best is returned.
        """
        objective = BoundObjective(objective)
        thresholds = np.asarray(thresholds, dtype=float)
        laws = self._gate_laws(objective)
        if receiver is not None and not objective.is_independent:
            sources = [(receiver, self.scenario.main_laws[receiver])]
        else:
            sources = laws
        scored = []
        for _, law in sources:
            policy, _, _ = self._powers_for(law, thresholds, objective.is_upper)
            policy = self._shared_budget(policy, laws)
            scored.append((policy, min(self._shared_values(policy, laws, objective.is_upper).values())))
        return max(scored, key=lambda item: item[1])[0]

    def _scaled_power_function(self, power_fn: PowerFunction, laws: Sequence[tuple[int, GainDistribution]]) -> PowerFunction:
        spent = max(power_function_average(power_fn, law) for _, law in laws)
        if spent <= 0.0:
            return power_fn
        factor = self.scenario.p_avg / spent
        return PowerFunction(power_fn.edges, tuple(v * factor for v in power_fn.levels))

    def optimize_power_function(self, objective: BoundObjective, knots: Optional[int] = None) -> PowerFunctionOptimum:
        """Perfect-CSIT power function; CM shares one function across receiver laws."""
        objective = BoundObjective(objective)
        knots = knots or self.spec.perfect_csit_knots
        p_avg = self.scenario.p_avg
        laws = self._gate_laws(objective)

        def score(power_fn: PowerFunction) -> dict[int, float]:
            return {index: self.evaluator.power_function_sum(law, power_fn) for index, law in laws}

        candidates: list[tuple[str, PowerFunction]] = []
        multipliers: dict[str, float] = {}
        for index, law in laws:
            edges = quantile_edges(law, knots)
            problem = self._refine(
                self._power_function_problem(law, edges),
                lambda grids, law=law, edges=edges: self._power_function_problem(law, edges, grids),
            )
            solution = solve_lagrangian(problem, p_avg, self.spec.lambda_bisect_tol)
            if not candidates:
                candidates.append(("constant", PowerFunction.constant(edges, p_avg)))
            candidates.append((f"receiver_{index}", PowerFunction(edges, tuple(solution.powers))))
            multipliers[f"receiver_{index}"] = solution.lam
            if solution.mixed is not None:
                candidates.append((f"receiver_{index}_mixed", PowerFunction(edges, tuple(solution.mixed))))
                multipliers[f"receiver_{index}_mixed"] = solution.lam

        scored = []
        for name, power_fn in candidates:
            power_fn = self._scaled_power_function(power_fn, laws)
            per_receiver = score(power_fn)
            scored.append((name, power_fn, min(per_receiver.values()), per_receiver))
        name, power_fn, value, per_receiver = max(scored, key=lambda item: item[2])
        diagnostics = {
            "constant_value": scored[0][2],
            "lambda": multipliers.get(name, 0.0),
            "selected": name,
            "receiver": min(per_receiver, key=per_receiver.get),
            "per_receiver": per_receiver,
        }
        return PowerFunctionOptimum(power_fn, value, diagnostics)

    def optimize_high_snr_thresholds(self, objective: BoundObjective) -> ThresholdOptimum:
        """Thresholds maximizing the P -> infinity lower bound."""
        objective = BoundObjective(objective)
        results = []
        for index, law in self._gate_laws(objective):
            ceiling = 10.0 * law.truncation_point(self.evaluator.quadrature.tail_truncation_mass)
            floor = 1e-9 * max(law.mean(), 1e-12)

            def loss(z: np.ndarray, law: GainDistribution = law, ceiling: float = ceiling) -> float:
                return -self.evaluator.high_snr_lower_sum(law, self._thresholds_from(z, ceiling))

            uniform = uniform_mass_thresholds(law, self.scenario.Q)
            best_thresholds = np.asarray(uniform)
            best_value = self.evaluator.high_snr_lower_sum(law, uniform)
            for restart in range(self.spec.restarts):
                if restart == 0:
                    start = np.asarray(uniform)
                else:
                    rng = np.random.default_rng([self.spec.seed, restart])
                    start = np.maximum.accumulate(np.asarray(law.ppf(np.sort(rng.uniform(0.0, 1.0, self.scenario.Q)))))
                result = optimize.minimize(
                    loss,
                    self._z_from(start, floor),
                    method="Nelder-Mead",
                    options={"maxiter": self.spec.max_iterations, "xatol": 1e-4, "fatol": 1e-10},
                )
                if -result.fun > best_value:
                    best_value = float(-result.fun)
                    best_thresholds = self._thresholds_from(result.x, ceiling)
            results.append((index, ThresholdOptimum(tuple(float(t) for t in best_thresholds), best_value)))
        index, best = min(results, key=lambda item: item[1].value)
        return ThresholdOptimum(best.thresholds, best.value, {"receiver": index})


class BccmSplitOptimizer:
    """Maximize R0 subject to R1 >= target over BCCM power splits."""

    def __init__(
        self,
        bccm: BccmEvaluator,
        spec: Optional[OptimizerSpec] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.bccm = bccm
        self.spec = spec or OptimizerSpec()
        self._logger = (logger or logging.getLogger("secrecy")).getChild(self.__class__.__name__.lower())

    @property
    def p_avg(self) -> float:
        return self.bccm.scenario.p_avg

    def _p1_grid(self, weights: EventWeights) -> np.ndarray:
        top = self.p_avg / weights.w_a
        unit = np.logspace(math.log10(_MIN_POWER_FRACTION), 0.0, self.spec.power_line_search_points - 1)
        return np.concatenate(([0.0], top * unit))

    def max_r1(self, weights: EventWeights) -> tuple[float, float]:
        """(p1, R1) with the largest confidential rate over the feasible p1 range."""
        if weights.w_a <= 0.0:
            return 0.0, 0.0
        grid = self._p1_grid(weights)
        values = np.array([self.bccm.r1_of_p1(p1, weights) for p1 in grid])
        best = int(np.argmax(values))
        p1, r1 = float(grid[best]), float(values[best])
        left, right = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
        if right > left:
            result = optimize.minimize_scalar(
                lambda p: -self.bccm.r1_of_p1(p, weights),
                bounds=(left, right),
                method="bounded",
                options={"xatol": 1e-10 * max(1.0, right)},
            )
            if -result.fun > r1:
                p1, r1 = float(result.x), float(-result.fun)
        return p1, r1

    def _smallest_p1(self, target: float, weights: EventWeights) -> float:
        grid = self._p1_grid(weights)
        previous = 0.0
        for p1 in grid[1:]:
            if self.bccm.r1_of_p1(p1, weights) >= target:
                root = optimize.brentq(
                    lambda p: self.bccm.r1_of_p1(p, weights) - target,
                    previous,
                    p1,
                    xtol=1e-14,
                    rtol=1e-12,
                )
                return float(root) if self.bccm.r1_of_p1(root, weights) >= target - 1e-9 else float(p1)
            previous = p1
        p1_star, r1_star = self.max_r1(weights)
        if r1_star >= target - 1e-9:
            return p1_star
        raise InfeasibleTargetError(f"R1 target {target:.6g} exceeds max R1 {r1_star:.6g}", r1_star)

    def optimize_bccm_split(
        self,
        mode: FeedbackMode,
        r1_target: float,
        b_redundant: int = 1,
    ) -> tuple[PowerSplit, RatePair]:
        weights = self.bccm.weights(mode, b_redundant)
        if r1_target <= 0.0:
            p1 = 0.0
        elif weights.w_a <= 0.0:
            raise InfeasibleTargetError(f"R1 target {r1_target:.6g} exceeds max R1 0", 0.0)
        else:
            p1 = self._smallest_p1(r1_target, weights)
        budget = max(0.0, self.p_avg - p1 * weights.w_a)

        def split_for(theta: float) -> PowerSplit:
            p01 = theta * budget / weights.w_a if weights.w_a > 0 else 0.0
            p02 = (1.0 - theta) * budget / weights.w_ac if weights.w_ac > 0 else 0.0
            return PowerSplit(p01=p01, p02=p02, p1=p1)

        if weights.w_ac <= 0.0:
            thetas = [1.0]
        elif weights.w_a <= 0.0:
            thetas = [0.0]
        else:
            result = optimize.minimize_scalar(
                lambda theta: -min(self.bccm.r0_terms(split_for(theta), weights)),
                bounds=(0.0, 1.0),
                method="bounded",
                options={"xatol": self.spec.bccm_theta_tol},
            )
            thetas = [0.0, 1.0, float(result.x)]
        scored = [(split_for(theta), min(self.bccm.r0_terms(split_for(theta), weights))) for theta in thetas]
        split, _ = max(scored, key=lambda item: item[1])
        return split, self.bccm.point(split, weights)

    # ---------------------------------------------------- partitioned
    def optimize_partitioned_split(
        self,
        r1_target: float,
        cells: Optional[Sequence[PartitionCell]] = None,
        search_edges: bool = True,
    ) -> tuple[list[PartitionCell], list[PowerSplit], RatePair]:
        """b-bit error-free policy: per-cell splits by SLSQP, quantile edges by coordinate descent."""
        count = 2 ** (self.bccm.scenario.b - 1)
        seed_split, seed_pair = self.optimize_bccm_split(FeedbackMode.ERRORFREE, r1_target)
        levels = [q / count for q in range(1, count)]
        current_cells = list(cells) if cells is not None else self.bccm.default_cells(levels)
        splits, pair = self._solve_cells(current_cells, [seed_split] * count, r1_target)
        if cells is None and search_edges and count > 1:
            for _ in range(self.spec.partition_sweeps):
                for position in range(len(levels)):
                    low = levels[position - 1] if position > 0 else 0.0
                    high = levels[position + 1] if position + 1 < len(levels) else 1.0
                    for factor in (0.5, 0.75, 1.25, 1.5):
                        trial = list(levels)
                        trial[position] = min(max(levels[position] * factor, low + 1e-6), high - 1e-6)
                        trial_cells = self.bccm.default_cells(trial)
                        trial_splits, trial_pair = self._solve_cells(trial_cells, [seed_split] * count, r1_target)
                        if trial_pair.r0 > pair.r0 + 1e-12:
                            levels, current_cells, splits, pair = trial, trial_cells, trial_splits, trial_pair
        if pair.r0 < seed_pair.r0 and cells is None:
            # the replicated 1-bit split is always available
            splits = [seed_split] * count
            pair = self.bccm.point_bbit_errorfree(current_cells, splits)
        return current_cells, splits, pair

    def _solve_cells(
        self, cells: list[PartitionCell], start: list[PowerSplit], r1_target: float
    ) -> tuple[list[PowerSplit], RatePair]:
        count = len(cells)

        def unpack(x: np.ndarray) -> list[PowerSplit]:
            values = np.maximum(x[1:], 0.0).reshape(count, 3)
            return [PowerSplit(p01=row[0], p02=row[1], p1=row[2]) for row in values]

        def terms(x: np.ndarray):
            return self.bccm.partition_terms(cells, unpack(x))

        x0 = np.concatenate(([0.0], np.ravel([[s.p01, s.p02, s.p1] for s in start])))
        x0[0] = self.bccm.partition_terms(cells, start).r0
        constraints = [
            {"type": "ineq", "fun": lambda x: terms(x).r0_candidates - x[0]},
            {"type": "ineq", "fun": lambda x: terms(x).r1_candidates - r1_target},
            {"type": "ineq", "fun": lambda x: np.array([self.p_avg - terms(x).spent])},
        ]
        bounds = [(None, None)] + [(0.0, None)] * (3 * count)
        result = optimize.minimize(
            lambda x: -x[0],
            x0,
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"maxiter": self.spec.max_iterations, "ftol": 1e-10},
        )
        candidate = unpack(result.x)
        outcome = self.bccm.partition_terms(cells, candidate)
        budget_ok = outcome.spent <= self.p_avg + FEASIBILITY_SLACK * max(1.0, self.p_avg)
        if budget_ok and outcome.r1 >= r1_target - 1e-6:
            return candidate, self.bccm.point_bbit_errorfree(cells, candidate)
        self._logger.debug("SLSQP partition solve rejected", extra={"message": str(result.message)})
        return start, self.bccm.point_bbit_errorfree(cells, start)

    def max_partitioned_r1(self, cells: Sequence[PartitionCell]) -> float:
        """Largest confidential rate of a partitioned policy, seeded from the 1-bit optimum."""
        count = len(cells)
        weights = self.bccm.weights(FeedbackMode.ERRORFREE)
        p1, _ = self.max_r1(weights)
        start = np.tile([0.0, 0.0, p1], count)

        def spend(x: np.ndarray) -> float:
            return self.bccm.partition_terms(list(cells), [PowerSplit(*np.maximum(row, 0.0)) for row in x.reshape(count, 3)]).spent

        def r1(x: np.ndarray) -> float:
            return self.bccm.partition_terms(list(cells), [PowerSplit(*np.maximum(row, 0.0)) for row in x.reshape(count, 3)]).r1

        result = optimize.minimize(
            lambda x: -r1(x),
            start,
            method="SLSQP",
            bounds=[(0.0, None)] * (3 * count),
            constraints=[{"type": "ineq", "fun": lambda x: self.p_avg - spend(x)}],
            options={"maxiter": self.spec.max_iterations, "ftol": 1e-10},
        )
        best = r1(start)
        if spend(result.x) <= self.p_avg + FEASIBILITY_SLACK * max(1.0, self.p_avg):
            best = max(best, r1(result.x))
        return best


__all__ = [
    "BccmSplitOptimizer",
    "BoundObjective",
    "InfeasibleTargetError",
    "OptimizationFailureError",
    "PolicyOptimizer",
    "PolicyOptimum",
    "PowerFunctionOptimum",
    "ThresholdOptimum",
    "power_grid",
    "solve_lagrangian",
    "split_policy",
]
