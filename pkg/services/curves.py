"""Curve builders behind the command surface, plus the Monte Carlo validation suite."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence, TypeVar

from models.bccm_records import FeedbackMode, PowerSplit
from models.bound_result import BoundResult
from models.curve_rows import BoundsRow, RegionRow, ValidationCheck
from models.estimates import ScalingRow
from models.gain_distribution import ExponentialGain
from models.quantizer_policy import FeedbackTopology, PowerFunction, QuantizerPolicy, Scenario
from models.specs import OptimizerSpec, QuadratureSpec, SimConfig
from services.bccm import BccmEvaluator
from services.bccm_region import BccmRegionTracer
from services.monte_carlo import MonteCarloOracle
from services.optimizer import BccmSplitOptimizer, BoundObjective, PolicyOptimizer
from services.quadrature import ChannelIntegrator, Interval
from services.quantizer import quantile_edges, uniform_mass_thresholds
from services.secrecy_rates import SecrecyRateEvaluator

T = TypeVar("T")
R = TypeVar("R")

VALIDATION_SIGMAS = 3.0


class ValidationFailure(RuntimeError):
    """Raised when an analytic value falls outside its Monte Carlo confidence band."""

    def __init__(self, failures: Sequence[ValidationCheck]) -> None:
        super().__init__("; ".join(check.describe() for check in failures))
        self.failures = list(failures)


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


class CurveBuilder:
    """Evaluate the sweeps behind every command for one base scenario."""

    def __init__(
        self,
        scenario: Scenario,
        quadrature: Optional[QuadratureSpec] = None,
        optimizer_spec: Optional[OptimizerSpec] = None,
        sim: Optional[SimConfig] = None,
        workers: int = 1,
        logger: Optional[logging.Logger] = None,
        scenario_id: str = "",
    ) -> None:
        self.scenario = scenario
        self.quadrature = quadrature or QuadratureSpec()
        self.optimizer_spec = optimizer_spec or OptimizerSpec()
        self.sim = sim or SimConfig()
        self.workers = max(1, workers)
        self.scenario_id = scenario_id
        self._base_logger = logger or logging.getLogger("secrecy")
        self._logger = self._base_logger.getChild(self.__class__.__name__.lower())

    def _map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, items))

    def _optimizer(self, scenario: Scenario) -> PolicyOptimizer:
        evaluator = SecrecyRateEvaluator(scenario, self.quadrature, logger=self._base_logger)
        return PolicyOptimizer(evaluator, self.optimizer_spec, logger=self._base_logger)

    # ------------------------------------------------------------ bounds
    def _bounds_point(self, scenario: Scenario, bits: Sequence[int], independent: bool) -> tuple[dict[int, BoundResult], dict[int, BoundResult], float, tuple[float, ...]]:
        lower_objective = BoundObjective.IM_LOWER if independent else BoundObjective.CM_LOWER
        upper_objective = BoundObjective.IM_UPPER if independent else BoundObjective.CM_UPPER
        bounds: dict[int, BoundResult] = {}
        high_snr: dict[int, BoundResult] = {}
        seeds: list[QuantizerPolicy] = []
        shares: tuple[float, ...] = ()
        for b in sorted(bits):
            optimizer = self._optimizer(scenario.with_changes(b=b))
            evaluator = optimizer.evaluator
            lower = optimizer.optimize_policy(lower_objective, seeds=seeds)
            upper = optimizer.optimize_policy(upper_objective, seeds=seeds + [lower.policy])
            # the lower-bound policy is also an upper-bound policy, and upper >= lower pointwise
            at_lower = evaluator.im_upper(lower.policy) if independent else evaluator.cm_upper(lower.policy)
            upper_value, upper_policy = max((upper.value, upper.policy), (at_lower, lower.policy), key=lambda item: item[0])
            bounds[b] = BoundResult(
                lower.value,
                upper_value,
                lower.policy,
                upper_policy,
                {"lower": lower.diagnostics, "upper": upper.diagnostics},
            )
            thresholds = optimizer.optimize_high_snr_thresholds(lower_objective).thresholds
            high_snr[b] = evaluator.im_high_snr_bounds(thresholds) if independent else evaluator.cm_high_snr_bounds(thresholds)
            seeds = [lower.policy]
            if independent:
                shares = tuple(evaluator.per_user_rate_share(lower.value, k) for k in range(scenario.K))
        perfect_objective = BoundObjective.IM_PERFECT if independent else BoundObjective.CM_PERFECT
        capacity = self._optimizer(scenario).optimize_power_function(perfect_objective).value
        return bounds, high_snr, capacity, shares

    def cm_bounds(self, p_db: Sequence[float], bits: Sequence[int]) -> list[BoundsRow]:
        started = time.perf_counter()

        def point(value_db: float) -> BoundsRow:
            scenario = self.scenario.with_changes(p_avg=db_to_linear(value_db))
            bounds, high_snr, capacity, _ = self._bounds_point(scenario, bits, independent=False)
            return BoundsRow("P_avg_dB", value_db, bounds, high_snr, capacity)

        rows = self._map(point, sorted(p_db))
        self._log_done("cm-bounds", len(rows), started)
        return rows

    def im_bounds(
        self,
        bits: Sequence[int],
        p_db: Optional[Sequence[float]] = None,
        k_values: Optional[Sequence[int]] = None,
    ) -> list[BoundsRow]:
        """Sum-rate bounds swept over P (per-user shares included) or over K."""
        if (p_db is None) == (k_values is None):
            raise ValueError("sweep over exactly one of P or K")
        started = time.perf_counter()
        if p_db is not None:

            def point(value_db: float) -> BoundsRow:
                scenario = self.scenario.with_changes(p_avg=db_to_linear(value_db))
                bounds, high_snr, capacity, shares = self._bounds_point(scenario, bits, independent=True)
                return BoundsRow("P_avg_dB", value_db, bounds, high_snr, capacity, shares)

            rows = self._map(point, sorted(p_db))
        else:

            def k_point(K: int) -> BoundsRow:
                scenario = self.scenario.with_changes(K=int(K))
                bounds, high_snr, capacity, _ = self._bounds_point(scenario, bits, independent=True)
                return BoundsRow("K", int(K), bounds, high_snr, capacity)

            rows = self._map(k_point, sorted(k_values or ()))
        self._log_done("im-bounds", len(rows), started)
        return rows

    # -------------------------------------------------------------- BCCM
    def bccm_region(
        self,
        mode: FeedbackMode,
        frontier_samples: int,
        epsilons: Optional[Sequence[float]] = None,
        redundant_bits: Sequence[int] = (1,),
        p_db: Optional[Sequence[float]] = None,
        high_snr: bool = False,
    ) -> list[RegionRow]:
        """Stacked frontiers over (P, epsilon, redundant bits)."""
        mode = FeedbackMode(mode)
        started = time.perf_counter()
        powers = [self.scenario.p_avg] if p_db is None else [db_to_linear(v) for v in p_db]
        if mode is FeedbackMode.BEC:
            epsilon_list = list(epsilons) if epsilons is not None else [self.scenario.epsilon]
            bit_list = list(redundant_bits)
        else:
            epsilon_list, bit_list = [0.0], [1]
        jobs = [(p, eps, b) for p in powers for eps in epsilon_list for b in bit_list]

        def job(item: tuple[float, float, int]) -> list[RegionRow]:
            p_avg, epsilon, b_redundant = item
            scenario = self.scenario.with_changes(p_avg=p_avg, epsilon=epsilon)
            bccm = BccmEvaluator(scenario, self.quadrature, logger=self._base_logger, seed=self.optimizer_spec.seed)
            if high_snr:
                curve = bccm.region_high_snr(mode, b_redundant, frontier_samples)
            else:
                optimizer = BccmSplitOptimizer(bccm, self.optimizer_spec, logger=self._base_logger)
                tracer = BccmRegionTracer(bccm, optimizer, logger=self._base_logger)
                curve = tracer.trace(mode, frontier_samples, b_redundant)
            return [RegionRow(mode, curve.epsilon, curve.b, p_avg, point) for point in curve.points]

        rows = [row for block in self._map(job, jobs) for row in block]
        self._log_done("bccm-region", len(rows), started)
        return rows

    # ----------------------------------------------------------- scaling
    def scaling(self, k_values: Sequence[int], inner_log: str = "natural") -> list[ScalingRow]:
        oracle = MonteCarloOracle(None, self.sim, self.quadrature, logger=self._base_logger, scenario_id=self.scenario_id)
        return oracle.scaling_law_experiment(self.scenario.eve_law, k_values, inner_log, base=self.scenario.main_laws[0])

    # -------------------------------------------------------- validation
    def validation_suite(self) -> list[Scenario]:
        """The base scenario and four variants covering power, feedback, K and eavesdropper strength."""
        base = self.scenario
        return [
            base,
            base.with_changes(p_avg=base.p_avg * 10.0, label=f"{base.label}:p10"),
            base.with_changes(b=1, label=f"{base.label}:b1"),
            base.with_changes(K=1, main_laws=(base.main_laws[0],), label=f"{base.label}:k1"),
            base.with_changes(eve=ExponentialGain(0.5 * base.eve_law.mean()), label=f"{base.label}:eve-half"),
        ]

    def _scenario_checks(self, index: int, scenario: Scenario, sigmas: float) -> list[ValidationCheck]:
        scenario_id = f"{self.scenario_id or 'scenario'}#{index}"
        evaluator = SecrecyRateEvaluator(scenario, self.quadrature, logger=self._base_logger)
        oracle = MonteCarloOracle(scenario, self.sim, self.quadrature, logger=self._base_logger, scenario_id=scenario_id)
        p_avg = scenario.p_avg
        weakest = scenario.main_laws[scenario.weakest_receiver]
        cm_policy = QuantizerPolicy.equal_power(uniform_mass_thresholds(weakest, scenario.Q), p_avg)
        im_policy = QuantizerPolicy.equal_power(uniform_mass_thresholds(scenario.max_law, scenario.Q), p_avg)
        power_fn = PowerFunction.constant(quantile_edges(scenario.max_law, 4), p_avg)
        cm_power_fn = PowerFunction.constant(quantile_edges(weakest, 4), p_avg)
        eve = scenario.eve_law
        integrator = ChannelIntegrator(self.quadrature, logger=self._base_logger)
        checks = [
            ValidationCheck("cm_lower", oracle.mc_cm_lower(cm_policy), evaluator.cm_lower(cm_policy), sigmas),
            ValidationCheck("cm_upper", oracle.mc_cm_upper(cm_policy), evaluator.cm_upper(cm_policy), sigmas),
            ValidationCheck("im_lower", oracle.mc_im_lower(im_policy), evaluator.im_lower(im_policy), sigmas),
            ValidationCheck("im_upper", oracle.mc_im_upper(im_policy), evaluator.im_upper(im_policy), sigmas),
            ValidationCheck(
                "im_capacity_perfect_csit",
                oracle.mc_perfect_csit(power_fn, independent=True),
                evaluator.im_capacity_perfect_csit(power_fn),
                sigmas,
            ),
            ValidationCheck(
                "cm_capacity_perfect_csit",
                oracle.mc_perfect_csit(cm_power_fn),
                evaluator.cm_capacity_perfect_csit(cm_power_fn),
                sigmas,
            ),
            ValidationCheck(
                "pos_part_interval_term",
                oracle.mc_pos_part_interval_term(weakest, eve, 0.0, weakest.mean(), p_avg),
                integrator.pos_part_interval_term(weakest, eve, 0.0, weakest.mean(), p_avg),
                sigmas,
            ),
            ValidationCheck(
                "log1p_expectation",
                oracle.mc_log1p_expectation(weakest, p_avg, Interval(0.0, weakest.mean())),
                integrator.log1p_expectation(weakest, p_avg, Interval(0.0, weakest.mean())),
                sigmas,
            ),
            ValidationCheck(
                "statistics_only_rate",
                oracle.mc_statistics_only_rate(p_avg),
                evaluator.statistics_only_rate(p_avg),
                sigmas,
            ),
        ]
        for independent, policy in ((False, cm_policy), (True, im_policy)):
            prefix = "im" if independent else "cm"
            bounds = (evaluator.im_high_snr_bounds if independent else evaluator.cm_high_snr_bounds)(policy.thresholds)
            lower, upper = oracle.mc_high_snr_bounds(policy.thresholds, independent=independent)
            checks.append(ValidationCheck(f"{prefix}_high_snr_lower", lower, bounds.lower, sigmas))
            checks.append(ValidationCheck(f"{prefix}_high_snr_upper", upper, bounds.upper, sigmas))
        if len(scenario.distinct_main_laws) == 1:
            # with identical receivers each user is served equally often
            im_lower = evaluator.im_lower(im_policy)
            for k, share in enumerate(oracle.mc_per_user_shares(im_policy)):
                checks.append(
                    ValidationCheck(f"per_user_rate_share_{k}", share, evaluator.per_user_rate_share(im_lower, k), sigmas)
                )
        if scenario.feedback_topology is FeedbackTopology.SHARED:
            checks.extend(self._bccm_checks(scenario, oracle, sigmas))
        return checks

    def _bccm_checks(self, scenario: Scenario, oracle: MonteCarloOracle, sigmas: float) -> list[ValidationCheck]:
        bccm = BccmEvaluator(scenario, self.quadrature, logger=self._base_logger)
        split = PowerSplit(p01=0.5 * scenario.p_avg, p02=scenario.p_avg, p1=0.5 * scenario.p_avg)
        checks = []
        for mode in (FeedbackMode.ERRORFREE, FeedbackMode.BEC):
            pair = bccm.point(split, bccm.weights(mode))
            r0, r1 = oracle.mc_bccm_point(split, mode)
            checks.append(ValidationCheck(f"bccm_{mode.value}_r0", r0, pair.r0, sigmas))
            checks.append(ValidationCheck(f"bccm_{mode.value}_r1", r1, pair.r1, sigmas))
        cells = bccm.default_cells()
        splits = [split] * len(cells)
        pair = bccm.point_bbit_errorfree(cells, splits)
        r0, r1 = oracle.mc_bccm_partition_point(cells, splits)
        checks.append(ValidationCheck("bccm_bbit_r0", r0, pair.r0, sigmas))
        checks.append(ValidationCheck("bccm_bbit_r1", r1, pair.r1, sigmas))
        return checks

    def validate(self, sigmas: float = VALIDATION_SIGMAS) -> list[ValidationCheck]:
        started = time.perf_counter()
        if not self.sim.acceptance_grade:
            self._logger.warning(
                "Validating with %d blocks; estimates below 1000 blocks are not acceptance grade",
                self.sim.num_blocks,
                extra={"num_blocks": self.sim.num_blocks},
            )
        suite = self.validation_suite()
        blocks = self._map(lambda item: self._scenario_checks(item[0], item[1], sigmas), list(enumerate(suite)))
        checks = [check for block in blocks for check in block]
        failed = [check for check in checks if not check.passed]
        for check in failed:
            self._logger.error("Validation check failed: %s", check.describe())
        self._log_done("validate", len(checks), started)
        return checks

    def require_valid(self, checks: Sequence[ValidationCheck]) -> None:
        failed = [check for check in checks if not check.passed]
        if failed:
            raise ValidationFailure(failed)

    def _log_done(self, command: str, rows: int, started: float) -> None:
        self._logger.info(
            "Built %s curve",
            command,
            extra={"command": command, "rows": rows, "duration_ms": round((time.perf_counter() - started) * 1000, 3)},
        )


__all__ = ["CurveBuilder", "VALIDATION_SIGMAS", "ValidationFailure", "db_to_linear"]
