"""Block-fading Monte Carlo counterparts of the analytic evaluators.

Every simulation draws ``num_blocks`` iid fading blocks split into
``num_batches`` batches. Batch ``i`` owns two generators spawned from
``SeedSequence(seed)``: one for channel gains and one for auxiliary draws
(erasures, tie breaks), so enabling erasures never shifts the gain stream.
Standard errors are batch-means errors.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np

from models.bccm_records import EveQuantileCell, FeedbackMode, IndicatorCell, PowerSplit
from models.estimates import McEstimate, ScalingRow
from models.gain_distribution import ColluderMode, ColluderModel, ExponentialGain, GainDistribution, MaxOrderStatistic
from models.quantizer_policy import PowerFunction, QuantizerPolicy, Scenario, ScenarioError
from models.specs import QuadratureSpec, SimConfig
from services.quadrature import ChannelIntegrator, Interval, interval_mass

Accrual = Callable[[np.random.Generator, np.random.Generator, int], np.ndarray]


def quantized_index(gains: np.ndarray, thresholds: Sequence[float]) -> np.ndarray:
    """Interval index q with tau_q <= gain < tau_{q+1}; -1 below tau_1."""
    return np.searchsorted(np.asarray(thresholds, dtype=float), gains, side="right") - 1


def _pos_log_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    return np.maximum(np.log2(numerator) - np.log2(denominator), 0.0)


class MonteCarloOracle:
    """Sampling oracle for channel integrals, bound evaluators and BCCM points."""

    def __init__(
        self,
        scenario: Optional[Scenario] = None,
        sim: Optional[SimConfig] = None,
        quadrature: Optional[QuadratureSpec] = None,
        logger: Optional[logging.Logger] = None,
        scenario_id: str = "",
    ) -> None:
        self._scenario = scenario
        self.sim = sim or SimConfig()
        base_logger = logger or logging.getLogger("secrecy")
        self._logger = base_logger.getChild(self.__class__.__name__.lower())
        self.integrator = ChannelIntegrator(quadrature or QuadratureSpec(), logger=base_logger)
        self.scenario_id = scenario_id

    @property
    def scenario(self) -> Scenario:
        if self._scenario is None:
            raise ScenarioError("this simulation needs a scenario")
        return self._scenario

    # ------------------------------------------------------------ engine
    def _batch_sizes(self, sim: SimConfig) -> np.ndarray:
        base, extra = divmod(sim.num_blocks, sim.num_batches)
        return np.array([base + (1 if i < extra else 0) for i in range(sim.num_batches)])

    def _simulate(self, quantity: str, accrue: Accrual, sim: Optional[SimConfig] = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-column block means and batch-means standard errors."""
        sim = sim or self.sim
        sizes = self._batch_sizes(sim)
        children = np.random.SeedSequence(sim.seed).spawn(sim.num_batches)
        streams = [child.spawn(2) for child in children]
        started = time.perf_counter()

        def run(index: int) -> np.ndarray:
            gains_rng = np.random.default_rng(streams[index][0])
            aux_rng = np.random.default_rng(streams[index][1])
            total: Optional[np.ndarray] = None
            done = 0
            blocks = int(sizes[index])
            while done < blocks:
                chunk = min(sim.batch_size, blocks - done)
                partial = np.asarray(accrue(gains_rng, aux_rng, chunk), dtype=float).sum(axis=0)
                total = partial if total is None else total + partial
                done += chunk
            assert total is not None
            return total / blocks

        with ThreadPoolExecutor(max_workers=sim.workers) as pool:
            batch_means = np.array(list(pool.map(run, range(sim.num_batches))))
        weights = sizes / sizes.sum()
        means = weights @ batch_means
        stderr = batch_means.std(axis=0, ddof=1) / math.sqrt(sim.num_batches)
        self._logger.debug(
            "Simulated %s",
            quantity,
            extra={
                "quantity": quantity,
                "blocks": sim.num_blocks,
                "seed": sim.seed,
                "duration_ms": round((time.perf_counter() - started) * 1000, 3),
            },
        )
        return means, stderr

    def _estimate(self, quantity: str, value: float, stderr: float, sim: Optional[SimConfig] = None) -> McEstimate:
        sim = sim or self.sim
        return McEstimate(quantity, float(value), float(stderr), sim.num_blocks, sim.seed, self.scenario_id)

    def _min_estimate(self, quantity: str, means: np.ndarray, stderr: np.ndarray, sim: Optional[SimConfig]) -> McEstimate:
        index = int(np.argmin(means))
        return self._estimate(quantity, means[index], stderr[index], sim)

    def _draw_mains(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.column_stack([law.sample(rng, n) for law in self.scenario.main_laws])

    def _draw_eve(self, rng: np.random.Generator, n: int) -> np.ndarray:
        eve = self.scenario.eve
        if isinstance(eve, ColluderModel) and eve.M > 1:
            draws = eve.base.sample(rng, (n, eve.M))
            if eve.mode is ColluderMode.NONCOLLUDING:
                return draws.max(axis=1)
            return draws.sum(axis=1)
        return self.scenario.eve_law.sample(rng, n)

    def _receivers(self, receivers: Optional[Sequence[int]]) -> list[int]:
        indices = list(range(self.scenario.K)) if receivers is None else list(receivers)
        for index in indices:
            if not 0 <= index < self.scenario.K:
                raise ScenarioError(f"receiver index {index} out of range")
        return indices

    # ------------------------------------------------------ channel core
    def mc_pos_part_log_ratio(self, eve: GainDistribution, tau: float, power: float, sim: Optional[SimConfig] = None) -> McEstimate:
        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gamma_e = eve.sample(rng, n)
            return _pos_log_ratio(1.0 + tau * power, 1.0 + gamma_e * power)[:, None]

        means, stderr = self._simulate("pos_part_log_ratio", accrue, sim)
        return self._estimate("pos_part_log_ratio", means[0], stderr[0], sim)

    def mc_pos_part_interval_term(
        self,
        main: GainDistribution,
        eve: GainDistribution,
        lo: float,
        hi: float,
        power: float,
        sim: Optional[SimConfig] = None,
    ) -> McEstimate:
        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gamma = main.sample(rng, n)
            gamma_e = eve.sample(rng, n)
            inside = (gamma >= lo) & (gamma < hi)
            return (inside * _pos_log_ratio(1.0 + gamma * power, 1.0 + gamma_e * power))[:, None]

        means, stderr = self._simulate("pos_part_interval_term", accrue, sim)
        return self._estimate("pos_part_interval_term", means[0], stderr[0], sim)

    def mc_log1p_expectation(
        self,
        dist: GainDistribution,
        power: float,
        condition: Optional[Interval] = None,
        sim: Optional[SimConfig] = None,
    ) -> McEstimate:
        """E[log2(1 + P gamma) | condition] by inverse-CDF sampling of the truncated law."""
        condition = condition or Interval()
        u_lo = float(dist.mass_below(condition.lo))
        u_hi = 1.0 if math.isinf(condition.hi) else float(dist.mass_below(condition.hi))
        if u_hi <= u_lo:
            raise ScenarioError("conditioning event has zero probability")

        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gamma = np.asarray(dist.ppf(u_lo + (u_hi - u_lo) * rng.random(n)), dtype=float)
            return np.log2(1.0 + power * gamma)[:, None]

        means, stderr = self._simulate("log1p_expectation", accrue, sim)
        return self._estimate("log1p_expectation", means[0], stderr[0], sim)

    def mc_pos_part_log_gain_ratio(self, main: GainDistribution, eve: GainDistribution, sim: Optional[SimConfig] = None) -> McEstimate:
        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gamma = main.sample(rng, n)
            gamma_e = eve.sample(rng, n)
            return _pos_log_ratio(gamma, gamma_e)[:, None]

        means, stderr = self._simulate("pos_part_log_gain_ratio", accrue, sim)
        return self._estimate("pos_part_log_gain_ratio", means[0], stderr[0], sim)

    def mc_pos_part_log_threshold_ratio(self, eve: GainDistribution, tau: float, sim: Optional[SimConfig] = None) -> McEstimate:
        """E[{log2(tau / gamma_e)}^+], the high-SNR limit of the threshold ratio term."""

        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gamma_e = eve.sample(rng, n)
            with np.errstate(divide="ignore"):
                return _pos_log_ratio(np.full(n, tau), gamma_e)[:, None]

        means, stderr = self._simulate("pos_part_log_threshold_ratio", accrue, sim)
        return self._estimate("pos_part_log_threshold_ratio", means[0], stderr[0], sim)

    # --------------------------------------------------- common message
    def mc_cm_lower(self, policy: QuantizerPolicy, sim: Optional[SimConfig] = None, receivers: Optional[Sequence[int]] = None) -> McEstimate:
        """Rate log2(1 + tau_q P_q) in the reported interval, secure part against gamma_e."""
        indices = self._receivers(receivers)
        thresholds = policy.lower_edges
        powers = np.asarray(policy.powers)

        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gains = self._draw_mains(rng, n)
            gamma_e = self._draw_eve(rng, n)
            columns = []
            for k in indices:
                q = quantized_index(gains[:, k], thresholds)
                active = q >= 0
                tau = np.where(active, thresholds[np.maximum(q, 0)], 0.0)
                power = np.where(active, powers[np.maximum(q, 0)], 0.0)
                columns.append(_pos_log_ratio(1.0 + tau * power, 1.0 + gamma_e * power))
            return np.column_stack(columns)

        means, stderr = self._simulate("cm_lower", accrue, sim)
        return self._min_estimate("cm_lower", means, stderr, sim)

    def _upper_power(self, policy: QuantizerPolicy, gains: np.ndarray) -> np.ndarray:
        q = quantized_index(gains, policy.lower_edges)
        return np.where(q >= 0, np.asarray(policy.powers)[np.maximum(q, 0)], policy.p0)

    def mc_cm_upper(self, policy: QuantizerPolicy, sim: Optional[SimConfig] = None, receivers: Optional[Sequence[int]] = None) -> McEstimate:
        """Genie rate log2(1 + gamma_k P_q) with the quantized power, secure part against gamma_e."""
        indices = self._receivers(receivers)

        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gains = self._draw_mains(rng, n)
            gamma_e = self._draw_eve(rng, n)
            columns = []
            for k in indices:
                power = self._upper_power(policy, gains[:, k])
                columns.append(_pos_log_ratio(1.0 + gains[:, k] * power, 1.0 + gamma_e * power))
            return np.column_stack(columns)

        means, stderr = self._simulate("cm_upper", accrue, sim)
        return self._min_estimate("cm_upper", means, stderr, sim)

    def mc_perfect_csit(self, power_fn: PowerFunction, independent: bool = False, sim: Optional[SimConfig] = None) -> McEstimate:
        quantity = "im_perfect_csit" if independent else "cm_perfect_csit"

        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gains = self._draw_mains(rng, n)
            gamma_e = self._draw_eve(rng, n)
            if independent:
                gains = gains.max(axis=1, keepdims=True)
            columns = []
            for column in gains.T:
                power = np.asarray(power_fn(column), dtype=float)
                columns.append(_pos_log_ratio(1.0 + column * power, 1.0 + gamma_e * power))
            return np.column_stack(columns)

        means, stderr = self._simulate(quantity, accrue, sim)
        return self._min_estimate(quantity, means, stderr, sim)

    def mc_high_snr_bounds(
        self, thresholds: Sequence[float], independent: bool = False, sim: Optional[SimConfig] = None
    ) -> tuple[McEstimate, McEstimate]:
        """P -> infinity bounds: {log2(tau_q / gamma_e)}^+ in the reported interval and {log2(gamma / gamma_e)}^+."""
        edges = np.asarray(thresholds, dtype=float)
        prefix = "im" if independent else "cm"

        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gains = self._draw_mains(rng, n)
            gamma_e = self._draw_eve(rng, n)
            if independent:
                gains = gains.max(axis=1, keepdims=True)
            lower, upper = [], []
            with np.errstate(divide="ignore", invalid="ignore"):
                for column in gains.T:
                    q = quantized_index(column, edges)
                    tau = np.where(q >= 0, edges[np.maximum(q, 0)], 0.0)
                    lower.append(np.where(tau > 0, _pos_log_ratio(tau, gamma_e), 0.0))
                    upper.append(_pos_log_ratio(column, gamma_e))
            return np.column_stack(lower + upper)

        means, stderr = self._simulate(f"{prefix}_high_snr", accrue, sim)
        width = means.size // 2
        return (
            self._min_estimate(f"{prefix}_high_snr_lower", means[:width], stderr[:width], sim),
            self._min_estimate(f"{prefix}_high_snr_upper", means[width:], stderr[width:], sim),
        )

    # ------------------------------------------------- independent messages
    def _scheduled(self, policy: QuantizerPolicy, gains: np.ndarray, aux: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Served user and its interval index; the highest index wins, ties uniformly at random."""
        q = quantized_index(gains, policy.lower_edges)
        top = q.max(axis=1)
        candidates = q == top[:, None]
        scores = np.where(candidates, aux.random(q.shape), -1.0)
        return np.argmax(scores, axis=1), top

    def _im_lower_accrual(self, policy: QuantizerPolicy) -> Accrual:
        thresholds = policy.lower_edges
        powers = np.asarray(policy.powers)
        K = self.scenario.K

        def accrue(rng: np.random.Generator, aux: np.random.Generator, n: int) -> np.ndarray:
            gains = self._draw_mains(rng, n)
            gamma_e = self._draw_eve(rng, n)
            served, q = self._scheduled(policy, gains, aux)
            active = q >= 0
            tau = np.where(active, thresholds[np.maximum(q, 0)], 0.0)
            power = np.where(active, powers[np.maximum(q, 0)], 0.0)
            rate = _pos_log_ratio(1.0 + tau * power, 1.0 + gamma_e * power)
            shares = np.zeros((n, K))
            shares[np.arange(n), served] = rate
            return np.column_stack([rate, shares])

        return accrue

    def mc_im_lower(self, policy: QuantizerPolicy, sim: Optional[SimConfig] = None) -> McEstimate:
        means, stderr = self._simulate("im_lower", self._im_lower_accrual(policy), sim)
        return self._estimate("im_lower", means[0], stderr[0], sim)

    def mc_per_user_shares(self, policy: QuantizerPolicy, sim: Optional[SimConfig] = None) -> list[McEstimate]:
        means, stderr = self._simulate("im_lower_shares", self._im_lower_accrual(policy), sim)
        return [self._estimate(f"im_share_{k}", means[k + 1], stderr[k + 1], sim) for k in range(self.scenario.K)]

    def mc_im_upper(self, policy: QuantizerPolicy, sim: Optional[SimConfig] = None) -> McEstimate:
        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            strongest = self._draw_mains(rng, n).max(axis=1)
            gamma_e = self._draw_eve(rng, n)
            power = self._upper_power(policy, strongest)
            return _pos_log_ratio(1.0 + strongest * power, 1.0 + gamma_e * power)[:, None]

        means, stderr = self._simulate("im_upper", accrue, sim)
        return self._estimate("im_upper", means[0], stderr[0], sim)

    def mc_strongest_probabilities(self, sim: Optional[SimConfig] = None) -> list[McEstimate]:
        K = self.scenario.K

        def accrue(rng: np.random.Generator, aux: np.random.Generator, n: int) -> np.ndarray:
            gains = self._draw_mains(rng, n)
            candidates = gains == gains.max(axis=1, keepdims=True)
            winner = np.argmax(np.where(candidates, aux.random(gains.shape), -1.0), axis=1)
            return np.eye(K)[winner]

        means, stderr = self._simulate("strongest", accrue, sim)
        return [self._estimate(f"strongest_{k}", means[k], stderr[k], sim) for k in range(K)]

    def mc_statistics_only_rate(self, fixed_power: float, sim: Optional[SimConfig] = None) -> McEstimate:
        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gains = self._draw_mains(rng, n)
            gamma_e = self._draw_eve(rng, n)
            return np.log2(1.0 + fixed_power * gains) - np.log2(1.0 + fixed_power * gamma_e)[:, None]

        means, stderr = self._simulate("statistics_only", accrue, sim)
        index = int(np.argmax(means))
        return self._estimate("statistics_only", max(0.0, means[index]), stderr[index], sim)

    # --------------------------------------------------------------- BCCM
    def mc_bccm_point(
        self,
        split: PowerSplit,
        mode: FeedbackMode = FeedbackMode.ERRORFREE,
        sim: Optional[SimConfig] = None,
        b_redundant: int = 1,
    ) -> tuple[McEstimate, McEstimate]:
        """(R0, R1) estimates; the min over users is taken on the across-block means."""
        mode = FeedbackMode(mode)
        if mode is FeedbackMode.BBIT:
            raise ValueError("partitioned policies are simulated by mc_bccm_partition_point")
        scenario = self.scenario
        threshold = min(law.mean() for law in scenario.main_laws)
        erasure = scenario.epsilon ** b_redundant if mode is FeedbackMode.BEC else 0.0
        boosted = split.p01 + split.p1
        K = scenario.K

        def accrue(rng: np.random.Generator, aux: np.random.Generator, n: int) -> np.ndarray:
            gains = self._draw_mains(rng, n)
            gamma_e = self._draw_eve(rng, n)
            erased = aux.random(n) < erasure
            in_a = (gamma_e < threshold) & ~erased
            mask = in_a[:, None]

            def common(g: np.ndarray, inside: np.ndarray) -> np.ndarray:
                return np.where(
                    inside,
                    np.log2(1.0 + boosted * g) - np.log2(1.0 + split.p1 * g),
                    np.log2(1.0 + split.p02 * g),
                )

            legit_r0 = common(gains, mask)
            eve_r0 = common(gamma_e, in_a)
            r1 = (np.log2(1.0 + split.p1 * gains) - np.log2(1.0 + split.p1 * gamma_e)[:, None]) * mask
            return np.column_stack([legit_r0, eve_r0, r1])

        means, stderr = self._simulate(f"bccm_{mode.value}", accrue, sim)
        r0_index = int(np.argmin(means[: K + 1]))
        r1_index = K + 1 + int(np.argmin(means[K + 1 :]))
        r0 = self._estimate("bccm_r0", max(0.0, means[r0_index]), stderr[r0_index], sim)
        r1 = self._estimate("bccm_r1", max(0.0, means[r1_index]), stderr[r1_index], sim)
        return r0, r1

    def mc_bccm_partition_point(
        self,
        cells: Sequence[EveQuantileCell | IndicatorCell],
        splits: Sequence[PowerSplit],
        sim: Optional[SimConfig] = None,
    ) -> tuple[McEstimate, McEstimate]:
        """(R0, R1) of a b-bit partitioned policy; each block uses the split of its cell."""
        if len(cells) != len(splits) or not cells:
            raise ValueError("need one split per partition cell")
        scenario = self.scenario
        threshold = min(law.mean() for law in scenario.main_laws)
        p01 = np.array([split.p01 for split in splits])
        p02 = np.array([split.p02 for split in splits])
        p1 = np.array([split.p1 for split in splits])
        K = scenario.K

        def accrue(rng: np.random.Generator, _aux: np.random.Generator, n: int) -> np.ndarray:
            gains = self._draw_mains(rng, n)
            gamma_e = self._draw_eve(rng, n)
            members = np.vstack([
                (gamma_e >= cell.lo) & (gamma_e < cell.hi)
                if isinstance(cell, EveQuantileCell)
                else np.asarray(cell.indicator(gains, gamma_e), dtype=bool)
                for cell in cells
            ])
            if not np.all(members.sum(axis=0) == 1):
                raise ValueError("partition cells must cover every gain state exactly once")
            cell = np.argmax(members, axis=0)
            in_a = gamma_e < threshold
            boosted = (p01 + p1)[cell]
            confidential = p1[cell]
            common_only = p02[cell]

            def common(g: np.ndarray, inside: np.ndarray, boost: np.ndarray, secret: np.ndarray, plain: np.ndarray) -> np.ndarray:
                return np.where(inside, np.log2(1.0 + boost * g) - np.log2(1.0 + secret * g), np.log2(1.0 + plain * g))

            legit_r0 = common(gains, in_a[:, None], boosted[:, None], confidential[:, None], common_only[:, None])
            eve_r0 = common(gamma_e, in_a, boosted, confidential, common_only)
            r1 = (np.log2(1.0 + confidential[:, None] * gains) - np.log2(1.0 + confidential * gamma_e)[:, None]) * in_a[:, None]
            return np.column_stack([legit_r0, eve_r0, r1])

        means, stderr = self._simulate("bccm_bbit", accrue, sim)
        r0_index = int(np.argmin(means[: K + 1]))
        r1_index = K + 1 + int(np.argmin(means[K + 1 :]))
        r0 = self._estimate("bccm_bbit_r0", max(0.0, means[r0_index]), stderr[r0_index], sim)
        r1 = self._estimate("bccm_bbit_r1", max(0.0, means[r1_index]), stderr[r1_index], sim)
        return r0, r1

    # ------------------------------------------------------- scaling law
    def scaling_law_experiment(
        self,
        eve_law: GainDistribution,
        K_list: Sequence[int],
        inner_log: str = "natural",
        sim: Optional[SimConfig] = None,
        base: Optional[GainDistribution] = None,
    ) -> list[ScalingRow]:
        """High-SNR IM bounds against log2 log K with a single threshold at log K."""
        if inner_log not in ("natural", "log2"):
            raise ValueError("inner_log must be 'natural' or 'log2'")
        K_list = [int(K) for K in K_list]
        if any(K < 1 for K in K_list) or any(b <= a for a, b in zip(K_list, K_list[1:])):
            raise ValueError("K_list must be increasing positive integers")
        base = base or ExponentialGain()
        inner = math.log if inner_log == "natural" else math.log2
        started = time.perf_counter()
        rows: list[ScalingRow] = []
        for K in K_list:
            strongest = MaxOrderStatistic(base, K)
            tau = inner(K)
            c_minus = interval_mass(strongest, tau, math.inf) * self.integrator.pos_part_log_threshold_ratio(eve_law, tau)
            c_plus = self.integrator.pos_part_log_gain_ratio(strongest, eve_law)
            loglog = math.log2(tau) if tau > 0 else None
            mean_log_max = self.integrator.partial_log_expectation(strongest)
            estimate = self.mc_pos_part_log_gain_ratio(strongest, eve_law, sim)
            rows.append(ScalingRow(K, tau, c_minus, c_plus, loglog, mean_log_max, estimate.estimate, estimate.stderr))
        gaps = [row.gap_plus for row in rows if row.gap_plus is not None]
        if any(b >= a for a, b in zip(gaps, gaps[1:])):
            self._logger.warning("Upper-bound gaps to log log K are not decreasing over %s", K_list)
        self._logger.info(
            "Scaling experiment completed",
            extra={"K_list": K_list, "duration_ms": round((time.perf_counter() - started) * 1000, 3)},
        )
        return rows


__all__ = ["MonteCarloOracle", "quantized_index"]
