"""Rate pairs (R0, R1) of the BCCM regions under error-free and erased feedback.

The indication bit reports A = {gamma_e < min_k E[gamma_k]}. Because A is an
event on gamma_e alone, expectations of legitimate gains conditioned on A
factor out, and only the eavesdropper's own terms need truncated integrals.
"""
from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from models.bccm_records import (
    EventA,
    EventWeights,
    EveQuantileCell,
    FeedbackMode,
    IndicatorCell,
    PowerSplit,
    RatePair,
    RegionCurve,
    RegionPoint,
    SplitFractions,
)
from models.gain_distribution import GainDistribution
from models.quantizer_policy import FeedbackTopology, Scenario, ScenarioError
from models.specs import QuadratureSpec
from services.quadrature import ChannelIntegrator, interval_mass
from services.quantizer import FEASIBILITY_SLACK, ConstraintViolationError

PartitionCell = Union[EveQuantileCell, IndicatorCell]


class UnboundedRateError(ValueError):
    """Raised when a high-SNR rate expression has no finite value."""


@dataclass(frozen=True)
class PartitionTerms:
    """Accumulated R0/R1 components of a partitioned policy before the min over users."""

    legit_r0: np.ndarray
    eve_r0: float
    legit_r1: np.ndarray
    eve_r1: float
    spent: float
    flags: tuple[str, ...] = ()

    @property
    def r0_candidates(self) -> np.ndarray:
        return np.append(self.legit_r0, self.eve_r0)

    @property
    def r1_candidates(self) -> np.ndarray:
        return self.legit_r1 - self.eve_r1

    @property
    def r0(self) -> float:
        return max(0.0, float(self.r0_candidates.min()))

    @property
    def r1(self) -> float:
        return max(0.0, float(self.r1_candidates.min()))


class BccmEvaluator:
    """Evaluate BCCM rate pairs for one scenario.

    Only the shared feedback link is modeled; a per-receiver topology is rejected.
    """

    def __init__(
        self,
        scenario: Scenario,
        quadrature: Optional[QuadratureSpec] = None,
        logger: Optional[logging.Logger] = None,
        partition_samples: int = 200_000,
        seed: int = 0,
    ) -> None:
        if scenario.feedback_topology is not FeedbackTopology.SHARED:
            raise ScenarioError("BCCM rates are only defined for a shared feedback link")
        self.scenario = scenario
        self.quadrature = quadrature or QuadratureSpec()
        base_logger = logger or logging.getLogger("secrecy")
        self._logger = base_logger.getChild(self.__class__.__name__.lower())
        self.integrator = ChannelIntegrator(self.quadrature, logger=base_logger)
        self.partition_samples = partition_samples
        self.seed = seed
        self._memo: dict[tuple[GainDistribution, float, float, float], float] = {}
        self._lock = threading.Lock()

    # ----------------------------------------------------------- events
    @cached_property
    def event_a(self) -> EventA:
        threshold = min(law.mean() for law in self.scenario.main_laws)
        prob = float(self.scenario.eve_law.mass_below(threshold))
        return EventA(threshold=threshold, prob_A=min(1.0, max(0.0, prob)))

    def weights(self, mode: FeedbackMode = FeedbackMode.ERRORFREE, b_redundant: int = 1) -> EventWeights:
        mode = FeedbackMode(mode)
        if mode is FeedbackMode.BEC:
            if b_redundant < 1:
                raise ValueError("b_redundant must be a positive integer")
            return EventWeights(self.event_a.prob_A, erasure=self.scenario.epsilon ** b_redundant)
        return EventWeights(self.event_a.prob_A)

    @property
    def legit_laws(self) -> list[GainDistribution]:
        laws: list[GainDistribution] = []
        for law in self.scenario.main_laws:
            if law not in laws:
                laws.append(law)
        return laws

    # ----------------------------------------------------------- integrals
    def partial_log1p(self, law: GainDistribution, power: float, lo: float = 0.0, hi: float = math.inf) -> float:
        """E[log2(1 + P gamma) ; lo <= gamma < hi], memoized per (law, P, lo, hi)."""
        key = (law, float(power), float(lo), float(hi))
        with self._lock:
            if key in self._memo:
                return self._memo[key]
        value = self.integrator.partial_log1p_expectation(law, power, lo, hi)
        with self._lock:
            self._memo[key] = value
        return value

    def require_split(self, split: PowerSplit, weights: EventWeights) -> None:
        spent = split.average_power(weights.w_a, weights.w_ac)
        budget = self.scenario.p_avg
        if spent > budget + FEASIBILITY_SLACK * max(1.0, budget):
            raise ConstraintViolationError(f"split spends {spent:.6g} > P_avg {budget:.6g}")

    def r1_of_p1(self, p1: float, weights: EventWeights) -> float:
        """Confidential rate of a split with confidential power ``p1``."""
        event = self.event_a
        if event.prob_A <= 0.0 or p1 <= 0.0 or weights.usable <= 0.0:
            return 0.0
        eve_part = self.partial_log1p(self.scenario.eve_law, p1, 0.0, event.threshold)
        legit = min(self.partial_log1p(law, p1) for law in self.legit_laws)
        return max(0.0, weights.usable * (legit * event.prob_A - eve_part))

    def r0_terms(self, split: PowerSplit, weights: EventWeights) -> list[float]:
        """R0 candidates of the K legitimate laws followed by the eavesdropper's."""
        event = self.event_a
        boosted = split.p01 + split.p1
        terms = []
        for law in self.legit_laws:
            inside = self.partial_log1p(law, boosted) - self.partial_log1p(law, split.p1)
            terms.append(inside * weights.w_a + self.partial_log1p(law, split.p02) * weights.w_ac)
        eve = self.scenario.eve_law
        thr = event.threshold
        inside_eve = self.partial_log1p(eve, boosted, 0.0, thr) - self.partial_log1p(eve, split.p1, 0.0, thr)
        outside_eve = self.partial_log1p(eve, split.p02, thr, math.inf)
        terms.append(
            weights.usable * (inside_eve + outside_eve)
            + weights.erasure * self.partial_log1p(eve, split.p02)
        )
        return terms

    # ----------------------------------------------------------- points
    def point(self, split: PowerSplit, weights: EventWeights) -> RatePair:
        self.require_split(split, weights)
        flags: list[str] = []
        if self.event_a.prob_A <= 0.0:
            flags.append("degenerate_event")
        r0 = max(0.0, min(self.r0_terms(split, weights)))
        r1 = self.r1_of_p1(split.p1, weights)
        return RatePair(r0=r0, r1=r1, flags=tuple(flags))

    def point_errorfree(self, split: PowerSplit) -> RatePair:
        return self.point(split, self.weights(FeedbackMode.ERRORFREE))

    def point_bec(self, split: PowerSplit, b_redundant: int = 1) -> RatePair:
        return self.point(split, self.weights(FeedbackMode.BEC, b_redundant))

    # ------------------------------------------------------- partitions
    def default_cells(self, levels: Optional[Sequence[float]] = None) -> list[EveQuantileCell]:
        """gamma_e quantile cells inside A; the last cell also absorbs A^c.

        ``levels`` are the interior cut levels as fractions of Pr[A]; by default
        they split A into 2^(b-1) cells of equal probability.
        """
        count = 2 ** (self.scenario.b - 1)
        if levels is None:
            levels = [q / count for q in range(1, count)]
        if len(levels) != count - 1:
            raise ScenarioError(f"expected {count - 1} interior levels, got {len(levels)}")
        eve = self.scenario.eve_law
        prob_a = self.event_a.prob_A
        cuts = [0.0]
        for level in levels:
            cut = float(eve.ppf(level * prob_a)) if prob_a > 0 else 0.0
            cuts.append(min(max(cut, np.nextafter(cuts[-1], math.inf)), self.event_a.threshold))
        cuts.append(math.inf)
        for index in range(1, len(cuts)):
            if cuts[index] <= cuts[index - 1]:
                cuts[index] = float(np.nextafter(cuts[index - 1], math.inf))
        return [EveQuantileCell(lo, hi) for lo, hi in zip(cuts, cuts[1:])]

    def partition_terms(self, cells: Sequence[PartitionCell], splits: Sequence[PowerSplit]) -> PartitionTerms:
        """Per-receiver R0/R1 components of a b-bit partitioned policy."""
        expected = 2 ** (self.scenario.b - 1)
        if len(cells) != expected or len(splits) != expected:
            raise ScenarioError(f"b = {self.scenario.b} needs {expected} cells and splits")
        if all(isinstance(cell, EveQuantileCell) for cell in cells):
            return self._partition_terms_analytic(list(cells), list(splits))
        return self._partition_terms_sampled(list(cells), list(splits))

    def point_bbit_errorfree(self, cells: Sequence[PartitionCell], splits: Sequence[PowerSplit]) -> RatePair:
        started = time.perf_counter()
        terms = self.partition_terms(cells, splits)
        self._check_budget(terms.spent)
        flags = list(terms.flags)
        if self.event_a.prob_A <= 0.0:
            flags.append("degenerate_event")
        self._logger.debug(
            "Evaluated partitioned BCCM point",
            extra={"cells": len(cells), "duration_ms": round((time.perf_counter() - started) * 1000, 3)},
        )
        return RatePair(r0=terms.r0, r1=terms.r1, flags=tuple(flags))

    def _partition_terms_analytic(self, cells: list[EveQuantileCell], splits: list[PowerSplit]) -> PartitionTerms:
        ordered = sorted(zip(cells, splits), key=lambda pair: pair[0].lo)
        contiguous = all(a.hi == b.lo for (a, _), (b, _) in zip(ordered, ordered[1:]))
        if ordered[0][0].lo != 0.0 or not math.isinf(ordered[-1][0].hi) or not contiguous:
            raise ValueError("gamma_e cells must tile [0, inf) without gaps")
        eve = self.scenario.eve_law
        thr = self.event_a.threshold
        flags: list[str] = []
        spent = 0.0
        legit_r0 = np.zeros(len(self.legit_laws))
        legit_r1 = np.zeros(len(self.legit_laws))
        eve_r0 = 0.0
        eve_r1 = 0.0
        for index, (cell, split) in enumerate(ordered):
            a_lo, a_hi = cell.lo, min(cell.hi, thr)
            c_lo, c_hi = max(cell.lo, thr), cell.hi
            mass_a = interval_mass(eve, a_lo, a_hi) if a_lo < a_hi else 0.0
            mass_c = interval_mass(eve, c_lo, c_hi) if c_lo < c_hi else 0.0
            if mass_a + mass_c <= 0.0:
                flags.append(f"skipped_cell_{index}")
                self._logger.info("Partition cell %s has zero mass; skipping", index)
                continue
            boosted = split.p01 + split.p1
            spent += boosted * mass_a + split.p02 * mass_c
            for k, law in enumerate(self.legit_laws):
                legit_r0[k] += (self.partial_log1p(law, boosted) - self.partial_log1p(law, split.p1)) * mass_a
                legit_r0[k] += self.partial_log1p(law, split.p02) * mass_c
                legit_r1[k] += self.partial_log1p(law, split.p1) * mass_a
            if mass_a > 0:
                eve_r0 += self.partial_log1p(eve, boosted, a_lo, a_hi) - self.partial_log1p(eve, split.p1, a_lo, a_hi)
                eve_r1 += self.partial_log1p(eve, split.p1, a_lo, a_hi)
            if mass_c > 0:
                eve_r0 += self.partial_log1p(eve, split.p02, c_lo, c_hi)
        return PartitionTerms(legit_r0, eve_r0, legit_r1, eve_r1, spent, tuple(flags))

    def _partition_terms_sampled(self, cells: list[PartitionCell], splits: list[PowerSplit]) -> PartitionTerms:
        rng = np.random.default_rng(self.seed)
        n = self.partition_samples
        gains = np.column_stack([law.sample(rng, n) for law in self.scenario.main_laws])
        gamma_e = self.scenario.eve_law.sample(rng, n)
        membership = np.vstack([self._cell_members(cell, gains, gamma_e) for cell in cells])
        if not np.all(membership.sum(axis=0) == 1):
            raise ValueError("partition cells must cover every gain state exactly once")
        in_a = gamma_e < self.event_a.threshold
        flags: list[str] = []
        spent = 0.0
        legit_r0 = np.zeros(self.scenario.K)
        legit_r1 = np.zeros(self.scenario.K)
        eve_r0 = 0.0
        eve_r1 = 0.0
        for index, (members, split) in enumerate(zip(membership, splits)):
            if not members.any():
                flags.append(f"skipped_cell_{index}")
                self._logger.info("Partition cell %s has zero mass; skipping", index)
                continue
            inside = members & in_a
            outside = members & ~in_a
            boosted = split.p01 + split.p1
            spent += (boosted * inside.sum() + split.p02 * outside.sum()) / n
            legit_r0 += (
                np.sum((np.log2(1 + boosted * gains) - np.log2(1 + split.p1 * gains)) * inside[:, None], axis=0)
                + np.sum(np.log2(1 + split.p02 * gains) * outside[:, None], axis=0)
            ) / n
            legit_r1 += np.sum(np.log2(1 + split.p1 * gains) * inside[:, None], axis=0) / n
            eve_r0 += float(
                np.sum((np.log2(1 + boosted * gamma_e) - np.log2(1 + split.p1 * gamma_e)) * inside)
                + np.sum(np.log2(1 + split.p02 * gamma_e) * outside)
            ) / n
            eve_r1 += float(np.sum(np.log2(1 + split.p1 * gamma_e) * inside)) / n
        return PartitionTerms(legit_r0, eve_r0, legit_r1, eve_r1, spent, tuple(flags))

    @staticmethod
    def _cell_members(cell: PartitionCell, gains: np.ndarray, gamma_e: np.ndarray) -> np.ndarray:
        if isinstance(cell, EveQuantileCell):
            return (gamma_e >= cell.lo) & (gamma_e < cell.hi)
        return np.asarray(cell.indicator(gains, gamma_e), dtype=bool)

    def _check_budget(self, spent: float) -> None:
        budget = self.scenario.p_avg
        if spent > budget + FEASIBILITY_SLACK * max(1.0, budget):
            raise ConstraintViolationError(f"partitioned splits spend {spent:.6g} > P_avg {budget:.6g}")

    # ----------------------------------------------------------- high SNR
    def high_snr_r1_cap(self, weights: EventWeights) -> float:
        """usable * min_k (E[log2 gamma_k] Pr[A] - E[log2 gamma_e ; A]), clipped at 0."""
        event = self.event_a
        if event.prob_A <= 0.0:
            return 0.0
        eve_part = self.integrator.partial_log_expectation(self.scenario.eve_law, 0.0, event.threshold)
        legit = min(self.integrator.partial_log_expectation(law) for law in self.legit_laws)
        value = weights.usable * (legit * event.prob_A - eve_part)
        return max(0.0, value) if math.isfinite(value) else math.inf

    def high_snr_point(self, fractions: SplitFractions, weights: EventWeights) -> RatePair:
        """R0 = log2(1 + a01/a1) w_A + log2(P_avg) w_Ac and R1 = the high-SNR cap when a1 > 0."""
        if not fractions.within(weights.w_a, weights.w_ac):
            raise ConstraintViolationError("splitting factors fall outside the feasible set")
        if fractions.a1 == 0.0 and fractions.a01 > 0.0 and weights.w_a > 0.0:
            raise UnboundedRateError("a01 / a1 is unbounded with a1 = 0; the common rate inside A has no high-SNR limit")
        log_power = max(0.0, math.log2(self.scenario.p_avg))
        ratio_term = math.log2(1.0 + fractions.a01 / fractions.a1) if fractions.a1 > 0.0 else 0.0
        r0 = ratio_term * weights.w_a + log_power * weights.w_ac
        r1 = self.high_snr_r1_cap(weights) if fractions.a1 > 0 else 0.0
        return RatePair(r0=r0, r1=r1)

    def region_high_snr(self, mode: FeedbackMode, b_redundant: int = 1, samples: int = 32) -> RegionCurve:
        """Sweep a01/a1 from 0 up to P_avg - 1, plus the common-only corner R = (log2 P_avg, 0).

        At a01/a1 = P_avg - 1 the ratio term reaches log2 P_avg, the growth of a
        single-user link, which the common-only corner attains with R1 = 0.
        """
        if self.scenario.p_avg <= 1.0:
            raise ScenarioError("the high-SNR region needs P_avg above 1 (0 dB)")
        weights = self.weights(mode, b_redundant)
        top = self.scenario.p_avg - 1.0
        ratios = np.concatenate(([0.0], np.geomspace(min(1e-3, top), top, max(samples - 2, 1))))
        points: list[RegionPoint] = []
        for ratio in ratios:
            a1 = 1.0 / (1.0 + ratio)
            pair = self.high_snr_point(SplitFractions(a01=ratio * a1, a02=1.0, a1=a1), weights)
            points.append(RegionPoint(pair.r1, pair.r0, pair.r1, None, "ok"))
        log_power = math.log2(self.scenario.p_avg)
        points.append(RegionPoint(0.0, log_power * (weights.w_a + weights.w_ac), 0.0, None, "common_only"))
        return RegionCurve(
            points=tuple(points),
            mode=FeedbackMode(mode),
            epsilon=self.scenario.epsilon if FeedbackMode(mode) is FeedbackMode.BEC else 0.0,
            b=b_redundant,
            p_avg=self.scenario.p_avg,
            diagnostics={"regime": "high_snr"},
        )


__all__ = ["BccmEvaluator", "PartitionCell", "PartitionTerms", "UnboundedRateError"]
