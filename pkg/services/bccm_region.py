"""Frontier tracing for BCCM rate regions by R1-target scalarization."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Optional

import numpy as np

from models.bccm_records import EveQuantileCell, FeedbackMode, PowerSplit, RegionCurve, RegionPoint
from services.bccm import BccmEvaluator
from services.optimizer import BccmSplitOptimizer, InfeasibleTargetError


class BccmRegionTracer:
    """Sweep R1 targets from 0 to the largest achievable R1 and keep the best R0 at each."""

    def __init__(
        self,
        bccm: BccmEvaluator,
        optimizer: BccmSplitOptimizer,
        workers: int = 1,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.bccm = bccm
        self.optimizer = optimizer
        self.workers = max(1, workers)
        self._logger = (logger or logging.getLogger("secrecy")).getChild(self.__class__.__name__.lower())

    def _solve(self, mode: FeedbackMode, target: float, b_redundant: int) -> RegionPoint:
        split: Optional[PowerSplit] = None
        cell_splits: tuple[PowerSplit, ...] = ()
        cell_edges: tuple[tuple[Optional[float], Optional[float]], ...] = ()
        try:
            if mode is FeedbackMode.BBIT:
                cells, splits, pair = self.optimizer.optimize_partitioned_split(target)
                cell_splits = tuple(splits)
                cell_edges = tuple((c.lo, c.hi) if isinstance(c, EveQuantileCell) else (None, None) for c in cells)
            else:
                split, pair = self.optimizer.optimize_bccm_split(mode, target, b_redundant)
        except InfeasibleTargetError as exc:
            self._logger.warning("R1 target %.6g infeasible (max %.6g)", target, exc.max_r1)
            return RegionPoint(target, 0.0, 0.0, None, "infeasible")
        except (RuntimeError, ValueError) as exc:
            self._logger.warning("Frontier point at R1 target %.6g failed: %s", target, exc)
            return RegionPoint(target, 0.0, 0.0, None, "failed")
        status = "ok" if not pair.flags else ",".join(pair.flags)
        return RegionPoint(target, pair.r0, pair.r1, split, status, cell_splits, cell_edges)

    def _max_r1(self, mode: FeedbackMode, b_redundant: int) -> float:
        if mode is FeedbackMode.BBIT:
            return self.optimizer.max_partitioned_r1(self.bccm.default_cells())
        return self.optimizer.max_r1(self.bccm.weights(mode, b_redundant))[1]

    def trace(self, mode: FeedbackMode, frontier_samples: int = 33, b_redundant: int = 1) -> RegionCurve:
        mode = FeedbackMode(mode)
        if frontier_samples < 2:
            raise ValueError("frontier_samples must be at least 2 to include both axis endpoints")
        started = time.perf_counter()
        max_r1 = self._max_r1(mode, b_redundant)
        # the top target sits a hair under max R1 so root finding stays bracketed
        targets = np.linspace(0.0, max_r1 * (1.0 - 1e-9), frontier_samples)
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            points = list(pool.map(lambda target: self._solve(mode, float(target), b_redundant), targets))
        points = self._envelope(points)
        curve = RegionCurve(
            points=tuple(points),
            mode=mode,
            epsilon=self.bccm.scenario.epsilon if mode is FeedbackMode.BEC else 0.0,
            b=b_redundant if mode is FeedbackMode.BEC else self.bccm.scenario.b,
            p_avg=self.bccm.scenario.p_avg,
            diagnostics={"max_r1": max_r1, "prob_A": self.bccm.event_a.prob_A},
        )
        self._logger.info(
            "Traced BCCM region",
            extra={
                "mode": mode.value,
                "points": len(points),
                "max_r1": max_r1,
                "duration_ms": round((time.perf_counter() - started) * 1000, 3),
            },
        )
        return curve

    @staticmethod
    def _envelope(points: list[RegionPoint]) -> list[RegionPoint]:
        """Replace points dominated by a higher-R1 neighbour so R0 never rises with R1."""
        ordered = sorted(points, key=lambda point: -point.r1_target)
        result: list[RegionPoint] = []
        best: Optional[RegionPoint] = None
        for point in ordered:
            usable = point.status not in ("infeasible", "failed")
            if usable and (best is None or point.r0 >= best.r0):
                best = point
                result.append(point)
            elif best is not None and best.r1 >= point.r1_target:
                result.append(replace(best, r1_target=point.r1_target, status="envelope"))
            else:
                result.append(point)
        return result


__all__ = ["BccmRegionTracer"]
