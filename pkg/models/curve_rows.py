"""Row records emitted by the curve commands."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

from models.bccm_records import FeedbackMode, RegionPoint
from models.bound_result import BoundResult
from models.estimates import McEstimate


def to_db(value: float) -> float:
    return 10.0 * math.log10(value) if value > 0 else -math.inf


@dataclass(frozen=True)
class BoundsRow:
    """One sweep point of a CM or IM bounds curve, with a column group per feedback size b."""

    sweep_name: str
    sweep_value: float
    bounds: dict[int, BoundResult]
    high_snr: dict[int, BoundResult]
    capacity_perfect_csit: float
    per_user_shares: tuple[float, ...] = ()

    @property
    def bits(self) -> list[int]:
        return sorted(self.bounds)

    def to_dict(self) -> dict[str, Any]:
        row: dict[str, Any] = {self.sweep_name: self.sweep_value}
        for b in self.bits:
            row[f"lower_{b}"] = self.bounds[b].lower
            row[f"upper_{b}"] = self.bounds[b].upper
            row[f"hsnr_lower_{b}"] = self.high_snr[b].lower
        row["capacity_perfect_csit"] = self.capacity_perfect_csit
        row["hsnr_upper"] = next(iter(self.high_snr.values())).upper if self.high_snr else None
        for k, share in enumerate(self.per_user_shares, start=1):
            row[f"share_{k}"] = share
        return row


@dataclass(frozen=True)
class RegionRow:
    mode: FeedbackMode
    epsilon: float
    b: int
    p_avg: float
    point: RegionPoint

    def _head(self) -> dict[str, Any]:
        return {"mode": self.mode.value, "epsilon": self.epsilon, "b": self.b, "P_avg_dB": to_db(self.p_avg)}

    def to_dict(self) -> dict[str, Any]:
        return {**self._head(), **self.point.to_dict()}

    def to_dicts(self) -> list[dict[str, Any]]:
        return [{**self._head(), **values} for values in self.point.to_dicts()]


@dataclass(frozen=True)
class ValidationCheck:
    """A Monte Carlo estimate paired with the analytic value it must reproduce."""

    evaluator: str
    estimate: McEstimate
    analytic: float
    sigmas: float = 3.0
    details: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def diff(self) -> float:
        return self.analytic - self.estimate.estimate

    @property
    def passed(self) -> bool:
        return self.estimate.agrees_with(self.analytic, self.sigmas)

    def describe(self) -> str:
        return (
            f"{self.evaluator} on {self.estimate.scenario_id or 'scenario'}: "
            f"diff {self.diff:.3g} vs {self.sigmas:g} x stderr {self.estimate.stderr:.3g}"
        )


__all__ = ["BoundsRow", "RegionRow", "ValidationCheck", "to_db"]
