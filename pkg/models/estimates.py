"""Monte Carlo estimates and scaling-law table rows."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Iterator, Optional


@dataclass(frozen=True)
class McEstimate:
    """A batch-means estimate; unpacks as ``(estimate, stderr)``."""

    quantity: str
    estimate: float
    stderr: float
    num_blocks: int
    seed: int
    scenario_id: str = ""

    def __iter__(self) -> Iterator[float]:
        yield self.estimate
        yield self.stderr

    def agrees_with(self, value: float, sigmas: float = 3.0, floor: float = 1e-12) -> bool:
        """|value - estimate| within ``sigmas`` standard errors."""
        return abs(value - self.estimate) <= sigmas * self.stderr + floor

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario_id": self.scenario_id,
            "quantity": self.quantity,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "L": self.num_blocks,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ScalingRow:
    K: int
    tau: float
    c_minus_hsnr: float
    c_plus_hsnr: float
    loglog_k: Optional[float]
    mean_log_max: float
    mc_c_plus: float
    mc_stderr: float

    @property
    def gap_minus(self) -> Optional[float]:
        if self.loglog_k is None:
            return None
        return abs(self.c_minus_hsnr - self.loglog_k)

    @property
    def gap_plus(self) -> Optional[float]:
        if self.loglog_k is None:
            return None
        return abs(self.c_plus_hsnr - self.loglog_k)

    @property
    def log_ratio(self) -> Optional[float]:
        """E[log2 gamma_max] / log2 log K."""
        if self.loglog_k is None or self.loglog_k == 0 or not math.isfinite(self.loglog_k):
            return None
        return self.mean_log_max / self.loglog_k

    def to_dict(self) -> dict[str, Any]:
        row = asdict(self)
        row.update(gap_minus=self.gap_minus, gap_plus=self.gap_plus, log_ratio=self.log_ratio)
        return row


__all__ = ["McEstimate", "ScalingRow"]
