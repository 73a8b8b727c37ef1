"""Value types for broadcast-with-confidential-messages (BCCM) rate regions."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

import numpy as np


class FeedbackMode(str, Enum):
    ERRORFREE = "errorfree"
    BEC = "bec"
    # b-bit error-free feedback with partition cells
    BBIT = "bbit"


@dataclass(frozen=True)
class PowerSplit:
    """Common power inside A (p01), common power otherwise (p02), confidential power (p1)."""

    p01: float
    p02: float
    p1: float

    def __post_init__(self) -> None:
        for name in ("p01", "p02", "p1"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a nonnegative finite power")
            object.__setattr__(self, name, value)

    def average_power(self, w_a: float, w_ac: float) -> float:
        return (self.p01 + self.p1) * w_a + self.p02 * w_ac

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class SplitFractions:
    """High-SNR power-splitting factors alpha01, alpha02, alpha1."""

    a01: float
    a02: float
    a1: float

    def __post_init__(self) -> None:
        if min(self.a01, self.a02, self.a1) < 0:
            raise ValueError("splitting factors must be nonnegative")

    def within(self, w_a: float, w_ac: float) -> bool:
        return (self.a01 + self.a1) * w_a + self.a02 * w_ac <= 1.0 + 1e-12


@dataclass(frozen=True)
class EventA:
    """A = {gamma_e < min_k E[gamma_k]}."""

    threshold: float
    prob_A: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.prob_A <= 1.0:
            raise ValueError("Pr[A] must lie in [0, 1]")


@dataclass(frozen=True)
class EventWeights:
    """Effective weights of A and A^c once erasures of the indication bit are counted."""

    prob_A: float
    erasure: float = 0.0

    @property
    def usable(self) -> float:
        return 1.0 - self.erasure

    @property
    def w_a(self) -> float:
        return self.usable * self.prob_A

    @property
    def w_ac(self) -> float:
        return self.erasure + self.usable * (1.0 - self.prob_A)


@dataclass(frozen=True)
class RatePair:
    r0: float
    r1: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"r0": self.r0, "r1": self.r1, "flags": list(self.flags)}


@dataclass(frozen=True)
class RegionPoint:
    r1_target: float
    r0: float
    r1: float
    split: Optional[PowerSplit]
    status: str = "ok"
    # b-bit points: one split per partition cell, with the cell's gamma_e edges when known
    cell_splits: tuple[PowerSplit, ...] = ()
    cell_edges: tuple[tuple[Optional[float], Optional[float]], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        split = self.split.to_dict() if self.split else {"p01": None, "p02": None, "p1": None}
        return {"R1_target": self.r1_target, "R0": self.r0, "R1": self.r1, **split, "status": self.status}

    def to_dicts(self) -> list[dict[str, Any]]:
        """One record per partition cell, or a single cell-less record."""
        if not self.cell_splits:
            return [{**self.to_dict(), "cell": None, "cell_lo": None, "cell_hi": None}]
        edges = self.cell_edges or tuple((None, None) for _ in self.cell_splits)
        return [
            {**self.to_dict(), **split.to_dict(), "cell": index, "cell_lo": lo, "cell_hi": hi}
            for index, (split, (lo, hi)) in enumerate(zip(self.cell_splits, edges))
        ]


@dataclass(frozen=True)
class RegionCurve:
    """Frontier polyline, sorted by R1 descending with R0 nondecreasing."""

    points: tuple[RegionPoint, ...]
    mode: FeedbackMode
    epsilon: float = 0.0
    b: int = 1
    p_avg: float = 1.0
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.points, key=lambda point: (-point.r1, point.r0)))
        object.__setattr__(self, "points", ordered)

    @property
    def max_r1(self) -> float:
        return max((point.r1 for point in self.points), default=0.0)

    @property
    def max_r0(self) -> float:
        return max((point.r0 for point in self.points), default=0.0)

    def is_monotone(self, slack: float = 1e-9) -> bool:
        r0 = [point.r0 for point in self.points]
        return all(b >= a - slack for a, b in zip(r0, r0[1:]))


@dataclass(frozen=True)
class EveQuantileCell:
    """Partition cell selecting gamma_e in [lo, hi)."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.lo < 0 or self.hi <= self.lo:
            raise ValueError(f"invalid cell [{self.lo}, {self.hi})")


@dataclass(frozen=True)
class IndicatorCell:
    """Partition cell given by an indicator over (main gains (n, K), gamma_e (n,))."""

    indicator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "cell"


__all__ = [
    "EventA",
    "EventWeights",
    "EveQuantileCell",
    "FeedbackMode",
    "IndicatorCell",
    "PowerSplit",
    "RatePair",
    "RegionCurve",
    "RegionPoint",
    "SplitFractions",
]
