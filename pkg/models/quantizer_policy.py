"""Quantizer policies, perfect-CSIT power functions and the problem instance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any, Sequence, Union

import numpy as np

from models.gain_distribution import ColluderModel, GainDistribution, max_law


class ScenarioError(ValueError):
    """Raised when a scenario or policy is constructed with invalid values."""


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and value & (value - 1) == 0


@dataclass(frozen=True)
class QuantizerPolicy:
    """Reconstruction points tau_1..tau_Q with one transmit power per interval.

    ``thresholds[q]`` is the lower edge of interval ``q + 1``; the last interval
    is open to infinity. ``p0`` is the power on ``[0, tau_1)`` and is only used
    by the upper-bound evaluators.
    """

    thresholds: tuple[float, ...]
    powers: tuple[float, ...]
    p0: float = 0.0

    def __post_init__(self) -> None:
        thresholds = tuple(float(t) for t in self.thresholds)
        powers = tuple(float(p) for p in self.powers)
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "p0", float(self.p0))
        if len(thresholds) != len(powers):
            raise ScenarioError("thresholds and powers must have the same length")
        if not _is_power_of_two(len(thresholds)):
            raise ScenarioError(f"number of intervals must be a power of two, got {len(thresholds)}")
        if any(not math.isfinite(t) for t in thresholds) or thresholds[0] < 0:
            raise ScenarioError("thresholds must be finite and nonnegative")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ScenarioError("thresholds must be strictly increasing")
        if any(not math.isfinite(p) or p < 0 for p in (*powers, self.p0)):
            raise ScenarioError("powers must be finite and nonnegative")

    @property
    def Q(self) -> int:
        return len(self.thresholds)

    @property
    def bits(self) -> int:
        return self.Q.bit_length() - 1

    @property
    def lower_edges(self) -> np.ndarray:
        return np.asarray(self.thresholds, dtype=float)

    @property
    def upper_edges(self) -> np.ndarray:
        return np.append(np.asarray(self.thresholds[1:], dtype=float), np.inf)

    @classmethod
    def equal_power(cls, thresholds: Sequence[float], power: float) -> "QuantizerPolicy":
        return cls(tuple(thresholds), tuple(power for _ in thresholds))

    def scaled(self, factor: float) -> "QuantizerPolicy":
        return replace(
            self,
            powers=tuple(p * factor for p in self.powers),
            p0=self.p0 * factor,
        )

    def to_dict(self) -> dict[str, Any]:
        return {"thresholds": list(self.thresholds), "powers": list(self.powers), "p0": self.p0}


@dataclass(frozen=True)
class PowerFunction:
    """Piecewise-constant P(gamma): ``levels[j]`` applies on ``[edges[j], edges[j+1])``."""

    edges: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        edges = tuple(float(e) for e in self.edges)
        levels = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "levels", levels)
        if len(edges) != len(levels) + 1 or not levels:
            raise ScenarioError("a power function needs one more edge than levels")
        if edges[0] != 0.0 or edges[-1] != math.inf:
            raise ScenarioError("power-function edges must start at 0 and end at infinity")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ScenarioError("power-function edges must be strictly increasing")
        if any(not math.isfinite(v) or v < 0 for v in levels):
            raise ScenarioError("power levels must be finite and nonnegative")

    @classmethod
    def constant(cls, edges: Sequence[float], level: float) -> "PowerFunction":
        return cls(tuple(edges), tuple(level for _ in range(len(edges) - 1)))

    @property
    def knots(self) -> int:
        return len(self.levels)

    @property
    def lower_edges(self) -> np.ndarray:
        return np.asarray(self.edges[:-1], dtype=float)

    @property
    def upper_edges(self) -> np.ndarray:
        return np.asarray(self.edges[1:], dtype=float)

    def __call__(self, gain: float | np.ndarray) -> float | np.ndarray:
        index = np.searchsorted(np.asarray(self.edges), gain, side="right") - 1
        return np.asarray(self.levels)[np.clip(index, 0, self.knots - 1)]

    def to_dict(self) -> dict[str, Any]:
        return {"edges": list(self.edges), "levels": list(self.levels)}


class FeedbackTopology(str, Enum):
    PER_RECEIVER = "per-receiver"
    SHARED = "shared"


EveSpec = Union[GainDistribution, ColluderModel]


@dataclass(frozen=True)
class Scenario:
    """One problem instance: receivers, eavesdropper, feedback budget and power."""

    K: int
    b: int
    p_avg: float
    main_laws: tuple[GainDistribution, ...]
    eve: EveSpec
    epsilon: float = 0.0
    feedback_topology: FeedbackTopology = FeedbackTopology.SHARED
    label: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "main_laws", tuple(self.main_laws))
        if not isinstance(self.feedback_topology, FeedbackTopology):
            object.__setattr__(self, "feedback_topology", FeedbackTopology(self.feedback_topology))
        if self.K < 1:
            raise ScenarioError("K must be at least 1")
        if len(self.main_laws) != self.K:
            raise ScenarioError(f"expected {self.K} main laws, got {len(self.main_laws)}")
        if self.b < 1:
            raise ScenarioError("feedback bits b must be at least 1")
        if not (math.isfinite(self.p_avg) and self.p_avg > 0):
            raise ScenarioError("P_avg must be a positive finite power")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ScenarioError("epsilon must lie in [0, 1]")

    @classmethod
    def iid(cls, K: int, b: int, p_avg: float, main: GainDistribution, eve: EveSpec, **kwargs: Any) -> "Scenario":
        return cls(K=K, b=b, p_avg=p_avg, main_laws=tuple(main for _ in range(K)), eve=eve, **kwargs)

    @property
    def Q(self) -> int:
        return 2 ** self.b

    @property
    def eve_law(self) -> GainDistribution:
        if isinstance(self.eve, ColluderModel):
            return self.eve.law
        return self.eve

    @property
    def is_iid(self) -> bool:
        return all(law == self.main_laws[0] for law in self.main_laws)

    @cached_property
    def max_law(self) -> GainDistribution:
        return max_law(self.main_laws)

    @property
    def distinct_main_laws(self) -> list[tuple[int, GainDistribution]]:
        """(first receiver index, law) for every distinct receiver law."""
        seen: list[tuple[int, GainDistribution]] = []
        for index, law in enumerate(self.main_laws):
            if all(law != other for _, other in seen):
                seen.append((index, law))
        return seen

    @property
    def weakest_receiver(self) -> int:
        return int(np.argmin([law.mean() for law in self.main_laws]))

    def with_changes(self, **changes: Any) -> "Scenario":
        """Copy with overrides; a new ``K`` replicates the first main law."""
        if "K" in changes and "main_laws" not in changes:
            if not self.is_iid:
                raise ScenarioError("K can only be swept for identically distributed receivers")
            changes["main_laws"] = tuple(self.main_laws[0] for _ in range(int(changes["K"])))
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        eve = self.eve.to_dict()
        return {
            "K": self.K,
            "b": self.b,
            "P_avg": self.p_avg,
            "main_laws": [law.to_dict() for law in self.main_laws],
            "eve": eve,
            "epsilon": self.epsilon,
            "feedback_topology": self.feedback_topology.value,
        }


__all__ = [
    "EveSpec",
    "FeedbackTopology",
    "PowerFunction",
    "QuantizerPolicy",
    "Scenario",
    "ScenarioError",
]
