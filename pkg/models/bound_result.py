"""Lower/upper secrecy-rate pairs with the policies that achieve them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from models.quantizer_policy import QuantizerPolicy

ORDER_SLACK = 1e-6


@dataclass(frozen=True)
class BoundResult:
    lower: float
    upper: float
    policy_lower: Optional[QuantizerPolicy] = None
    policy_upper: Optional[QuantizerPolicy] = None
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.lower < -ORDER_SLACK or self.upper < -ORDER_SLACK:
            raise ValueError("secrecy rates cannot be negative")
        object.__setattr__(self, "lower", max(0.0, float(self.lower)))
        object.__setattr__(self, "upper", max(0.0, float(self.upper)))

    @property
    def ordered(self) -> bool:
        """lower <= upper within numerical slack."""
        return self.lower <= self.upper + ORDER_SLACK

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict[str, Any]:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "policy_lower": self.policy_lower.to_dict() if self.policy_lower else None,
            "policy_upper": self.policy_upper.to_dict() if self.policy_upper else None,
            "diagnostics": dict(self.diagnostics),
        }


__all__ = ["BoundResult", "ORDER_SLACK"]
