"""CSV persistence for Monte Carlo estimates checked against their analytic values."""
from __future__ import annotations

from typing import Any

from models.curve_rows import ValidationCheck
from repositories.base_repository import BaseCurveRepository


class EstimateRepository(BaseCurveRepository):
    def __init__(self, *args: Any, report_stderr: bool = True, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.report_stderr = report_stderr

    @property
    def columns(self) -> list[str]:  # type: ignore[override]
        return ["scenario_id", "quantity", "estimate", "stderr", "L", "seed", "analytic", "passed"]

    def _build_row(self, record: ValidationCheck) -> tuple[object, ...]:
        estimate = record.estimate
        return (
            estimate.scenario_id,
            f"{record.evaluator}:{estimate.quantity}",
            estimate.estimate,
            estimate.stderr if self.report_stderr else None,
            estimate.num_blocks,
            estimate.seed,
            record.analytic,
            record.passed,
        )


__all__ = ["EstimateRepository"]
