"""CSV persistence for BCCM region frontiers."""
from __future__ import annotations

from models.curve_rows import RegionRow
from repositories.base_repository import BaseCurveRepository

REGION_COLUMNS = [
    "mode",
    "epsilon",
    "b",
    "P_avg_dB",
    "R1_target",
    "R0",
    "R1",
    "cell",
    "cell_lo",
    "cell_hi",
    "p01",
    "p02",
    "p1",
    "status",
]


class RegionCurveRepository(BaseCurveRepository):
    """Stacked frontier polylines, one row per traced point and partition cell."""

    @property
    def columns(self) -> list[str]:  # type: ignore[override]
        return REGION_COLUMNS

    def _build_rows(self, record: RegionRow) -> list[tuple[object, ...]]:
        return [tuple(values[column] for column in REGION_COLUMNS) for values in record.to_dicts()]

    def _build_row(self, record: RegionRow) -> tuple[object, ...]:
        return self._build_rows(record)[0]


__all__ = ["REGION_COLUMNS", "RegionCurveRepository"]
