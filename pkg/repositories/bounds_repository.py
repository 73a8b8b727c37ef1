"""CSV persistence for CM and IM bounds curves."""
from __future__ import annotations

from typing import Any, Optional, Sequence

from models.curve_rows import BoundsRow
from repositories.base_repository import BaseCurveRepository


def bounds_columns(sweep_name: str, bits: Sequence[int], shares: int = 0) -> list[str]:
    columns = [sweep_name]
    for b in bits:
        columns += [f"lower_{b}", f"upper_{b}", f"hsnr_lower_{b}"]
    columns += ["capacity_perfect_csit", "hsnr_upper"]
    columns += [f"share_{k}" for k in range(1, shares + 1)]
    return columns


class BoundsCurveRepository(BaseCurveRepository):
    """Write one row per sweep point; column groups follow the feedback sizes swept."""

    def __init__(self, columns: Sequence[str], *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self._columns = list(columns)

    @property
    def columns(self) -> list[str]:  # type: ignore[override]
        return self._columns

    def _build_row(self, record: BoundsRow) -> tuple[Optional[object], ...]:
        values = record.to_dict()
        return tuple(values.get(column) for column in self._columns)


__all__ = ["BoundsCurveRepository", "bounds_columns"]
