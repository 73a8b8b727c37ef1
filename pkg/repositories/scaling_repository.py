"""CSV persistence for the large-K scaling table."""
from __future__ import annotations

from models.estimates import ScalingRow
from repositories.base_repository import BaseCurveRepository


class ScalingRepository(BaseCurveRepository):
    @property
    def columns(self) -> list[str]:  # type: ignore[override]
        return [
            "K",
            "tau",
            "C_minus_hsnr",
            "C_plus_hsnr",
            "loglogK",
            "gap_minus",
            "gap_plus",
            "E_log2_gamma_max",
            "log_ratio",
            "mc_C_plus",
            "mc_stderr",
        ]

    def _build_row(self, record: ScalingRow) -> tuple[object, ...]:
        return (
            record.K,
            record.tau,
            record.c_minus_hsnr,
            record.c_plus_hsnr,
            record.loglog_k,
            record.gap_minus,
            record.gap_plus,
            record.mean_log_max,
            record.log_ratio,
            record.mc_c_plus,
            record.mc_stderr,
        )


__all__ = ["ScalingRepository"]
