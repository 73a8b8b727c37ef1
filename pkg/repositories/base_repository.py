"""Shared CSV/JSON persistence helpers for curve tables."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Optional, Sequence, TextIO

FORMAT_VERSION = "1"


class CurveSaveError(RuntimeError):
    """Raised when writing a curve file fails."""


@dataclass(frozen=True)
class CurveMetadata:
    command: str
    seed: int
    scenario_hash: str
    version: str = FORMAT_VERSION


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            raise CurveSaveError("NaN cell in curve output")
        return format(value, ".12g")
    return str(value)


class BaseCurveRepository(ABC):
    """Provide a consistent way to write rows as CSV with an optional JSON mirror."""

    def __init__(
        self,
        path: Optional[Path | str] = None,
        metadata: Optional[CurveMetadata] = None,
        json_mirror: bool = False,
        logger: Optional[logging.Logger] = None,
        stream: Optional[TextIO] = None,
    ) -> None:
        self.path = Path(path) if path is not None else None
        self.metadata = metadata
        self.json_mirror = json_mirror
        self.stream = stream
        base_logger = logger or logging.getLogger("secrecy")
        self.logger = base_logger.getChild(self.__class__.__name__.lower())

    def save_many(self, records: Sequence[Any]) -> int:
        """Persist records using the concrete class's row builder."""
        if not records:
            self.logger.info("No rows supplied; skipping write.")
            return 0
        rows = [row for record in records for row in self._build_rows(record)]
        return self._write_rows(rows)

    def render_csv(self, rows: Sequence[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns)
        for row in rows:
            writer.writerow([format_cell(value) for value in row])
        return buffer.getvalue()

    def _write_rows(self, rows: Sequence[Sequence[Any]]) -> int:
        text = self.render_csv(rows)
        try:
            if self.path is None:
                (self.stream or sys.stdout).write(text)
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text(text, encoding="utf-8", newline="")
                if self.json_mirror:
                    self.mirror_path.write_text(self._render_json(rows), encoding="utf-8", newline="")
        except OSError as exc:
            self.logger.error("Curve write failed: %s", exc)
            raise CurveSaveError(f"Unable to write curve rows to {self.path}") from exc
        self.logger.info("Wrote %s rows", len(rows), extra={"path": str(self.path) if self.path else "<stdout>"})
        return len(rows)

    @property
    def mirror_path(self) -> Path:
        assert self.path is not None
        return self.path.with_suffix(".json")

    def _render_json(self, rows: Sequence[Sequence[Any]]) -> str:
        document = {
            **(asdict(self.metadata) if self.metadata else {}),
            "columns": list(self.columns),
            "rows": [[None if isinstance(v, float) and math.isinf(v) else v for v in row] for row in rows],
        }
        return json.dumps(document, indent=2) + "\n"

    @property
    @abstractmethod
    def columns(self) -> list[str]:
        """Return the header row."""
        raise NotImplementedError

    @abstractmethod
    def _build_row(self, record: Any) -> tuple[Any, ...]:
        raise NotImplementedError

    def _build_rows(self, record: Any) -> list[tuple[Any, ...]]:
        return [self._build_row(record)]


__all__ = ["BaseCurveRepository", "CurveMetadata", "CurveSaveError", "format_cell"]
