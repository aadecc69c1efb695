"""Synthesis of the eight-component dataset profile used by all agents."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

from .frame import Frame

UNIQUE_VALUE_CAP = 10
PREVIEW_ROWS = 5


@dataclass(frozen=True)
class ColumnStats:
    mean: float
    median: float
    std_dev: float
    min: float
    max: float


@dataclass(frozen=True)
class DatasetMetadata:
    first_rows: tuple[tuple, ...]
    column_names: tuple[str, ...]
    row_count: int
    head_summary: str
    tail_summary: str
    stats: dict[str, ColumnStats] = field(default_factory=dict)
    unique_values: dict[str, tuple] = field(default_factory=dict)
    publisher_meta: str | None = None
    column_kinds: dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "first_rows": [list(r) for r in self.first_rows],
            "column_names": list(self.column_names),
            "row_count": self.row_count,
            "head_summary": self.head_summary,
            "tail_summary": self.tail_summary,
            "stats": {
                name: {
                    "mean": s.mean,
                    "median": s.median,
                    "std_dev": s.std_dev,
                    "min": s.min,
                    "max": s.max,
                }
                for name, s in self.stats.items()
            },
            "unique_values": {k: [str(v) for v in vs] for k, vs in self.unique_values.items()},
            "publisher_meta": self.publisher_meta,
            "column_kinds": dict(self.column_kinds),
        }


def _render_rows(frame: Frame, rows: list[tuple]) -> str:
    names = frame.column_names()
    lines = [" | ".join(names)]
    for row in rows:
        lines.append(" | ".join("" if v is None else str(v) for v in row))
    return "\n".join(lines)


def synthesize_metadata(frame: Frame, publisher_meta: str | None = None) -> DatasetMetadata:
    """Profile a frame into the standard metadata record.

    Statistics are exact mean/median with sample (n-1) standard deviation,
    computed over non-missing values of numeric columns only. Unique values
    are the first distinct values in row order, capped at ten per column.
    """
    n_preview = min(PREVIEW_ROWS, frame.row_count)
    first_rows = frame.rows[:n_preview]
    last_rows = list(frame.rows[-n_preview:]) if n_preview else []

    stats: dict[str, ColumnStats] = {}
    unique_values: dict[str, tuple] = {}
    for col in frame.columns:
        values = frame.column_values(col.name)
        seen: list = []
        for v in values:
            if v not in seen:
                seen.append(v)
            if len(seen) >= UNIQUE_VALUE_CAP:
                break
        unique_values[col.name] = tuple(seen)
        if col.kind in ("integer", "real"):
            numbers = [v for v in values if v is not None]
            if numbers:
                stats[col.name] = ColumnStats(
                    mean=statistics.fmean(numbers),
                    median=statistics.median(numbers),
                    std_dev=statistics.stdev(numbers) if len(numbers) > 1 else 0.0,
                    min=min(numbers),
                    max=max(numbers),
                )

    return DatasetMetadata(
        first_rows=tuple(first_rows),
        column_names=tuple(frame.column_names()),
        row_count=frame.row_count,
        head_summary=_render_rows(frame, list(first_rows)),
        tail_summary=_render_rows(frame, last_rows),
        stats=stats,
        unique_values=unique_values,
        publisher_meta=publisher_meta,
        column_kinds={c.name: c.kind for c in frame.columns},
    )
