"""Immutable table representation and the format-sniffing delimited parser."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from datetime import date

MAX_FILE_BYTES = 500 * 1024 * 1024

SEPARATORS = [",", ";", "\t", "|"]
ENCODINGS = ["utf-8-sig", "latin-1"]  # utf-8-sig also decodes plain/BOM UTF-8

KINDS = ("integer", "real", "text", "boolean", "date")

NUMERIC_MAJORITY = 0.9  # fraction of non-empty cells that must parse
ARITY_MAJORITY = 0.9  # fraction of rows that must share the modal arity


class EmptyInput(ValueError):
    pass


class Unparseable(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown column kind {self.kind!r}")


@dataclass(frozen=True)
class Frame:
    columns: tuple[Column, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row arity must equal column count")

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(name)

    def column_values(self, name: str) -> list:
        idx = self.column_index(name)
        return [row[idx] for row in self.rows]


_INT_RE = re.compile(r"^[+-]?\d+$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_BOOLS = {"true": True, "false": False}


def _try_float(cell: str) -> float | None:
    try:
        return float(cell)
    except ValueError:
        return None


def _infer_kind(cells: list[str]) -> str:
    non_empty = [c for c in cells if c.strip() != ""]
    if not non_empty:
        return "text"
    n = len(non_empty)
    numeric = [c for c in non_empty if _try_float(c.strip()) is not None]
    if len(numeric) / n >= NUMERIC_MAJORITY and numeric:
        if all(_INT_RE.match(c.strip()) for c in numeric):
            return "integer"
        return "real"
    if sum(1 for c in non_empty if c.strip().lower() in _BOOLS) / n >= NUMERIC_MAJORITY:
        return "boolean"
    if sum(1 for c in non_empty if _DATE_RE.match(c.strip())) / n >= NUMERIC_MAJORITY:
        return "date"
    return "text"


def _convert(cell: str, kind: str):
    cell = cell.strip()
    if cell == "":
        return None
    if kind == "integer":
        if _INT_RE.match(cell):
            return int(cell)
        value = _try_float(cell)
        return int(value) if value is not None and value.is_integer() else None
    if kind == "real":
        return _try_float(cell)
    if kind == "boolean":
        return _BOOLS.get(cell.lower())
    if kind == "date":
        if _DATE_RE.match(cell):
            try:
                return date.fromisoformat(cell)
            except ValueError:
                return None
        return None
    return cell


def _attempt(text: str, separator: str) -> tuple[list[str], list[list[str]]] | None:
    try:
        reader = csv.reader(io.StringIO(text), delimiter=separator)
        records = [row for row in reader if row]
    except csv.Error:
        return None
    if not records:
        return None
    header, data = records[0], records[1:]
    arities = [len(r) for r in data] or [len(header)]
    modal = max(set(arities), key=arities.count)
    if modal != len(header):
        return None
    conforming = [r for r in data if len(r) == modal]
    if data and len(conforming) / len(data) < ARITY_MAJORITY:
        return None
    return header, conforming


def parse_table(data: bytes, hint: tuple[str | None, str | None] | None = None) -> Frame:
    """Sniff separator and encoding, then build a typed Frame.

    Tries (hint separator, comma, semicolon, tab, pipe) against each known
    encoding and accepts the first combination where at least 90% of the
    data rows share the modal arity. Single-column parses are only accepted
    when no separator produces a wider table.
    """
    if not data:
        raise EmptyInput("empty byte stream")
    if len(data) > MAX_FILE_BYTES:
        raise Unparseable(f"file exceeds the {MAX_FILE_BYTES // (1024 * 1024)} MB cap")

    hint_sep, hint_enc = hint if hint else (None, None)
    separators = ([hint_sep] if hint_sep else []) + [
        s for s in SEPARATORS if s != hint_sep
    ]
    encodings = ([hint_enc] if hint_enc else []) + [
        e for e in ENCODINGS if e != hint_enc
    ]

    single_column_fallback = None
    for sep in separators:
        for enc in encodings:
            try:
                text = data.decode(enc)
            except (UnicodeDecodeError, LookupError):
                continue
            parsed = _attempt(text, sep)
            if parsed is None:
                continue
            header, rows = parsed
            if len(header) >= 2:
                return _build_frame(header, rows)
            if single_column_fallback is None:
                single_column_fallback = (header, rows)
    if single_column_fallback is not None:
        return _build_frame(*single_column_fallback)
    raise Unparseable("no separator/encoding combination produced a consistent table")


def _build_frame(header: list[str], rows: list[list[str]]) -> Frame:
    names = []
    for i, raw in enumerate(header):
        name = raw.strip() or f"column_{i + 1}"
        while name in names:
            name += "_"
        names.append(name)
    kinds = [_infer_kind([row[i] for row in rows]) for i in range(len(names))]
    columns = tuple(Column(n, k) for n, k in zip(names, kinds))
    converted = tuple(
        tuple(_convert(row[i], kinds[i]) for i in range(len(names))) for row in rows
    )
    return Frame(columns=columns, rows=converted)


def serialize_frame(frame: Frame, separator: str = ",") -> bytes:
    """Write a Frame back to delimited text (round-trips through parse_table)."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=separator, lineterminator="\n")
    writer.writerow(frame.column_names())
    for row in frame.rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue().encode("utf-8")
