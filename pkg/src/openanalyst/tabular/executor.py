"""Isolated interpreter for analytical plans.

Plans execute against an immutable view of a frame: nothing mutates the
frame, and no state survives between calls, so interleaved executions of
unrelated plans can never influence each other.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from datetime import date
from typing import Any

from .frame import Frame
from .plans import (
    Aggregate,
    Derive,
    Experiment,
    Filter,
    GroupBy,
    Limit,
    Sort,
    parse_expression,
)

RESULT_TABLE_CAP = 100


class ExecutionError(Exception):
    pass


class UnknownColumn(ExecutionError):
    pass


class TypeMismatch(ExecutionError):
    pass


class DivisionByZero(ExecutionError):
    pass


@dataclass(frozen=True)
class ExperimentResult:
    experiment_id: str
    values: dict[str, Any]
    rows_scanned: int
    rows_after_filters: int
    value_kinds: dict[str, str] = field(default_factory=dict)
    column_null_fractions: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "values": self.values,
            "rows_scanned": self.rows_scanned,
            "rows_after_filters": self.rows_after_filters,
        }


def _coerce_literal(literal: Any, kind: str, column: str) -> Any:
    if literal is None:
        raise TypeMismatch(f"filter literal for {column!r} may not be null")
    if kind in ("integer", "real"):
        if isinstance(literal, bool) or not isinstance(literal, (int, float)):
            raise TypeMismatch(
                f"column {column!r} is {kind}, literal {literal!r} is not numeric"
            )
        return literal
    if kind == "boolean":
        if not isinstance(literal, bool):
            raise TypeMismatch(f"column {column!r} is boolean, literal {literal!r} is not")
        return literal
    if kind == "date":
        if isinstance(literal, date):
            return literal
        if isinstance(literal, str):
            try:
                return date.fromisoformat(literal.strip())
            except ValueError as exc:
                raise TypeMismatch(
                    f"column {column!r} is a date, literal {literal!r} is not ISO formatted"
                ) from exc
        raise TypeMismatch(f"column {column!r} is a date, literal {literal!r} is not")
    # text
    if not isinstance(literal, str):
        raise TypeMismatch(f"column {column!r} is text, literal {literal!r} is not a string")
    return literal


class _View:
    """Read-only working view: base frame plus derived columns."""

    def __init__(self, frame: Frame):
        self.frame = frame
        self.derived: dict[str, list] = {}
        self.derived_kinds: dict[str, str] = {}

    def kind(self, column: str) -> str:
        if column in self.derived_kinds:
            return self.derived_kinds[column]
        for c in self.frame.columns:
            if c.name == column:
                return c.kind
        raise UnknownColumn(column)

    def value(self, column: str, row: int) -> Any:
        if column in self.derived:
            return self.derived[column][row]
        try:
            idx = self.frame.column_index(column)
        except KeyError as exc:
            raise UnknownColumn(column) from exc
        return self.frame.rows[row][idx]


def _matches(view: _View, f: Filter, row: int) -> bool:
    kind = view.kind(f.column)
    cell = view.value(f.column, row)
    if cell is None:
        return False
    comparator = f.comparator
    if comparator == "in":
        literals = [_coerce_literal(v, kind, f.column) for v in f.value]
        return cell in literals
    if comparator == "between":
        low = _coerce_literal(f.value[0], kind, f.column)
        high = _coerce_literal(f.value[1], kind, f.column)
        return low <= cell <= high
    literal = _coerce_literal(f.value, kind, f.column)
    if comparator == "=":
        return cell == literal
    if comparator == "!=":
        return cell != literal
    if comparator == "<":
        return cell < literal
    if comparator == "<=":
        return cell <= literal
    if comparator == ">":
        return cell > literal
    return cell >= literal


def _eval_expression(tree: ast.Expression, view: _View, row: int) -> float | None:
    def walk(node: ast.AST) -> float | None:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            value = view.value(node.id, row)
            if value is None or isinstance(value, bool) or not isinstance(value, (int, float)):
                return None
            return value
        if isinstance(node, ast.UnaryOp):
            operand = walk(node.operand)
            if operand is None:
                return None
            return -operand if isinstance(node.op, ast.USub) else +operand
        if isinstance(node, ast.BinOp):
            left, right = walk(node.left), walk(node.right)
            if left is None or right is None:
                return None
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if isinstance(node.op, ast.Div):
                return left / right if right != 0 else None
        raise ExecutionError(f"unsupported expression node {type(node).__name__}")

    return walk(tree)


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def _aggregate_scalar(view: _View, step: Aggregate, rows: list[int]) -> float:
    if step.kind == "count":
        if step.column is None:
            return len(rows)
        return sum(1 for r in rows if view.value(step.column, r) is not None)
    if step.kind == "proportion_of":
        if not rows:
            raise DivisionByZero(
                f"proportion {step.output!r} over an empty scope"
            )
        matched = sum(1 for r in rows if _matches(view, step.predicate, r))
        return matched / len(rows)
    values = [
        v
        for r in rows
        if (v := view.value(step.column, r)) is not None
        and isinstance(v, (int, float))
        and not isinstance(v, bool)
    ]
    if step.kind == "sum":
        return sum(values)
    if not values:
        raise DivisionByZero(f"{step.kind} of {step.column!r} over no values")
    if step.kind == "mean":
        return sum(values) / len(values)
    return _median(values)


def _plan_columns(exp: Experiment) -> set[str]:
    from .plans import expression_columns

    used: set[str] = set()
    for step in exp.steps:
        if isinstance(step, Filter):
            used.add(step.column)
        elif isinstance(step, Derive):
            used |= expression_columns(step.expression)
        elif isinstance(step, GroupBy):
            used.update(step.columns)
        elif isinstance(step, Aggregate):
            if step.column:
                used.add(step.column)
            if step.predicate:
                used.add(step.predicate.column)
    return used


def execute_plan(frame: Frame, exp: Experiment) -> ExperimentResult:
    """Execute a plan against an immutable frame view and return its outputs."""
    view = _View(frame)
    scope = list(range(frame.row_count))
    group_columns: tuple[str, ...] | None = None
    values: dict[str, Any] = {}
    value_kinds: dict[str, str] = {}
    last_table: str | None = None

    for step in exp.steps:
        if isinstance(step, Filter):
            scope = [r for r in scope if _matches(view, step, r)]
        elif isinstance(step, Derive):
            tree = parse_expression(step.expression)
            view.derived[step.column] = [
                _eval_expression(tree, view, r) for r in range(frame.row_count)
            ]
            view.derived_kinds[step.column] = "real"
        elif isinstance(step, GroupBy):
            for col in step.columns:
                view.kind(col)  # raises UnknownColumn early
            group_columns = step.columns
        elif isinstance(step, Aggregate):
            if group_columns is None:
                values[step.output] = _aggregate_scalar(view, step, scope)
                last_table = None
            else:
                groups: dict[tuple, list[int]] = {}
                for r in scope:
                    key = tuple(view.value(c, r) for c in group_columns)
                    groups.setdefault(key, []).append(r)
                table_rows = [
                    list(key) + [_aggregate_scalar(view, step, members)]
                    for key, members in groups.items()
                ]
                values[step.output] = {
                    "columns": list(group_columns) + [step.output],
                    "rows": table_rows[:RESULT_TABLE_CAP],
                }
                last_table = step.output
            value_kinds[step.output] = step.kind
        elif isinstance(step, Sort):
            if last_table is None:
                raise ExecutionError("sort requires a preceding grouped aggregate")
            table = values[last_table]
            idx = table["columns"].index(step.column)
            present = [row for row in table["rows"] if row[idx] is not None]
            missing = [row for row in table["rows"] if row[idx] is None]
            present.sort(key=lambda row: row[idx], reverse=step.direction == "desc")
            table["rows"] = present + missing
        elif isinstance(step, Limit):
            if last_table is None:
                raise ExecutionError("limit requires a preceding grouped aggregate")
            table = values[last_table]
            table["rows"] = table["rows"][: step.n]

    null_fractions = {}
    for col in _plan_columns(exp):
        if col in view.derived:
            continue
        cells = frame.column_values(col)
        if cells:
            null_fractions[col] = sum(1 for v in cells if v is None) / len(cells)

    return ExperimentResult(
        experiment_id=exp.id,
        values=values,
        rows_scanned=frame.row_count,
        rows_after_filters=len(scope),
        value_kinds=value_kinds,
        column_null_fractions=null_fractions,
    )
