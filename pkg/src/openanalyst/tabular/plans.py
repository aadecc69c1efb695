"""Typed analytical plan DSL: the structured contract the model must emit.

A plan (``plan.v1``) is a loop-free ordered list of steps over one frame:
filters, derived columns, at most one group-by, terminal aggregates that
bind named outputs, and optional sort/limit over an aggregate table.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping, Union

COMPARATORS = ("=", "!=", "<", "<=", ">", ">=", "in", "between")
AGGREGATE_KINDS = ("count", "sum", "mean", "median", "proportion_of")
SORT_DIRECTIONS = ("asc", "desc")

MAX_PLAN_STEPS = 12


class PlanValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Filter:
    column: str
    comparator: str
    value: Any

    def __post_init__(self) -> None:
        if self.comparator not in COMPARATORS:
            raise PlanValidationError(f"unknown comparator {self.comparator!r}")
        if self.comparator == "between" and (
            not isinstance(self.value, (list, tuple)) or len(self.value) != 2
        ):
            raise PlanValidationError("'between' requires a [low, high] pair")
        if self.comparator == "in" and not isinstance(self.value, (list, tuple)):
            raise PlanValidationError("'in' requires a list of literals")


@dataclass(frozen=True)
class Derive:
    column: str
    expression: str


@dataclass(frozen=True)
class GroupBy:
    columns: tuple[str, ...]


@dataclass(frozen=True)
class Aggregate:
    kind: str
    output: str
    column: str | None = None
    predicate: Filter | None = None

    def __post_init__(self) -> None:
        if self.kind not in AGGREGATE_KINDS:
            raise PlanValidationError(f"unknown aggregate kind {self.kind!r}")
        if self.kind == "proportion_of" and self.predicate is None:
            raise PlanValidationError("proportion_of requires a predicate")
        if self.kind in ("sum", "mean", "median") and self.column is None:
            raise PlanValidationError(f"{self.kind} requires a column")


@dataclass(frozen=True)
class Sort:
    column: str
    direction: str = "asc"

    def __post_init__(self) -> None:
        if self.direction not in SORT_DIRECTIONS:
            raise PlanValidationError(f"unknown sort direction {self.direction!r}")


@dataclass(frozen=True)
class Limit:
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise PlanValidationError("limit must be >= 1")


PlanStep = Union[Filter, Derive, GroupBy, Aggregate, Sort, Limit]


@dataclass(frozen=True)
class Experiment:
    id: str
    hypothesis: str
    steps: tuple[PlanStep, ...]
    outputs: tuple[str, ...] = field(default=())


def plan_schema() -> dict:
    """The published plan.v1 JSON schema."""
    with resources.files("openanalyst.data").joinpath("plan_v1.json").open(
        encoding="utf-8"
    ) as fh:
        return json.load(fh)


def _filter_from_json(data: Mapping) -> Filter:
    return Filter(
        column=data["column"], comparator=data["comparator"], value=data["value"]
    )


def _filter_to_json(f: Filter) -> dict:
    value = list(f.value) if isinstance(f.value, tuple) else f.value
    return {"column": f.column, "comparator": f.comparator, "value": value}


def experiment_from_json(data: Mapping) -> Experiment:
    """Decode a plan.v1 JSON object into an Experiment."""
    try:
        steps: list[PlanStep] = []
        for raw in data["steps"]:
            op = raw["op"]
            if op == "filter":
                steps.append(_filter_from_json(raw))
            elif op == "derive":
                steps.append(Derive(column=raw["column"], expression=raw["expression"]))
            elif op == "group_by":
                steps.append(GroupBy(columns=tuple(raw["columns"])))
            elif op == "aggregate":
                predicate = raw.get("predicate")
                steps.append(
                    Aggregate(
                        kind=raw["kind"],
                        output=raw["output"],
                        column=raw.get("column"),
                        predicate=_filter_from_json(predicate) if predicate else None,
                    )
                )
            elif op == "sort":
                steps.append(Sort(column=raw["column"], direction=raw.get("direction", "asc")))
            elif op == "limit":
                steps.append(Limit(n=raw["n"]))
            else:
                raise PlanValidationError(f"unknown step op {op!r}")
        return Experiment(
            id=data["id"],
            hypothesis=data.get("hypothesis", ""),
            steps=tuple(steps),
            outputs=tuple(data.get("outputs", ())),
        )
    except (KeyError, TypeError) as exc:
        raise PlanValidationError(f"malformed plan: {exc}") from exc


def experiment_to_json(exp: Experiment) -> dict:
    steps = []
    for step in exp.steps:
        if isinstance(step, Filter):
            steps.append({"op": "filter", **_filter_to_json(step)})
        elif isinstance(step, Derive):
            steps.append({"op": "derive", "column": step.column, "expression": step.expression})
        elif isinstance(step, GroupBy):
            steps.append({"op": "group_by", "columns": list(step.columns)})
        elif isinstance(step, Aggregate):
            entry: dict = {"op": "aggregate", "kind": step.kind, "output": step.output}
            if step.column is not None:
                entry["column"] = step.column
            if step.predicate is not None:
                entry["predicate"] = _filter_to_json(step.predicate)
            steps.append(entry)
        elif isinstance(step, Sort):
            steps.append({"op": "sort", "column": step.column, "direction": step.direction})
        elif isinstance(step, Limit):
            steps.append({"op": "limit", "n": step.n})
    return {
        "id": exp.id,
        "hypothesis": exp.hypothesis,
        "steps": steps,
        "outputs": list(exp.outputs),
    }


_ALLOWED_AST = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.USub,
    ast.UAdd,
    ast.Name,
    ast.Constant,
    ast.Load,
)


def parse_expression(expression: str) -> ast.Expression:
    """Parse a derive expression, allowing only arithmetic over columns/literals."""
    try:
        tree = ast.parse(expression, mode="eval")
    except SyntaxError as exc:
        raise PlanValidationError(f"bad derive expression {expression!r}: {exc}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_AST):
            raise PlanValidationError(
                f"derive expression {expression!r} uses forbidden construct "
                f"{type(node).__name__}"
            )
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise PlanValidationError("derive literals must be numeric")
    return tree


def expression_columns(expression: str) -> set[str]:
    tree = parse_expression(expression)
    return {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}


_NUMERIC_ONLY_COMPARATORS = ("<", "<=", ">", ">=", "between")


def _check_filter(f: Filter, kinds: Mapping[str, str], where: str) -> None:
    if f.column not in kinds:
        raise PlanValidationError(f"{where}: unknown column {f.column!r}")
    kind = kinds[f.column]
    if f.comparator in _NUMERIC_ONLY_COMPARATORS and kind not in (
        "integer",
        "real",
        "date",
    ):
        raise PlanValidationError(
            f"{where}: comparator {f.comparator!r} needs an ordered column, "
            f"{f.column!r} is {kind}"
        )


def validate_experiment(exp: Experiment, column_kinds: Mapping[str, str]) -> None:
    """Check an experiment against a frame schema; raises PlanValidationError.

    Enforces: steps reference only columns existing at that step, at most one
    group-by, exactly one aggregate per declared output, sort/limit only after
    an aggregate, and step-count/loop-freedom bounds.
    """
    if not exp.id:
        raise PlanValidationError("experiment id must be non-empty")
    if len(exp.steps) > MAX_PLAN_STEPS:
        raise PlanValidationError(f"plans are capped at {MAX_PLAN_STEPS} steps")
    if not exp.outputs:
        raise PlanValidationError("experiment must declare at least one output")

    kinds = dict(column_kinds)
    grouped = False
    seen_aggregate = False
    aggregate_outputs: list[str] = []
    group_columns: tuple[str, ...] = ()
    for step in exp.steps:
        if isinstance(step, Filter):
            if seen_aggregate:
                raise PlanValidationError("filter after aggregate is not allowed")
            _check_filter(step, kinds, f"plan {exp.id}")
        elif isinstance(step, Derive):
            if grouped or seen_aggregate:
                raise PlanValidationError("derive must precede group_by/aggregate")
            for col in expression_columns(step.expression):
                if col not in kinds:
                    raise PlanValidationError(
                        f"plan {exp.id}: derive references unknown column {col!r}"
                    )
                if kinds[col] not in ("integer", "real"):
                    raise PlanValidationError(
                        f"plan {exp.id}: derive needs numeric column {col!r}"
                    )
            if step.column in kinds:
                raise PlanValidationError(
                    f"plan {exp.id}: derive would shadow column {step.column!r}"
                )
            kinds[step.column] = "real"
        elif isinstance(step, GroupBy):
            if grouped:
                raise PlanValidationError("only one group_by per plan")
            if seen_aggregate:
                raise PlanValidationError("group_by after aggregate is not allowed")
            for col in step.columns:
                if col not in kinds:
                    raise PlanValidationError(
                        f"plan {exp.id}: group_by references unknown column {col!r}"
                    )
            grouped = True
            group_columns = step.columns
        elif isinstance(step, Aggregate):
            seen_aggregate = True
            if step.column is not None:
                if step.column not in kinds:
                    raise PlanValidationError(
                        f"plan {exp.id}: aggregate references unknown column {step.column!r}"
                    )
                if step.kind in ("sum", "mean", "median") and kinds[step.column] not in (
                    "integer",
                    "real",
                ):
                    raise PlanValidationError(
                        f"plan {exp.id}: {step.kind} needs a numeric column, "
                        f"{step.column!r} is {kinds[step.column]}"
                    )
            if step.predicate is not None:
                _check_filter(step.predicate, kinds, f"plan {exp.id}")
            if step.output in aggregate_outputs:
                raise PlanValidationError(
                    f"plan {exp.id}: duplicate aggregate output {step.output!r}"
                )
            aggregate_outputs.append(step.output)
        elif isinstance(step, Sort):
            if not seen_aggregate:
                raise PlanValidationError("sort applies to an aggregate table")
            if step.column not in aggregate_outputs and step.column not in group_columns:
                raise PlanValidationError(
                    f"plan {exp.id}: sort column {step.column!r} is not an output "
                    "or group column"
                )
        elif isinstance(step, Limit):
            if not seen_aggregate:
                raise PlanValidationError("limit applies to an aggregate table")

    if set(exp.outputs) != set(aggregate_outputs):
        raise PlanValidationError(
            f"plan {exp.id}: declared outputs {sorted(exp.outputs)} do not match "
            f"aggregate outputs {sorted(aggregate_outputs)}"
        )
