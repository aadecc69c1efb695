"""Deterministic tabular substrate: parsing, metadata synthesis, plan execution."""

from .frame import Column, Frame, EmptyInput, Unparseable, parse_table, serialize_frame
from .metadata import DatasetMetadata, synthesize_metadata
from .plans import (
    Aggregate,
    Derive,
    Experiment,
    Filter,
    GroupBy,
    Limit,
    PlanValidationError,
    Sort,
    experiment_from_json,
    experiment_to_json,
    plan_schema,
    validate_experiment,
)
from .executor import (
    DivisionByZero,
    ExperimentResult,
    TypeMismatch,
    UnknownColumn,
    execute_plan,
)

__all__ = [
    "Aggregate",
    "Column",
    "DatasetMetadata",
    "Derive",
    "DivisionByZero",
    "EmptyInput",
    "Experiment",
    "ExperimentResult",
    "Filter",
    "Frame",
    "GroupBy",
    "Limit",
    "PlanValidationError",
    "Sort",
    "TypeMismatch",
    "UnknownColumn",
    "Unparseable",
    "execute_plan",
    "experiment_from_json",
    "experiment_to_json",
    "parse_table",
    "plan_schema",
    "serialize_frame",
    "synthesize_metadata",
    "validate_experiment",
]
