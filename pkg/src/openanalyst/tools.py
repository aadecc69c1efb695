"""Cross-agent tool subsystems: task tracking, thinking traces, quality checks.

Tasks carry explicit dependencies and a pending/in_progress/completed life
cycle; a failed task can be re-queued with an adjustment note, which bumps
its retry counter. Thought entries are an append-only trace. Quality rules
flag suspicious experiment outputs before they propagate downstream.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

RETRY_CAP = 2  # re-queues per task before the failure is escalated


class TaskError(Exception):
    pass


class CyclicDependency(TaskError):
    pass


class UnknownTask(TaskError):
    pass


class IllegalTransition(TaskError):
    pass


class RetryBudgetExceeded(TaskError):
    pass


class EmptyField(ValueError):
    pass


class UnknownRule(KeyError):
    pass


class TaskStatus(str, Enum):
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"


_LEGAL_TRANSITIONS = {
    (TaskStatus.PENDING, TaskStatus.IN_PROGRESS),
    (TaskStatus.IN_PROGRESS, TaskStatus.COMPLETED),
    # re-queue paths; these require an adjustment note
    (TaskStatus.IN_PROGRESS, TaskStatus.PENDING),
    (TaskStatus.COMPLETED, TaskStatus.PENDING),
}

_REQUEUE_TARGETS = {
    (TaskStatus.IN_PROGRESS, TaskStatus.PENDING),
    (TaskStatus.COMPLETED, TaskStatus.PENDING),
}


@dataclass(frozen=True)
class Task:
    id: int
    description: str
    status: TaskStatus = TaskStatus.PENDING
    depends_on: frozenset[int] = frozenset()
    retries: int = 0


@dataclass
class TaskList:
    tasks: list[Task] = field(default_factory=list)

    def get(self, task_id: int) -> Task:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise UnknownTask(f"no task with id {task_id}")

    def as_dicts(self) -> list[dict]:
        return [
            {
                "id": t.id,
                "description": t.description,
                "status": t.status.value,
                "depends_on": sorted(t.depends_on),
                "retries": t.retries,
            }
            for t in self.tasks
        ]


def plan_tasks(descriptions: Sequence[tuple[str, Iterable[int]]]) -> TaskList:
    """Build a TaskList from (description, depends_on 0-based indices) pairs.

    Dependency indices must refer to earlier entries, so the graph is acyclic
    by construction. Task ids are assigned 1..n in order.
    """
    tasks = []
    for position, (description, dep_indices) in enumerate(descriptions):
        deps = set()
        for idx in dep_indices:
            if idx >= position or idx < 0:
                raise CyclicDependency(
                    f"task {position + 1} depends on entry {idx}, which is not earlier"
                )
            deps.add(idx + 1)  # indices are 0-based, ids are 1-based
        tasks.append(Task(id=position + 1, description=description, depends_on=frozenset(deps)))
    return TaskList(tasks)


def next_ready_task(task_list: TaskList) -> Task | None:
    """Lowest-id pending task whose dependencies are all completed."""
    completed = {t.id for t in task_list.tasks if t.status is TaskStatus.COMPLETED}
    for t in sorted(task_list.tasks, key=lambda t: t.id):
        if t.status is TaskStatus.PENDING and t.depends_on <= completed:
            return t
    return None


def transition_task(
    task_list: TaskList,
    task_id: int,
    to: TaskStatus,
    adjustment: str | None = None,
) -> TaskList:
    """Move a task to a new status, enforcing the legal life cycle.

    Re-queueing (anything -> pending) requires an adjustment note; the note
    is appended to the description and the retry counter is incremented.
    """
    task = task_list.get(task_id)
    to = TaskStatus(to)
    if (task.status, to) not in _LEGAL_TRANSITIONS:
        raise IllegalTransition(f"cannot move task {task_id} {task.status.value} -> {to.value}")
    if (task.status, to) in _REQUEUE_TARGETS:
        if not adjustment:
            raise IllegalTransition("re-queueing a task requires an adjustment note")
        if task.retries + 1 > RETRY_CAP:
            raise RetryBudgetExceeded(
                f"task {task_id} exceeded the re-queue cap of {RETRY_CAP}"
            )
        updated = replace(
            task,
            status=to,
            retries=task.retries + 1,
            description=f"{task.description} [adjusted: {adjustment}]",
        )
    else:
        updated = replace(task, status=to)
    task_list.tasks = [updated if t.id == task_id else t for t in task_list.tasks]
    return task_list


@dataclass(frozen=True)
class ThoughtEntry:
    stage: str
    observation: str
    planned_action: str
    reasoning: str
    ts: float


@dataclass
class ThoughtTrace:
    """Append-only record of thoughts and task transitions for one run."""

    entries: list[dict] = field(default_factory=list)

    def record_thought(
        self, stage: str, observation: str, planned_action: str, reasoning: str
    ) -> ThoughtEntry:
        for name, value in (
            ("observation", observation),
            ("planned_action", planned_action),
            ("reasoning", reasoning),
        ):
            if not value:
                raise EmptyField(f"thought {name} must be non-empty")
        entry = ThoughtEntry(stage, observation, planned_action, reasoning, time.time())
        self.entries.append(
            {
                "kind": "thought",
                "stage": stage,
                "observation": observation,
                "planned_action": planned_action,
                "reasoning": reasoning,
                "ts": entry.ts,
            }
        )
        return entry

    def record_event(self, kind: str, **data) -> None:
        self.entries.append({"kind": kind, "ts": time.time(), **data})

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry) + "\n")


@dataclass(frozen=True)
class QualityFinding:
    rule_id: str
    severity: str  # "warning" | "anomaly"
    message: str
    subject: str


def _rule_zero_agg(result) -> list[QualityFinding]:
    findings = []
    if result.rows_scanned <= 0:
        return findings
    for name, value in result.values.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool) and value == 0:
            findings.append(
                QualityFinding(
                    "ZERO_AGG",
                    "anomaly",
                    f"aggregate {name!r} is exactly 0 over a {result.rows_scanned}-row input",
                    name,
                )
            )
    return findings


def _rule_empty_selection(result) -> list[QualityFinding]:
    if result.rows_scanned > 0 and result.rows_after_filters == 0:
        return [
            QualityFinding(
                "EMPTY_SELECTION",
                "anomaly",
                "filters matched 0 rows",
                result.experiment_id,
            )
        ]
    return []


def _rule_out_of_range_proportion(result) -> list[QualityFinding]:
    findings = []
    for name, value in result.values.items():
        if result.value_kinds.get(name) != "proportion_of":
            continue
        scalars = []
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            scalars = [value]
        elif isinstance(value, dict) and "rows" in value:
            scalars = [row[-1] for row in value["rows"] if isinstance(row[-1], (int, float))]
        for s in scalars:
            if not 0.0 <= s <= 1.0:
                findings.append(
                    QualityFinding(
                        "OUT_OF_RANGE_PROPORTION",
                        "anomaly",
                        f"proportion {name!r} = {s} is outside [0, 1]",
                        name,
                    )
                )
    return findings


def _rule_null_heavy(result) -> list[QualityFinding]:
    findings = []
    for column, fraction in getattr(result, "column_null_fractions", {}).items():
        if fraction > 0.5:
            findings.append(
                QualityFinding(
                    "NULL_HEAVY",
                    "warning",
                    f"column {column!r} used by the plan is {fraction:.0%} missing",
                    column,
                )
            )
    return findings


QUALITY_RULES: dict[str, Callable] = {
    "ZERO_AGG": _rule_zero_agg,
    "EMPTY_SELECTION": _rule_empty_selection,
    "OUT_OF_RANGE_PROPORTION": _rule_out_of_range_proportion,
    "NULL_HEAVY": _rule_null_heavy,
}


def quality_check(result, rules: Sequence[str] | None = None) -> list[QualityFinding]:
    """Apply the named quality rules (all registered rules by default)."""
    rule_ids = list(rules) if rules is not None else list(QUALITY_RULES)
    findings = []
    for rule_id in rule_ids:
        if rule_id not in QUALITY_RULES:
            raise UnknownRule(rule_id)
        findings.extend(QUALITY_RULES[rule_id](result))
    return findings
