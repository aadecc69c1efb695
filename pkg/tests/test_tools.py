import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openanalyst.tabular.executor import ExperimentResult
from openanalyst.tools import (
    RETRY_CAP,
    CyclicDependency,
    EmptyField,
    IllegalTransition,
    RetryBudgetExceeded,
    TaskStatus,
    ThoughtTrace,
    UnknownRule,
    UnknownTask,
    next_ready_task,
    plan_tasks,
    quality_check,
    transition_task,
)


def result(values, scanned=10, after=10, kinds=None, nulls=None):
    return ExperimentResult(
        experiment_id="e1",
        values=values,
        rows_scanned=scanned,
        rows_after_filters=after,
        value_kinds=kinds or {},
        column_null_fractions=nulls or {},
    )


# -- task manager -----------------------------------------------------------


def test_plan_tasks_assigns_ids_and_deps():
    tl = plan_tasks([("a", []), ("b", [0]), ("c", [0, 1])])
    assert [t.id for t in tl.tasks] == [1, 2, 3]
    assert tl.get(3).depends_on == frozenset({1, 2})


def test_plan_tasks_rejects_forward_reference():
    with pytest.raises(CyclicDependency):
        plan_tasks([("a", [0])])
    with pytest.raises(CyclicDependency):
        plan_tasks([("a", []), ("b", [5])])


def test_next_ready_respects_dependencies():
    tl = plan_tasks([("a", []), ("b", [0])])
    assert next_ready_task(tl).id == 1
    transition_task(tl, 1, TaskStatus.IN_PROGRESS)
    transition_task(tl, 1, TaskStatus.COMPLETED)
    assert next_ready_task(tl).id == 2


def test_transition_legal_cycle():
    tl = plan_tasks([("a", [])])
    transition_task(tl, 1, TaskStatus.IN_PROGRESS)
    transition_task(tl, 1, TaskStatus.COMPLETED)
    assert tl.get(1).status is TaskStatus.COMPLETED


def test_illegal_transition_rejected():
    tl = plan_tasks([("a", [])])
    with pytest.raises(IllegalTransition):
        transition_task(tl, 1, TaskStatus.COMPLETED)  # pending -> completed


def test_requeue_needs_adjustment_and_bumps_retries():
    tl = plan_tasks([("a", [])])
    transition_task(tl, 1, TaskStatus.IN_PROGRESS)
    with pytest.raises(IllegalTransition):
        transition_task(tl, 1, TaskStatus.PENDING)
    transition_task(tl, 1, TaskStatus.PENDING, adjustment="narrower filter")
    task = tl.get(1)
    assert task.retries == 1
    assert "[adjusted: narrower filter]" in task.description


def test_retry_cap_enforced():
    tl = plan_tasks([("a", [])])
    for _ in range(RETRY_CAP):
        transition_task(tl, 1, TaskStatus.IN_PROGRESS)
        transition_task(tl, 1, TaskStatus.PENDING, adjustment="again")
    transition_task(tl, 1, TaskStatus.IN_PROGRESS)
    with pytest.raises(RetryBudgetExceeded):
        transition_task(tl, 1, TaskStatus.PENDING, adjustment="once more")


def test_unknown_task():
    tl = plan_tasks([("a", [])])
    with pytest.raises(UnknownTask):
        transition_task(tl, 99, TaskStatus.IN_PROGRESS)


@given(
    st.lists(
        st.tuples(st.text(min_size=1, max_size=8), st.integers(0, 19)),
        min_size=1,
        max_size=20,
    )
)
@settings(max_examples=60, deadline=None)
def test_random_dags_never_run_before_dependencies(entries):
    descriptions = [
        (desc, [dep] if dep < i else []) for i, (desc, dep) in enumerate(entries)
    ]
    tl = plan_tasks(descriptions)
    executed = []
    while True:
        task = next_ready_task(tl)
        if task is None:
            break
        assert all(dep in executed for dep in task.depends_on)
        transition_task(tl, task.id, TaskStatus.IN_PROGRESS)
        transition_task(tl, task.id, TaskStatus.COMPLETED)
        executed.append(task.id)
    assert sorted(executed) == [t.id for t in tl.tasks]


# -- thought trace ----------------------------------------------------------


def test_thought_trace_rejects_empty_fields():
    trace = ThoughtTrace()
    with pytest.raises(EmptyField):
        trace.record_thought("analysis", "", "act", "because")


def test_thought_trace_appends_and_writes(tmp_path):
    trace = ThoughtTrace()
    trace.record_thought("analysis", "saw zeros", "re-plan", "zeros are suspicious")
    trace.record_event("stage_started", stage="analysis")
    path = tmp_path / "trace.jsonl"
    trace.write_jsonl(path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 2
    assert trace.entries[0]["kind"] == "thought"


# -- quality rules ----------------------------------------------------------


def test_zero_agg_flags_zero_scalar():
    findings = quality_check(result({"total": 0}), rules=["ZERO_AGG"])
    assert findings and findings[0].severity == "anomaly"


def test_zero_agg_ignores_empty_input():
    assert quality_check(result({"total": 0}, scanned=0), rules=["ZERO_AGG"]) == []


def test_empty_selection():
    findings = quality_check(result({"n": 5}, after=0), rules=["EMPTY_SELECTION"])
    assert [f.rule_id for f in findings] == ["EMPTY_SELECTION"]


def test_out_of_range_proportion_scalar_and_table():
    findings = quality_check(
        result(
            {
                "p": 1.5,
                "t": {"columns": ["g", "t"], "rows": [["a", 0.4], ["b", -0.2]]},
            },
            kinds={"p": "proportion_of", "t": "proportion_of"},
        ),
        rules=["OUT_OF_RANGE_PROPORTION"],
    )
    assert len(findings) == 2


def test_in_range_proportion_clean():
    findings = quality_check(
        result({"p": 0.25}, kinds={"p": "proportion_of"}),
        rules=["OUT_OF_RANGE_PROPORTION"],
    )
    assert findings == []


def test_null_heavy_is_warning():
    findings = quality_check(result({"m": 4.0}, nulls={"age": 0.8}), rules=["NULL_HEAVY"])
    assert findings[0].severity == "warning"
    assert quality_check(result({"m": 4.0}, nulls={"age": 0.5}), rules=["NULL_HEAVY"]) == []


def test_unknown_rule():
    with pytest.raises(UnknownRule):
        quality_check(result({"x": 1}), rules=["NOPE"])


def test_default_runs_all_rules():
    findings = quality_check(result({"total": 0}, after=0, nulls={"c": 0.9}))
    assert {f.rule_id for f in findings} == {"ZERO_AGG", "EMPTY_SELECTION", "NULL_HEAVY"}
