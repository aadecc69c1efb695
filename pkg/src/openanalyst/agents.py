"""The four specialized pipeline agents.

Each agent is a stateless procedure over the gateway, portal client, and
tabular engine: intent clarification, dataset discovery, analysis, and
report generation. All model exchanges use structured output; prose-only
replies surface as schema violations in the gateway.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

import jsonschema

from .gateway import LLMGateway, ModelConfig, OutputSchema, PromptSpec, SchemaField
from .repository import (
    DatasetCandidate,
    DatasetHandle,
    NotTabular,
    PortalClient,
    SearchRequest,
)
from .tabular import (
    DatasetMetadata,
    Experiment,
    ExperimentResult,
    Frame,
    PlanValidationError,
    Unparseable,
    execute_plan,
    experiment_from_json,
    experiment_to_json,
    parse_table,
    plan_schema,
    synthesize_metadata,
    validate_experiment,
)
from .tabular.executor import ExecutionError
from .tools import QualityFinding, ThoughtTrace, quality_check

MAX_SUBSTITUTIONS = 3
MAX_CLARIFY_ROUNDS = 3
MAX_BROADENINGS = 2
MAX_CANDIDATE_TRIES = 3
MAX_PLAN_FIX_ROUNDS = 2
MAX_REPORT_FIX_ROUNDS = 2
MAX_EXPERIMENTS = 6
CANDIDATES_SHOWN = 10

SUBSTITUTION_CATEGORIES = ("imprecise_term", "scope", "threshold")


class AgentError(Exception):
    pass


class NoDatasetFound(AgentError):
    def __init__(self, message: str, rejected: list | None = None):
        super().__init__(message)
        self.rejected = rejected or []


class PlanRejected(AgentError):
    pass


class AnalysisIncomplete(AgentError):
    def __init__(self, message: str, results: "AnalysisResults"):
        super().__init__(message)
        self.results = results


class ReportInvalid(AgentError):
    pass


def load_prompt(name: str) -> str:
    return (
        resources.files("openanalyst.prompts").joinpath(f"{name}.txt").read_text("utf-8")
    )


# ---------------------------------------------------------------------------
# intent clarification


@dataclass(frozen=True)
class Substitution:
    original: str
    replacement: str
    category: str
    confirmed: bool


@dataclass(frozen=True)
class EnhancedQuery:
    raw: str
    substitutions: tuple[Substitution, ...]
    enhanced: str

    def as_dict(self) -> dict:
        return {
            "raw": self.raw,
            "substitutions": [
                {
                    "original": s.original,
                    "replacement": s.replacement,
                    "category": s.category,
                    "confirmed": s.confirmed,
                }
                for s in self.substitutions
            ],
            "enhanced": self.enhanced,
        }


def apply_substitutions(raw: str, substitutions: Sequence[Substitution]) -> str:
    enhanced = raw
    for sub in substitutions:
        if sub.confirmed:
            enhanced = enhanced.replace(sub.original, sub.replacement)
    return enhanced


_INTENT_SCHEMA = OutputSchema(
    (
        SchemaField("substitutions", "array"),
        SchemaField("remaining_ambiguities", "boolean"),
    )
)


def clarify_intent(
    gateway: LLMGateway,
    model: ModelConfig,
    raw: str,
    mode: str = "auto_confirm",
    confirm: Callable[[Substitution], bool] | None = None,
    trace: ThoughtTrace | None = None,
) -> EnhancedQuery:
    """Detect up to three ambiguities and apply the confirmed substitutions."""
    if not raw:
        raise ValueError("query must be non-empty")
    if mode not in ("interactive", "auto_confirm"):
        raise ValueError(f"unknown clarification mode {mode!r}")
    if mode == "interactive" and confirm is None:
        raise ValueError("interactive mode requires a confirm callback")

    template = load_prompt("intent")
    substitutions: list[Substitution] = []
    current = raw
    for _ in range(MAX_CLARIFY_ROUNDS):
        completion = gateway.complete_structured(
            PromptSpec(
                system_text="You clarify analytical questions about public data.",
                user_text=template.format(query=current),
                output_schema=_INTENT_SCHEMA,
                tag="intent",
            ),
            model,
        )
        proposed = completion.parsed["substitutions"]
        for item in proposed:
            if len(substitutions) >= MAX_SUBSTITUTIONS:
                break
            if not isinstance(item, dict):
                continue
            original = item.get("original", "")
            replacement = item.get("replacement", "")
            if not original or not replacement or original not in current:
                continue
            category = item.get("category", "imprecise_term")
            if category not in SUBSTITUTION_CATEGORIES:
                category = "imprecise_term"
            candidate = Substitution(original, replacement, category, confirmed=False)
            accepted = True if mode == "auto_confirm" else bool(confirm(candidate))
            sub = Substitution(original, replacement, category, confirmed=accepted)
            substitutions.append(sub)
            if trace is not None:
                trace.record_event(
                    "clarification",
                    original=original,
                    replacement=replacement,
                    accepted=accepted,
                )
        current = apply_substitutions(raw, substitutions)
        if (
            not completion.parsed["remaining_ambiguities"]
            or len(substitutions) >= MAX_SUBSTITUTIONS
        ):
            break
    return EnhancedQuery(
        raw=raw, substitutions=tuple(substitutions), enhanced=current
    )


# ---------------------------------------------------------------------------
# dataset discovery


@dataclass(frozen=True)
class DiscoveryOutcome:
    selected: DatasetHandle
    frame: Frame
    metadata: DatasetMetadata
    rejected: tuple[tuple[DatasetCandidate, str], ...] = ()
    broadenings: tuple[tuple[str, ...], ...] = ()
    search_terms: tuple[str, ...] = ()

    def dataset_link(self) -> str:
        c = self.selected.candidate
        return c.landing_url or c.resource_url

    def as_dict(self) -> dict:
        return {
            "package_id": self.selected.candidate.package_id,
            "title": self.selected.candidate.title,
            "dataset_link": self.dataset_link(),
            "content_hash": self.selected.content_hash,
            "rejected": [
                {"package_id": c.package_id, "reason": reason}
                for c, reason in self.rejected
            ],
            "broadenings": [list(b) for b in self.broadenings],
            "search_terms": list(self.search_terms),
        }


_TERMS_SCHEMA = OutputSchema(
    (SchemaField("terms", "array"), SchemaField("scope", "string"))
)
_SELECT_SCHEMA = OutputSchema(
    (SchemaField("selected_index", "integer", minimum=0), SchemaField("reason", "string"))
)


def _describe_candidates(candidates: Sequence[DatasetCandidate]) -> str:
    lines = []
    for i, c in enumerate(candidates):
        notes = c.notes[:200].replace("\n", " ")
        lines.append(
            f"[{i}] {c.title} (publisher: {c.publisher or 'unknown'}, "
            f"format: {c.declared_format or 'unknown'}) {notes}"
        )
    return "\n".join(lines)


def discover_dataset(
    gateway: LLMGateway,
    model: ModelConfig,
    portal: PortalClient,
    query: EnhancedQuery,
    exclude: Sequence[str] = (),
    trace: ThoughtTrace | None = None,
) -> DiscoveryOutcome:
    """Search the portal, pick a candidate via the model, fetch and profile it."""
    terms_reply = gateway.complete_structured(
        PromptSpec(
            system_text="You search open-data portals.",
            user_text=load_prompt("discovery_terms").format(query=query.enhanced),
            output_schema=_TERMS_SCHEMA,
            tag="discovery_terms",
        ),
        model,
    ).parsed
    terms = tuple(str(t) for t in terms_reply["terms"] if str(t).strip())
    scope = terms_reply["scope"].strip() or None
    if not terms:
        terms = tuple(query.enhanced.split()[:6])

    broadenings: list[tuple[str, ...]] = []
    excluded = set(exclude)
    while True:
        req = SearchRequest(terms=terms, scope=scope, rows=CANDIDATES_SHOWN)
        candidates = [
            c
            for c in portal.search_packages(req)
            if c.package_id not in excluded
        ]
        if candidates:
            break
        if len(broadenings) >= MAX_BROADENINGS:
            raise NoDatasetFound(
                f"no datasets found after {MAX_BROADENINGS} broadenings "
                f"(last terms: {', '.join(terms)})"
            )
        broadened = gateway.complete_structured(
            PromptSpec(
                system_text="You search open-data portals.",
                user_text=load_prompt("discovery_broaden").format(
                    terms=", ".join(terms), scope=scope or "none", query=query.enhanced
                ),
                output_schema=_TERMS_SCHEMA,
                tag="discovery_broaden",
            ),
            model,
        ).parsed
        terms = tuple(str(t) for t in broadened["terms"] if str(t).strip()) or terms
        scope = broadened["scope"].strip() or None
        broadenings.append(terms)

    shown = candidates[:CANDIDATES_SHOWN]
    selection = gateway.complete_structured(
        PromptSpec(
            system_text="You evaluate dataset candidates for relevance.",
            user_text=load_prompt("discovery_select").format(
                query=query.enhanced, candidates=_describe_candidates(shown)
            ),
            output_schema=_SELECT_SCHEMA,
            tag="discovery_select",
        ),
        model,
    ).parsed
    first_choice = min(selection["selected_index"], len(shown) - 1)
    # model's pick first, then the remaining candidates in portal rank order
    try_order = [shown[first_choice]] + [
        c for i, c in enumerate(shown) if i != first_choice
    ]

    rejected: list[tuple[DatasetCandidate, str]] = []
    for candidate in try_order[:MAX_CANDIDATE_TRIES]:
        try:
            handle = portal.fetch_resource(candidate)
            frame = parse_table(handle.local_path.read_bytes())
        except NotTabular as exc:
            rejected.append((candidate, f"not tabular: {exc}"))
            continue
        except Unparseable as exc:
            rejected.append((candidate, f"unparseable: {exc}"))
            continue
        metadata = synthesize_metadata(frame, publisher_meta=candidate.notes or None)
        if trace is not None:
            trace.record_event(
                "dataset_selected",
                package_id=candidate.package_id,
                title=candidate.title,
            )
        return DiscoveryOutcome(
            selected=handle,
            frame=frame,
            metadata=metadata,
            rejected=tuple(rejected),
            broadenings=tuple(broadenings),
            search_terms=terms,
        )
    raise NoDatasetFound(
        f"all {len(rejected)} tried candidates were unusable", rejected=rejected
    )


# ---------------------------------------------------------------------------
# analysis


@dataclass(frozen=True)
class ExperimentRun:
    experiment: Experiment
    result: ExperimentResult | None
    findings: tuple[QualityFinding, ...]
    revised: bool = False

    @property
    def resolved(self) -> bool:
        return self.result is not None and not any(
            f.severity == "anomaly" for f in self.findings
        )


@dataclass(frozen=True)
class AnalysisResults:
    runs: tuple[ExperimentRun, ...]
    synthetic_summary: str | None = None

    @property
    def complete(self) -> bool:
        return bool(self.runs) and all(run.resolved for run in self.runs)

    def as_dict(self) -> dict:
        return {
            "complete": self.complete,
            "synthetic_summary": self.synthetic_summary,
            "experiments": [
                {
                    "plan": experiment_to_json(run.experiment),
                    "result": run.result.as_dict() if run.result else None,
                    "findings": [
                        {
                            "rule_id": f.rule_id,
                            "severity": f.severity,
                            "message": f.message,
                        }
                        for f in run.findings
                    ],
                    "revised": run.revised,
                }
                for run in self.runs
            ],
        }


_EXPERIMENTS_SCHEMA = OutputSchema((SchemaField("experiments", "array"),))
_EXPERIMENT_SCHEMA = OutputSchema((SchemaField("experiment", "object"),))


def _validate_plan_dict(raw: dict, metadata: DatasetMetadata) -> Experiment:
    jsonschema.validate(raw, plan_schema())
    exp = experiment_from_json(raw)
    validate_experiment(exp, metadata.column_kinds)
    return exp


def _fix_plan(
    gateway: LLMGateway,
    model: ModelConfig,
    raw: dict,
    error: str,
    metadata: DatasetMetadata,
) -> Experiment:
    last_error = error
    for _ in range(MAX_PLAN_FIX_ROUNDS):
        reply = gateway.complete_structured(
            PromptSpec(
                system_text="You repair analytical plans.",
                user_text=load_prompt("analysis_plan_fix").format(
                    plan=json.dumps(raw),
                    error=last_error,
                    columns=", ".join(metadata.column_names),
                ),
                output_schema=_EXPERIMENT_SCHEMA,
                tag="analysis_plan_fix",
            ),
            model,
        ).parsed
        raw = reply["experiment"]
        try:
            return _validate_plan_dict(raw, metadata)
        except (jsonschema.ValidationError, PlanValidationError) as exc:
            last_error = str(exc)
    raise PlanRejected(f"plan never validated: {last_error}")


def formulate_experiments(
    gateway: LLMGateway,
    model: ModelConfig,
    query: EnhancedQuery,
    metadata: DatasetMetadata,
) -> list[Experiment]:
    """Ask the model for 1-6 validated plans, re-prompting invalid ones."""
    reply = gateway.complete_structured(
        PromptSpec(
            system_text="You design analytical experiments over a tabular dataset.",
            user_text=load_prompt("analysis_plan").format(
                query=query.enhanced,
                metadata=json.dumps(metadata.as_dict(), indent=2, default=str),
            ),
            output_schema=_EXPERIMENTS_SCHEMA,
            tag="analysis_plan",
        ),
        model,
    ).parsed
    raw_plans = reply["experiments"][:MAX_EXPERIMENTS]
    if not raw_plans:
        raise PlanRejected("the model proposed no experiments")
    experiments = []
    for raw in raw_plans:
        try:
            experiments.append(_validate_plan_dict(raw, metadata))
        except (jsonschema.ValidationError, PlanValidationError) as exc:
            experiments.append(_fix_plan(gateway, model, raw, str(exc), metadata))
    return experiments


def _execute_checked(
    frame: Frame, exp: Experiment
) -> tuple[ExperimentResult | None, tuple[QualityFinding, ...]]:
    try:
        result = execute_plan(frame, exp)
    except ExecutionError as exc:
        finding = QualityFinding(
            "EMPTY_SELECTION" if "empty scope" in str(exc) else "ZERO_AGG",
            "anomaly",
            f"execution failed: {exc}",
            exp.id,
        )
        return None, (finding,)
    return result, tuple(quality_check(result))


def run_analysis(
    gateway: LLMGateway,
    model: ModelConfig,
    query: EnhancedQuery,
    frame: Frame,
    metadata: DatasetMetadata,
    trace: ThoughtTrace | None = None,
) -> AnalysisResults:
    """Formulate, execute, and validate experiments; one diagnostic round each."""
    experiments = formulate_experiments(gateway, model, query, metadata)
    runs: list[ExperimentRun] = []
    for exp in experiments:
        result, findings = _execute_checked(frame, exp)
        revised = False
        anomalies = [f for f in findings if f.severity == "anomaly"]
        if result is None or anomalies:
            if trace is not None:
                trace.record_thought(
                    stage="analysis",
                    observation=f"experiment {exp.id} flagged: "
                    + "; ".join(f.message for f in findings),
                    planned_action="request one revised plan from the model",
                    reasoning="anomalous results must not reach the report unvalidated",
                )
            try:
                reply = gateway.complete_structured(
                    PromptSpec(
                        system_text="You debug analytical experiments.",
                        user_text=load_prompt("analysis_diagnose").format(
                            plan=json.dumps(experiment_to_json(exp)),
                            result=json.dumps(
                                result.as_dict() if result else None, default=str
                            ),
                            findings="; ".join(f.message for f in findings),
                            metadata=json.dumps(
                                metadata.as_dict(), indent=2, default=str
                            ),
                        ),
                        output_schema=_EXPERIMENT_SCHEMA,
                        tag="analysis_diagnose",
                    ),
                    model,
                ).parsed
                revised_exp = _validate_plan_dict(reply["experiment"], metadata)
                result, findings = _execute_checked(frame, revised_exp)
                exp = revised_exp
                revised = True
            except (jsonschema.ValidationError, PlanValidationError):
                pass  # keep the original anomalous run; it surfaces as incomplete
        runs.append(ExperimentRun(exp, result, findings, revised))
    results = AnalysisResults(runs=tuple(runs))
    if not results.complete:
        unresolved = [run.experiment.id for run in runs if not run.resolved]
        raise AnalysisIncomplete(
            f"unresolved anomalies in experiments: {', '.join(unresolved)}", results
        )
    return results


# ---------------------------------------------------------------------------
# report generation


@dataclass(frozen=True)
class ReportExperiment:
    experiment_id: str
    description: str
    columns_used: tuple[str, ...]


@dataclass(frozen=True)
class Report:
    title: str
    summary_for_non_experts: str
    assumptions: str
    definitions: str
    experiments_section: tuple[ReportExperiment, ...]
    limitations: str
    conclusions: str
    dataset_link: str

    def as_dict(self) -> dict:
        return {
            "title": self.title,
            "summary_for_non_experts": self.summary_for_non_experts,
            "assumptions": self.assumptions,
            "definitions": self.definitions,
            "experiments": [
                {
                    "experiment_id": e.experiment_id,
                    "description": e.description,
                    "columns_used": list(e.columns_used),
                }
                for e in self.experiments_section
            ],
            "limitations": self.limitations,
            "conclusions": self.conclusions,
            "dataset_link": self.dataset_link,
        }

    def render_markdown(self) -> str:
        lines = [
            f"# {self.title}",
            "",
            "## Summary for Non-Experts",
            self.summary_for_non_experts,
            "",
            "## Analysis Assumptions",
            self.assumptions,
            "",
            "## Analysis Definitions",
            self.definitions,
            "",
            "## Experiments",
        ]
        for e in self.experiments_section:
            lines.append(f"### {e.experiment_id}")
            lines.append(e.description)
            lines.append(f"Columns used: {', '.join(e.columns_used) or 'none'}")
            lines.append("")
        lines += [
            "## Limitations",
            self.limitations,
            "",
            "## Conclusions",
            self.conclusions,
            "",
            "## Dataset Link",
            self.dataset_link,
            "",
        ]
        return "\n".join(lines)


_REPORT_SCHEMA = OutputSchema(
    (
        SchemaField("title", "string"),
        SchemaField("summary_for_non_experts", "string"),
        SchemaField("assumptions", "string"),
        SchemaField("definitions", "string"),
        SchemaField("experiments", "array"),
        SchemaField("limitations", "string"),
        SchemaField("conclusions", "string"),
        SchemaField("dataset_link", "string"),
    )
)


def report_from_parsed(parsed: dict) -> Report:
    experiments = []
    for item in parsed["experiments"]:
        if not isinstance(item, dict):
            continue
        experiments.append(
            ReportExperiment(
                experiment_id=str(item.get("experiment_id", "")),
                description=str(item.get("description", "")),
                columns_used=tuple(str(c) for c in item.get("columns_used", [])),
            )
        )
    return Report(
        title=parsed["title"],
        summary_for_non_experts=parsed["summary_for_non_experts"],
        assumptions=parsed["assumptions"],
        definitions=parsed["definitions"],
        experiments_section=tuple(experiments),
        limitations=parsed["limitations"],
        conclusions=parsed["conclusions"],
        dataset_link=parsed["dataset_link"],
    )


def validate_report(
    report: Report, outcome: DiscoveryOutcome, results: AnalysisResults
) -> list[str]:
    """Check the eight-section invariants; returns error strings."""
    errors = []
    sections = {
        "title": report.title,
        "summary_for_non_experts": report.summary_for_non_experts,
        "assumptions": report.assumptions,
        "definitions": report.definitions,
        "limitations": report.limitations,
        "conclusions": report.conclusions,
        "dataset_link": report.dataset_link,
    }
    for name, value in sections.items():
        if not value.strip():
            errors.append(f"section {name!r} is empty")
    # a run whose analysis stage was gap-filled has no executed experiments,
    # so the per-experiment checks would be unsatisfiable for it
    synthetic_analysis = not results.runs and results.synthetic_summary is not None
    if not report.experiments_section and not synthetic_analysis:
        errors.append("experiments section is empty")

    valid_links = {
        outcome.selected.candidate.landing_url,
        outcome.selected.candidate.resource_url,
    } - {""}
    if report.dataset_link and report.dataset_link not in valid_links:
        errors.append(
            f"dataset_link must be one of {sorted(valid_links)}, "
            f"got {report.dataset_link!r}"
        )

    real_columns = set(outcome.frame.column_names())
    executed_ids = [run.experiment.id for run in results.runs]
    seen_ids: list[str] = []
    for entry in report.experiments_section:
        if not entry.description.strip():
            errors.append(f"experiment {entry.experiment_id!r} has no description")
        if entry.experiment_id not in executed_ids and not synthetic_analysis:
            errors.append(
                f"experiment id {entry.experiment_id!r} was never executed"
            )
        elif entry.experiment_id in seen_ids:
            errors.append(f"experiment id {entry.experiment_id!r} appears twice")
        seen_ids.append(entry.experiment_id)
        for col in entry.columns_used:
            if col not in real_columns:
                errors.append(
                    f"experiment {entry.experiment_id!r} cites unknown column {col!r}"
                )
    return errors


def _experiments_digest(results: AnalysisResults) -> str:
    lines = []
    for run in results.runs:
        plan = experiment_to_json(run.experiment)
        result = run.result.as_dict() if run.result else None
        lines.append(
            f"- id={run.experiment.id} hypothesis={run.experiment.hypothesis!r} "
            f"plan={json.dumps(plan)} result={json.dumps(result, default=str)}"
        )
    return "\n".join(lines) or "(no experiments executed)"


def generate_report(
    gateway: LLMGateway,
    model: ModelConfig,
    raw_query: str,
    query: EnhancedQuery,
    outcome: DiscoveryOutcome,
    results: AnalysisResults,
) -> Report:
    """Fill the eight report sections and enforce the structural invariants."""
    link = outcome.dataset_link()
    base_prompt = load_prompt("report").format(
        raw_query=raw_query,
        enhanced_query=query.enhanced,
        dataset_title=outcome.selected.candidate.title,
        dataset_link=link,
        columns=", ".join(outcome.frame.column_names()),
        experiments=_experiments_digest(results),
    )
    spec = PromptSpec(
        system_text="You write evidence-backed analytical reports for non-experts.",
        user_text=base_prompt,
        output_schema=_REPORT_SCHEMA,
        tag="report",
    )
    report = report_from_parsed(gateway.complete_structured(spec, model).parsed)
    errors = validate_report(report, outcome, results)
    rounds = 0
    while errors and rounds < MAX_REPORT_FIX_ROUNDS:
        rounds += 1
        fix_prompt = base_prompt + "\n\n" + load_prompt("report_fix").format(
            error="; ".join(errors),
            dataset_link=link,
            columns=", ".join(outcome.frame.column_names()),
        )
        report = report_from_parsed(
            gateway.complete_structured(
                PromptSpec(
                    system_text=spec.system_text,
                    user_text=fix_prompt,
                    output_schema=_REPORT_SCHEMA,
                    tag="report",
                ),
                model,
            ).parsed
        )
        errors = validate_report(report, outcome, results)
    if errors:
        raise ReportInvalid("report never validated: " + "; ".join(errors))
    return report
