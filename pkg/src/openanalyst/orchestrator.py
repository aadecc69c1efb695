"""Sequential stage machine: intent -> discovery -> analysis -> report.

The orchestrator validates each stage's output before the next begins,
retries transient failures, backtracks discovery once when analysis fails
persistently, and substitutes a degraded single-shot gap-fill for exactly
one removed agent in ablation runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import agents
from .agents import (
    AnalysisIncomplete,
    AnalysisResults,
    DiscoveryOutcome,
    EnhancedQuery,
    NoDatasetFound,
    PlanRejected,
    Report,
    ReportInvalid,
    Substitution,
    report_from_parsed,
)
from .gateway import (
    GatewayTimeout,
    LLMGateway,
    ModelConfig,
    OutputSchema,
    PromptSpec,
    ProviderUnreachable,
    SchemaViolation,
    SchemaField,
)
from .repository import (
    DownloadFailed,
    MalformedPortalResponse,
    NotTabular,
    PortalClient,
    PortalUnreachable,
    SearchRequest,
)
from .tabular import DatasetMetadata, parse_table, synthesize_metadata
from .tools import ThoughtTrace

STAGES = ("intent", "discovery", "analysis", "report")
TRANSIENT_RETRY_BUDGET = 2
BACKTRACK_BUDGET = 1


class PipelineFailed(Exception):
    def __init__(self, message: str, context: "PipelineContext"):
        super().__init__(message)
        self.context = context


@dataclass(frozen=True)
class AblationMode:
    removed: str | None = None

    def __post_init__(self) -> None:
        if self.removed is not None and self.removed not in STAGES:
            raise ValueError(f"unknown ablation stage {self.removed!r}")

    @classmethod
    def from_flag(cls, flag: str | None) -> "AblationMode":
        if not flag:
            return cls(None)
        stage = flag.removeprefix("no_")
        return cls(stage)


@dataclass(frozen=True)
class FailureClass:
    kind: str  # "transient" | "persistent"
    origin_stage: str
    detail: str


_TRANSIENT_TYPES = (ProviderUnreachable, GatewayTimeout, DownloadFailed, PortalUnreachable)
_PERSISTENT_TYPES = (
    NoDatasetFound,
    NotTabular,
    PlanRejected,
    ReportInvalid,
    AnalysisIncomplete,
    SchemaViolation,
    MalformedPortalResponse,
)


def classify_failure(err: Exception, origin_stage: str = "unknown") -> FailureClass:
    """Decision table splitting retriable network faults from contract failures."""
    if isinstance(err, _TRANSIENT_TYPES):
        kind = "transient"
    else:
        # persistent covers contract violations and anything unrecognized
        kind = "persistent"
    return FailureClass(kind=kind, origin_stage=origin_stage, detail=str(err))


@dataclass
class PipelineConfig:
    gateway: LLMGateway
    model: ModelConfig
    portal: PortalClient
    out_dir: Path | None = None
    mode: str = "auto_confirm"  # confirmation mode for the intent stage


@dataclass
class PipelineContext:
    raw_query: str
    ablation: AblationMode = field(default_factory=AblationMode)
    stage: str = "intent"
    enhanced: EnhancedQuery | None = None
    discovery: DiscoveryOutcome | None = None
    analysis: AnalysisResults | None = None
    report: Report | None = None
    trace: ThoughtTrace = field(default_factory=ThoughtTrace)
    synthetic_stages: set[str] = field(default_factory=set)
    backtracks: int = 0

    def as_dict(self) -> dict:
        return {
            "raw_query": self.raw_query,
            "ablation": self.ablation.removed,
            "stage": self.stage,
            "enhanced": self.enhanced.as_dict() if self.enhanced else None,
            "discovery": self.discovery.as_dict() if self.discovery else None,
            "analysis": self.analysis.as_dict() if self.analysis else None,
            "report": self.report.as_dict() if self.report else None,
            "synthetic_stages": sorted(self.synthetic_stages),
            "backtracks": self.backtracks,
        }


@dataclass(frozen=True)
class PipelineResult:
    report: Report
    context: PipelineContext


# ---------------------------------------------------------------------------
# ablation gap-fills


_FINDINGS_SCHEMA = OutputSchema((SchemaField("findings", "string"),))


def ablation_fill(stage: str, ctx: PipelineContext, cfg: PipelineConfig):
    """Degraded single-shot substitute for a removed agent."""
    if ctx.ablation.removed != stage:
        raise ValueError(f"stage {stage!r} is not the ablated stage")
    ctx.synthetic_stages.add(stage)
    if stage == "intent":
        return EnhancedQuery(raw=ctx.raw_query, substitutions=(), enhanced=ctx.raw_query)
    if stage == "discovery":
        return _fill_discovery(ctx, cfg)
    if stage == "analysis":
        return _fill_analysis(ctx, cfg)
    return _fill_report(ctx, cfg)


def _fill_discovery(ctx: PipelineContext, cfg: PipelineConfig) -> DiscoveryOutcome:
    # one portal query with the raw query as the term string; first hit taken
    req = SearchRequest(terms=(ctx.raw_query,), rows=10)
    candidates = cfg.portal.search_packages(req)
    if not candidates:
        raise NoDatasetFound("gap-fill search returned no candidates")
    candidate = candidates[0]
    handle = cfg.portal.fetch_resource(candidate)
    frame = parse_table(handle.local_path.read_bytes())
    full = synthesize_metadata(frame)
    # degraded profile: column names and row count only
    metadata = DatasetMetadata(
        first_rows=(),
        column_names=full.column_names,
        row_count=full.row_count,
        head_summary="",
        tail_summary="",
        stats={},
        unique_values={},
        publisher_meta=None,
        column_kinds=full.column_kinds,
    )
    return DiscoveryOutcome(selected=handle, frame=frame, metadata=metadata)


def _fill_analysis(ctx: PipelineContext, cfg: PipelineConfig) -> AnalysisResults:
    # no execution: one unvalidated model call summarizing the metadata
    reply = cfg.gateway.complete_structured(
        PromptSpec(
            system_text="You summarize datasets.",
            user_text=agents.load_prompt("ablation_analysis_summary").format(
                query=ctx.enhanced.enhanced,
                metadata=json.dumps(ctx.discovery.metadata.as_dict(), default=str),
            ),
            output_schema=_FINDINGS_SCHEMA,
            tag="ablation_analysis_summary",
        ),
        cfg.model,
    ).parsed
    return AnalysisResults(runs=(), synthetic_summary=reply["findings"])


def _fill_report(ctx: PipelineContext, cfg: PipelineConfig) -> Report:
    # plain formatting call over raw stage dumps; invariants deliberately
    # not enforced (enforcing them would rebuild the removed agent)
    stage_dump = json.dumps(
        {
            "enhanced_query": ctx.enhanced.as_dict() if ctx.enhanced else None,
            "discovery": ctx.discovery.as_dict() if ctx.discovery else None,
            "analysis": ctx.analysis.as_dict() if ctx.analysis else None,
        },
        indent=2,
        default=str,
    )
    parsed = cfg.gateway.complete_structured(
        PromptSpec(
            system_text="You format text.",
            user_text=agents.load_prompt("ablation_report").format(
                raw_query=ctx.raw_query, stage_dump=stage_dump
            ),
            output_schema=agents._REPORT_SCHEMA,
            tag="ablation_report",
        ),
        cfg.model,
    ).parsed
    return report_from_parsed(parsed)


# ---------------------------------------------------------------------------
# pipeline


def _run_stage(ctx: PipelineContext, stage: str, fn: Callable):
    """Run one stage with the transient retry budget."""
    ctx.stage = stage
    ctx.trace.record_event("stage_started", stage=stage)
    attempt = 0
    while True:
        try:
            output = fn()
            ctx.trace.record_event("stage_completed", stage=stage)
            return output
        except Exception as exc:
            failure = classify_failure(exc, stage)
            ctx.trace.record_event(
                "stage_failure",
                stage=stage,
                failure_kind=failure.kind,
                detail=failure.detail,
            )
            if failure.kind == "transient" and attempt < TRANSIENT_RETRY_BUDGET:
                attempt += 1
                continue
            raise


def run_pipeline(
    raw_query: str,
    cfg: PipelineConfig,
    ablation: AblationMode | None = None,
    confirm: Callable[[Substitution], bool] | None = None,
    trace: ThoughtTrace | None = None,
) -> PipelineResult:
    """Drive the four stages in order and return the report plus full context."""
    if not raw_query:
        raise ValueError("query must be non-empty")
    ctx = PipelineContext(raw_query=raw_query, ablation=ablation or AblationMode())
    if trace is not None:
        ctx.trace = trace
    try:
        # intent
        if ctx.ablation.removed == "intent":
            ctx.enhanced = ablation_fill("intent", ctx, cfg)
            ctx.trace.record_event("stage_filled", stage="intent")
        else:
            ctx.enhanced = _run_stage(
                ctx,
                "intent",
                lambda: agents.clarify_intent(
                    cfg.gateway,
                    cfg.model,
                    raw_query,
                    mode=cfg.mode,
                    confirm=confirm,
                    trace=ctx.trace,
                ),
            )

        # discovery
        if ctx.ablation.removed == "discovery":
            ctx.stage = "discovery"
            ctx.discovery = ablation_fill("discovery", ctx, cfg)
            ctx.trace.record_event("stage_filled", stage="discovery")
        else:
            ctx.discovery = _run_stage(
                ctx,
                "discovery",
                lambda: agents.discover_dataset(
                    cfg.gateway, cfg.model, cfg.portal, ctx.enhanced, trace=ctx.trace
                ),
            )

        # analysis, with one discovery backtrack on persistent failure
        if ctx.ablation.removed == "analysis":
            ctx.stage = "analysis"
            ctx.analysis = ablation_fill("analysis", ctx, cfg)
            ctx.trace.record_event("stage_filled", stage="analysis")
        else:
            ctx.analysis = _run_analysis_with_backtrack(ctx, cfg)

        # report
        if ctx.ablation.removed == "report":
            ctx.stage = "report"
            ctx.report = ablation_fill("report", ctx, cfg)
            ctx.trace.record_event("stage_filled", stage="report")
        else:
            ctx.report = _run_stage(
                ctx,
                "report",
                lambda: agents.generate_report(
                    cfg.gateway,
                    cfg.model,
                    raw_query,
                    ctx.enhanced,
                    ctx.discovery,
                    ctx.analysis,
                ),
            )
    except Exception as exc:
        ctx.trace.record_event("pipeline_failed", detail=str(exc))
        if cfg.out_dir is not None:
            write_artifacts(ctx, cfg.out_dir)
        raise PipelineFailed(f"pipeline failed in stage {ctx.stage}: {exc}", ctx) from exc

    ctx.stage = "done"
    ctx.trace.record_event("report_ready")
    if cfg.out_dir is not None:
        write_artifacts(ctx, cfg.out_dir)
    return PipelineResult(report=ctx.report, context=ctx)


def _run_analysis_with_backtrack(ctx: PipelineContext, cfg: PipelineConfig):
    def run() -> AnalysisResults:
        return agents.run_analysis(
            cfg.gateway,
            cfg.model,
            ctx.enhanced,
            ctx.discovery.frame,
            ctx.discovery.metadata,
            trace=ctx.trace,
        )

    try:
        return _run_stage(ctx, "analysis", run)
    except Exception as exc:
        failure = classify_failure(exc, "analysis")
        can_backtrack = (
            failure.kind == "persistent"
            and ctx.backtracks < BACKTRACK_BUDGET
            and ctx.ablation.removed != "discovery"
        )
        if not can_backtrack:
            raise
        ctx.backtracks += 1
        previous = ctx.discovery.selected.candidate.package_id
        ctx.trace.record_event(
            "backtrack", from_stage="analysis", to_stage="discovery", exclude=previous
        )
        ctx.discovery = _run_stage(
            ctx,
            "discovery",
            lambda: agents.discover_dataset(
                cfg.gateway,
                cfg.model,
                cfg.portal,
                ctx.enhanced,
                exclude=(previous,),
                trace=ctx.trace,
            ),
        )
        return _run_stage(ctx, "analysis", run)


def write_artifacts(ctx: PipelineContext, out_dir: Path | str) -> Path:
    """Persist the run artifact directory (context, report, trace)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "context.json", "w", encoding="utf-8") as fh:
        json.dump(ctx.as_dict(), fh, indent=2, default=str)
    ctx.trace.write_jsonl(out_dir / "trace.jsonl")
    if ctx.report is not None:
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(ctx.report.as_dict(), fh, indent=2, default=str)
        (out_dir / "report.md").write_text(ctx.report.render_markdown(), encoding="utf-8")
    return out_dir
