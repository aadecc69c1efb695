"""Evaluation harness: benchmark loading, rubric scoring, blinded pairwise
ablation judging with position randomization, and win-rate aggregation."""

from __future__ import annotations

import json
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .agents import load_prompt
from .gateway import LLMGateway, ModelConfig, OutputSchema, PromptSpec, SchemaField

DOMAINS = (
    "health_epidemiology",
    "environmental_monitoring",
    "covid19",
    "transportation",
    "campaign_finance",
    "public_health",
    "other",
)
DIFFICULTIES = ("easy", "medium", "hard")
CRITERIA = ("factual", "complete", "relevant", "coherent")
ABLATION_MODES = ("no_intent", "no_discovery", "no_analysis", "no_report")

REPORT_CHAR_BUDGET = 20_000  # both arms truncated to the same length


class EvaluationError(Exception):
    pass


class MalformedBenchmark(EvaluationError):
    pass


class MissingCriterion(EvaluationError):
    pass


@dataclass(frozen=True)
class BenchmarkQuery:
    id: str
    query_text: str
    domain: str
    difficulty: str
    dataset_hint: str | None = None

    def __post_init__(self) -> None:
        if not self.query_text:
            raise ValueError("query_text must be non-empty")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.difficulty not in DIFFICULTIES:
            raise ValueError(f"unknown difficulty {self.difficulty!r}")


def load_benchmark(path: str | Path) -> list[BenchmarkQuery]:
    """Load and validate a benchmark file (JSON array of query records)."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise MalformedBenchmark(f"cannot read benchmark {path}: {exc}") from exc
    if not isinstance(data, list):
        raise MalformedBenchmark("benchmark must be a JSON array")
    queries = []
    seen = set()
    for entry in data:
        try:
            query = BenchmarkQuery(
                id=str(entry["id"]),
                query_text=entry["query"],
                domain=entry["domain"],
                difficulty=entry["difficulty"],
                dataset_hint=entry.get("dataset_hint"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedBenchmark(f"bad benchmark entry {entry!r}: {exc}") from exc
        if query.id in seen:
            raise MalformedBenchmark(f"duplicate benchmark id {query.id!r}")
        seen.add(query.id)
        queries.append(query)
    return queries


# ---------------------------------------------------------------------------
# rubric scoring


@dataclass(frozen=True)
class RubricScores:
    factual: int
    complete: int
    relevant: int
    coherent: int
    rationale: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in CRITERIA:
            score = getattr(self, name)
            if not 1 <= score <= 10:
                raise ValueError(f"{name} score {score} outside [1, 10]")


def overall_quality(scores: RubricScores) -> float:
    """Arithmetic mean of the four rubric scores."""
    return (scores.factual + scores.complete + scores.relevant + scores.coherent) / 4


_RUBRIC_SCHEMA = OutputSchema(
    tuple(
        [SchemaField(name, "integer", minimum=1, maximum=10) for name in CRITERIA]
        + [SchemaField("rationale", "object")]
    )
)


def score_report(
    gateway: LLMGateway, judge: ModelConfig, report_text: str, query_text: str
) -> RubricScores:
    """One structured judge call scoring the four rubric criteria."""
    if not report_text.strip():
        raise ValueError("report must be non-empty")
    parsed = gateway.complete_structured(
        PromptSpec(
            system_text="You are a strict, impartial evaluator of analytical reports.",
            user_text=load_prompt("judge_rubric").format(
                query=query_text, report=report_text[:REPORT_CHAR_BUDGET]
            ),
            output_schema=_RUBRIC_SCHEMA,
            tag="judge_rubric",
        ),
        judge,
    ).parsed
    return RubricScores(
        factual=parsed["factual"],
        complete=parsed["complete"],
        relevant=parsed["relevant"],
        coherent=parsed["coherent"],
        rationale={k: str(v) for k, v in parsed["rationale"].items()},
    )


# ---------------------------------------------------------------------------
# pairwise judging


@dataclass(frozen=True)
class JudgmentRecord:
    query_id: str
    criterion: str
    outcome: float  # s_k from the full-system perspective: 0, 0.5 or 1
    presented_order: str  # "full_first" | "ablated_first"
    explanation: str
    seed: int

    def __post_init__(self) -> None:
        if self.outcome not in (0.0, 0.5, 1.0):
            raise ValueError(f"outcome must be 0, 0.5 or 1, got {self.outcome}")
        if self.presented_order not in ("full_first", "ablated_first"):
            raise ValueError(f"bad presented_order {self.presented_order!r}")

    def as_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "criterion": self.criterion,
            "outcome": self.outcome,
            "presented_order": self.presented_order,
            "explanation": self.explanation,
            "seed": self.seed,
        }


_PAIRWISE_SCHEMA = OutputSchema(
    tuple(
        [SchemaField(name, "string", choices=("A", "B", "tie")) for name in CRITERIA]
        + [
            SchemaField("overall", "string", choices=("A", "B", "tie")),
            SchemaField("explanation", "string"),
        ]
    )
)


def full_system_position(seed: int) -> str:
    """Fair-coin presentation order drawn from the seed."""
    return "full_first" if random.Random(seed).random() < 0.5 else "ablated_first"


def _truncate(text: str) -> str:
    if len(text) <= REPORT_CHAR_BUDGET:
        return text
    return text[:REPORT_CHAR_BUDGET] + "\n[truncated to the shared length budget]"


def map_outcome(label: str, presented_order: str) -> float:
    """Map the judge's raw A/B/tie answer to the full-system perspective."""
    if label == "tie":
        return 0.5
    full_label = "A" if presented_order == "full_first" else "B"
    return 1.0 if label == full_label else 0.0


def judge_pairwise(
    gateway: LLMGateway,
    judge: ModelConfig,
    full_report: str,
    ablated_report: str,
    query: BenchmarkQuery,
    seed: int,
) -> tuple[list[JudgmentRecord], str]:
    """Blinded pairwise judgment; returns 4 per-criterion records + overall winner."""
    if not full_report.strip() or not ablated_report.strip():
        raise ValueError("both reports must be non-empty")
    order = full_system_position(seed)
    if order == "full_first":
        report_a, report_b = full_report, ablated_report
    else:
        report_a, report_b = ablated_report, full_report
    parsed = gateway.complete_structured(
        PromptSpec(
            system_text="You compare two analytical reports fairly and precisely.",
            user_text=load_prompt("judge_pairwise").format(
                query=query.query_text,
                report_a=_truncate(report_a),
                report_b=_truncate(report_b),
            ),
            output_schema=_PAIRWISE_SCHEMA,
            tag="judge_pairwise",
        ),
        judge,
    ).parsed
    records = [
        JudgmentRecord(
            query_id=query.id,
            criterion=criterion,
            outcome=map_outcome(parsed[criterion], order),
            presented_order=order,
            explanation=parsed["explanation"],
            seed=seed,
        )
        for criterion in CRITERIA
    ]
    overall_outcome = map_outcome(parsed["overall"], order)
    overall = {1.0: "full", 0.0: "ablated", 0.5: "tie"}[overall_outcome]
    return records, overall


def win_rate(records: Sequence[JudgmentRecord], criterion: str) -> float:
    """Mean outcome over the records of one criterion."""
    outcomes = [r.outcome for r in records if r.criterion == criterion]
    if not outcomes:
        raise MissingCriterion(f"no judgments for criterion {criterion!r}")
    return sum(outcomes) / len(outcomes)


# ---------------------------------------------------------------------------
# suite aggregation


@dataclass
class AggregateTables:
    """Aggregated suite outputs mirroring the benchmark/ablation table shapes."""

    # (model, mode, criterion) -> (win rate, completed judgment count)
    win_rates: dict[tuple[str, str, str], tuple[float, int]] = field(default_factory=dict)
    # model -> mean score per criterion + overall
    rubric_means: dict[str, dict[str, float]] = field(default_factory=dict)
    # (model, difficulty) -> mean overall quality
    difficulty_means: dict[tuple[str, str], float] = field(default_factory=dict)
    incomplete_runs: int = 0

    def to_markdown(self) -> str:
        lines = []
        if self.rubric_means:
            lines += [
                "## Rubric scores by model",
                "",
                "| Model | Factual | Complete | Relevant | Coherent | Overall |",
                "| --- | --- | --- | --- | --- | --- |",
            ]
            for model, means in sorted(self.rubric_means.items()):
                lines.append(
                    f"| {model} | "
                    + " | ".join(f"{means[c]:.1f}" for c in CRITERIA)
                    + f" | {means['overall']:.1f} |"
                )
            lines.append("")
        if self.difficulty_means:
            lines += [
                "## Overall quality by question difficulty",
                "",
                "| Model | Easy | Medium | Hard |",
                "| --- | --- | --- | --- |",
            ]
            models = sorted({m for m, _ in self.difficulty_means})
            for model in models:
                cells = []
                for difficulty in DIFFICULTIES:
                    value = self.difficulty_means.get((model, difficulty))
                    cells.append(f"{value:.1f}" if value is not None else "-")
                lines.append(f"| {model} | " + " | ".join(cells) + " |")
            lines.append("")
        if self.win_rates:
            lines += [
                "## Full-system win rates by criterion and ablation",
                "",
                "| Model | Ablation | Factual | Complete | Relevant | Coherent | n |",
                "| --- | --- | --- | --- | --- | --- | --- |",
            ]
            cells = sorted({(m, a) for m, a, _ in self.win_rates})
            for model, mode in cells:
                row = [model, mode]
                n = 0
                for criterion in CRITERIA:
                    entry = self.win_rates.get((model, mode, criterion))
                    if entry is None:
                        row.append("-")
                    else:
                        row.append(f"{entry[0]:.1%}")
                        n = max(n, entry[1])
                lines.append("| " + " | ".join(row) + f" | {n} |")
            lines.append("")
        if self.incomplete_runs:
            lines.append(f"Incomplete runs excluded from denominators: {self.incomplete_runs}")
            lines.append("")
        return "\n".join(lines)

    def write_csv(self, out_dir: str | Path) -> None:
        import csv

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "win_rates.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "ablation", "criterion", "win_rate", "n"])
            for (model, mode, criterion), (rate, n) in sorted(self.win_rates.items()):
                writer.writerow([model, mode, criterion, rate, n])
        with open(out_dir / "rubric_means.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model"] + list(CRITERIA) + ["overall"])
            for model, means in sorted(self.rubric_means.items()):
                writer.writerow(
                    [model] + [means[c] for c in CRITERIA] + [means["overall"]]
                )
        with open(
            out_dir / "difficulty_means.csv", "w", newline="", encoding="utf-8"
        ) as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "difficulty", "overall"])
            for (model, difficulty), value in sorted(self.difficulty_means.items()):
                writer.writerow([model, difficulty, value])


def _stable_seed(seed: int, *parts: str) -> int:
    import hashlib

    digest = hashlib.sha256((str(seed) + "\x00" + "\x00".join(parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def run_ablation_suite(
    benchmark: Sequence[BenchmarkQuery],
    models: Mapping[str, ModelConfig],
    modes: Sequence[str],
    run_one: Callable[[str, BenchmarkQuery, str | None], str | None],
    judge_gateway: LLMGateway,
    judge: ModelConfig,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> AggregateTables:
    """Run full + ablated pipelines per (model, mode, query) and aggregate.

    ``run_one(model_id, query, ablation_flag)`` returns the report markdown,
    or None when that run failed; failed runs are counted and excluded from
    denominators rather than failing the suite.
    """
    for mode in modes:
        if mode not in ABLATION_MODES:
            raise ValueError(f"unknown ablation mode {mode!r}")
    tables = AggregateTables()
    judgments: list[JudgmentRecord] = []
    per_cell: dict[tuple[str, str], list[JudgmentRecord]] = {}
    rubric_rows: dict[str, list[RubricScores]] = {}
    difficulty_rows: dict[tuple[str, str], list[float]] = {}

    for model_id in models:
        for query in benchmark:
            full_report = run_one(model_id, query, None)
            if full_report is None:
                tables.incomplete_runs += 1
                continue
            try:
                scores = score_report(judge_gateway, judge, full_report, query.query_text)
            except Exception:
                tables.incomplete_runs += 1
                scores = None
            if scores is not None:
                rubric_rows.setdefault(model_id, []).append(scores)
                difficulty_rows.setdefault((model_id, query.difficulty), []).append(
                    overall_quality(scores)
                )
            for mode in modes:
                ablated_report = run_one(model_id, query, mode)
                if ablated_report is None:
                    tables.incomplete_runs += 1
                    continue
                pair_seed = _stable_seed(seed, model_id, query.id, mode)
                try:
                    records, _ = judge_pairwise(
                        judge_gateway, judge, full_report, ablated_report, query, pair_seed
                    )
                except Exception:
                    tables.incomplete_runs += 1
                    continue
                judgments.extend(records)
                per_cell.setdefault((model_id, mode), []).extend(records)

    for (model_id, mode), records in per_cell.items():
        for criterion in CRITERIA:
            outcomes = [r for r in records if r.criterion == criterion]
            if outcomes:
                tables.win_rates[(model_id, mode, criterion)] = (
                    win_rate(outcomes, criterion),
                    len(outcomes),
                )
    for model_id, rows in rubric_rows.items():
        means = {
            criterion: statistics.fmean(getattr(s, criterion) for s in rows)
            for criterion in CRITERIA
        }
        means["overall"] = statistics.fmean(overall_quality(s) for s in rows)
        tables.rubric_means[model_id] = means
    for key, values in difficulty_rows.items():
        tables.difficulty_means[key] = statistics.fmean(values)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "judgments.jsonl", "w", encoding="utf-8") as fh:
            for record in judgments:
                fh.write(json.dumps(record.as_dict()) + "\n")
        (out_dir / "tables.md").write_text(tables.to_markdown(), encoding="utf-8")
        tables.write_csv(out_dir)
    return tables
