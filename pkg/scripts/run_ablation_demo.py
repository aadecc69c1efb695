#!/usr/bin/env python3
"""Offline ablation demo: full vs each single-agent-removed pipeline.

Reuses the recorded portal and scripted transcript from demo_offline.py,
runs the comparison suite over a one-query benchmark with a scripted judge,
and prints the aggregated win-rate and rubric tables. Judgment records and
CSVs land in ``runs/ablation_demo/``.
"""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from demo_offline import PORTAL_URL, QUERY, REPORT, TRANSCRIPT, build_portal

from openanalyst.evaluation import ABLATION_MODES, BenchmarkQuery, run_ablation_suite
from openanalyst.gateway import LLMGateway, ModelConfig, ScriptedProvider
from openanalyst.orchestrator import AblationMode, PipelineConfig, run_pipeline
from openanalyst.repository import PortalClient, RecordedTransport

MODEL = ModelConfig(
    model_id="scripted-demo", endpoint="scripted:inline", temperature=0.0
)

BENCHMARK = [
    BenchmarkQuery(
        id="q1", query_text=QUERY, domain="public_health", difficulty="easy"
    )
]


def mode_transcript(mode: str | None) -> dict:
    transcript = {tag: list(responses) for tag, responses in TRANSCRIPT.items()}
    if mode == "no_intent":
        del transcript["intent"]
    elif mode == "no_discovery":
        del transcript["discovery_terms"]
        del transcript["discovery_select"]
    elif mode == "no_analysis":
        del transcript["analysis_plan"]
        transcript["ablation_analysis_summary"] = [
            json.dumps({"findings": "about a quarter of adults appear hypertensive"})
        ]
        transcript["report"] = [json.dumps({**REPORT, "experiments": []})]
    elif mode == "no_report":
        del transcript["report"]
        transcript["ablation_report"] = [json.dumps(REPORT)]
    return transcript


def judge_gateway() -> LLMGateway:
    rubric = json.dumps(
        {"factual": 7, "complete": 6, "relevant": 8, "coherent": 8, "rationale": {}}
    )
    pairwise = json.dumps(
        {
            "factual": "A",
            "complete": "A",
            "relevant": "tie",
            "coherent": "tie",
            "overall": "A",
            "explanation": "the fuller report cites its executed experiments",
        }
    )
    return LLMGateway(
        provider=ScriptedProvider(
            {
                "judge_rubric": [rubric] * len(BENCHMARK),
                "judge_pairwise": [pairwise] * (len(BENCHMARK) * len(ABLATION_MODES)),
            }
        )
    )


def main() -> int:
    out_dir = Path("runs/ablation_demo")
    with tempfile.TemporaryDirectory() as tmp:
        fixture_dir = Path(tmp) / "portal"
        build_portal(fixture_dir)
        portal = PortalClient(
            PORTAL_URL, Path(tmp) / "cache", transport=RecordedTransport(fixture_dir)
        )

        def run_one(model_id, query, mode):
            cfg = PipelineConfig(
                gateway=LLMGateway(provider=ScriptedProvider(mode_transcript(mode))),
                model=MODEL,
                portal=portal,
            )
            try:
                result = run_pipeline(
                    query.query_text, cfg, ablation=AblationMode.from_flag(mode)
                )
            except Exception as exc:
                print(f"run ({query.id}, {mode or 'full'}) failed: {exc}", file=sys.stderr)
                return None
            return result.report.render_markdown()

        tables = run_ablation_suite(
            BENCHMARK,
            {MODEL.model_id: MODEL},
            modes=list(ABLATION_MODES),
            run_one=run_one,
            judge_gateway=judge_gateway(),
            judge=MODEL,
            seed=0,
            out_dir=out_dir,
        )
    print(tables.to_markdown())
    print(f"Artifacts written to {out_dir}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
