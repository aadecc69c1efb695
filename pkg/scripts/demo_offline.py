#!/usr/bin/env python3
"""Run the full pipeline end to end without any network or model access.

Builds a temporary recorded portal (one CKAN search response plus a CSV
download) and a scripted model transcript, then runs the four-stage pipeline
and prints the rendered report. Artifacts land in ``runs/demo/``.
"""

import json
import sys
import tempfile
from pathlib import Path

from openanalyst.gateway import LLMGateway, ModelConfig, ScriptedProvider
from openanalyst.orchestrator import PipelineConfig, run_pipeline
from openanalyst.repository import PortalClient, RecordedTransport, record_fixture

PORTAL_URL = "https://recorded.portal"
SEARCH_URL = f"{PORTAL_URL}/api/3/action/package_search"
RESOURCE_URL = "https://data.example/hyp.csv"
LANDING_URL = "https://data.example/dataset/hyp-001"

QUERY = "How common is high blood pressure among adults?"

CSV = b"""respondent_id,age,hypertension,state
1,10,0,WA
2,12,0,OR
3,15,0,WA
4,17,0,CA
5,18,0,WA
6,22,1,CA
7,25,0,OR
8,30,0,WA
9,33,0,CA
10,38,1,WA
11,40,0,OR
12,44,0,CA
13,45,0,WA
14,50,1,OR
15,55,0,CA
16,60,0,WA
17,64,0,OR
18,65,0,CA
19,70,1,WA
20,80,0,OR
"""

PLAN = {
    "id": "exp_prevalence",
    "hypothesis": "at least a fifth of US adults have hypertension",
    "steps": [
        {"op": "filter", "column": "age", "comparator": ">=", "value": 18},
        {
            "op": "aggregate",
            "kind": "proportion_of",
            "output": "prevalence",
            "predicate": {"column": "hypertension", "comparator": "=", "value": 1},
        },
    ],
    "outputs": ["prevalence"],
}

REPORT = {
    "title": "Adult Hypertension Prevalence in the United States",
    "summary_for_non_experts": "About one in four surveyed adults has hypertension.",
    "assumptions": "Adults are respondents aged 18 or older; each row is one person.",
    "definitions": "Prevalence is the share of adults with hypertension recorded as 1.",
    "experiments": [
        {
            "experiment_id": "exp_prevalence",
            "description": "Share of adults flagged hypertensive: 0.25.",
            "columns_used": ["age", "hypertension"],
        }
    ],
    "limitations": "Single survey wave; self-reported diagnoses may undercount.",
    "conclusions": "Roughly 25% of adults in the surveyed sample have hypertension.",
    "dataset_link": LANDING_URL,
}

TRANSCRIPT = {
    "intent": [
        json.dumps(
            {
                "substitutions": [
                    {
                        "original": "high blood pressure",
                        "replacement": "hypertension",
                        "category": "imprecise_term",
                    }
                ],
                "remaining_ambiguities": False,
            }
        )
    ],
    "discovery_terms": [
        json.dumps({"terms": ["hypertension", "prevalence"], "scope": "united states"})
    ],
    "discovery_select": [
        json.dumps({"selected_index": 0, "reason": "national survey with needed columns"})
    ],
    "analysis_plan": [json.dumps({"experiments": [PLAN]})],
    "report": [json.dumps(REPORT)],
}


def build_portal(fixture_dir: Path) -> None:
    package = {
        "id": "hyp-001",
        "title": "National Hypertension Survey",
        "notes": "Individual-level survey of blood pressure status by age and state.",
        "url": LANDING_URL,
        "organization": {"title": "Health Agency"},
        "resources": [{"url": RESOURCE_URL, "format": "CSV"}],
    }
    payload = json.dumps(
        {"success": True, "result": {"count": 1, "results": [package]}}
    )
    record_fixture(
        fixture_dir,
        SEARCH_URL,
        {"q": "hypertension prevalence united states", "rows": "10"},
        payload,
    )
    # the no-discovery gap-fill searches the raw query verbatim
    record_fixture(fixture_dir, SEARCH_URL, {"q": QUERY, "rows": "10"}, payload)
    record_fixture(fixture_dir, RESOURCE_URL, {}, CSV)


def main() -> int:
    out_dir = Path("runs/demo")
    with tempfile.TemporaryDirectory() as tmp:
        fixture_dir = Path(tmp) / "portal"
        build_portal(fixture_dir)
        cfg = PipelineConfig(
            gateway=LLMGateway(provider=ScriptedProvider(TRANSCRIPT)),
            model=ModelConfig(
                model_id="scripted-demo", endpoint="scripted:inline", temperature=0.0
            ),
            portal=PortalClient(
                PORTAL_URL, Path(tmp) / "cache", transport=RecordedTransport(fixture_dir)
            ),
            out_dir=out_dir,
        )
        result = run_pipeline(QUERY, cfg)
    print(result.report.render_markdown())
    print(f"\nArtifacts written to {out_dir}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
