"""Shared fixtures: the hypertension survey corpus, a recorded portal, and
scripted model transcripts driving full pipeline runs offline."""

from __future__ import annotations

import json

import pytest

from openanalyst.gateway import LLMGateway, ModelConfig, ScriptedProvider
from openanalyst.repository import PortalClient, RecordedTransport, record_fixture
from openanalyst.tabular import parse_table

# The CLI maps a fixture-directory --portal to this base URL, so every
# recorded request in the suite is keyed against it.
PORTAL_URL = "https://recorded.portal"
SEARCH_URL = f"{PORTAL_URL}/api/3/action/package_search"

RESOURCE_URL = "https://data.example/hyp.csv"
LANDING_URL = "https://data.example/dataset/hyp-001"

RAW_QUERY = "How common is high blood pressure among adults?"
ENHANCED_QUERY = "How common is hypertension among adults?"

# 20 respondents: 16 adults (age >= 18), 4 of them hypertensive -> 0.25.
# Age bands among adults: 18-44 has 8 (2 cases), 45-64 has 5 (1 case),
# 65+ has 3 (1 case).
HYPERTENSION_CSV = b"""respondent_id,age,hypertension,state
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

PLAN_PREVALENCE = {
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

PLAN_BY_STATE = {
    "id": "exp_by_state",
    "hypothesis": "prevalence differs between states",
    "steps": [
        {"op": "filter", "column": "age", "comparator": ">=", "value": 18},
        {"op": "group_by", "columns": ["state"]},
        {
            "op": "aggregate",
            "kind": "proportion_of",
            "output": "state_prevalence",
            "predicate": {"column": "hypertension", "comparator": "=", "value": 1},
        },
        {"op": "sort", "column": "state_prevalence", "direction": "desc"},
    ],
    "outputs": ["state_prevalence"],
}

REPORT_OBJ = {
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


def j(obj) -> str:
    return json.dumps(obj)


def ckan_payload(*packages) -> str:
    return j({"success": True, "result": {"count": len(packages), "results": list(packages)}})


def make_package(
    package_id: str,
    title: str,
    resource_url: str = "",
    fmt: str = "CSV",
    landing: str = "",
    notes: str = "",
    org: str = "Health Agency",
) -> dict:
    resources = []
    if resource_url:
        resources.append({"url": resource_url, "format": fmt})
    return {
        "id": package_id,
        "title": title,
        "notes": notes,
        "url": landing,
        "organization": {"title": org},
        "resources": resources,
    }


HYPERTENSION_PACKAGE = make_package(
    "hyp-001",
    "National Hypertension Survey",
    resource_url=RESOURCE_URL,
    landing=LANDING_URL,
    notes="Individual-level survey of blood pressure status by age and state.",
)

# q strings the pipeline will issue against the portal
SEARCH_Q = "hypertension prevalence united states"


def record_search(fixture_dir, q: str, payload: str, rows: str = "10") -> None:
    record_fixture(fixture_dir, SEARCH_URL, {"q": q, "rows": rows}, payload)


def record_download(fixture_dir, url: str, body, status: int = 200) -> None:
    record_fixture(fixture_dir, url, {}, body, status=status)


def build_hypertension_portal(fixture_dir) -> None:
    """Record the search + download responses for the standard happy path."""
    record_search(fixture_dir, SEARCH_Q, ckan_payload(HYPERTENSION_PACKAGE))
    # the no-discovery gap-fill searches with the raw query verbatim
    record_search(fixture_dir, RAW_QUERY, ckan_payload(HYPERTENSION_PACKAGE))
    record_download(fixture_dir, RESOURCE_URL, HYPERTENSION_CSV)


def full_transcript() -> dict[str, list[str]]:
    """Scripted responses for one complete auto-confirm pipeline run."""
    return {
        "intent": [
            j(
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
            j({"terms": ["hypertension", "prevalence"], "scope": "united states"})
        ],
        "discovery_select": [
            j({"selected_index": 0, "reason": "national survey with the needed columns"})
        ],
        "analysis_plan": [j({"experiments": [PLAN_PREVALENCE]})],
        "report": [j(REPORT_OBJ)],
    }


def scripted_gateway(transcript) -> LLMGateway:
    return LLMGateway(provider=ScriptedProvider(transcript))


@pytest.fixture
def model() -> ModelConfig:
    return ModelConfig(model_id="scripted-model", endpoint="scripted:inline", temperature=0.0)


@pytest.fixture
def hypertension_frame():
    return parse_table(HYPERTENSION_CSV)


@pytest.fixture
def portal_dir(tmp_path):
    fixture_dir = tmp_path / "portal"
    build_hypertension_portal(fixture_dir)
    return fixture_dir


@pytest.fixture
def portal(portal_dir, tmp_path):
    return PortalClient(
        PORTAL_URL, tmp_path / "cache", transport=RecordedTransport(portal_dir)
    )
