"""Command-line entry points: ask, eval, ablate, judge, cache, serve.

Exit codes: 0 success, 1 pipeline/suite failure, 2 usage error.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import click

from .evaluation import (
    ABLATION_MODES,
    BenchmarkQuery,
    judge_pairwise,
    load_benchmark,
    run_ablation_suite,
)
from .gateway import (
    HttpProvider,
    LLMGateway,
    ModelConfig,
    ScriptedProvider,
    load_model_configs,
)
from .orchestrator import (
    AblationMode,
    PipelineConfig,
    PipelineFailed,
    run_pipeline,
)
from .repository import LiveTransport, PortalClient, RecordedTransport

DEFAULT_PORTAL = "https://catalog.data.gov"


def _default_config_path() -> Path:
    return Path(str(resources.files("openanalyst.data").joinpath("models.json")))


def _resolve_model(config_path: str | None, model_id: str | None) -> ModelConfig:
    path = Path(config_path) if config_path else _default_config_path()
    configs = load_model_configs(path)
    if not configs:
        raise click.UsageError(f"no models defined in {path}")
    if model_id is None:
        return next(iter(configs.values()))
    if model_id not in configs:
        raise click.UsageError(
            f"unknown model {model_id!r}; configured: {', '.join(configs)}"
        )
    return configs[model_id]


def _build_gateway(model: ModelConfig, log_path: Path | None = None) -> LLMGateway:
    if model.endpoint.startswith("scripted:"):
        provider = ScriptedProvider(model.endpoint.removeprefix("scripted:"))
    else:
        provider = HttpProvider()
    return LLMGateway(provider=provider, log_path=log_path)


def _build_portal(portal: str, cache_dir: str) -> PortalClient:
    if Path(portal).is_dir():
        transport = RecordedTransport(portal)
        portal_url = "https://recorded.portal"
    else:
        transport = LiveTransport()
        portal_url = portal
    return PortalClient(portal_url, cache_dir, transport=transport)


def _common_options(fn):
    fn = click.option("--config", "config_path", default=None, help="Model config JSON.")(fn)
    fn = click.option("--model", "model_id", default=None, help="Model id from the config.")(fn)
    fn = click.option("--portal", default=DEFAULT_PORTAL, show_default=True,
                      help="Portal base URL, or a recorded-fixture directory.")(fn)
    fn = click.option("--cache-dir", default=".openanalyst-cache", show_default=True)(fn)
    fn = click.option("--out-dir", default="runs", show_default=True)(fn)
    return fn


@click.group()
def main() -> None:
    """Ask analytical questions over open data, or evaluate the pipeline."""


@main.command()
@click.argument("query")
@_common_options
@click.option("--auto-confirm", is_flag=True, default=False,
              help="Accept every proposed clarification without prompting.")
@click.option("--mode", "ablation_flag", default=None,
              type=click.Choice(ABLATION_MODES),
              help="Run with one agent removed (ablation).")
def ask(query, config_path, model_id, portal, cache_dir, out_dir, auto_confirm, ablation_flag):
    """Answer QUERY with an evidence-backed report."""
    model = _resolve_model(config_path, model_id)
    run_dir = Path(out_dir) / "ask"
    run_dir.mkdir(parents=True, exist_ok=True)
    gateway = _build_gateway(model, log_path=run_dir / "requests.jsonl")
    cfg = PipelineConfig(
        gateway=gateway,
        model=model,
        portal=_build_portal(portal, cache_dir),
        out_dir=run_dir,
        mode="auto_confirm" if auto_confirm else "interactive",
    )

    def confirm(substitution) -> bool:
        return click.confirm(
            f'Replace "{substitution.original}" with "{substitution.replacement}" '
            f"({substitution.category})?",
            default=True,
        )

    try:
        result = run_pipeline(
            query, cfg, ablation=AblationMode.from_flag(ablation_flag), confirm=confirm
        )
    except PipelineFailed as exc:
        click.echo(f"pipeline failed: {exc}", err=True)
        sys.exit(1)
    click.echo(result.report.render_markdown())
    click.echo(f"\nArtifacts written to {run_dir}", err=True)


def _suite_runner(config_path, model_ids, portal, cache_dir, out_dir):
    """Build the (model_id, query, mode) -> report-markdown runner for suites."""
    path = Path(config_path) if config_path else _default_config_path()
    configs = load_model_configs(path)
    selected = {m: configs[m] for m in model_ids} if model_ids else configs
    for m in model_ids or []:
        if m not in configs:
            raise click.UsageError(f"unknown model {m!r}")
    portal_client = _build_portal(portal, cache_dir)

    def run_one(model_id: str, query: BenchmarkQuery, mode: str | None) -> str | None:
        model = selected[model_id]
        run_dir = Path(out_dir) / model_id.replace("/", "_") / (mode or "full") / query.id
        gateway = _build_gateway(model, log_path=None)
        cfg = PipelineConfig(
            gateway=gateway,
            model=model,
            portal=portal_client,
            out_dir=run_dir,
            mode="auto_confirm",
        )
        try:
            result = run_pipeline(query.query_text, cfg, ablation=AblationMode.from_flag(mode))
        except Exception:
            return None
        return result.report.render_markdown()

    return selected, run_one


@main.command("eval")
@click.option("--benchmark", "benchmark_path", required=True, type=click.Path(exists=True))
@click.option("--judge-model", "judge_id", default=None)
@_common_options
def eval_cmd(benchmark_path, judge_id, config_path, model_id, portal, cache_dir, out_dir):
    """Score full-pipeline reports on the rubric over a benchmark."""
    queries = load_benchmark(benchmark_path)
    model = _resolve_model(config_path, model_id)
    judge = _resolve_model(config_path, judge_id or model.model_id)
    selected, run_one = _suite_runner(
        config_path, [model.model_id], portal, cache_dir, out_dir
    )
    judge_gateway = _build_gateway(judge)
    tables = run_ablation_suite(
        queries,
        selected,
        modes=[],
        run_one=run_one,
        judge_gateway=judge_gateway,
        judge=judge,
        out_dir=Path(out_dir) / "tables",
    )
    click.echo(tables.to_markdown())
    if not tables.rubric_means:
        click.echo("no runs completed", err=True)
        sys.exit(1)


@main.command()
@click.option("--benchmark", "benchmark_path", required=True, type=click.Path(exists=True))
@click.option("--mode", "modes", multiple=True,
              type=click.Choice(ABLATION_MODES),
              help="Ablation mode(s); default: all four.")
@click.option("--judge-model", "judge_id", default=None)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--parallelism", default=1, show_default=True, type=int)
@_common_options
def ablate(benchmark_path, modes, judge_id, seed, parallelism,
           config_path, model_id, portal, cache_dir, out_dir):
    """Run full-vs-ablated comparisons and emit win-rate tables."""
    queries = load_benchmark(benchmark_path)
    modes = list(modes) or list(ABLATION_MODES)
    model = _resolve_model(config_path, model_id)
    judge = _resolve_model(config_path, judge_id or model.model_id)
    selected, run_one = _suite_runner(
        config_path, [model.model_id], portal, cache_dir, out_dir
    )

    if parallelism > 1:
        # pre-compute all pipeline runs concurrently; judging stays sequential
        cells = [
            (m, q, mode)
            for m in selected
            for q in queries
            for mode in [None, *modes]
        ]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            reports = dict(
                zip(cells, pool.map(lambda cell: run_one(*cell), cells))
            )
        inner_run_one = run_one

        def run_one(model_id, query, mode):  # noqa: F811 - cached wrapper
            key = (model_id, query, mode)
            return reports[key] if key in reports else inner_run_one(model_id, query, mode)

    judge_gateway = _build_gateway(judge)
    tables = run_ablation_suite(
        queries,
        selected,
        modes=modes,
        run_one=run_one,
        judge_gateway=judge_gateway,
        judge=judge,
        seed=seed,
        out_dir=Path(out_dir) / "tables",
    )
    click.echo(tables.to_markdown())
    if not tables.win_rates:
        click.echo("no comparisons completed", err=True)
        sys.exit(1)


@main.command()
@click.option("--full", "full_path", required=True, type=click.Path(exists=True))
@click.option("--ablated", "ablated_path", required=True, type=click.Path(exists=True))
@click.option("--query", "query_text", required=True)
@click.option("--judge-model", "judge_id", default=None)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--config", "config_path", default=None)
def judge(full_path, ablated_path, query_text, judge_id, seed, config_path):
    """Pairwise-judge one full/ablated report pair."""
    judge_model = _resolve_model(config_path, judge_id)
    gateway = _build_gateway(judge_model)
    query = BenchmarkQuery(
        id="adhoc", query_text=query_text, domain="other", difficulty="medium"
    )
    records, overall = judge_pairwise(
        gateway,
        judge_model,
        Path(full_path).read_text(encoding="utf-8"),
        Path(ablated_path).read_text(encoding="utf-8"),
        query,
        seed,
    )
    for record in records:
        click.echo(json.dumps(record.as_dict()))
    click.echo(f"overall winner: {overall}")


@main.group()
def cache() -> None:
    """Dataset cache maintenance."""


@cache.command("clear")
@click.option("--cache-dir", default=".openanalyst-cache", show_default=True)
def cache_clear(cache_dir):
    """Drop every cached dataset."""
    client = PortalClient("https://unused.portal", cache_dir, transport=None)
    count = client.clear_cache()
    click.echo(f"cleared {count} cached dataset(s)")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True, type=int)
@_common_options
def serve(host, port, config_path, model_id, portal, cache_dir, out_dir):
    """Serve the pipeline over HTTP for the companion UI."""
    import uvicorn

    from .service import create_app

    model = _resolve_model(config_path, model_id)
    portal_client = _build_portal(portal, cache_dir)

    def cfg_factory(session) -> PipelineConfig:
        run_dir = Path(out_dir) / "sessions" / session.id
        gateway = _build_gateway(model, log_path=None)
        return PipelineConfig(
            gateway=gateway, model=model, portal=portal_client, out_dir=run_dir
        )

    uvicorn.run(create_app(cfg_factory), host=host, port=port)


if __name__ == "__main__":
    main()
