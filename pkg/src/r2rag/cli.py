"""Command-line interface: serve, ask, replay, classify, train, eval."""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from .classifier import LogRegModel, evaluate, featurize, lr_predict, lr_train
from .config import AppConfig, load_config
from .engine import ModelRoute, RagEngine
from .answergen import PipelineKind
from .evalkit import bundled_scenario_path, build_engine_for_scenario, load_scenario, run_scenario
from .providers import HttpChatClient, HttpRerankClient, HttpSearchClient, FixtureSearchClient


def build_engine(cfg: AppConfig) -> RagEngine:
    providers = cfg.providers
    if providers.mode == "mock":
        scenario_path = providers.mock_scenario
        if not scenario_path:
            raise click.ClickException("providers.mode=mock requires providers.mock_scenario")
        scenario = load_scenario(scenario_path)
        engine, _, _ = build_engine_for_scenario(scenario)
        engine.request_deadline_s = cfg.server.request_deadline_s
        return engine

    chat = HttpChatClient(
        base_url=providers.inference_url,
        api_key=providers.inference_api_key,
        timeout_s=providers.chat_timeout_s,
        retries=providers.retries,
    )
    rerank = HttpRerankClient(
        base_url=providers.reranker_url,
        model_id=cfg.pipeline.reranker_model_id,
        api_key=providers.reranker_api_key,
        timeout_s=providers.rerank_timeout_s,
        retries=providers.retries,
    )
    if providers.search_fixture:
        search = FixtureSearchClient(providers.search_fixture)
    else:
        search = HttpSearchClient(
            base_url=providers.search_url,
            api_key=providers.search_api_key,
            timeout_s=providers.search_timeout_s,
            retries=providers.retries,
        )
    logreg = None
    if cfg.routing.method == "logreg" and cfg.routing.logreg_model_path:
        logreg = LogRegModel.load(cfg.routing.logreg_model_path)
    extra = [
        ModelRoute(
            model_id=v["model_id"],
            forced_pipeline=PipelineKind(v["pipeline"]) if v.get("pipeline") else None,
            description=v.get("description", ""),
        )
        for v in cfg.variants
    ]
    return RagEngine(
        config=cfg.pipeline,
        chat_client=chat,
        rerank_client=rerank,
        search_client=search,
        routing_method=cfg.routing.method,
        logreg_model=logreg,
        request_deadline_s=cfg.server.request_deadline_s,
        extra_models=extra,
    )


@click.group()
def main():
    """Routing RAG engine: serve it, query it, or replay offline scenarios."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="YAML or JSON config file.")
def serve(config_path: Optional[str]):
    """Start the HTTP server."""
    import uvicorn

    from .server import create_app

    cfg = load_config(config_path)
    engine = build_engine(cfg)
    app = create_app(
        engine,
        data_dir=cfg.server.data_dir,
        request_deadline_s=cfg.server.request_deadline_s,
        static_dir=cfg.server.static_dir,
    )
    uvicorn.run(app, host=cfg.server.host, port=cfg.server.port, log_level="info")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--model", "model_id", default="r2rag", show_default=True)
@click.option("--query", required=True)
def ask(config_path: Optional[str], model_id: str, query: str):
    """One-shot query; prints the AnswerResult JSON."""
    cfg = load_config(config_path)
    engine = build_engine(cfg)
    result = engine.run(query, model_id=model_id)
    click.echo(json.dumps(result.to_dict(), indent=2, ensure_ascii=False))


@main.command()
@click.option("--scenario", "scenario_ref", required=True, help="Scenario file path or bundled scenario name.")
@click.option("--verbose", is_flag=True, default=False)
def replay(scenario_ref: str, verbose: bool):
    """Run a scripted scenario against mock providers and check assertions."""
    path = Path(scenario_ref)
    if not path.exists():
        path = bundled_scenario_path(scenario_ref)
    if not path.exists():
        raise click.ClickException(f"scenario not found: {scenario_ref}")
    result = run_scenario(path)
    if verbose:
        click.echo(result.transcript)
    status = "PASS" if result.passed else "FAIL"
    click.echo(f"[{status}] scenario {result.name}")
    for failure in result.failures:
        click.echo(f"  - {failure}")
    sys.exit(0 if result.passed else 1)


def _read_labeled_tsv(path: str) -> list[tuple[str, bool]]:
    rows = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise click.ClickException(f"{path}:{line_no}: expected 'label<TAB>query'")
        label_raw = parts[0].strip().lower()
        label = label_raw in ("complex", "true", "1", "yes")
        rows.append((parts[1].strip(), label))
    return rows


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True), help="TSV: label<TAB>query.")
@click.option("--out", "model_path", required=True, type=click.Path())
@click.option("--learning-rate", default=0.5, show_default=True)
@click.option("--epochs", default=500, show_default=True)
@click.option("--l2", default=0.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train(data_path: str, model_path: str, learning_rate: float, epochs: int, l2: float, seed: int):
    """Train the logistic-regression router on a labeled TSV."""
    rows = _read_labeled_tsv(data_path)
    data = [(featurize(text), label) for text, label in rows]
    model = lr_train(data, learning_rate=learning_rate, epochs=epochs, l2=l2, seed=seed)
    model.save(model_path)
    click.echo(f"trained on {len(rows)} examples -> {model_path}")


@main.command("eval")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
def eval_command(data_path: str, model_path: str):
    """Accuracy/precision/recall of a trained router on a labeled TSV."""
    rows = _read_labeled_tsv(data_path)
    model = LogRegModel.load(model_path)
    metrics = evaluate(model, ((featurize(text), label) for text, label in rows))
    click.echo(json.dumps(metrics, indent=2))


@main.command()
@click.option("--query", required=True)
@click.option("--method", type=click.Choice(["llm", "logreg"]), default="logreg", show_default=True)
@click.option("--model-file", "model_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def classify(query: str, method: str, model_path: Optional[str], config_path: Optional[str]):
    """Classify one query as simple or complex."""
    if method == "logreg":
        if not model_path:
            raise click.ClickException("--model-file is required for logreg classification")
        model = LogRegModel.load(model_path)
        decision = lr_predict(model, featurize(query))
    else:
        cfg = load_config(config_path)
        engine = build_engine(cfg)
        ctx = engine.new_context()
        decision = engine.route(ctx, query)
    click.echo(json.dumps(decision.to_dict(), indent=2))


if __name__ == "__main__":
    main()
