"""Configuration: structured file (YAML or JSON) plus environment overrides.

Environment variables use the form R2RAG_<SECTION>_<FIELD>, e.g.
R2RAG_PIPELINE_TEMPERATURE=0.7 or R2RAG_PROVIDERS_INFERENCE_URL=http://...
The full key list is documented in the README.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .core import Budget, BudgetUnit, PipelineConfig

_SECTIONS = ("pipeline", "providers", "server", "routing")


@dataclass
class ProviderConfig:
    mode: str = "http"  # "http" or "mock"
    inference_url: str = "http://localhost:8000/v1"
    inference_api_key: Optional[str] = None
    reranker_url: str = "http://localhost:8000/v1"
    reranker_api_key: Optional[str] = None
    search_url: str = "http://localhost:9200"
    search_api_key: Optional[str] = None
    search_fixture: Optional[str] = None  # JSONL corpus path; used when set
    mock_scenario: Optional[str] = None  # scenario file backing mock mode
    chat_timeout_s: float = 120.0
    rerank_timeout_s: float = 15.0
    search_timeout_s: float = 20.0
    retries: int = 2


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "./data"
    request_deadline_s: float = 600.0
    static_dir: Optional[str] = None


@dataclass
class RoutingConfig:
    method: str = "llm"  # "llm" or "logreg"
    logreg_model_path: Optional[str] = None


@dataclass
class AppConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    providers: ProviderConfig = field(default_factory=ProviderConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    variants: list[dict] = field(default_factory=list)  # extra model routes


def pipeline_config_from_dict(raw: dict) -> PipelineConfig:
    """Build a PipelineConfig from flat keys; budgets are given as
    vanilla_doc_budget_words / agent_doc_budget_tokens integers."""
    kwargs: dict[str, Any] = {}
    simple_fields = {
        f.name: f.type
        for f in fields(PipelineConfig)
        if f.name not in ("vanilla_doc_budget", "agent_doc_budget")
    }
    for name in simple_fields:
        if name in raw:
            kwargs[name] = raw[name]
    if "vanilla_doc_budget_words" in raw:
        kwargs["vanilla_doc_budget"] = Budget(BudgetUnit.WORDS, int(raw["vanilla_doc_budget_words"]))
    if "agent_doc_budget_tokens" in raw:
        kwargs["agent_doc_budget"] = Budget(BudgetUnit.TOKENS, int(raw["agent_doc_budget_tokens"]))
    return PipelineConfig(**kwargs)


def _coerce(value: str, current: Any) -> Any:
    if isinstance(current, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def _apply_env_overrides(raw: dict) -> dict:
    for key, value in os.environ.items():
        if not key.startswith("R2RAG_"):
            continue
        remainder = key[len("R2RAG_"):].lower()
        section = next((s for s in _SECTIONS if remainder.startswith(s + "_")), None)
        if section is None:
            continue
        field_name = remainder[len(section) + 1:]
        raw.setdefault(section, {})[field_name] = value
    return raw


def _build_section(cls, raw: dict, env_typed: bool = True):
    kwargs = {}
    defaults = cls()
    for f in fields(cls):
        if f.name in raw:
            value = raw[f.name]
            if isinstance(value, str) and env_typed:
                value = _coerce(value, getattr(defaults, f.name))
            kwargs[f.name] = value
    return cls(**kwargs)


def load_config(path: Optional[str | Path] = None) -> AppConfig:
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        if str(path).endswith((".yaml", ".yml")):
            raw = yaml.safe_load(text) or {}
        else:
            raw = json.loads(text)
    raw = _apply_env_overrides(raw)

    pipeline_raw = dict(raw.get("pipeline", {}))
    # env values arrive as strings; coerce against known defaults
    defaults = PipelineConfig()
    for key, value in list(pipeline_raw.items()):
        if isinstance(value, str) and hasattr(defaults, key):
            pipeline_raw[key] = _coerce(value, getattr(defaults, key))
        elif isinstance(value, str) and key in ("vanilla_doc_budget_words", "agent_doc_budget_tokens"):
            pipeline_raw[key] = int(value)

    return AppConfig(
        pipeline=pipeline_config_from_dict(pipeline_raw),
        providers=_build_section(ProviderConfig, raw.get("providers", {})),
        server=_build_section(ServerConfig, raw.get("server", {})),
        routing=_build_section(RoutingConfig, raw.get("routing", {})),
        variants=list(raw.get("variants", [])),
    )
