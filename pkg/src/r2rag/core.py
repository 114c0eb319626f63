"""Shared domain types, budgeting arithmetic, and pipeline configuration.

Budgets come in two units: the single-pass pipeline caps context by words
(cheap to estimate), the agent loop caps by tokens (what the model context
window actually meters). Token counts are a chars-per-token estimate, not a
real tokenizer; the estimate only gates budgets, and a tokenizer-backed
estimator can be swapped in behind the same functions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from itertools import islice
from typing import Optional

DEFAULT_CHARS_PER_TOKEN = 4

# Truncating below this many words/tokens adds a citation target without
# usable content, so tail fragments smaller than this are dropped instead.
MIN_TAIL_UNITS = 50


class BudgetUnit(Enum):
    WORDS = "words"
    TOKENS = "tokens"


@dataclass(frozen=True)
class Budget:
    unit: BudgetUnit
    limit: int

    def __post_init__(self):
        if self.limit <= 0:
            raise ValueError(f"budget limit must be positive, got {self.limit}")


@dataclass(frozen=True)
class Query:
    """A user question as received by the server."""

    text: str
    id: str
    received_at: datetime

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty after trimming")


@dataclass(frozen=True)
class Document:
    """A retrieved web document.

    ``doc_id`` is assigned by the per-request registry at first sight and is
    None for documents fresh off a search provider.
    """

    url: str
    text: str
    doc_id: Optional[int] = None
    date: Optional[str] = None
    source_query: str = ""
    score: Optional[float] = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("document text must be non-empty")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValueError(f"document score must be in [0,1], got {self.score}")

    def with_id(self, doc_id: int) -> "Document":
        return replace(self, doc_id=doc_id)

    def with_score(self, score: float) -> "Document":
        return replace(self, score=score)

    def with_text(self, text: str) -> "Document":
        return replace(self, text=text)


@dataclass(frozen=True)
class StageTrace:
    """One executed pipeline stage, for the UI timeline and debugging."""

    stage: str
    started_at: str
    duration_s: float
    summary: str = ""
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "started_at": self.started_at,
            "duration_s": self.duration_s,
            "summary": self.summary,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class PipelineConfig:
    """Engine knobs. Defaults mirror the served system's constants."""

    generator_model_id: str = "Qwen3-4B"
    reranker_model_id: str = "Qwen3-Reranker-0.6B"
    temperature: float = 0.6
    top_p: float = 0.95
    context_window_tokens: int = 25000
    vanilla_variants_max: int = 3
    agent_variants_max: int = 5
    per_query_doc_limit: int = 10
    vanilla_doc_budget: Budget = field(default_factory=lambda: Budget(BudgetUnit.WORDS, 5000))
    agent_doc_budget: Budget = field(default_factory=lambda: Budget(BudgetUnit.TOKENS, 25000))
    stop_token_threshold: int = 20000
    iteration_cap: int = 5
    chars_per_token: int = DEFAULT_CHARS_PER_TOKEN
    fanout_concurrency: int = 8
    answer_reserve_tokens: int = 4000
    knowledge_cutoff: str = "December 2024"

    def __post_init__(self):
        positive = [
            ("context_window_tokens", self.context_window_tokens),
            ("vanilla_variants_max", self.vanilla_variants_max),
            ("agent_variants_max", self.agent_variants_max),
            ("per_query_doc_limit", self.per_query_doc_limit),
            ("stop_token_threshold", self.stop_token_threshold),
            ("iteration_cap", self.iteration_cap),
            ("chars_per_token", self.chars_per_token),
            ("fanout_concurrency", self.fanout_concurrency),
        ]
        for name, value in positive:
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")
        if self.stop_token_threshold >= self.context_window_tokens:
            raise ValueError("stop_token_threshold must be below context_window_tokens")


_WORD_RE = re.compile(r"\S+")


def count_words(text: str) -> int:
    """Count whitespace-separated maximal non-whitespace runs."""
    return len(text.split())


def estimate_tokens(text: str, chars_per_token: int = DEFAULT_CHARS_PER_TOKEN) -> int:
    """Deterministic monotone token estimate: ceil(chars / chars_per_token)."""
    return math.ceil(len(text) / chars_per_token)


def measure(text: str, budget: Budget, chars_per_token: int = DEFAULT_CHARS_PER_TOKEN) -> int:
    if budget.unit is BudgetUnit.WORDS:
        return count_words(text)
    return estimate_tokens(text, chars_per_token)


def truncate_to_budget(
    text: str,
    budget: Budget,
    chars_per_token: int = DEFAULT_CHARS_PER_TOKEN,
) -> str:
    """Truncate ``text`` to a prefix whose measured size fits the budget.

    Word budgets cut at word boundaries. Token budgets cut at character
    granularity, then back up to the previous whitespace if one exists within
    20 characters so citations do not land mid-word. Input already within
    budget is returned unchanged.
    """
    if measure(text, budget, chars_per_token) <= budget.limit:
        return text
    if budget.unit is BudgetUnit.WORDS:
        last = next(islice(_WORD_RE.finditer(text), budget.limit - 1, budget.limit))
        return text[: last.end()]
    cut = budget.limit * chars_per_token
    window_start = max(0, cut - 20)
    window = text[window_start:cut]
    ws_positions = [i for i, ch in enumerate(window) if ch.isspace()]
    if ws_positions:
        backed = window_start + ws_positions[-1]
        if backed > 0:
            cut = backed
    return text[:cut]
