"""Prompt templates, stored as verbatim assets and rendered by slot name.

Rendering is a single pass over the template: substituted values are never
re-scanned, so placeholder-looking text inside a document or query stays
literal. Unknown slots in a template are left untouched.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Iterable

_PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")

DEFAULT_RERANK_INSTRUCTION = (
    "Given the web search query, is the retrieved document\n"
    "(1) from a high quality and relevant website based on the URL,\n"
    "(2) published recently, and\n"
    "(3) contains key information that helps answering the query?"
)


@lru_cache(maxsize=None)
def load_asset(name: str) -> str:
    return resources.files(__package__).joinpath("assets", name).read_text(encoding="utf-8")


def render(template: str, **values: str) -> str:
    def substitute(match: re.Match) -> str:
        slot = match.group(1)
        return values[slot] if slot in values else match.group(0)

    return _PLACEHOLDER_RE.sub(substitute, template)


def classifier_messages(question: str) -> tuple[str, str]:
    system = load_asset("classifier_system.txt")
    user = render(load_asset("classifier_user.txt"), question=question)
    return system, user


def variants_messages(query: str) -> tuple[str, str]:
    system = load_asset("variants_system.txt")
    user = render(load_asset("variants_user.txt"), query=query)
    return system, user


def reranker_prompt(
    query: str,
    url: str,
    document_text: str,
    instruction: str = DEFAULT_RERANK_INSTRUCTION,
) -> str:
    return render(
        load_asset("reranker.txt"),
        instruction=instruction,
        query=query,
        url=url,
        document_text=document_text,
    )


def format_previous_queries(queries: Iterable[str]) -> str:
    queries = list(queries)
    if not queries:
        return ""
    lines = ["Previous search queries (do not repeat them):"]
    lines.extend(f"- {q}" for q in queries)
    return "\n".join(lines)


def format_previous_summaries(summaries: Iterable[str]) -> str:
    summaries = list(summaries)
    if not summaries:
        return ""
    lines = ["Summaries of useful documents collected in previous turns:"]
    lines.extend(f"- {s}" for s in summaries)
    return "\n".join(lines)


def review_messages(
    question: str,
    next_query: str,
    prev_questions: Iterable[str],
    prev_summaries: Iterable[str],
    search_results: str,
) -> tuple[str, str]:
    system = render(
        load_asset("review_system.txt"),
        question=question,
        next_query=next_query,
        query=next_query,
        prev_questions=format_previous_queries(prev_questions),
        prev_docs_summaries=format_previous_summaries(prev_summaries),
        search_results=search_results,
    )
    return system, question


def answer_messages(
    question: str,
    current_time: str,
    knowledge_cutoff: str,
    search_results: str,
) -> tuple[str, str]:
    system = render(
        load_asset("answer_system.txt"),
        current_time=current_time,
        knowledge_cutoff=knowledge_cutoff,
        search_results=search_results,
    )
    user = render(load_asset("answer_user.txt"), question=question)
    return system, user
