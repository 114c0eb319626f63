"""Final-answer assembly: context block rendering, generation, citation checks.

Documents are rendered with 1-based local positions; the model cites them as
[ID]. Dangling citations (an [ID] outside the context) are reported, never
repaired or removed: the served text streams verbatim and the report feeds
the UI and logs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from . import prompts
from .core import Document, Query, StageTrace
from .providers import ChatRequest
from .runtime import RunContext
from .tagparse import strip_think_blocks


class PipelineKind(Enum):
    VANILLA_RAG = "vanilla-rag"
    VANILLA_AGENT = "vanilla-agent"


@dataclass(frozen=True)
class CitationReport:
    total_citations: int
    valid: int
    dangling: tuple[int, ...]
    uncited_docs: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "total_citations": self.total_citations,
            "valid": self.valid,
            "dangling": list(self.dangling),
            "uncited_docs": list(self.uncited_docs),
        }


@dataclass
class AnswerResult:
    text: str
    cited_doc_ids: list[int]
    citation_report: CitationReport
    pipeline: PipelineKind
    routing: Optional[object] = None  # RoutingDecision, attached by the engine
    traces: list[StageTrace] = field(default_factory=list)
    sources: list[dict] = field(default_factory=list)
    stop_reasons: tuple[str, ...] = ()
    timed_out: bool = False

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "cited_doc_ids": self.cited_doc_ids,
            "citation_report": self.citation_report.to_dict(),
            "pipeline": self.pipeline.value,
            "routing": self.routing.to_dict() if self.routing is not None else None,
            "traces": [t.to_dict() for t in self.traces],
            "sources": self.sources,
            "stop_reasons": list(self.stop_reasons),
            "timed_out": self.timed_out,
        }


def build_context_block(docs: Sequence[Document]) -> str:
    """Render documents as the <search-results> block the prompts embed.

    Each document appears as ``Webpage ID=[k] URL=[url] Date=[date]:`` with k
    its 1-based position; a missing date renders as ``Date=[unknown]``.
    """
    parts = ["<search-results>\n"]
    for position, doc in enumerate(docs, start=1):
        date = doc.date if doc.date else "unknown"
        parts.append(f"Webpage ID=[{position}] URL=[{doc.url}] Date=[{date}]:\n\n{doc.text}\n\n")
    parts.append("</search-results>")
    return "".join(parts)


_CITATION_RE = re.compile(r"\[(\d+(?:\s*,\s*\d+)*)\]")


def _unique_citation_ids(text: str) -> list[int]:
    """All unique integers cited as [k] or [1, 2], in first-occurrence order.
    Non-integer bracket spans ("[sic]") are ignored."""
    out: list[int] = []
    seen: set[int] = set()
    for match in _CITATION_RE.finditer(text):
        for fragment in match.group(1).split(","):
            value = int(fragment.strip())
            if value not in seen:
                seen.add(value)
                out.append(value)
    return out


def validate_citations(text: str, context_size: int) -> CitationReport:
    """Classify every cited id as valid (inside the context) or dangling.
    Counts are over unique cited ids."""
    cited = _unique_citation_ids(text)
    cited_set = set(cited)
    valid = [c for c in cited if 1 <= c <= context_size]
    dangling = tuple(c for c in cited if not (1 <= c <= context_size))
    uncited = tuple(p for p in range(1, context_size + 1) if p not in cited_set)
    return CitationReport(
        total_citations=len(cited),
        valid=len(valid),
        dangling=dangling,
        uncited_docs=uncited,
    )


def generate_answer(
    ctx: RunContext,
    query: Query,
    docs: Sequence[Document],
    pipeline: PipelineKind,
) -> AnswerResult:
    """Fill the answer prompt over ``docs``, call the generator, validate
    citations. This is the one stage that does not degrade: an inference
    failure here surfaces to the caller."""
    block = build_context_block(docs)
    system, user = prompts.answer_messages(
        question=query.text,
        current_time=str(ctx.clock.now_utc()),
        knowledge_cutoff=ctx.config.knowledge_cutoff,
        search_results=block,
    )
    request = ChatRequest(
        model_id=ctx.config.generator_model_id,
        system_prompt=system,
        user_prompt=user,
        temperature=ctx.config.temperature,
        top_p=ctx.config.top_p,
        thinking_enabled=True,
        purpose="answer",
    )
    reply = ctx.chat(request)
    text = strip_think_blocks(reply).strip()
    report = validate_citations(text, len(docs))
    if report.dangling:
        ctx.flag("dangling-citations")
    valid_positions = [
        c
        for c in _unique_citation_ids(text)
        if 1 <= c <= len(docs)
    ]
    cited_global = []
    for position in valid_positions:
        doc = docs[position - 1]
        cited_global.append(doc.doc_id if doc.doc_id is not None else position)
    sources = [
        {
            "position": position,
            "doc_id": doc.doc_id if doc.doc_id is not None else position,
            "url": doc.url,
            "date": doc.date,
        }
        for position, doc in enumerate(docs, start=1)
    ]
    return AnswerResult(
        text=text,
        cited_doc_ids=cited_global,
        citation_report=report,
        pipeline=pipeline,
        sources=sources,
    )
