"""Single-pass pipeline for simple queries.

Variants, parallel search, pointwise rerank, word-budget selection, one
generation call. Partial failures degrade with trace flags; only an
all-providers-down condition aborts the request.
"""

from __future__ import annotations

from .answergen import AnswerResult, PipelineKind, generate_answer
from .core import Query
from .retrieval import DocRegistry, generate_variants, rerank, search_all, select_within_budget
from .runtime import RunContext


def run_vanilla(ctx: RunContext, query: Query) -> AnswerResult:
    cfg = ctx.config
    registry = DocRegistry()

    with ctx.stage("variants") as st:
        variant_set = generate_variants(ctx, query.text, cfg.vanilla_variants_max)
        st.summary = f"{len(variant_set.variants)} variants"

    with ctx.stage("search") as st:
        docs = search_all(ctx, variant_set, registry, cfg.per_query_doc_limit)
        st.summary = f"{len(docs)} documents"
        if not docs:
            st.note("empty-retrieval")

    selected = []
    if docs:
        with ctx.stage("rerank") as st:
            ranked = rerank(ctx, query.text, docs)
            st.summary = f"{len(ranked)} documents scored"
        with ctx.stage("select") as st:
            selected = select_within_budget(ranked, cfg.vanilla_doc_budget, cfg.chars_per_token)
            st.summary = f"{len(selected)} documents within budget"

    with ctx.stage("generate") as st:
        result = generate_answer(ctx, query, selected, PipelineKind.VANILLA_RAG)
        st.summary = f"{len(result.text)} chars, {result.citation_report.valid} valid citations"
    return result
