"""Iterative evidence-accumulating loop for complex queries.

Each iteration runs the shared variants/search/rerank stage with agent
settings, then an LLM review judges whether the accumulated evidence covers
the question. State carries the used queries (to avoid repetition), the
useful-document registry with running summaries, the accumulated token count
and the coverage flag. The loop stops when the token budget overflows,
coverage is reached, or the iteration cap hits; the cap makes termination
unconditional because every path through the loop body increments the
iteration counter.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from . import prompts
from .answergen import AnswerResult, PipelineKind, build_context_block, generate_answer
from .core import Budget, BudgetUnit, Document, PipelineConfig, Query, estimate_tokens
from .errors import MalformedVerdictError
from .providers import ChatRequest
from .retrieval import DocRegistry, generate_variants, rerank, search_all, select_within_budget
from .runtime import RunContext
from .tagparse import CoverageVerdict, parse_verdict


class StopReason(Enum):
    TOKEN_BUDGET = "token-budget"
    COVERAGE = "coverage"
    ITERATION_CAP = "iteration-cap"


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    reasons: frozenset[StopReason]

    def reason_names(self) -> tuple[str, ...]:
        return tuple(sorted(r.value for r in self.reasons))


@dataclass
class AgentState:
    """Loop state, confined to one request."""

    original_query: str
    current_query: str
    registry: DocRegistry = field(default_factory=DocRegistry)
    iteration: int = 0
    used_queries: list[str] = field(default_factory=list)
    useful_docs: dict[int, Document] = field(default_factory=dict)  # global id -> selected text
    summaries: list[str] = field(default_factory=list)
    accumulated_tokens: int = 0
    coverage: int = 0

    def __post_init__(self):
        if not self.used_queries:
            self.used_queries = [self.original_query]

    def query_used(self, query: str) -> bool:
        folded = query.casefold()
        return any(q.casefold() == folded for q in self.used_queries)

    def record_query(self, query: str) -> None:
        if not self.query_used(query):
            self.used_queries.append(query)

    @property
    def useful_doc_ids(self) -> list[int]:
        return list(self.useful_docs)


def should_stop(state: AgentState, cfg: PipelineConfig) -> StopDecision:
    """Stop when tokens exceed the threshold (strict), coverage is reached,
    or the iteration count reaches the cap. Pure function of the state."""
    reasons = set()
    if state.accumulated_tokens > cfg.stop_token_threshold:
        reasons.add(StopReason.TOKEN_BUDGET)
    if state.coverage == 1:
        reasons.add(StopReason.COVERAGE)
    if state.iteration >= cfg.iteration_cap:
        reasons.add(StopReason.ITERATION_CAP)
    return StopDecision(stop=bool(reasons), reasons=frozenset(reasons))


_STOPWORD_RE = re.compile(
    r"\b(?:these|documents?|discuss(?:es)?|the|a|an|of|in|on|for|and|or|to|with|is|are|about)\b",
    re.IGNORECASE,
)


def fallback_reformulation(state: AgentState) -> str:
    """Deterministic reformulation used when a verdict omits its new query or
    repeats one: keeps the loop live without another model call."""
    candidates = []
    if state.summaries:
        terms = _STOPWORD_RE.sub(" ", state.summaries[0])
        salient = " ".join(dict.fromkeys(t for t in terms.split() if len(t) > 2))
        salient_terms = " ".join(salient.split()[:6])
        if salient_terms:
            candidates.append(f"{state.original_query} {salient_terms}")
    candidates.append(f"{state.original_query} background OR overview")
    candidates.append(f"{state.original_query} (retry {state.iteration + 1})")
    for candidate in candidates:
        if not state.query_used(candidate):
            return candidate
    return f"{state.original_query} (retry {state.iteration + 1}.{len(state.used_queries)})"


def review_documents(ctx: RunContext, state: AgentState, fresh: list[Document]) -> CoverageVerdict:
    """Ask the reviewer whether accumulated evidence suffices.

    Fresh documents are numbered with local ids 1..n in the prompt; ids the
    model cites outside that range are dropped with a trace flag. A verdict
    missing its mandatory tag degrades to a synthetic insufficient verdict
    carrying a fallback reformulation.
    """
    block = build_context_block(fresh)
    system, user = prompts.review_messages(
        question=state.original_query,
        next_query=state.current_query,
        prev_questions=state.used_queries,
        prev_summaries=state.summaries,
        search_results=block,
    )
    request = ChatRequest(
        model_id=ctx.config.generator_model_id,
        system_prompt=system,
        user_prompt=user,
        temperature=ctx.config.temperature,
        top_p=ctx.config.top_p,
        thinking_enabled=True,
        purpose="review",
    )
    reply = ctx.chat(request)
    try:
        verdict = parse_verdict(reply)
    except MalformedVerdictError:
        ctx.flag("verdict-malformed")
        return CoverageVerdict(
            is_sufficient=False,
            new_query=fallback_reformulation(state),
            useful_doc_local_ids=(),
            summary=None,
            raw_text=reply,
        )
    in_range = tuple(i for i in verdict.useful_doc_local_ids if i <= len(fresh))
    if len(in_range) != len(verdict.useful_doc_local_ids):
        ctx.flag("useful-id-out-of-range")
        verdict = CoverageVerdict(
            is_sufficient=verdict.is_sufficient,
            new_query=verdict.new_query,
            useful_doc_local_ids=in_range,
            summary=verdict.summary,
            raw_text=verdict.raw_text,
        )
    return verdict


def apply_verdict(
    state: AgentState,
    verdict: CoverageVerdict,
    local_docs: dict[int, Document],
    cfg: PipelineConfig,
) -> AgentState:
    """Fold a review verdict into the state and advance the iteration.

    Newly useful documents append in order (already-useful ids are skipped,
    leaving the token count unchanged); the summary accumulates; coverage
    mirrors the verdict. On an insufficient verdict the new query becomes
    current unless already used, in which case a fallback reformulation is
    substituted.
    """
    for local_id in verdict.useful_doc_local_ids:
        doc = local_docs.get(local_id)
        if doc is None or doc.doc_id is None or doc.doc_id in state.useful_docs:
            continue
        state.useful_docs[doc.doc_id] = doc
        state.accumulated_tokens += estimate_tokens(doc.text, cfg.chars_per_token)
    if verdict.summary:
        state.summaries.append(verdict.summary)
    state.coverage = 1 if verdict.is_sufficient else 0
    if not verdict.is_sufficient:
        new_query = verdict.new_query
        if not new_query or state.query_used(new_query):
            new_query = fallback_reformulation(state)
        state.current_query = new_query
        state.record_query(new_query)
    state.iteration += 1
    return state


def run_agent(ctx: RunContext, query: Query) -> AnswerResult:
    cfg = ctx.config
    state = AgentState(original_query=query.text, current_query=query.text)

    decision = should_stop(state, cfg)
    while not decision.stop:
        step = state.iteration + 1

        with ctx.stage(f"iter{step}:variants") as st:
            variant_set = generate_variants(
                ctx, state.current_query, cfg.agent_variants_max, prior_queries=state.used_queries
            )
            st.summary = f"{len(variant_set.variants)} variants"

        with ctx.stage(f"iter{step}:search") as st:
            docs = search_all(ctx, variant_set, state.registry, cfg.per_query_doc_limit)
            # every issued query counts as used, for repetition avoidance
            for variant in variant_set.variants:
                state.record_query(variant)
            st.summary = f"{len(docs)} new documents"
            if not docs:
                st.note("empty-retrieval")

        if not docs:
            # no evidence this round: reformulate and burn the iteration
            state.current_query = fallback_reformulation(state)
            state.record_query(state.current_query)
            state.iteration += 1
            decision = should_stop(state, cfg)
            continue

        with ctx.stage(f"iter{step}:rerank") as st:
            ranked = rerank(ctx, state.current_query, docs)
            st.summary = f"{len(ranked)} documents scored"

        with ctx.stage(f"iter{step}:select") as st:
            fresh = select_within_budget(ranked, cfg.agent_doc_budget, cfg.chars_per_token)
            st.summary = f"{len(fresh)} documents within budget"

        with ctx.stage(f"iter{step}:review") as st:
            verdict = review_documents(ctx, state, fresh)
            local_docs = {position: doc for position, doc in enumerate(fresh, start=1)}
            apply_verdict(state, verdict, local_docs, cfg)
            st.summary = (
                f"sufficient={verdict.is_sufficient} useful={len(verdict.useful_doc_local_ids)} "
                f"tokens={state.accumulated_tokens}"
            )

        decision = should_stop(state, cfg)

    with ctx.stage("generate") as st:
        docs = list(state.useful_docs.values())
        if docs:
            final_budget = Budget(
                BudgetUnit.TOKENS,
                max(1, cfg.context_window_tokens - cfg.answer_reserve_tokens),
            )
            docs = select_within_budget(docs, final_budget, cfg.chars_per_token)
        result = generate_answer(ctx, query, docs, PipelineKind.VANILLA_AGENT)
        st.summary = "stopped: " + ",".join(decision.reason_names())
    result.stop_reasons = decision.reason_names()
    return result
