"""The shared query-variants / retrieval / reranking stage.

Both pipelines run this stage; they differ only in variant cap and budget
unit. Variant searches and rerank scoring fan out concurrently with a
bounded number of in-flight calls; merge order is fixed by variant order and
then provider rank order, never by completion order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

from . import prompts
from .core import (
    Budget,
    DEFAULT_CHARS_PER_TOKEN,
    Document,
    MIN_TAIL_UNITS,
    measure,
    truncate_to_budget,
)
from .errors import AllSearchesFailedError, ProviderError
from .providers import ChatRequest, SearchRequest, score_pair
from .runtime import RunContext, parallel_map
from .tagparse import extract_tag_block, parse_query_list, strip_think_blocks


@dataclass(frozen=True)
class VariantSet:
    original: str
    variants: tuple[str, ...]
    degraded: bool = False

    def __post_init__(self):
        if not self.variants:
            raise ValueError("variant set must be non-empty")
        folded = [v.casefold() for v in self.variants]
        if len(set(folded)) != len(folded):
            raise ValueError("variants must be case-insensitively unique")


class DocRegistry:
    """Per-request document registry assigning dense global ids 1..n.

    Dedup key is the lowercased URL with scheme and trailing slash stripped;
    URL-less documents fall back to a content hash of the first 512
    characters. First retrieval wins on key collision.
    """

    def __init__(self):
        self._docs: dict[int, Document] = {}
        self._keys: dict[str, int] = {}
        self._next_id = 1

    @staticmethod
    def dedup_key(doc: Document) -> str:
        url = doc.url.strip().lower()
        if url:
            for scheme in ("https://", "http://"):
                if url.startswith(scheme):
                    url = url[len(scheme):]
                    break
            return url.rstrip("/")
        return "content:" + hashlib.sha256(doc.text[:512].encode("utf-8")).hexdigest()

    def register(self, doc: Document) -> tuple[Document, bool]:
        """Return (registered document, is_new)."""
        key = self.dedup_key(doc)
        existing = self._keys.get(key)
        if existing is not None:
            return self._docs[existing], False
        registered = doc.with_id(self._next_id)
        self._docs[self._next_id] = registered
        self._keys[key] = self._next_id
        self._next_id += 1
        return registered, True

    def get(self, doc_id: int) -> Optional[Document]:
        return self._docs.get(doc_id)

    def __len__(self) -> int:
        return len(self._docs)

    @property
    def docs(self) -> list[Document]:
        return [self._docs[i] for i in sorted(self._docs)]


def generate_variants(
    ctx: RunContext,
    query: str,
    max_n: int,
    prior_queries: Sequence[str] = (),
) -> VariantSet:
    """Ask the generator for up to ``max_n`` search query variants.

    Variants equal to a previously used query are dropped to avoid
    repetition. An empty or failed generation degrades to the query itself,
    flagged in the trace; this stage never fails a request.
    """
    system, user = prompts.variants_messages(query)
    request = ChatRequest(
        model_id=ctx.config.generator_model_id,
        system_prompt=system,
        user_prompt=user,
        temperature=ctx.config.temperature,
        top_p=ctx.config.top_p,
        thinking_enabled=True,
        purpose="variants",
    )
    try:
        reply = ctx.chat(request)
    except ProviderError:
        ctx.flag("variants-degraded")
        return VariantSet(original=query, variants=(query,), degraded=True)
    block = extract_tag_block(strip_think_blocks(reply), "queries") or ""
    parsed = parse_query_list(block, max_n)
    prior = {p.casefold() for p in prior_queries}
    kept = [v for v in parsed if v.casefold() not in prior]
    if not kept:
        ctx.flag("variants-fallback")
        return VariantSet(original=query, variants=(query,), degraded=True)
    return VariantSet(original=query, variants=tuple(kept))


def search_all(
    ctx: RunContext,
    variant_set: VariantSet,
    registry: DocRegistry,
    limit_per_query: int,
) -> list[Document]:
    """Search every variant concurrently and merge deduplicated results.

    Results merge in variant order, then provider rank order; unseen
    documents get registry ids, dedup-key hits are skipped. One failed
    search degrades to empty for its variant; only all searches failing
    fails the stage.
    """
    ctx.check_deadline()
    requests = [SearchRequest(query_string=v, limit=limit_per_query) for v in variant_set.variants]
    outcomes = parallel_map(
        lambda req: ctx.search_client.search(req),
        requests,
        ctx.config.fanout_concurrency,
    )
    merged: list[Document] = []
    failures = 0
    for variant, (docs, error) in zip(variant_set.variants, outcomes):
        if error is not None:
            failures += 1
            ctx.flag(f"search-failed:{variant}")
            continue
        for doc in docs:
            registered, is_new = registry.register(doc)
            if is_new:
                merged.append(registered)
    if failures and failures == len(variant_set.variants):
        raise AllSearchesFailedError(f"all {failures} variant searches failed")
    return merged


def rerank(ctx: RunContext, query: str, docs: Sequence[Document]) -> list[Document]:
    """Score every (query, doc) pair concurrently and sort by descending
    relevance, stable on ties. A doc whose scoring fails keeps score 0 and a
    trace flag rather than being dropped."""
    if not docs:
        return []
    ctx.check_deadline()
    outcomes = parallel_map(
        lambda doc: score_pair(
            ctx.rerank_client, query, doc, chars_per_token=ctx.config.chars_per_token
        ),
        list(docs),
        ctx.config.fanout_concurrency,
    )
    scored: list[Document] = []
    for doc, (pair, error) in zip(docs, outcomes):
        if error is not None:
            ctx.flag("rerank-degraded")
            scored.append(doc.with_score(0.0))
            continue
        if pair.used_text_fallback:
            ctx.flag("rerank-text-fallback")
        scored.append(doc.with_score(pair.score))
    return sorted(scored, key=lambda d: -(d.score or 0.0))


def select_within_budget(
    ranked: Sequence[Document],
    budget: Budget,
    chars_per_token: int = DEFAULT_CHARS_PER_TOKEN,
) -> list[Document]:
    """Greedily take documents in rank order until the budget is spent.

    A document that would overflow the remaining budget is truncated to fit
    when at least MIN_TAIL_UNITS words/tokens remain, otherwise dropped.
    The top document alone is always returned, truncated to the full budget
    if necessary, so a non-empty input never selects nothing.
    """
    selected: list[Document] = []
    remaining = budget.limit
    for index, doc in enumerate(ranked):
        if remaining <= 0:
            break
        size = measure(doc.text, budget, chars_per_token)
        if size <= remaining:
            selected.append(doc)
            remaining -= size
            continue
        if index == 0 or remaining >= MIN_TAIL_UNITS:
            clipped = truncate_to_budget(doc.text, Budget(budget.unit, remaining), chars_per_token)
            if clipped:
                selected.append(doc.with_text(clipped))
                remaining -= measure(clipped, budget, chars_per_token)
    return selected
