import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from r2rag.core import Budget, BudgetUnit, Document, count_words, estimate_tokens
from r2rag.errors import AllSearchesFailedError
from r2rag.retrieval import (
    DocRegistry,
    VariantSet,
    generate_variants,
    rerank,
    search_all,
    select_within_budget,
)


def doc(url: str, words: int = 10, text: str | None = None) -> Document:
    return Document(url=url, text=text or ("w " * words).strip())


class TestDocRegistry:
    def test_dense_ids_in_order(self):
        registry = DocRegistry()
        a, new_a = registry.register(doc("https://a.example/x"))
        b, new_b = registry.register(doc("https://b.example/y"))
        assert (a.doc_id, b.doc_id) == (1, 2)
        assert new_a and new_b

    def test_scheme_and_trailing_slash_collapse(self):
        registry = DocRegistry()
        first, _ = registry.register(doc("https://a.example/x"))
        second, is_new = registry.register(doc("HTTP://A.example/x/"))
        assert not is_new
        assert second.doc_id == first.doc_id

    def test_first_retrieved_survives(self):
        registry = DocRegistry()
        first, _ = registry.register(Document(url="https://a.example", text="original"))
        again, is_new = registry.register(Document(url="https://a.example", text="different"))
        assert not is_new
        assert again.text == "original"

    def test_content_hash_fallback_without_url(self):
        registry = DocRegistry()
        _, new_a = registry.register(Document(url="", text="same content"))
        _, new_b = registry.register(Document(url="", text="same content"))
        _, new_c = registry.register(Document(url="", text="other content"))
        assert new_a and not new_b and new_c


class TestVariantSet:
    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            VariantSet(original="q", variants=("a", "A"))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            VariantSet(original="q", variants=())


class TestGenerateVariants:
    def test_three_distinct(self, ctx_factory):
        ctx = ctx_factory(replies=[
            {"match": "User question: q", "reply": "<queries>\nv one\nv two\nv three\n</queries>"}
        ])
        vs = generate_variants(ctx, "q", 3)
        assert vs.variants == ("v one", "v two", "v three")
        assert not vs.degraded

    def test_six_lines_capped_at_five(self, ctx_factory):
        ctx = ctx_factory(replies=[
            {"match": "User question: q", "reply": "<queries>\na\nb\nc\nd\ne\nf\n</queries>"}
        ])
        vs = generate_variants(ctx, "q", 5)
        assert vs.variants == ("a", "b", "c", "d", "e")

    def test_only_prior_queries_degrades_to_original(self, ctx_factory):
        ctx = ctx_factory(replies=[
            {"match": "User question: q", "reply": "<queries>\nused one\nused two\n</queries>"}
        ])
        vs = generate_variants(ctx, "q", 5, prior_queries=["Used One", "used two"])
        assert vs.variants == ("q",)
        assert vs.degraded

    def test_missing_block_degrades(self, ctx_factory):
        ctx = ctx_factory(replies=[{"match": "User question: q", "reply": "no xml at all"}])
        vs = generate_variants(ctx, "q", 3)
        assert vs.variants == ("q",)
        assert vs.degraded

    def test_think_block_stripped(self, ctx_factory):
        ctx = ctx_factory(replies=[
            {"match": "User question: q", "reply": "<think>draft<queries>\nzz\n</queries></think><queries>\nreal\n</queries>"}
        ])
        vs = generate_variants(ctx, "q", 3)
        assert vs.variants == ("real",)


def write_overlap_corpus(tmp_path):
    """3 tag groups x 10 docs with 5 urls shared between groups 1 and 2."""
    path = tmp_path / "corpus.jsonl"
    lines = []
    for i in range(10):
        lines.append({"url": f"https://g1.example/{i}", "text": f"doc g1 {i}", "tags": ["alpha"]})
    for i in range(10):
        # first 5 urls repeat group 1's urls
        url = f"https://g1.example/{i}" if i < 5 else f"https://g2.example/{i}"
        lines.append({"url": url, "text": f"doc g2 {i}", "tags": ["beta"]})
    for i in range(10):
        lines.append({"url": f"https://g3.example/{i}", "text": f"doc g3 {i}", "tags": ["gamma"]})
    path.write_text("\n".join(json.dumps(l) for l in lines) + "\n", encoding="utf-8")
    return path


class TestSearchAll:
    def test_overlap_dedup_arithmetic(self, ctx_factory, tmp_path):
        corpus = write_overlap_corpus(tmp_path)
        ctx = ctx_factory(corpus=corpus)
        registry = DocRegistry()
        vs = VariantSet(original="q", variants=("alpha", "beta", "gamma"))
        docs = search_all(ctx, vs, registry, limit_per_query=10)
        assert len(docs) == 25  # 30 fetched, 5 shared urls deduplicated
        assert [d.doc_id for d in docs] == list(range(1, 26))

    def test_merge_order_variant_then_rank(self, ctx_factory, tmp_path):
        corpus = write_overlap_corpus(tmp_path)
        ctx = ctx_factory(corpus=corpus)
        registry = DocRegistry()
        vs = VariantSet(original="q", variants=("gamma", "alpha"))
        docs = search_all(ctx, vs, registry, limit_per_query=3)
        assert [d.url for d in docs] == [
            "https://g3.example/0", "https://g3.example/1", "https://g3.example/2",
            "https://g1.example/0", "https://g1.example/1", "https://g1.example/2",
        ]

    def test_single_variant_failure_degrades(self, ctx_factory, tmp_path):
        corpus = write_overlap_corpus(tmp_path)
        ctx = ctx_factory(corpus=corpus, search_fail=["beta"])
        registry = DocRegistry()
        vs = VariantSet(original="q", variants=("alpha", "beta", "gamma"))
        with ctx.stage("search") as st:
            docs = search_all(ctx, vs, registry, limit_per_query=10)
        assert len(docs) == 20
        assert any("search-failed" in f for f in st.flags)

    def test_all_failures_raise(self, ctx_factory, tmp_path):
        corpus = write_overlap_corpus(tmp_path)
        ctx = ctx_factory(corpus=corpus, search_fail=["alpha", "beta"])
        vs = VariantSet(original="q", variants=("alpha", "beta"))
        with pytest.raises(AllSearchesFailedError):
            search_all(ctx, vs, DocRegistry(), limit_per_query=5)

    def test_result_bounded_by_variants_times_limit(self, ctx_factory, tmp_path):
        corpus = write_overlap_corpus(tmp_path)
        ctx = ctx_factory(corpus=corpus)
        vs = VariantSet(original="q", variants=("alpha", "beta", "gamma"))
        docs = search_all(ctx, vs, DocRegistry(), limit_per_query=10)
        assert len(docs) <= 30


def scripted_rerank_ctx(ctx_factory, scores: dict[str, float]):
    scripted = [
        {"match": url, "yes": math.log(s), "no": math.log(1.0 - s)}
        for url, s in scores.items()
    ]
    return ctx_factory(rerank_mode="scripted", rerank_scripted=scripted)


class TestRerank:
    def test_sorts_by_descending_score(self, ctx_factory):
        docs = [doc("https://a.example"), doc("https://b.example"), doc("https://c.example")]
        ctx = scripted_rerank_ctx(
            ctx_factory,
            {"a.example": 0.2, "b.example": 0.9, "c.example": 0.5},
        )
        ranked = rerank(ctx, "q", docs)
        assert [d.url for d in ranked] == ["https://b.example", "https://c.example", "https://a.example"]
        assert ranked[0].score == pytest.approx(0.9)

    def test_equal_scores_keep_input_order(self, ctx_factory):
        docs = [doc("https://a.example"), doc("https://b.example"), doc("https://c.example")]
        ctx = scripted_rerank_ctx(ctx_factory, {"example": 0.5})
        ranked = rerank(ctx, "q", docs)
        assert [d.url for d in ranked] == [d.url for d in docs]

    def test_single_doc_identity(self, ctx_factory):
        docs = [doc("https://solo.example")]
        ctx = scripted_rerank_ctx(ctx_factory, {"solo": 0.7})
        assert [d.url for d in rerank(ctx, "q", docs)] == ["https://solo.example"]

    def test_failure_scores_zero_not_dropped(self, ctx_factory):
        docs = [doc("https://a.example"), doc("https://b.example")]
        ctx = ctx_factory(rerank_mode="fail")
        with ctx.stage("rerank") as st:
            ranked = rerank(ctx, "q", docs)
        assert len(ranked) == 2
        assert all(d.score == 0.0 for d in ranked)
        assert [d.url for d in ranked] == [d.url for d in docs]
        assert "rerank-degraded" in st.flags

    def test_output_is_permutation(self, ctx_factory):
        rng = random.Random(1)
        docs = [doc(f"https://d{i}.example") for i in range(8)]
        scores = {f"d{i}.example": rng.uniform(0.05, 0.95) for i in range(8)}
        ctx = scripted_rerank_ctx(ctx_factory, scores)
        ranked = rerank(ctx, "q", docs)
        assert sorted(d.url for d in ranked) == sorted(d.url for d in docs)

    def test_empty_input(self, ctx_factory):
        assert rerank(ctx_factory(), "q", []) == []


class TestSelectWithinBudget:
    def test_greedy_fill_with_tail_truncation(self):
        docs = [doc("https://a.example", 3000), doc("https://b.example", 1500), doc("https://c.example", 1000)]
        out = select_within_budget(docs, Budget(BudgetUnit.WORDS, 5000))
        assert len(out) == 3
        assert count_words(out[0].text) == 3000
        assert count_words(out[1].text) == 1500
        assert count_words(out[2].text) == 500

    def test_single_oversized_doc_truncated_to_budget(self):
        out = select_within_budget([doc("https://big.example", 9000)], Budget(BudgetUnit.WORDS, 5000))
        assert len(out) == 1
        assert count_words(out[0].text) == 5000

    def test_empty_input(self):
        assert select_within_budget([], Budget(BudgetUnit.WORDS, 100)) == []

    def test_tiny_tail_dropped_but_smaller_doc_still_fits(self):
        docs = [
            doc("https://a.example", 4980),
            doc("https://b.example", 100),  # overflows the 20 remaining, < 50 floor -> dropped
            doc("https://c.example", 10),   # fits whole
        ]
        out = select_within_budget(docs, Budget(BudgetUnit.WORDS, 5000))
        assert [d.url for d in out] == ["https://a.example", "https://c.example"]

    def test_token_budget(self):
        docs = [
            Document(url="https://a.example", text="x" * 8000),
            Document(url="https://b.example", text="y" * 8000),
        ]
        out = select_within_budget(docs, Budget(BudgetUnit.TOKENS, 3000), chars_per_token=4)
        total = sum(estimate_tokens(d.text, 4) for d in out)
        assert total <= 3000
        assert len(out) == 2
        assert estimate_tokens(out[1].text, 4) == 1000

    @settings(max_examples=60)
    @given(
        st.lists(st.integers(min_value=0, max_value=1200), min_size=0, max_size=8),
        st.integers(min_value=60, max_value=4000),
    )
    def test_word_budget_never_exceeded(self, sizes, limit):
        docs = [doc(f"https://d{i}.example", n) for i, n in enumerate(sizes) if n > 0]
        out = select_within_budget(docs, Budget(BudgetUnit.WORDS, limit))
        assert sum(count_words(d.text) for d in out) <= limit
        if docs:
            assert len(out) >= 1

    @settings(max_examples=60)
    @given(
        st.lists(st.integers(min_value=1, max_value=6000), min_size=0, max_size=8),
        st.integers(min_value=60, max_value=5000),
    )
    def test_token_budget_never_exceeded(self, sizes, limit):
        docs = [
            Document(url=f"https://d{i}.example", text="ab c " * n)
            for i, n in enumerate(sizes)
        ]
        out = select_within_budget(docs, Budget(BudgetUnit.TOKENS, limit), chars_per_token=4)
        assert sum(estimate_tokens(d.text, 4) for d in out) <= limit
