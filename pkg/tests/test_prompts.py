"""Golden-file byte fidelity of every rendered prompt template."""

from r2rag import prompts
from r2rag.answergen import build_context_block
from r2rag.core import Document

from conftest import golden

DOC_A = Document(url="https://ocean.example.org/tides", text="Tides rise because of the moon.", date="2024-05-01")
DOC_B = Document(url="https://sea.example.com/currents", text="Currents move heat around the globe.")

QUESTION = "How do tides work?"


def test_classifier_prompts_match_goldens():
    system, user = prompts.classifier_messages(QUESTION)
    assert system == golden("classifier_system.golden.txt")
    assert user == golden("classifier_user.golden.txt")


def test_variants_prompts_match_goldens():
    system, user = prompts.variants_messages(QUESTION)
    assert system == golden("variants_system.golden.txt")
    assert user == golden("variants_user.golden.txt")


def test_reranker_prompt_matches_golden():
    rendered = prompts.reranker_prompt(
        query=QUESTION,
        url=DOC_A.url,
        document_text=DOC_A.text,
    )
    assert rendered == golden("reranker.golden.txt")


def test_review_prompt_matches_golden():
    block = build_context_block([DOC_A, DOC_B])
    system, user = prompts.review_messages(
        question=QUESTION,
        next_query="tidal forces explained",
        prev_questions=[QUESTION, "moon gravity ocean"],
        prev_summaries=["These documents discuss lunar gravitational pull."],
        search_results=block,
    )
    assert system == golden("review_system.golden.txt")
    assert user == QUESTION


def test_answer_prompt_matches_golden():
    block = build_context_block([DOC_A, DOC_B])
    system, user = prompts.answer_messages(
        question=QUESTION,
        current_time="2025-01-15 12:00:00+00:00",
        knowledge_cutoff="December 2024",
        search_results=block,
    )
    assert system == golden("answer_system.golden.txt")
    assert user == QUESTION


def test_render_is_single_pass():
    # substituted values are never re-scanned for placeholders
    assert prompts.render("{a}", a="{b}", b="x") == "{b}"


def test_render_leaves_unknown_slots():
    assert prompts.render("{unknown} {query}", query="q") == "{unknown} q"


def test_placeholder_text_in_document_stays_literal():
    doc = Document(url="https://x.example", text="literal {question} inside a doc")
    block = build_context_block([doc])
    system, _ = prompts.answer_messages(
        question=QUESTION,
        current_time="t",
        knowledge_cutoff="k",
        search_results=block,
    )
    assert "literal {question} inside a doc" in system
