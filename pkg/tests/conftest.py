from pathlib import Path

import pytest

from r2rag.core import PipelineConfig
from r2rag.evalkit import (
    BUNDLED_SCENARIO_DIR,
    CallLedger,
    MockChatClient,
    MockRerankClient,
    MockSearchClient,
    ScriptedReply,
)
from r2rag.runtime import RunContext, VirtualClock

GOLDEN_DIR = Path(__file__).parent / "goldens"
CORPUS_SMALL = BUNDLED_SCENARIO_DIR / "corpus_small.jsonl"
CORPUS_ITER = BUNDLED_SCENARIO_DIR / "corpus_iter.jsonl"
CORPUS_BIG = BUNDLED_SCENARIO_DIR / "corpus_big.jsonl"


def golden(name: str) -> str:
    return (GOLDEN_DIR / name).read_text(encoding="utf-8")


@pytest.fixture
def clock():
    return VirtualClock()


@pytest.fixture
def ledger(clock):
    return CallLedger(clock)


@pytest.fixture
def ctx_factory(clock, ledger):
    """Build a RunContext wired to scripted mocks; returns (factory, ledger)."""

    def make(
        replies=(),
        rerank_mode="overlap",
        rerank_scripted=None,
        corpus=CORPUS_SMALL,
        search_fail=None,
        config=None,
        deadline_s=600.0,
        emit=None,
    ) -> RunContext:
        scripted = [
            r if isinstance(r, ScriptedReply) else ScriptedReply(**r) for r in replies
        ]
        chat = MockChatClient(scripted, clock=clock, ledger=ledger)
        rerank = MockRerankClient(
            mode=rerank_mode, scripted=rerank_scripted, clock=clock, ledger=ledger
        )
        search = MockSearchClient(
            corpus, fail_queries=search_fail, clock=clock, ledger=ledger
        )
        return RunContext(
            config=config or PipelineConfig(fanout_concurrency=1),
            chat_client=chat,
            rerank_client=rerank,
            search_client=search,
            clock=clock,
            deadline_s=deadline_s,
            emit=emit,
        )

    return make
