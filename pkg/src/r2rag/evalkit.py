"""Deterministic offline harness: scripted mock providers, call ledger,
scenario replay.

Scenario runs are bit-deterministic: a virtual clock replaces wall time,
fan-out concurrency is forced to 1 so ledger order is scheduling-free, and
transcripts serialize with sorted keys. Scripted replies match prompts by
substring, not equality, because prompts embed timestamps and evolve with
prompt-asset edits.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .core import Document, PipelineConfig
from .engine import RagEngine
from .errors import EndpointUnreachableError, ScenarioError
from .providers import ChatRequest, FixtureSearchClient, SearchRequest, TokenLogprobs
from .runtime import VirtualClock


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class CallRecord:
    provider: str
    operation: str
    request_digest: str
    at: float

    def to_dict(self) -> dict:
        return {
            "provider": self.provider,
            "operation": self.operation,
            "request_digest": self.request_digest,
            "at": self.at,
        }


class CallLedger:
    """Append-only record of every provider call."""

    def __init__(self, clock: Optional[VirtualClock] = None):
        self._records: list[CallRecord] = []
        self._lock = threading.Lock()
        self._clock = clock

    def record(self, provider: str, operation: str, request_text: str) -> None:
        at = self._clock.monotonic() if self._clock else 0.0
        with self._lock:
            self._records.append(CallRecord(provider, operation, _digest(request_text), at))

    @property
    def records(self) -> list[CallRecord]:
        with self._lock:
            return list(self._records)

    def count(self, provider: Optional[str] = None, operation: Optional[str] = None) -> int:
        return sum(
            1
            for r in self.records
            if (provider is None or r.provider == provider)
            and (operation is None or r.operation == operation)
        )


@dataclass
class ScriptedReply:
    match: str
    reply: str
    repeatable: bool = False
    latency_s: float = 0.0
    consumed: bool = False


class MockChatClient:
    """Chat client answering from an ordered script.

    The first unconsumed (or repeatable) entry whose ``match`` substring
    occurs in the combined system+user prompt wins. A prompt matching no
    entry raises ScenarioError with a diff of what was expected.
    """

    def __init__(
        self,
        replies: list[ScriptedReply],
        clock: Optional[VirtualClock] = None,
        ledger: Optional[CallLedger] = None,
    ):
        self._replies = replies
        self._clock = clock
        self._ledger = ledger
        self._lock = threading.Lock()

    def chat(self, request: ChatRequest) -> str:
        prompt = request.system_prompt + "\n" + request.user_prompt
        if self._ledger:
            self._ledger.record("chat", request.purpose or "chat", prompt)
        with self._lock:
            for entry in self._replies:
                if entry.consumed and not entry.repeatable:
                    continue
                if entry.match in prompt:
                    entry.consumed = True
                    if self._clock and entry.latency_s:
                        self._clock.advance(entry.latency_s)
                    return entry.reply
        available = [e.match for e in self._replies if not e.consumed or e.repeatable]
        raise ScenarioError(
            "mock chat received an unexpected prompt.\n"
            f"purpose: {request.purpose!r}\n"
            f"prompt head: {prompt[:300]!r}\n"
            f"remaining matchers: {available!r}"
        )


class MockRerankClient:
    """Deterministic reranker mock.

    Modes: ``overlap`` scores by query-term overlap with the document text
    (synthesized logprobs, so the softmax path is exercised); ``fail`` raises
    endpoint-unreachable; ``scripted`` matches document text substrings to
    fixed logprob pairs; ``text`` returns plain yes/no text with no logprobs
    to exercise the fallback.
    """

    def __init__(
        self,
        mode: str = "overlap",
        scripted: Optional[list[dict]] = None,
        clock: Optional[VirtualClock] = None,
        ledger: Optional[CallLedger] = None,
        latency_s: float = 0.0,
    ):
        if mode not in {"overlap", "fail", "scripted", "text"}:
            raise ScenarioError(f"unknown rerank mock mode: {mode}")
        self._mode = mode
        self._scripted = scripted or []
        self._clock = clock
        self._ledger = ledger
        self._latency_s = latency_s

    def score_yes_no(self, prompt: str) -> TokenLogprobs:
        if self._ledger:
            self._ledger.record("rerank", "score", prompt)
        if self._clock and self._latency_s:
            self._clock.advance(self._latency_s)
        if self._mode == "fail":
            raise EndpointUnreachableError("rerank endpoint down (scripted)")
        if self._mode == "text":
            return TokenLogprobs(None, None, text="yes")
        if self._mode == "scripted":
            for entry in self._scripted:
                if entry["match"] in prompt:
                    return TokenLogprobs(float(entry["yes"]), float(entry["no"]), "")
            return TokenLogprobs(-2.0, -0.5, "")
        return self._overlap_score(prompt)

    @staticmethod
    def _overlap_score(prompt: str) -> TokenLogprobs:
        import math

        query = ""
        doc_text = ""
        for line in prompt.splitlines():
            if line.startswith("<Query>: "):
                query = line[len("<Query>: "):]
            if line.startswith("Content: "):
                doc_text = line[len("Content: "):]
        query_terms = {t.lower() for t in query.split() if t}
        doc_terms = {t.lower() for t in doc_text.split() if t}
        overlap = len(query_terms & doc_terms) / len(query_terms) if query_terms else 0.0
        target = 0.1 + 0.8 * overlap
        return TokenLogprobs(math.log(target), math.log(1.0 - target), "")


class MockSearchClient:
    """Fixture-backed search with optional scripted failures and latency."""

    def __init__(
        self,
        corpus_path: str | Path,
        fail_queries: Optional[list[str]] = None,
        clock: Optional[VirtualClock] = None,
        ledger: Optional[CallLedger] = None,
        latency_s: float = 0.0,
    ):
        self._fixture = FixtureSearchClient(corpus_path)
        self._fail_queries = fail_queries or []
        self._clock = clock
        self._ledger = ledger
        self._latency_s = latency_s

    def search(self, request: SearchRequest) -> list[Document]:
        if self._ledger:
            self._ledger.record("search", "search", request.query_string)
        if self._clock and self._latency_s:
            self._clock.advance(self._latency_s)
        for marker in self._fail_queries:
            if marker in request.query_string:
                raise EndpointUnreachableError(f"search down for {marker!r} (scripted)")
        return self._fixture.search(request)


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

BUNDLED_SCENARIO_DIR = Path(__file__).parent / "scenarios"


@dataclass
class Scenario:
    name: str
    query: str
    model_id: str
    corpus_path: Path
    chat_replies: list[ScriptedReply]
    rerank_mode: str = "overlap"
    rerank_scripted: list[dict] = field(default_factory=list)
    search_fail_queries: list[str] = field(default_factory=list)
    search_latency_s: float = 0.0
    deadline_s: Optional[float] = None
    config_overrides: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {exc}") from exc

    def require(key: str) -> Any:
        if key not in data:
            raise ScenarioError(f"scenario file {path} is missing required field {key!r}")
        return data[key]

    entry = require("entry")
    if "query" not in entry:
        raise ScenarioError(f"scenario file {path} is missing required field 'entry.query'")
    replies = []
    for raw in data.get("chat_replies", []):
        if "match" not in raw or "reply" not in raw:
            raise ScenarioError(f"scenario file {path}: chat reply needs 'match' and 'reply'")
        replies.append(
            ScriptedReply(
                match=raw["match"],
                reply=raw["reply"],
                repeatable=bool(raw.get("repeatable", False)),
                latency_s=float(raw.get("latency_s", 0.0)),
            )
        )
    rerank = data.get("rerank", {})
    corpus = data.get("corpus")
    corpus_path = (path.parent / corpus) if corpus else (BUNDLED_SCENARIO_DIR / "corpus_small.jsonl")
    return Scenario(
        name=require("name"),
        query=entry["query"],
        model_id=entry.get("model", "r2rag"),
        corpus_path=corpus_path,
        chat_replies=replies,
        rerank_mode=rerank.get("mode", "overlap"),
        rerank_scripted=rerank.get("scripted", []),
        search_fail_queries=data.get("search_fail_queries", []),
        search_latency_s=float(data.get("search_latency_s", 0.0)),
        deadline_s=data.get("deadline_s"),
        config_overrides=data.get("config", {}),
        expected=data.get("expected", {}),
    )


def bundled_scenario_path(name: str) -> Path:
    return BUNDLED_SCENARIO_DIR / f"{name}.json"


@dataclass
class ScenarioResult:
    name: str
    passed: bool
    failures: list[str]
    transcript: str
    answer: dict
    ledger: CallLedger


def build_engine_for_scenario(scenario: Scenario) -> tuple[RagEngine, CallLedger, VirtualClock]:
    clock = VirtualClock()
    ledger = CallLedger(clock)
    overrides = dict(scenario.config_overrides)
    overrides.setdefault("fanout_concurrency", 1)  # bit-deterministic ledger order
    config = _config_with_overrides(overrides)
    chat = MockChatClient(scenario.chat_replies, clock=clock, ledger=ledger)
    rerank = MockRerankClient(
        mode=scenario.rerank_mode,
        scripted=scenario.rerank_scripted,
        clock=clock,
        ledger=ledger,
    )
    search = MockSearchClient(
        scenario.corpus_path,
        fail_queries=scenario.search_fail_queries,
        clock=clock,
        ledger=ledger,
        latency_s=scenario.search_latency_s,
    )
    engine = RagEngine(
        config=config,
        chat_client=chat,
        rerank_client=rerank,
        search_client=search,
        clock=clock,
        request_deadline_s=scenario.deadline_s if scenario.deadline_s is not None else 600.0,
    )
    return engine, ledger, clock


def _config_with_overrides(overrides: dict) -> PipelineConfig:
    from .config import pipeline_config_from_dict

    return pipeline_config_from_dict(overrides)


def run_scenario(scenario: Scenario | str | Path) -> ScenarioResult:
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    engine, ledger, clock = build_engine_for_scenario(scenario)

    events: list[dict] = []

    def emit(event: str, payload: dict) -> None:
        events.append({"event": event, "payload": payload})

    failures: list[str] = []
    answer_dict: dict = {}
    try:
        result = engine.run(scenario.query, model_id=scenario.model_id, emit=emit, query_id="scenario")
        answer_dict = result.to_dict()
    except ScenarioError as exc:
        failures.append(f"scripted-mismatch: {exc}")
    except Exception as exc:  # noqa: BLE001 - scenario failures must carry the cause
        failures.append(f"run-error: {type(exc).__name__}: {exc}")

    if not failures:
        failures.extend(_check_expectations(scenario.expected, answer_dict, ledger))

    transcript = json.dumps(
        {
            "scenario": scenario.name,
            "query": scenario.query,
            "model": scenario.model_id,
            "events": events,
            "answer": answer_dict,
            "ledger": [r.to_dict() for r in ledger.records],
            "virtual_elapsed_s": clock.monotonic(),
            "assertions": {"passed": not failures, "failures": failures},
        },
        sort_keys=True,
        indent=2,
        ensure_ascii=False,
    )
    return ScenarioResult(
        name=scenario.name,
        passed=not failures,
        failures=failures,
        transcript=transcript,
        answer=answer_dict,
        ledger=ledger,
    )


def _check_expectations(expected: dict, answer: dict, ledger: CallLedger) -> list[str]:
    failures = []
    if "pipeline" in expected and answer.get("pipeline") != expected["pipeline"]:
        failures.append(f"pipeline: expected {expected['pipeline']}, got {answer.get('pipeline')}")
    if "stop_reasons" in expected:
        got = sorted(answer.get("stop_reasons", []))
        want = sorted(expected["stop_reasons"])
        if got != want:
            failures.append(f"stop_reasons: expected {want}, got {got}")
    if "citations_valid" in expected:
        got_valid = answer.get("citation_report", {}).get("valid")
        if got_valid != expected["citations_valid"]:
            failures.append(f"citations_valid: expected {expected['citations_valid']}, got {got_valid}")
    if "citations_dangling" in expected:
        got_dangling = len(answer.get("citation_report", {}).get("dangling", []))
        if got_dangling != expected["citations_dangling"]:
            failures.append(f"citations_dangling: expected {expected['citations_dangling']}, got {got_dangling}")
    for key, want_count in expected.get("call_counts", {}).items():
        provider, _, operation = key.partition(".")
        got_count = ledger.count(provider, operation or None)
        if got_count != want_count:
            failures.append(f"call_counts[{key}]: expected {want_count}, got {got_count}")
    if "flags_include" in expected:
        seen_flags = {f for t in answer.get("traces", []) for f in t.get("flags", [])}
        for flag in expected["flags_include"]:
            if not any(flag in s for s in seen_flags):
                failures.append(f"flags_include: {flag!r} not among {sorted(seen_flags)}")
    if "answer_contains" in expected and expected["answer_contains"] not in answer.get("text", ""):
        failures.append(f"answer_contains: {expected['answer_contains']!r} not in answer text")
    if "timed_out" in expected and answer.get("timed_out") != expected["timed_out"]:
        failures.append(f"timed_out: expected {expected['timed_out']}, got {answer.get('timed_out')}")
    return failures
