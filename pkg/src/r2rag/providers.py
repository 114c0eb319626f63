"""Typed clients for the three external services: chat inference, pointwise
reranker scoring, and web search.

The orchestrator never executes models in-process. Chat speaks the
OpenAI-compatible chat-completions wire protocol; reranking goes through the
completions+logprobs interface of the same server; search is a small JSON
endpoint or a fixture-backed offline provider.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional, Protocol

import httpx

from . import prompts
from .core import Budget, BudgetUnit, DEFAULT_CHARS_PER_TOKEN, Document, truncate_to_budget
from .errors import (
    EndpointUnreachableError,
    MalformedResponseError,
    ProviderError,
    ProviderTimeoutError,
)
from .tagparse import YesNo, parse_yes_no

# The 0.6B reranker has a bounded context; document text inside its template
# is capped to this many estimated tokens before rendering.
RERANK_DOC_TOKEN_CAP = 2000

DEFAULT_CHAT_TIMEOUT_S = 120.0
DEFAULT_RERANK_TIMEOUT_S = 15.0
DEFAULT_SEARCH_TIMEOUT_S = 20.0


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    system_prompt: str
    user_prompt: str
    temperature: float = 0.6
    top_p: float = 0.95
    max_output_tokens: Optional[int] = None
    thinking_enabled: bool = True
    purpose: str = ""

    def __post_init__(self):
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("chat prompts must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")


@dataclass(frozen=True)
class SearchRequest:
    query_string: str
    limit: int = 10

    def __post_init__(self):
        if self.limit < 1:
            raise ValueError("search limit must be >= 1")


@dataclass(frozen=True)
class TokenLogprobs:
    """Raw reranker output: next-token logprobs for yes/no plus the text."""

    logprob_yes: Optional[float]
    logprob_no: Optional[float]
    text: str = ""


@dataclass(frozen=True)
class ScoredPair:
    query: str
    doc: Document
    logprob_yes: Optional[float]
    logprob_no: Optional[float]
    score: float
    used_text_fallback: bool = False


class ChatClient(Protocol):
    def chat(self, request: ChatRequest) -> str: ...


class RerankClient(Protocol):
    def score_yes_no(self, prompt: str) -> TokenLogprobs: ...


class SearchClient(Protocol):
    def search(self, request: SearchRequest) -> list[Document]: ...


def yes_probability(logprob_yes: float, logprob_no: float) -> float:
    """Softmax over the two logprobs, computed in the shift-invariant form
    1/(1+exp(no-yes)) so adding a common constant changes nothing."""
    delta = logprob_no - logprob_yes
    if delta > 700:
        return 0.0
    if delta < -700:
        return 1.0
    return 1.0 / (1.0 + math.exp(delta))


def score_pair(
    client: RerankClient,
    query: str,
    doc: Document,
    instruction: str = prompts.DEFAULT_RERANK_INSTRUCTION,
    chars_per_token: int = DEFAULT_CHARS_PER_TOKEN,
) -> ScoredPair:
    """Score one query-document pair as the probability of "yes".

    When the endpoint cannot return logprobs for either token, falls back to
    parsing the completion text: "yes" scores 1.0, "no" scores 0.0.
    """
    capped = truncate_to_budget(doc.text, Budget(BudgetUnit.TOKENS, RERANK_DOC_TOKEN_CAP), chars_per_token)
    prompt = prompts.reranker_prompt(query=query, url=doc.url, document_text=capped, instruction=instruction)
    result = client.score_yes_no(prompt)
    if result.logprob_yes is None and result.logprob_no is None:
        verdict = parse_yes_no(result.text)
        score = 1.0 if verdict is YesNo.YES else 0.0
        return ScoredPair(query, doc, None, None, score, used_text_fallback=True)
    ly = result.logprob_yes if result.logprob_yes is not None else -math.inf
    ln = result.logprob_no if result.logprob_no is not None else -math.inf
    return ScoredPair(query, doc, result.logprob_yes, result.logprob_no, yes_probability(ly, ln))


SleepFn = Callable[[float], None]


def _post_with_retry(
    client: httpx.Client,
    url: str,
    payload: dict,
    retries: int,
    backoff_s: float,
    sleep: SleepFn,
) -> httpx.Response:
    """POST with exponential backoff on transient transport failures.

    Timeouts are not retried: per-call deadlines exist to bound latency, and
    retrying a timed-out call would burst them.
    """
    last_error: Optional[Exception] = None
    for attempt in range(retries + 1):
        try:
            response = client.post(url, json=payload)
        except httpx.TimeoutException as exc:
            raise ProviderTimeoutError(f"call to {url} timed out") from exc
        except httpx.TransportError as exc:
            last_error = exc
        else:
            if response.status_code < 500:
                return response
            last_error = EndpointUnreachableError(
                f"{url} answered {response.status_code}"
            )
        if attempt < retries:
            sleep(backoff_s * (2**attempt))
    raise EndpointUnreachableError(f"call to {url} failed: {last_error}") from last_error


class HttpChatClient:
    """OpenAI-compatible chat-completions client."""

    def __init__(
        self,
        base_url: str,
        api_key: Optional[str] = None,
        timeout_s: float = DEFAULT_CHAT_TIMEOUT_S,
        retries: int = 2,
        backoff_s: float = 0.2,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: SleepFn = time.sleep,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers=headers,
            timeout=timeout_s,
            transport=transport,
        )
        self._retries = retries
        self._backoff_s = backoff_s
        self._sleep = sleep

    def chat(self, request: ChatRequest) -> str:
        payload: dict[str, Any] = {
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "chat_template_kwargs": {"enable_thinking": request.thinking_enabled},
        }
        if request.max_output_tokens is not None:
            payload["max_tokens"] = request.max_output_tokens
        response = _post_with_retry(
            self._client, "/chat/completions", payload,
            self._retries, self._backoff_s, self._sleep,
        )
        if response.status_code >= 400:
            raise ProviderError(f"chat endpoint answered {response.status_code}: {response.text[:200]}")
        try:
            body = response.json()
            content = body["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected chat response shape: {exc}") from exc
        if not isinstance(content, str):
            raise MalformedResponseError("chat response content is not text")
        return content


class HttpRerankClient:
    """Reranker scoring over the completions+logprobs interface."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        api_key: Optional[str] = None,
        timeout_s: float = DEFAULT_RERANK_TIMEOUT_S,
        retries: int = 1,
        backoff_s: float = 0.2,
        top_logprobs: int = 20,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: SleepFn = time.sleep,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers=headers,
            timeout=timeout_s,
            transport=transport,
        )
        self._model_id = model_id
        self._top_logprobs = top_logprobs
        self._retries = retries
        self._backoff_s = backoff_s
        self._sleep = sleep

    def score_yes_no(self, prompt: str) -> TokenLogprobs:
        payload = {
            "model": self._model_id,
            "prompt": prompt,
            "max_tokens": 1,
            "temperature": 0,
            "logprobs": self._top_logprobs,
        }
        response = _post_with_retry(
            self._client, "/completions", payload,
            self._retries, self._backoff_s, self._sleep,
        )
        if response.status_code >= 400:
            raise ProviderError(f"rerank endpoint answered {response.status_code}: {response.text[:200]}")
        try:
            choice = response.json()["choices"][0]
            text = choice.get("text") or ""
            logprob_maps = (choice.get("logprobs") or {}).get("top_logprobs") or []
            top = logprob_maps[0] if logprob_maps else {}
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected rerank response shape: {exc}") from exc
        ly = _find_token_logprob(top, "yes")
        ln = _find_token_logprob(top, "no")
        return TokenLogprobs(logprob_yes=ly, logprob_no=ln, text=text)


def _find_token_logprob(top_logprobs: dict, word: str) -> Optional[float]:
    best: Optional[float] = None
    for token, logprob in top_logprobs.items():
        if str(token).strip().lower() == word and isinstance(logprob, (int, float)):
            if best is None or logprob > best:
                best = float(logprob)
    return best


class HttpSearchClient:
    """JSON search endpoint: POST {base}/search with {"query", "limit"}."""

    def __init__(
        self,
        base_url: str,
        api_key: Optional[str] = None,
        timeout_s: float = DEFAULT_SEARCH_TIMEOUT_S,
        retries: int = 1,
        backoff_s: float = 0.2,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: SleepFn = time.sleep,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers=headers,
            timeout=timeout_s,
            transport=transport,
        )
        self._retries = retries
        self._backoff_s = backoff_s
        self._sleep = sleep

    def search(self, request: SearchRequest) -> list[Document]:
        payload = {"query": request.query_string, "limit": request.limit}
        response = _post_with_retry(
            self._client, "/search", payload,
            self._retries, self._backoff_s, self._sleep,
        )
        if response.status_code >= 400:
            raise ProviderError(f"search endpoint answered {response.status_code}: {response.text[:200]}")
        try:
            results = response.json().get("results", [])
        except json.JSONDecodeError as exc:
            raise MalformedResponseError("search response is not JSON") from exc
        docs = []
        for item in results[: request.limit]:
            text = item.get("text") or ""
            url = item.get("url") or ""
            if not text:
                continue
            docs.append(
                Document(
                    url=url,
                    text=text,
                    date=item.get("date"),
                    source_query=request.query_string,
                )
            )
        return docs


class FixtureSearchClient:
    """Offline search provider backed by a JSON-lines corpus.

    Each line is one document object: {"url", "date", "text", "tags"}. A
    document matches a query when any of its tags occurs in the query as a
    whole word (case-insensitive). Results keep corpus order.
    """

    def __init__(self, corpus_path: str | Path):
        self._docs: list[tuple[Document, list[str]]] = []
        path = Path(corpus_path)
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            doc = Document(
                url=record.get("url", ""),
                text=record["text"],
                date=record.get("date"),
            )
            tags = [str(t).lower() for t in record.get("tags", [])]
            self._docs.append((doc, tags))

    @staticmethod
    def _matches(tags: list[str], query: str) -> bool:
        lowered = query.lower()
        words = set(w.strip(".,;:!?\"'()").lower() for w in query.split())
        for tag in tags:
            if " " in tag:
                if tag in lowered:
                    return True
            elif tag in words:
                return True
        return False

    def search(self, request: SearchRequest) -> list[Document]:
        hits = []
        for doc, tags in self._docs:
            if self._matches(tags, request.query_string):
                hits.append(
                    Document(
                        url=doc.url,
                        text=doc.text,
                        date=doc.date,
                        source_query=request.query_string,
                    )
                )
            if len(hits) >= request.limit:
                break
        return hits
