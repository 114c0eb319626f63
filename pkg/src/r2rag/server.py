"""Network surface: run endpoint (SSE), OpenAI-compatible chat completions,
model listing, feedback capture, preference-ratio metrics.

Event vocabulary of POST /run (server-sent events):
  routing  - the RoutingDecision for the query
  stage    - one per executed pipeline stage, in order
  token    - answer text deltas; concatenated deltas equal the final text
  final    - the full AnswerResult JSON (citations, sources, traces) plus
             session/message ids and a status of "ok" or "timeout"

Request handlers run concurrently; engine components are shared read-only
and the two log files serialize their appends.
"""

from __future__ import annotations

import json
import queue
import re
import threading
import uuid
from datetime import datetime
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .core import estimate_tokens
from .engine import RagEngine, UnknownModelError
from .feedback import FeedbackRecord, FeedbackStore, Rating, RatioReport, SessionStore, preference_ratio

_TOKEN_CHUNK_PIECES = 8


def chunk_text(text: str, pieces_per_chunk: int = _TOKEN_CHUNK_PIECES) -> list[str]:
    """Deterministically split text into delta chunks whose concatenation is
    byte-identical to the input."""
    if not text:
        return []
    pieces = re.split(r"(\s+)", text)
    pieces = [p for p in pieces if p]
    return ["".join(pieces[i : i + pieces_per_chunk]) for i in range(0, len(pieces), pieces_per_chunk)]


def sse_event(event: str, payload: dict) -> str:
    data = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return f"event: {event}\ndata: {data}\n\n"


def _error_body(message: str, err_type: str, code: str, param: Optional[str] = None) -> dict:
    return {"error": {"message": message, "type": err_type, "code": code, "param": param}}


def create_app(
    engine: RagEngine,
    data_dir: str | Path = "./data",
    request_deadline_s: Optional[float] = None,
    static_dir: Optional[str | Path] = None,
) -> FastAPI:
    app = FastAPI(title="r2rag", version="0.1.0")
    data_dir = Path(data_dir)
    feedback_store = FeedbackStore(data_dir / "feedback.jsonl")
    session_store = SessionStore(data_dir / "sessions.jsonl")
    deadline_s = request_deadline_s if request_deadline_s is not None else engine.request_deadline_s

    app.state.engine = engine
    app.state.feedback_store = feedback_store
    app.state.session_store = session_store

    def persist_answer(session_id: str, message_id: str, model_id: str, query: str, answer: dict) -> None:
        session_store.add_answer(
            session_id=session_id,
            message_id=message_id,
            model_id=model_id,
            query=query,
            answer=answer,
            created_at=engine.clock.now_utc().isoformat(),
        )

    # -- run (SSE) -----------------------------------------------------------

    @app.post("/run")
    async def run(request: Request):
        body = await request.json()
        query = (body.get("query") or "").strip()
        if not query:
            return JSONResponse(
                _error_body("query must be non-empty", "invalid_request_error", "empty_query", "query"),
                status_code=400,
            )
        model_id = body.get("model") or "r2rag"
        try:
            engine.resolve_model(model_id)
        except UnknownModelError:
            return JSONResponse(
                _error_body(f"model {model_id!r} not found", "invalid_request_error", "model_not_found", "model"),
                status_code=404,
            )
        session_id = body.get("session_id") or uuid.uuid4().hex
        message_id = uuid.uuid4().hex

        events: "queue.Queue[Optional[tuple[str, dict]]]" = queue.Queue()

        def emit(event: str, payload: dict) -> None:
            events.put((event, payload))

        def work() -> None:
            try:
                result = engine.run(query, model_id=model_id, emit=emit, deadline_s=deadline_s)
                answer = result.to_dict()
                for delta in chunk_text(result.text):
                    events.put(("token", {"delta": delta}))
                final = dict(answer)
                final["session_id"] = session_id
                final["message_id"] = message_id
                final["status"] = "timeout" if result.timed_out else "ok"
                persist_answer(session_id, message_id, model_id, query, answer)
                events.put(("final", final))
            except Exception as exc:  # noqa: BLE001 - stream must close with a final event
                events.put(
                    (
                        "final",
                        {
                            "status": "error",
                            "error": f"{type(exc).__name__}: {exc}",
                            "session_id": session_id,
                            "message_id": message_id,
                        },
                    )
                )
            finally:
                events.put(None)

        threading.Thread(target=work, daemon=True).start()

        def stream():
            while True:
                item = events.get()
                if item is None:
                    break
                yield sse_event(*item)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- OpenAI-compatible surface --------------------------------------------

    @app.get("/v1/models")
    def list_models():
        return {
            "object": "list",
            "data": [
                {
                    "id": route.model_id,
                    "object": "model",
                    "owned_by": "r2rag",
                    "description": route.description,
                }
                for route in engine.list_models()
            ],
        }

    @app.post("/v1/chat/completions")
    async def chat_completions(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return JSONResponse(
                _error_body("request body is not valid JSON", "invalid_request_error", "malformed_body"),
                status_code=400,
            )
        model_id = body.get("model")
        if not model_id:
            return JSONResponse(
                _error_body("'model' field is required", "invalid_request_error", "missing_model", "model"),
                status_code=400,
            )
        try:
            engine.resolve_model(model_id)
        except UnknownModelError:
            return JSONResponse(
                _error_body(f"model {model_id!r} not found", "invalid_request_error", "model_not_found", "model"),
                status_code=404,
            )
        messages = body.get("messages") or []
        query = ""
        for message in reversed(messages):
            if message.get("role") == "user" and (message.get("content") or "").strip():
                query = message["content"].strip()
                break
        if not query:
            return JSONResponse(
                _error_body("no non-empty user message found", "invalid_request_error", "empty_query", "messages"),
                status_code=400,
            )
        session_id = request.headers.get("x-session-id") or uuid.uuid4().hex
        message_id = uuid.uuid4().hex
        completion_id = f"chatcmpl-{message_id}"
        created = int(engine.clock.now_utc().timestamp())

        result = engine.run(query, model_id=model_id, deadline_s=deadline_s)
        persist_answer(session_id, message_id, model_id, query, result.to_dict())

        if body.get("stream"):
            def stream():
                first = {
                    "id": completion_id,
                    "object": "chat.completion.chunk",
                    "created": created,
                    "model": model_id,
                    "choices": [{"index": 0, "delta": {"role": "assistant"}, "finish_reason": None}],
                }
                yield f"data: {json.dumps(first, ensure_ascii=False)}\n\n"
                for delta in chunk_text(result.text):
                    chunk = {
                        "id": completion_id,
                        "object": "chat.completion.chunk",
                        "created": created,
                        "model": model_id,
                        "choices": [{"index": 0, "delta": {"content": delta}, "finish_reason": None}],
                    }
                    yield f"data: {json.dumps(chunk, ensure_ascii=False)}\n\n"
                last = {
                    "id": completion_id,
                    "object": "chat.completion.chunk",
                    "created": created,
                    "model": model_id,
                    "choices": [{"index": 0, "delta": {}, "finish_reason": "stop"}],
                }
                yield f"data: {json.dumps(last, ensure_ascii=False)}\n\n"
                yield "data: [DONE]\n\n"

            return StreamingResponse(stream(), media_type="text/event-stream")

        prompt_tokens = estimate_tokens(query)
        completion_tokens = estimate_tokens(result.text)
        return {
            "id": completion_id,
            "object": "chat.completion",
            "created": created,
            "model": model_id,
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": result.text},
                    "finish_reason": "stop",
                }
            ],
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
                "total_tokens": prompt_tokens + completion_tokens,
            },
        }

    # -- feedback --------------------------------------------------------------

    @app.post("/feedback")
    async def feedback(request: Request):
        body = await request.json()
        rating_raw = str(body.get("rating", "")).lower()
        if rating_raw in ("up", "thumbs_up", "\U0001f44d"):
            rating = Rating.UP
        elif rating_raw in ("down", "thumbs_down", "\U0001f44e"):
            rating = Rating.DOWN
        else:
            return JSONResponse(
                _error_body(f"rating must be 'up' or 'down', got {rating_raw!r}", "invalid_request_error", "bad_rating", "rating"),
                status_code=400,
            )
        session_id = str(body.get("session_id", ""))
        message_id = str(body.get("message_id", ""))
        known = session_store.lookup(session_id, message_id) is not None
        record = FeedbackRecord(
            session_id=session_id,
            message_id=message_id,
            rating=rating,
            comment=body.get("comment"),
            created_at=engine.clock.now_utc().isoformat(),
            orphan=not known,
        )
        feedback_store.add(record)
        return {"ok": True, "orphan": record.orphan}

    # -- metrics -----------------------------------------------------------------

    @app.get("/metrics/preference-ratio")
    def metrics_preference_ratio(model: Optional[str] = None, since: Optional[str] = None):
        since_dt = datetime.fromisoformat(since) if since else None
        records = feedback_store.records()
        model_ids = [model] if model else [r.model_id for r in engine.list_models()]
        reports: list[RatioReport] = [
            preference_ratio(records, session_store.model_of, model_id, since=since_dt)
            for model_id in model_ids
        ]
        return {"reports": [r.to_dict() for r in reports]}

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
