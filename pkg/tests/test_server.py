import json
import threading

import pytest
from fastapi.testclient import TestClient

from r2rag.evalkit import Scenario, ScriptedReply, build_engine_for_scenario
from r2rag.server import chunk_text, create_app

from conftest import CORPUS_SMALL


def make_scenario(deadline_s=None, classify_latency_s=0.0) -> Scenario:
    return Scenario(
        name="server-fixture",
        query="unused",
        model_id="r2rag",
        corpus_path=CORPUS_SMALL,
        deadline_s=deadline_s,
        chat_replies=[
            ScriptedReply(
                match="Judge if the user question",
                reply="no",
                repeatable=True,
                latency_s=classify_latency_s,
            ),
            ScriptedReply(
                match="User question: what is solar power",
                reply="<queries>\nsolar power basics\nphotovoltaic energy explained\n</queries>",
                repeatable=True,
            ),
            ScriptedReply(
                match="You are a knowledgeable AI search assistant",
                reply="Solar power converts sunlight into electricity [1]. Inverters make it usable [2].",
                repeatable=True,
            ),
        ],
    )


@pytest.fixture
def client(tmp_path):
    engine, _, _ = build_engine_for_scenario(make_scenario())
    app = create_app(engine, data_dir=tmp_path)
    with TestClient(app) as test_client:
        yield test_client


def parse_sse(text: str) -> list[tuple[str, dict]]:
    events = []
    for frame in text.split("\n\n"):
        if not frame.strip():
            continue
        name = "message"
        data_lines = []
        for line in frame.splitlines():
            if line.startswith("event: "):
                name = line[len("event: "):]
            elif line.startswith("data: "):
                data_lines.append(line[len("data: "):])
        if data_lines:
            payload = "\n".join(data_lines)
            events.append((name, json.loads(payload) if payload != "[DONE]" else {}))
    return events


class TestChunkText:
    def test_concatenation_is_identity(self):
        text = "Solar power converts sunlight into electricity [1]. Inverters make it usable [2]."
        assert "".join(chunk_text(text)) == text

    def test_empty(self):
        assert chunk_text("") == []


class TestRunEndpoint:
    def test_event_sequence_and_stream_fidelity(self, client):
        response = client.post("/run", json={"query": "what is solar power", "session_id": "sess1"})
        assert response.status_code == 200
        events = parse_sse(response.text)
        names = [n for n, _ in events]
        assert names[0] == "routing"
        assert "stage" in names
        assert names[-1] == "final"
        routing = events[0][1]
        assert routing["label"] == "simple"
        final = events[-1][1]
        assert final["status"] == "ok"
        assert final["pipeline"] == "vanilla-rag"
        assert final["session_id"] == "sess1"
        deltas = "".join(p["delta"] for n, p in events if n == "token")
        assert deltas == final["text"]
        assert final["citation_report"]["valid"] == 2

    def test_empty_query_rejected(self, client):
        response = client.post("/run", json={"query": "   "})
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "empty_query"

    def test_unknown_model_rejected(self, client):
        response = client.post("/run", json={"query": "q", "model": "gpt-x"})
        assert response.status_code == 404
        assert response.json()["error"]["code"] == "model_not_found"

    def test_answer_persisted_and_retrievable(self, client, tmp_path):
        response = client.post("/run", json={"query": "what is solar power", "session_id": "persist-me"})
        final = parse_sse(response.text)[-1][1]
        store = client.app.state.session_store
        record = store.lookup("persist-me", final["message_id"])
        assert record is not None
        assert record["answer"]["text"] == final["text"]
        assert record["model_id"] == "r2rag"

    def test_deadline_expiry_emits_timeout_final(self, tmp_path):
        engine, _, _ = build_engine_for_scenario(
            make_scenario(deadline_s=1.0, classify_latency_s=5.0)
        )
        app = create_app(engine, data_dir=tmp_path, request_deadline_s=1.0)
        with TestClient(app) as client:
            response = client.post("/run", json={"query": "what is solar power"})
            events = parse_sse(response.text)
            final = events[-1][1]
            assert final["status"] == "timeout"
            assert final["timed_out"] is True

    def test_concurrent_requests_are_isolated(self, client):
        results: list[dict] = [None] * 4  # type: ignore[list-item]

        def issue(slot: int) -> None:
            response = client.post(
                "/run", json={"query": "what is solar power", "session_id": f"s{slot}"}
            )
            events = parse_sse(response.text)
            final = events[-1][1]
            deltas = "".join(p["delta"] for n, p in events if n == "token")
            results[slot] = {"final": final, "deltas": deltas}

        threads = [threading.Thread(target=issue, args=(i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        message_ids = set()
        for slot, outcome in enumerate(results):
            assert outcome["final"]["status"] == "ok"
            assert outcome["deltas"] == outcome["final"]["text"]
            assert outcome["final"]["session_id"] == f"s{slot}"
            message_ids.add(outcome["final"]["message_id"])
        assert len(message_ids) == 4


class TestModelsEndpoint:
    def test_default_listing(self, client):
        body = client.get("/v1/models").json()
        assert body["object"] == "list"
        ids = [m["id"] for m in body["data"]]
        assert ids == ["r2rag", "vanilla-rag", "vanilla-agent"]
        assert all(m["object"] == "model" for m in body["data"])

    def test_registered_variant_appears(self, tmp_path):
        from r2rag.answergen import PipelineKind
        from r2rag.engine import ModelRoute

        engine, _, _ = build_engine_for_scenario(make_scenario())
        engine.register_model(ModelRoute("fast-agent", PipelineKind.VANILLA_AGENT, "tuned"))
        app = create_app(engine, data_dir=tmp_path)
        with TestClient(app) as client:
            ids = [m["id"] for m in client.get("/v1/models").json()["data"]]
            assert len(ids) == 4 and "fast-agent" in ids


class TestChatCompletions:
    def test_non_stream_schema(self, client):
        response = client.post(
            "/v1/chat/completions",
            json={
                "model": "vanilla-rag",
                "messages": [{"role": "user", "content": "what is solar power"}],
            },
        )
        assert response.status_code == 200
        body = response.json()
        assert body["object"] == "chat.completion"
        assert body["model"] == "vanilla-rag"
        assert body["id"].startswith("chatcmpl-")
        assert isinstance(body["created"], int)
        choice = body["choices"][0]
        assert choice["index"] == 0
        assert choice["finish_reason"] == "stop"
        assert choice["message"]["role"] == "assistant"
        assert choice["message"]["content"].startswith("Solar power")
        usage = body["usage"]
        assert usage["total_tokens"] == usage["prompt_tokens"] + usage["completion_tokens"]

    def test_forced_model_skips_classifier(self, tmp_path):
        engine, ledger, _ = build_engine_for_scenario(make_scenario())
        app = create_app(engine, data_dir=tmp_path)
        with TestClient(app) as client:
            client.post(
                "/v1/chat/completions",
                json={"model": "vanilla-rag", "messages": [{"role": "user", "content": "what is solar power"}]},
            )
        assert ledger.count("chat", "classify") == 0

    def test_stream_chunks(self, client):
        response = client.post(
            "/v1/chat/completions",
            json={
                "model": "vanilla-rag",
                "messages": [{"role": "user", "content": "what is solar power"}],
                "stream": True,
            },
        )
        assert response.status_code == 200
        frames = [f for f in response.text.split("\n\n") if f.strip()]
        assert frames[-1] == "data: [DONE]"
        chunks = [json.loads(f[len("data: "):]) for f in frames[:-1]]
        assert all(c["object"] == "chat.completion.chunk" for c in chunks)
        assert chunks[0]["choices"][0]["delta"].get("role") == "assistant"
        assert chunks[-1]["choices"][0]["finish_reason"] == "stop"
        content = "".join(c["choices"][0]["delta"].get("content", "") for c in chunks)
        assert content.startswith("Solar power")

    def test_unknown_model_error_object(self, client):
        response = client.post(
            "/v1/chat/completions",
            json={"model": "gpt-x", "messages": [{"role": "user", "content": "q"}]},
        )
        assert response.status_code == 404
        error = response.json()["error"]
        assert error["code"] == "model_not_found"
        assert error["type"] == "invalid_request_error"
        assert error["param"] == "model"

    def test_missing_model_field(self, client):
        response = client.post(
            "/v1/chat/completions",
            json={"messages": [{"role": "user", "content": "q"}]},
        )
        assert response.status_code == 400

    def test_missing_user_message(self, client):
        response = client.post("/v1/chat/completions", json={"model": "vanilla-rag", "messages": []})
        assert response.status_code == 400


class TestFeedbackEndpoints:
    def _served_ids(self, client) -> tuple[str, str]:
        response = client.post("/run", json={"query": "what is solar power", "session_id": "fb"})
        final = parse_sse(response.text)[-1][1]
        return final["session_id"], final["message_id"]

    def test_up_with_comment_persists(self, client):
        session_id, message_id = self._served_ids(client)
        response = client.post(
            "/feedback",
            json={"session_id": session_id, "message_id": message_id, "rating": "up", "comment": "nice"},
        )
        assert response.status_code == 200
        assert response.json() == {"ok": True, "orphan": False}
        records = client.app.state.feedback_store.records()
        assert records[-1]["comment"] == "nice"

    def test_bad_rating_rejected(self, client):
        response = client.post(
            "/feedback", json={"session_id": "s", "message_id": "m", "rating": "maybe"}
        )
        assert response.status_code == 400

    def test_orphan_flagged(self, client):
        response = client.post(
            "/feedback", json={"session_id": "ghost", "message_id": "ghost", "rating": "down"}
        )
        assert response.json()["orphan"] is True

    def test_duplicate_stored_latest_wins_at_read(self, client):
        session_id, message_id = self._served_ids(client)
        client.post("/feedback", json={"session_id": session_id, "message_id": message_id, "rating": "up"})
        client.post("/feedback", json={"session_id": session_id, "message_id": message_id, "rating": "down"})
        assert len(client.app.state.feedback_store.records()) == 2
        report = client.get("/metrics/preference-ratio", params={"model": "r2rag"}).json()["reports"][0]
        assert (report["up"], report["down"]) == (0, 1)

    def test_preference_ratio_endpoint(self, client):
        session_id, message_id = self._served_ids(client)
        client.post("/feedback", json={"session_id": session_id, "message_id": message_id, "rating": "up"})
        body = client.get("/metrics/preference-ratio").json()
        by_model = {r["model"]: r for r in body["reports"]}
        assert by_model["r2rag"]["status"] == "infinite"
        assert by_model["vanilla-rag"]["status"] == "undefined"
