"""Feedback capture and session persistence.

Both stores are append-only JSON-lines files under the server data
directory: durable (fsync before acknowledging), greppable, no database.
Duplicate feedback for the same (session, message) is stored as a new
record; aggregation applies latest-wins, because users change their mind in
live sessions.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional


class Rating(Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class FeedbackRecord:
    session_id: str
    message_id: str
    rating: Rating
    comment: Optional[str]
    created_at: str  # ISO-8601 UTC
    orphan: bool = False

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "message_id": self.message_id,
            "rating": self.rating.value,
            "comment": self.comment,
            "created_at": self.created_at,
            "orphan": self.orphan,
        }


class _JsonlStore:
    """Append-only JSONL file with serialized, fsynced writes."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def records(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with self._lock:
            content = self.path.read_text(encoding="utf-8")
        for line in content.splitlines():
            line = line.strip()
            if line:
                out.append(json.loads(line))
        return out


class FeedbackStore(_JsonlStore):
    def add(self, record: FeedbackRecord) -> None:
        self.append(record.to_dict())


class SessionStore(_JsonlStore):
    """Served answers, keyed by (session_id, message_id)."""

    def add_answer(
        self,
        session_id: str,
        message_id: str,
        model_id: str,
        query: str,
        answer: dict,
        created_at: str,
    ) -> None:
        self.append(
            {
                "session_id": session_id,
                "message_id": message_id,
                "model_id": model_id,
                "query": query,
                "answer": answer,
                "created_at": created_at,
            }
        )

    def lookup(self, session_id: str, message_id: str) -> Optional[dict]:
        for record in self.records():
            if record["session_id"] == session_id and record["message_id"] == message_id:
                return record
        return None

    def model_of(self, session_id: str, message_id: str) -> Optional[str]:
        record = self.lookup(session_id, message_id)
        return record["model_id"] if record else None


@dataclass(frozen=True)
class RatioReport:
    model_id: str
    up: int
    down: int
    ratio: Optional[float]  # None when undefined; math.inf when down == 0 < up
    status: str  # "ok" | "infinite" | "undefined"

    def to_dict(self) -> dict:
        if self.status == "infinite":
            ratio: object = "infinite"
        elif self.status == "undefined":
            ratio = None
        else:
            ratio = self.ratio
        return {
            "model": self.model_id,
            "up": self.up,
            "down": self.down,
            "ratio": ratio,
            "status": self.status,
        }


def preference_ratio(
    feedback_records: Iterable[dict],
    model_lookup: Callable[[str, str], Optional[str]],
    model_id: str,
    since: Optional[datetime] = None,
) -> RatioReport:
    """Thumbs-up count divided by thumbs-down count for one model.

    Records are filtered to the window first, then reduced latest-wins per
    (session, message) by file order. Zero downs with some ups reports
    infinite with the raw counts; zero of both reports undefined.
    """
    latest: dict[tuple[str, str], dict] = {}
    for record in feedback_records:
        if since is not None:
            created = datetime.fromisoformat(record["created_at"])
            if created < since:
                continue
        key = (record["session_id"], record["message_id"])
        latest[key] = record

    up = down = 0
    for (session_id, message_id), record in latest.items():
        if model_lookup(session_id, message_id) != model_id:
            continue
        if record["rating"] == Rating.UP.value:
            up += 1
        elif record["rating"] == Rating.DOWN.value:
            down += 1

    if up == 0 and down == 0:
        return RatioReport(model_id, 0, 0, None, "undefined")
    if down == 0:
        return RatioReport(model_id, up, 0, math.inf, "infinite")
    return RatioReport(model_id, up, down, up / down, "ok")
