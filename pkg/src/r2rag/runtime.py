"""Clocks, per-request context, and bounded fan-out helpers.

Everything that touches wall time goes through a ``Clock`` so that offline
scenario runs can substitute a virtual clock and execute deadline logic in
milliseconds.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from datetime import datetime, timedelta, timezone
from typing import Any, Callable, Iterator, Optional, Protocol, Sequence

from .core import PipelineConfig, StageTrace
from .errors import DeadlineExceededError


class Clock(Protocol):
    def now_utc(self) -> datetime: ...

    def monotonic(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    """Real wall-clock time."""

    def now_utc(self) -> datetime:
        return datetime.now(timezone.utc)

    def monotonic(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Deterministic clock advanced explicitly by mocks and tests."""

    DEFAULT_START = datetime(2025, 1, 15, 12, 0, 0, tzinfo=timezone.utc)

    def __init__(self, start: Optional[datetime] = None):
        self._start = start or self.DEFAULT_START
        self._elapsed = 0.0
        self._lock = threading.Lock()

    def now_utc(self) -> datetime:
        with self._lock:
            return self._start + timedelta(seconds=self._elapsed)

    def monotonic(self) -> float:
        with self._lock:
            return self._elapsed

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            return
        with self._lock:
            self._elapsed += seconds


class _ActiveStage:
    """Mutable view of the stage currently executing; ops add flags to it."""

    def __init__(self, name: str):
        self.name = name
        self.summary = ""
        self.flags: list[str] = []

    def note(self, flag: str) -> None:
        if flag not in self.flags:
            self.flags.append(flag)


EmitFn = Callable[[str, dict], None]


class RunContext:
    """Everything one request needs: config, providers, clock, deadline, traces.

    Confined to a single request. Stage fan-outs may run on worker threads but
    the context itself is only mutated between stages.
    """

    def __init__(
        self,
        config: PipelineConfig,
        chat_client: Any = None,
        rerank_client: Any = None,
        search_client: Any = None,
        clock: Optional[Clock] = None,
        deadline_s: Optional[float] = None,
        emit: Optional[EmitFn] = None,
    ):
        self.config = config
        self.chat_client = chat_client
        self.rerank_client = rerank_client
        self.search_client = search_client
        self.clock: Clock = clock or SystemClock()
        self.traces: list[StageTrace] = []
        self._emit = emit
        self._active: Optional[_ActiveStage] = None
        self._deadline_at: Optional[float] = None
        if deadline_s is not None:
            self._deadline_at = self.clock.monotonic() + deadline_s

    # -- deadline ---------------------------------------------------------

    def check_deadline(self) -> None:
        if self._deadline_at is not None and self.clock.monotonic() > self._deadline_at:
            raise DeadlineExceededError("request deadline expired")

    # -- events -----------------------------------------------------------

    def emit(self, event: str, payload: dict) -> None:
        if self._emit is not None:
            self._emit(event, payload)

    # -- stages -----------------------------------------------------------

    @contextmanager
    def stage(self, name: str) -> Iterator[_ActiveStage]:
        self.check_deadline()
        active = _ActiveStage(name)
        prev = self._active
        self._active = active
        started_at = self.clock.now_utc()
        started_mono = self.clock.monotonic()
        try:
            yield active
        finally:
            self._active = prev
            trace = StageTrace(
                stage=name,
                started_at=started_at.isoformat(),
                duration_s=round(self.clock.monotonic() - started_mono, 6),
                summary=active.summary,
                flags=tuple(active.flags),
            )
            self.traces.append(trace)
            self.emit("stage", trace.to_dict())

    def flag(self, flag: str) -> None:
        if self._active is not None:
            self._active.note(flag)

    # -- provider shortcuts -------------------------------------------------

    def chat(self, request: Any) -> str:
        self.check_deadline()
        return self.chat_client.chat(request)


def parallel_map(
    fn: Callable[[Any], Any],
    items: Sequence[Any],
    max_workers: int,
) -> list[tuple[Any, Optional[BaseException]]]:
    """Apply ``fn`` to every item, bounded by ``max_workers`` in-flight calls.

    Results come back in item order as (value, None) or (None, exception);
    merge order never depends on completion order. ``max_workers <= 1`` runs
    serially, which scenario replays use for bit-deterministic transcripts.
    """
    def attempt(item: Any) -> tuple[Any, Optional[BaseException]]:
        try:
            return fn(item), None
        except BaseException as exc:  # noqa: BLE001 - callers triage per item
            return None, exc

    if not items:
        return []
    if max_workers <= 1 or len(items) == 1:
        return [attempt(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(max_workers, len(items))) as pool:
        return list(pool.map(attempt, items))
