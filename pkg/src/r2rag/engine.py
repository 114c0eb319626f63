"""Request orchestration: route a query, run the matching pipeline, trace it.

Model ids select behavior: the routed id consults the classifier; the two
pipeline ids force their path and never touch the classifier. The engine is
shared across concurrent requests; per-request state lives in a RunContext.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass
from typing import Optional

from .answergen import AnswerResult, CitationReport, PipelineKind
from .classifier import (
    LogRegModel,
    RouteLabel,
    RouteMethod,
    RoutingDecision,
    classify_llm,
    featurize,
    lr_predict,
)
from .core import PipelineConfig, Query
from .errors import DeadlineExceededError
from .runtime import Clock, EmitFn, RunContext, SystemClock
from .vanilla import run_vanilla
from .agent import run_agent

ROUTED_MODEL_ID = "r2rag"
VANILLA_MODEL_ID = "vanilla-rag"
AGENT_MODEL_ID = "vanilla-agent"

DEFAULT_REQUEST_DEADLINE_S = 600.0


@dataclass(frozen=True)
class ModelRoute:
    model_id: str
    forced_pipeline: Optional[PipelineKind]
    description: str

    def to_dict(self) -> dict:
        return {
            "id": self.model_id,
            "forced_pipeline": self.forced_pipeline.value if self.forced_pipeline else None,
            "description": self.description,
        }


def default_model_routes() -> list[ModelRoute]:
    return [
        ModelRoute(ROUTED_MODEL_ID, None, "classifier-routed: simple queries single-pass, complex queries agent loop"),
        ModelRoute(VANILLA_MODEL_ID, PipelineKind.VANILLA_RAG, "single-pass retrieve-rerank-generate"),
        ModelRoute(AGENT_MODEL_ID, PipelineKind.VANILLA_AGENT, "iterative evidence-accumulating agent"),
    ]


class UnknownModelError(KeyError):
    pass


class RagEngine:
    def __init__(
        self,
        config: PipelineConfig,
        chat_client,
        rerank_client,
        search_client,
        clock: Optional[Clock] = None,
        routing_method: str = "llm",
        logreg_model: Optional[LogRegModel] = None,
        request_deadline_s: float = DEFAULT_REQUEST_DEADLINE_S,
        extra_models: Optional[list[ModelRoute]] = None,
    ):
        self.config = config
        self.chat_client = chat_client
        self.rerank_client = rerank_client
        self.search_client = search_client
        self.clock: Clock = clock or SystemClock()
        self.routing_method = routing_method
        self.logreg_model = logreg_model
        self.request_deadline_s = request_deadline_s
        self._models: dict[str, ModelRoute] = {r.model_id: r for r in default_model_routes()}
        for route in extra_models or []:
            self._models[route.model_id] = route

    # -- models -------------------------------------------------------------

    def list_models(self) -> list[ModelRoute]:
        return list(self._models.values())

    def resolve_model(self, model_id: str) -> ModelRoute:
        try:
            return self._models[model_id]
        except KeyError:
            raise UnknownModelError(model_id) from None

    def register_model(self, route: ModelRoute) -> None:
        self._models[route.model_id] = route

    # -- routing --------------------------------------------------------------

    def route(self, ctx: RunContext, question: str) -> RoutingDecision:
        if self.routing_method == "logreg" and self.logreg_model is not None:
            return lr_predict(self.logreg_model, featurize(question))
        return classify_llm(ctx, question)

    # -- execution ------------------------------------------------------------

    def new_context(
        self,
        emit: Optional[EmitFn] = None,
        deadline_s: Optional[float] = None,
    ) -> RunContext:
        return RunContext(
            config=self.config,
            chat_client=self.chat_client,
            rerank_client=self.rerank_client,
            search_client=self.search_client,
            clock=self.clock,
            deadline_s=deadline_s if deadline_s is not None else self.request_deadline_s,
            emit=emit,
        )

    def run(
        self,
        query_text: str,
        model_id: str = ROUTED_MODEL_ID,
        emit: Optional[EmitFn] = None,
        deadline_s: Optional[float] = None,
        query_id: Optional[str] = None,
    ) -> AnswerResult:
        route = self.resolve_model(model_id)
        ctx = self.new_context(emit=emit, deadline_s=deadline_s)
        query = Query(
            text=query_text,
            id=query_id or uuid.uuid4().hex,
            received_at=ctx.clock.now_utc(),
        )

        if route.forced_pipeline is not None:
            pipeline = route.forced_pipeline
            label = (
                RouteLabel.SIMPLE
                if pipeline is PipelineKind.VANILLA_RAG
                else RouteLabel.COMPLEX
            )
            decision = RoutingDecision(
                label, RouteMethod.FORCED, raw_evidence=f"forced:{route.model_id}"
            )
            ctx.emit("routing", decision.to_dict())
        else:
            with ctx.stage("route") as st:
                decision = self.route(ctx, query.text)
                st.summary = f"{decision.label.value} via {decision.method.value}"
                ctx.emit("routing", decision.to_dict())
            pipeline = (
                PipelineKind.VANILLA_AGENT
                if decision.label is RouteLabel.COMPLEX
                else PipelineKind.VANILLA_RAG
            )

        try:
            if pipeline is PipelineKind.VANILLA_AGENT:
                result = run_agent(ctx, query)
            else:
                result = run_vanilla(ctx, query)
        except DeadlineExceededError:
            result = _partial_result(pipeline)
        result.routing = decision
        result.traces = list(ctx.traces)
        return result


def _partial_result(pipeline: PipelineKind) -> AnswerResult:
    return AnswerResult(
        text="",
        cited_doc_ids=[],
        citation_report=CitationReport(0, 0, (), ()),
        pipeline=pipeline,
        timed_out=True,
    )
