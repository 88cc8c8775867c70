"""Service gateway: the engine that wires Allocate -> Predict -> Aggregate
-> Explain, the TOML config document, and the versioned HTTP API.

The live pipeline config is an immutable snapshot swapped atomically on
PATCH; every request reads exactly one snapshot end to end.
"""

from __future__ import annotations

import json
import logging
import os
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .aggregation import (
    AggregateDecision,
    TopKSelection,
    drop_abstentions,
    dot_product_aggregate,
    majority_vote_aggregate,
    top_k,
)
from .allocation import (
    AllocationVector,
    GroupIndex,
    HashedEmbeddingBackend,
    HttpAllocatorBackend,
    HttpEmbeddingBackend,
    SubredditAllocatorBackend,
    UniformAllocatorBackend,
    build_group_index,
    classification_allocate,
    load_embedding_fixtures,
    similarity_allocate,
)
from .core import (
    AggregationMethod,
    AllocationStrategy,
    EngineError,
    ExpertId,
    ExpertKind,
    ModerationItem,
    PipelineConfig,
    QuorumPolicy,
    snapshot_config,
    validate_item,
)
from .datastore import (
    AlreadyResolved,
    NotFound,
    QueueStatus,
    ReviewQueue,
    TraceStore,
    _append_line,
)
from .experts import (
    ExpertDescriptor,
    ExpertRegistry,
    HttpExpertBackend,
    QuorumNotMet,
    builtin_lexicon_expert,
    fan_out_predict,
)
from .explanation import (
    DecisionTrace,
    ExplanationDoc,
    HttpLlmClient,
    Recommendation,
    build_trace,
    derive_recommendation,
    explain_llm,
    explain_template,
    trace_to_dict,
)

logger = logging.getLogger(__name__)


class ConfigInvalid(EngineError):
    code = "config_invalid"


class PortUnavailable(EngineError):
    code = "port_unavailable"


_PIPELINE_FIELDS = {
    "allocation_strategy",
    "aggregation_method",
    "k",
    "temperature",
    "decision_threshold",
    "consensus_high_fraction",
    "quorum_policy",
    "min_quorum",
    "renormalize_top_k",
}


def _parse_pipeline(doc: Mapping[str, Any]) -> PipelineConfig:
    unknown = set(doc) - _PIPELINE_FIELDS
    if unknown:
        raise ConfigInvalid(
            f"unknown pipeline field(s): {sorted(unknown)}", field=sorted(unknown)[0]
        )
    kwargs: dict[str, Any] = dict(doc)
    try:
        if "allocation_strategy" in kwargs:
            kwargs["allocation_strategy"] = AllocationStrategy(kwargs["allocation_strategy"])
        if "aggregation_method" in kwargs:
            kwargs["aggregation_method"] = AggregationMethod(kwargs["aggregation_method"])
        if "quorum_policy" in kwargs:
            kwargs["quorum_policy"] = QuorumPolicy(kwargs["quorum_policy"])
        return PipelineConfig(**kwargs)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc
    except EngineError as exc:
        raise ConfigInvalid(str(exc), field=exc.field) from exc


@dataclass(frozen=True)
class ExpertConfig:
    kind: ExpertKind
    name: str
    endpoint: str
    rules_or_norm: str
    timeout: float = 5.0
    keywords: Mapping[str, float] = field(default_factory=dict)
    threshold: float = 0.5


@dataclass(frozen=True)
class EngineConfig:
    pipeline: PipelineConfig
    experts: tuple[ExpertConfig, ...]
    data_dir: Path
    allocator_kind: str = "uniform"  # uniform | subreddit | http
    allocator_endpoint: str | None = None
    embedding_kind: str = "hashed"  # hashed | http
    embedding_endpoint: str | None = None
    embedding_dimension: int = 64
    embedding_fixtures: Path | None = None
    similarity_corpus: Path | None = None
    corpus_filter: str = "all"  # all | removed | kept
    deadline_seconds: float = 10.0
    startup_health_check: bool = False
    explainer_mode: str = "template"  # template | llm
    host: str = "127.0.0.1"
    port: int = 8080


def load_config(path: str | Path) -> EngineConfig:
    """Parse and validate the engine's TOML config document."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"config is not valid TOML: {exc}") from exc

    pipeline = _parse_pipeline(doc.get("pipeline", {}))

    experts: list[ExpertConfig] = []
    for i, entry in enumerate(doc.get("experts", [])):
        try:
            kind = ExpertKind(entry.get("kind", "community"))
        except ValueError as exc:
            raise ConfigInvalid(f"experts[{i}]: {exc}", field="kind") from exc
        name = entry.get("name")
        if not name:
            raise ConfigInvalid(f"experts[{i}]: missing name", field="name")
        experts.append(
            ExpertConfig(
                kind=kind,
                name=name,
                endpoint=entry.get("endpoint", "builtin:lexicon"),
                rules_or_norm=entry.get("rules_or_norm", name),
                timeout=float(entry.get("timeout", 5.0)),
                keywords={k: float(v) for k, v in entry.get("keywords", {}).items()},
                threshold=float(entry.get("threshold", 0.5)),
            )
        )
    if not experts:
        raise ConfigInvalid("config declares no experts", field="experts")
    if pipeline.k > len(experts):
        raise ConfigInvalid(
            f"k={pipeline.k} exceeds registry size {len(experts)}", field="k"
        )

    service = doc.get("service", {})
    allocator = doc.get("allocator", {})
    embedding = doc.get("embedding", {})
    explainer = doc.get("explainer", {})
    allocator_kind = allocator.get("kind", "uniform")
    if allocator_kind not in ("uniform", "subreddit", "http"):
        raise ConfigInvalid(f"unknown allocator kind {allocator_kind!r}", field="allocator.kind")
    embedding_kind = embedding.get("kind", "hashed")
    if embedding_kind not in ("hashed", "http"):
        raise ConfigInvalid(f"unknown embedding kind {embedding_kind!r}", field="embedding.kind")
    explainer_mode = explainer.get("mode", "template")
    if explainer_mode not in ("template", "llm"):
        raise ConfigInvalid(f"unknown explainer mode {explainer_mode!r}", field="explainer.mode")
    corpus_filter = embedding.get("corpus_filter", "all")
    if corpus_filter not in ("all", "removed", "kept"):
        raise ConfigInvalid(
            f"unknown corpus filter {corpus_filter!r}", field="embedding.corpus_filter"
        )

    data_dir = Path(service.get("data_dir", "data"))
    if not data_dir.is_absolute():
        data_dir = path.parent / data_dir
    fixtures = embedding.get("fixtures")
    corpus = embedding.get("corpus")
    return EngineConfig(
        pipeline=pipeline,
        experts=tuple(experts),
        data_dir=data_dir,
        allocator_kind=allocator_kind,
        allocator_endpoint=allocator.get("endpoint"),
        embedding_kind=embedding_kind,
        embedding_endpoint=embedding.get("endpoint"),
        embedding_dimension=int(embedding.get("dimension", 64)),
        embedding_fixtures=path.parent / fixtures if fixtures else None,
        similarity_corpus=path.parent / corpus if corpus else None,
        corpus_filter=corpus_filter,
        deadline_seconds=float(service.get("deadline_seconds", 10.0)),
        startup_health_check=bool(service.get("startup_health_check", False)),
        explainer_mode=explainer_mode,
        host=service.get("host", "127.0.0.1"),
        port=int(service.get("port", 8080)),
    )


@dataclass(frozen=True)
class ModerateResponse:
    trace_id: str
    recommendation: str
    consensus: str
    decision: bool
    confidence: float
    explanation: ExplanationDoc

    def as_dict(self) -> dict:
        return {
            "trace_id": self.trace_id,
            "recommendation": self.recommendation,
            "consensus": self.consensus,
            "decision": self.decision,
            "confidence": self.confidence,
            "explanation": json.loads(self.explanation.to_json()),
            "degraded_explainer": self.explanation.degraded,
        }


class ModerationEngine:
    """End-to-end orchestration over one registry, one allocator, and the
    trace/queue stores."""

    def __init__(self, config: EngineConfig, llm_client: Any | None = None):
        self.config = config
        self._cfg = config.pipeline
        self._cfg_lock = threading.Lock()
        self.registry = ExpertRegistry()
        for expert in config.experts:
            desc = ExpertDescriptor(
                id=ExpertId(kind=expert.kind, name=expert.name),
                endpoint=expert.endpoint,
                rules_or_norm=expert.rules_or_norm,
                timeout=expert.timeout,
            )
            if expert.endpoint.startswith("builtin:"):
                if not expert.keywords:
                    raise ConfigInvalid(
                        f"builtin expert {expert.name!r} declares no keywords",
                        field="keywords",
                    )
                backend = builtin_lexicon_expert(expert.keywords, expert.threshold)
                self.registry.register(desc, backend=backend)
            else:
                self.registry.register(desc, health_check=config.startup_health_check)

        if config.allocator_kind == "uniform":
            self.allocator = UniformAllocatorBackend()
        elif config.allocator_kind == "subreddit":
            self.allocator = SubredditAllocatorBackend()
        else:
            if not config.allocator_endpoint:
                raise ConfigInvalid("http allocator needs an endpoint", field="allocator.endpoint")
            self.allocator = HttpAllocatorBackend(config.allocator_endpoint)

        if config.embedding_kind == "hashed":
            self.embedder = HashedEmbeddingBackend(config.embedding_dimension)
        else:
            if not config.embedding_endpoint:
                raise ConfigInvalid("http embedding needs an endpoint", field="embedding.endpoint")
            self.embedder = HttpEmbeddingBackend(config.embedding_endpoint)

        self.group_index: GroupIndex | None = None
        if config.embedding_fixtures is not None:
            self.group_index = load_embedding_fixtures(
                config.embedding_fixtures, self.registry.ids
            )
        elif config.similarity_corpus is not None:
            self.group_index = self._index_from_corpus(config.similarity_corpus)

        config.data_dir.mkdir(parents=True, exist_ok=True)
        self.traces = TraceStore(config.data_dir / "traces.jsonl")
        self.queue = ReviewQueue(config.data_dir / "queue_events.jsonl")
        self._config_audit = config.data_dir / "config_events.jsonl"
        self.llm_client = llm_client

    def _index_from_corpus(self, path: Path) -> GroupIndex:
        from .datastore import ingest

        result = ingest(path)
        by_name = {e.name: e for e in self.registry.ids}
        wanted = self.config.corpus_filter
        pairs = []
        for item in result.items:
            if wanted == "removed" and item.label is not True:
                continue
            if wanted == "kept" and item.label is not False:
                continue
            key = item.subreddit if item.subreddit in by_name else item.norm_violation
            if key in by_name:
                pairs.append((by_name[key], self.embedder.embed(item.embedding_text())))
        if not pairs:
            raise ConfigInvalid(f"similarity corpus {path} matches no registered expert")
        index = build_group_index(pairs)
        uncovered = [e.name for e in self.registry.ids if e not in index.groups]
        if uncovered:
            raise ConfigInvalid(
                f"similarity corpus {path} has no comments for experts: {uncovered}",
                field="embedding.corpus",
            )
        return index

    # -- config snapshotting ------------------------------------------------

    @property
    def cfg(self) -> PipelineConfig:
        return self._cfg

    def patch_config(self, changes: Mapping[str, Any]) -> PipelineConfig:
        """Validate a full replacement config built from the current one
        plus ``changes``, swap it atomically, and audit-log the patch."""
        with self._cfg_lock:
            current = {
                "allocation_strategy": self._cfg.allocation_strategy.value,
                "aggregation_method": self._cfg.aggregation_method.value,
                "k": self._cfg.k,
                "temperature": self._cfg.temperature,
                "decision_threshold": self._cfg.decision_threshold,
                "consensus_high_fraction": self._cfg.consensus_high_fraction,
                "quorum_policy": self._cfg.quorum_policy.value,
                "min_quorum": self._cfg.min_quorum,
                "renormalize_top_k": self._cfg.renormalize_top_k,
            }
            current.update(changes)
            merged = {k: v for k, v in current.items() if v is not None}
            new_cfg = _parse_pipeline(merged)
            if new_cfg.k > len(self.registry):
                raise ConfigInvalid(
                    f"k={new_cfg.k} exceeds registry size {len(self.registry)}", field="k"
                )
            _append_line(
                self._config_audit,
                json.dumps(
                    {
                        "ts": time.time(),
                        "changes": dict(changes),
                        "snapshot": snapshot_config(new_cfg).decode("utf-8"),
                    }
                ),
            )
            self._cfg = new_cfg
            return new_cfg

    # -- pipeline -----------------------------------------------------------

    def _allocate(self, item: ModerationItem, cfg: PipelineConfig) -> AllocationVector:
        if cfg.allocation_strategy is AllocationStrategy.CLASSIFICATION:
            return classification_allocate(item, self.allocator, self.registry.ids, cfg)
        if self.group_index is None:
            raise ConfigInvalid(
                "similarity allocation requires an embedding corpus or fixtures",
                field="embedding",
            )
        return similarity_allocate(item, self.embedder, self.group_index, self.registry.ids, cfg)

    def _run_pipeline(
        self, item: ModerationItem, cfg: PipelineConfig
    ) -> tuple[AllocationVector, TopKSelection, list, AggregateDecision]:
        allocation = self._allocate(item, cfg)
        selection = top_k(
            allocation.experts, allocation.weights, cfg.k, renormalize=cfg.renormalize_top_k
        )
        votes = fan_out_predict(
            self.registry,
            item,
            selection.experts,
            deadline=self.config.deadline_seconds,
            quorum_policy=cfg.quorum_policy,
            min_quorum=min(cfg.resolved_min_quorum, len(selection.experts)),
        )
        reduced, ok_votes = drop_abstentions(selection, votes)
        if cfg.aggregation_method is AggregationMethod.DOT_PRODUCT:
            decision = dot_product_aggregate(reduced, ok_votes, cfg.decision_threshold)
        else:
            decision = majority_vote_aggregate(reduced, ok_votes, cfg.decision_threshold)
        return allocation, selection, votes, decision

    def decide(self, item: ModerationItem) -> tuple[bool, float]:
        """Evaluation path: decision and ranking score, no persistence."""
        _, _, _, decision = self._run_pipeline(item, self._cfg)
        return decision.decision, decision.score

    def moderate(self, request: Mapping[str, Any]) -> ModerateResponse:
        """Full service path: validate, run the pipeline, persist the trace,
        explain, and auto-enqueue Review recommendations."""
        cfg = self._cfg  # one snapshot for the whole request
        item = validate_item(
            {
                "subreddit": request.get("subreddit"),
                "context": request.get("context"),
                "comment": request.get("comment"),
            }
        )
        allocation, selection, votes, decision = self._run_pipeline(item, cfg)
        trace = build_trace(
            item, allocation, selection, votes, decision, cfg, store=self.traces
        )
        recommendation, consensus = derive_recommendation(trace)
        explanation = self._explain(trace)
        if recommendation is Recommendation.REVIEW:
            self.queue.enqueue(trace.trace_id.value, ts=trace.created_at)
        return ModerateResponse(
            trace_id=trace.trace_id.value,
            recommendation=recommendation.value,
            consensus=consensus.value,
            decision=trace.decision.decision,
            confidence=trace.confidence,
            explanation=explanation,
        )

    def _explain(self, trace: DecisionTrace) -> ExplanationDoc:
        if self.config.explainer_mode == "llm":
            client = self.llm_client
            if client is None and os.environ.get("EXPLAINER_URL"):
                client = HttpLlmClient()
            if client is not None:
                return explain_llm(trace, client)
        return explain_template(trace)

    def explain_trace(self, trace_id: str) -> ExplanationDoc:
        return self._explain(self.traces.get(trace_id))

    def experts_health(self) -> list[dict]:
        out = []
        for desc in self.registry.descriptors:
            backend = self.registry.backend(desc.id)
            if isinstance(backend, HttpExpertBackend):
                started = time.monotonic()
                healthy = backend.health()
                latency = time.monotonic() - started
            else:
                healthy, latency = True, 0.0
            out.append(
                {
                    "kind": desc.id.kind.value,
                    "name": desc.id.name,
                    "endpoint": desc.endpoint,
                    "healthy": healthy,
                    "latency_seconds": latency,
                }
            )
        return out


# ---------------------------------------------------------------------------
# HTTP surface
# ---------------------------------------------------------------------------


def _error_status(exc: EngineError) -> int:
    if isinstance(exc, QuorumNotMet):
        return 503
    if isinstance(exc, NotFound):
        return 404
    if isinstance(exc, AlreadyResolved):
        return 409
    if isinstance(exc, (ConfigInvalid,)):
        return 400
    return 400


try:  # pydantic models for the wire bodies; resolved at module scope so
    from pydantic import BaseModel  # string annotations stay importable

    class ModerateBody(BaseModel):
        subreddit: str
        comment: str
        context: str | None = None

    class ResolveBody(BaseModel):
        action: str
        resolver: str
        note: str | None = None

except ImportError:  # pragma: no cover - fastapi always ships pydantic
    ModerateBody = ResolveBody = None  # type: ignore[assignment]


def create_app(engine: ModerationEngine):
    from fastapi import FastAPI, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse

    app = FastAPI(title="modpanel", version="1")

    @app.exception_handler(EngineError)
    async def engine_error_handler(_req: Request, exc: EngineError):
        body = {"code": exc.code, "message": str(exc)}
        if exc.field:
            body["field"] = exc.field
        return JSONResponse(status_code=_error_status(exc), content=body)

    @app.exception_handler(RequestValidationError)
    async def body_error_handler(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "invalid_request", "message": str(exc.errors())},
        )

    token = os.environ.get("ENGINE_TOKEN")

    @app.middleware("http")
    async def bearer_auth(request: Request, call_next):
        if token and request.headers.get("authorization") != f"Bearer {token}":
            return JSONResponse(
                status_code=401,
                content={"code": "unauthorized", "message": "missing or bad bearer token"},
            )
        return await call_next(request)

    @app.get("/v1/health")
    async def health():
        return {"status": "ok"}

    @app.post("/v1/moderate")
    async def moderate(body: ModerateBody):
        return engine.moderate(body.model_dump()).as_dict()

    @app.get("/v1/traces/{trace_id}")
    async def get_trace(trace_id: str):
        trace = engine.traces.get(trace_id)
        return {
            "trace": trace_to_dict(trace),
            "recommendation": engine.traces.recommendation(trace_id),
        }

    @app.get("/v1/traces")
    async def list_traces(
        subreddit: str | None = None,
        decision: bool | None = None,
        recommendation: str | None = None,
        since: float | None = None,
        until: float | None = None,
    ):
        traces = engine.traces.list(
            subreddit=subreddit,
            decision=decision,
            recommendation=recommendation,
            since=since,
            until=until,
        )
        return {
            "traces": [
                {
                    "trace_id": t.trace_id.value,
                    "subreddit": t.item.subreddit,
                    "decision": t.decision.decision,
                    "confidence": t.confidence,
                    "recommendation": engine.traces.recommendation(t.trace_id.value),
                    "created_at": t.created_at,
                }
                for t in traces
            ]
        }

    @app.get("/v1/queue")
    async def list_queue(status: str | None = None):
        parsed = QueueStatus(status) if status else None
        entries = engine.queue.entries(parsed)
        out = []
        for entry in entries:
            trace = engine.traces.get(entry.trace_id)
            # Listings render the deterministic template view of the stored
            # trace; the LLM explainer only runs on the moderate/explain
            # paths, never on every queue poll.
            explanation = explain_template(trace)
            out.append(
                {
                    "trace_id": entry.trace_id,
                    "status": entry.status.value,
                    "enqueued_at": entry.enqueued_at,
                    "resolver": entry.resolver,
                    "note": entry.note,
                    "resolved_at": entry.resolved_at,
                    "subreddit": trace.item.subreddit,
                    "comment": trace.item.comment,
                    "explanation": json.loads(explanation.to_json()),
                }
            )
        return {"entries": out}

    @app.post("/v1/queue/{trace_id}/resolve")
    async def resolve(trace_id: str, body: ResolveBody):
        entry = engine.queue.resolve(trace_id, body.action, body.resolver, body.note)
        return {
            "trace_id": entry.trace_id,
            "status": entry.status.value,
            "resolver": entry.resolver,
            "note": entry.note,
            "resolved_at": entry.resolved_at,
        }

    @app.get("/v1/config")
    async def get_config():
        return json.loads(snapshot_config(engine.cfg).decode("utf-8"))

    @app.patch("/v1/config")
    async def patch_config(body: dict):
        new_cfg = engine.patch_config(body)
        return json.loads(snapshot_config(new_cfg).decode("utf-8"))

    @app.get("/v1/experts")
    async def experts():
        return {"experts": engine.experts_health()}

    return app


def serve(config_path: str | Path, host: str | None = None, port: int | None = None) -> None:
    """Run the HTTP service until interrupted."""
    import uvicorn

    config = load_config(config_path)
    engine = ModerationEngine(config)
    app = create_app(engine)
    try:
        uvicorn.run(app, host=host or config.host, port=port or config.port, log_level="info")
    except SystemExit as exc:  # uvicorn wraps bind failures
        raise PortUnavailable(f"cannot bind {config.host}:{config.port}") from exc
