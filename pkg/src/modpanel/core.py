"""Shared domain types: moderation items, expert identities, pipeline config,
canonical config snapshots, and trace identifiers.

Everything here is an immutable value object, safe to share across threads.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

# The five cross-community norm-violation themes. Fixed vocabulary for v1;
# norm experts must be named from this list.
NORM_THEMES: tuple[str, ...] = (
    "Bad Faith or Unsubstantiated Arguments",
    "Civility and Respect",
    "Low Effort, Off-Topic, or Non-Substantive Contributions",
    "Rule Enforcement and Structural Integrity of Discussions",
    "Spam, Solicitation, Misinformation, and Machine-Generated Content",
)

# The seven source communities used by the default community ensemble.
SOURCE_SUBREDDITS: tuple[str, ...] = (
    "r/AskHistorians",
    "r/AskReddit",
    "r/Games",
    "r/anime",
    "r/changemyview",
    "r/politics",
    "r/science",
)


class EngineError(Exception):
    """Base for all engine errors; carries a machine-readable code."""

    code = "engine_error"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class EmptyComment(EngineError):
    code = "empty_comment"


class UnknownNormTheme(EngineError):
    code = "unknown_norm_theme"


class EmptyInput(EngineError):
    code = "empty_input"


class ExpertKind(str, Enum):
    COMMUNITY = "community"
    NORM_VIOLATION = "norm_violation"


class AllocationStrategy(str, Enum):
    CLASSIFICATION = "classification"
    SIMILARITY = "similarity"


class AggregationMethod(str, Enum):
    DOT_PRODUCT = "dot_product"
    MAJORITY_VOTE = "majority_vote"


class QuorumPolicy(str, Enum):
    FAIL_FAST = "fail_fast"
    ABSTAIN_RENORMALIZE = "abstain_renormalize"


@dataclass(frozen=True, order=True)
class ExpertId:
    """Identity of one expert: its kind plus a name drawn from that kind's
    vocabulary (a subreddit, or one of the five norm themes)."""

    kind: ExpertKind
    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise EmptyInput("expert name must be non-empty", field="name")
        if self.kind is ExpertKind.NORM_VIOLATION and self.name not in NORM_THEMES:
            raise UnknownNormTheme(
                f"unknown norm theme {self.name!r}; expected one of {list(NORM_THEMES)}",
                field="name",
            )

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.name}"


@dataclass(frozen=True)
class ModerationItem:
    """One (subreddit, context, comment) record, the unit of moderation.

    ``label`` is the moderator ground truth when known (True = removed);
    ``norm_violation`` names the violated theme for norm-labelled data.
    """

    item_id: str
    subreddit: str
    comment: str
    context: str | None = None
    label: bool | None = None
    norm_violation: str | None = None

    def embedding_text(self) -> str:
        """Input text for allocator backends: context and comment joined,
        context omitted when absent."""
        if self.context:
            return f"{self.context}\n\n{self.comment}"
        return self.comment


def _content_digest(subreddit: str, context: str | None, comment: str) -> str:
    h = hashlib.sha256()
    for part in (subreddit, context or "", comment):
        raw = part.encode("utf-8")
        h.update(len(raw).to_bytes(8, "big"))
        h.update(raw)
    return h.hexdigest()[:16]


def validate_item(raw: Mapping[str, Any]) -> ModerationItem:
    """Validate and normalize one ingestion record into a ModerationItem.

    Trims whitespace, treats missing/blank context as absent, and rejects
    records with an empty comment or an unknown norm theme. Idempotent:
    revalidating a validated item's fields is a no-op.
    """
    comment = str(raw.get("comment") or "").strip()
    if not comment:
        raise EmptyComment("comment is empty after trimming", field="comment")
    subreddit = str(raw.get("subreddit") or "").strip()
    if not subreddit:
        raise EmptyInput("subreddit must be non-empty", field="subreddit")
    context = raw.get("context")
    if context is not None:
        context = str(context).strip() or None
    norm = raw.get("norm_violation")
    if norm is not None:
        norm = str(norm).strip()
        if norm not in NORM_THEMES:
            raise UnknownNormTheme(
                f"unknown norm theme {norm!r}; expected one of {list(NORM_THEMES)}",
                field="norm_violation",
            )
    label = raw.get("label")
    if label is not None:
        label = bool(label)
    item_id = str(raw.get("item_id") or "").strip()
    if not item_id:
        item_id = _content_digest(subreddit, context, comment)
    return ModerationItem(
        item_id=item_id,
        subreddit=subreddit,
        comment=comment,
        context=context,
        label=label,
        norm_violation=norm,
    )


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the Allocate -> Predict -> Aggregate path.

    ``temperature`` of None resolves per strategy: 0.1 for similarity
    allocation, 1.0 for classification. ``min_quorum`` of None resolves to
    ceil(k / 2). The decision threshold is strict: score must exceed it.
    """

    allocation_strategy: AllocationStrategy = AllocationStrategy.SIMILARITY
    aggregation_method: AggregationMethod = AggregationMethod.DOT_PRODUCT
    k: int = 5
    temperature: float | None = None
    decision_threshold: float = 0.5
    consensus_high_fraction: float = 0.8
    quorum_policy: QuorumPolicy = QuorumPolicy.ABSTAIN_RENORMALIZE
    min_quorum: int | None = None
    renormalize_top_k: bool = True

    def __post_init__(self) -> None:
        if self.k < 1:
            raise EngineError("k must be a positive integer", field="k")
        if self.temperature is not None and not (
            math.isfinite(self.temperature) and self.temperature > 0
        ):
            raise EngineError("temperature must be > 0", field="temperature")
        if not 0 < self.decision_threshold < 1:
            raise EngineError("decision_threshold must lie in (0, 1)", field="decision_threshold")
        if not 0.5 < self.consensus_high_fraction <= 1:
            raise EngineError(
                "consensus_high_fraction must lie in (0.5, 1]",
                field="consensus_high_fraction",
            )
        if self.min_quorum is not None and self.min_quorum < 1:
            raise EngineError("min_quorum must be a positive integer", field="min_quorum")

    @property
    def resolved_temperature(self) -> float:
        if self.temperature is not None:
            return self.temperature
        if self.allocation_strategy is AllocationStrategy.SIMILARITY:
            return 0.1
        return 1.0

    @property
    def resolved_min_quorum(self) -> int:
        if self.min_quorum is not None:
            return self.min_quorum
        return math.ceil(self.k / 2)

    def with_updates(self, **changes: Any) -> "PipelineConfig":
        return replace(self, **changes)


def snapshot_config(cfg: PipelineConfig) -> bytes:
    """Canonical byte rendering of a config: sorted keys, resolved defaults,
    compact separators. Semantically identical configs snapshot to identical
    bytes; any field change produces different bytes."""
    doc = {
        "aggregation_method": cfg.aggregation_method.value,
        "allocation_strategy": cfg.allocation_strategy.value,
        "consensus_high_fraction": cfg.consensus_high_fraction,
        "decision_threshold": cfg.decision_threshold,
        "k": cfg.k,
        "min_quorum": cfg.resolved_min_quorum,
        "quorum_policy": cfg.quorum_policy.value,
        "renormalize_top_k": cfg.renormalize_top_k,
        "temperature": cfg.resolved_temperature,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_from_snapshot(snapshot: bytes) -> PipelineConfig:
    """Rebuild the config a snapshot was taken from. Round-trips with
    snapshot_config byte-exactly."""
    doc = json.loads(snapshot.decode("utf-8"))
    return PipelineConfig(
        allocation_strategy=AllocationStrategy(doc["allocation_strategy"]),
        aggregation_method=AggregationMethod(doc["aggregation_method"]),
        k=int(doc["k"]),
        temperature=float(doc["temperature"]),
        decision_threshold=float(doc["decision_threshold"]),
        consensus_high_fraction=float(doc["consensus_high_fraction"]),
        quorum_policy=QuorumPolicy(doc["quorum_policy"]),
        min_quorum=int(doc["min_quorum"]),
        renormalize_top_k=bool(doc["renormalize_top_k"]),
    )


@dataclass(frozen=True)
class TraceId:
    """64-hex digest identifying one decision trace."""

    value: str

    def __post_init__(self) -> None:
        if len(self.value) != 64 or any(c not in "0123456789abcdef" for c in self.value):
            raise EngineError("trace id must be a 64-hex string", field="value")

    def __str__(self) -> str:
        return self.value


def trace_id(item: ModerationItem, snapshot: bytes, salt: bytes) -> TraceId:
    """Deterministic trace identifier: digest of (item content, config
    snapshot, salt). The salt distinguishes re-moderations of one item."""
    if not snapshot or not salt:
        raise EmptyInput("snapshot and salt must be non-empty")
    h = hashlib.sha256()
    for part in (
        item.subreddit.encode("utf-8"),
        (item.context or "").encode("utf-8"),
        item.comment.encode("utf-8"),
        snapshot,
        salt,
    ):
        h.update(len(part).to_bytes(8, "big"))
        h.update(part)
    return TraceId(h.hexdigest())
