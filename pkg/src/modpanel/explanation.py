"""Decision traces and the three-level explanation layer.

A DecisionTrace is the complete audit record of one moderation decision.
Explanations are bound to a trace and validated against it: the deterministic
template explainer is constructed to pass validation on every trace, and the
LLM explainer falls back to it (flagged degraded) when the model's response
violates the schema twice.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Protocol

import requests

from .aggregation import (
    AggregateDecision,
    TopKSelection,
    drop_abstentions,
    dot_product_aggregate,
    majority_vote_aggregate,
    pipeline_confidence,
)
from .allocation import AllocationVector
from .core import (
    AggregationMethod,
    EngineError,
    ExpertId,
    ExpertKind,
    ModerationItem,
    PipelineConfig,
    TraceId,
    config_from_snapshot,
    snapshot_config,
    trace_id as make_trace_id,
)
from .experts import ExpertVote, VoteStatus


class InconsistentTrace(EngineError):
    code = "inconsistent_trace"


class ExplainerUnavailable(EngineError):
    code = "explainer_unavailable"


class Recommendation(str, Enum):
    REMOVE = "Remove"
    REVIEW = "Review"
    KEEP = "Keep"


class Consensus(str, Enum):
    HIGH = "High"
    LOW = "Low"


@dataclass(frozen=True)
class DecisionTrace:
    trace_id: TraceId
    item: ModerationItem
    allocation: AllocationVector
    selection: TopKSelection
    votes: tuple[ExpertVote, ...]
    decision: AggregateDecision
    confidence: float
    config_snapshot: bytes
    created_at: float
    tie_broken: bool


def recompute_decision(
    selection: TopKSelection,
    votes: tuple[ExpertVote, ...] | list[ExpertVote],
    cfg: PipelineConfig,
) -> tuple[AggregateDecision, float]:
    """Replay aggregation from a selection and its votes: drop abstentions,
    renormalize over the Ok experts, aggregate per the configured method."""
    reduced, ok_votes = drop_abstentions(selection, list(votes))
    if cfg.aggregation_method is AggregationMethod.DOT_PRODUCT:
        decision = dot_product_aggregate(reduced, ok_votes, cfg.decision_threshold)
    else:
        decision = majority_vote_aggregate(reduced, ok_votes, cfg.decision_threshold)
    return decision, pipeline_confidence(decision)


def build_trace(
    item: ModerationItem,
    allocation: AllocationVector,
    selection: TopKSelection,
    votes: list[ExpertVote],
    decision: AggregateDecision,
    cfg: PipelineConfig,
    store: Any | None = None,
    created_at: float | None = None,
) -> DecisionTrace:
    """Assemble, integrity-check, and optionally persist one trace.

    The provided decision must match a recomputation from selection + votes
    + config exactly; anything else is a tampered or inconsistent pipeline
    output and is rejected.
    """
    recomputed, confidence = recompute_decision(selection, votes, cfg)
    if (
        recomputed.decision != decision.decision
        or recomputed.score != decision.score
        or recomputed.votes_for != decision.votes_for
        or recomputed.votes_against != decision.votes_against
        or recomputed.tie_broken != decision.tie_broken
    ):
        raise InconsistentTrace(
            "provided decision does not match recomputation from votes and config"
        )
    if created_at is None:
        created_at = time.time()
    snapshot = snapshot_config(cfg)
    salt = repr(created_at).encode("utf-8")
    trace = DecisionTrace(
        trace_id=make_trace_id(item, snapshot, salt),
        item=item,
        allocation=allocation,
        selection=selection,
        votes=tuple(votes),
        decision=decision,
        confidence=confidence,
        config_snapshot=snapshot,
        created_at=created_at,
        tie_broken=decision.tie_broken,
    )
    if store is not None:
        store.append(trace)
    return trace


def verify_trace(trace: DecisionTrace) -> bool:
    """True iff the stored decision and confidence replay exactly from the
    stored selection, votes, and config snapshot."""
    cfg = config_from_snapshot(trace.config_snapshot)
    recomputed, confidence = recompute_decision(trace.selection, trace.votes, cfg)
    return (
        recomputed.decision == trace.decision.decision
        and recomputed.score == trace.decision.score
        and recomputed.votes_for == trace.decision.votes_for
        and recomputed.votes_against == trace.decision.votes_against
        and recomputed.tie_broken == trace.tie_broken
        and confidence == trace.confidence
    )


def derive_recommendation(trace: DecisionTrace) -> tuple[Recommendation, Consensus]:
    """Consensus is High iff the winning side's vote share over the selected
    experts reaches the configured fraction; Low consensus always routes the
    item to human review."""
    cfg = config_from_snapshot(trace.config_snapshot)
    k = len(trace.selection.experts)
    winning = max(trace.decision.votes_for, trace.decision.votes_against)
    consensus = Consensus.HIGH if winning / k >= cfg.consensus_high_fraction else Consensus.LOW
    if consensus is Consensus.LOW:
        return Recommendation.REVIEW, consensus
    if trace.decision.decision:
        return Recommendation.REMOVE, consensus
    return Recommendation.KEEP, consensus


# ---------------------------------------------------------------------------
# Trace serialization (shared with the datastore)
# ---------------------------------------------------------------------------


def trace_to_dict(trace: DecisionTrace) -> dict:
    return {
        "trace_id": trace.trace_id.value,
        "item": {
            "item_id": trace.item.item_id,
            "subreddit": trace.item.subreddit,
            "context": trace.item.context,
            "comment": trace.item.comment,
            "label": trace.item.label,
            "norm_violation": trace.item.norm_violation,
        },
        "allocation": {
            "experts": [[e.kind.value, e.name] for e in trace.allocation.experts],
            "weights": list(trace.allocation.weights),
        },
        "selection": {
            "experts": [[e.kind.value, e.name] for e in trace.selection.experts],
            "weights": list(trace.selection.weights),
            "original_weights": list(trace.selection.original_weights),
        },
        "votes": [
            {
                "expert": [v.expert.kind.value, v.expert.name],
                "vote": v.vote,
                "confidence": v.confidence,
                "latency": v.latency,
                "status": v.status.value,
                "spans": list(v.spans),
            }
            for v in trace.votes
        ],
        "decision": {
            "decision": trace.decision.decision,
            "score": trace.decision.score,
            "method": trace.decision.method.value,
            "votes_for": trace.decision.votes_for,
            "votes_against": trace.decision.votes_against,
            "tie_broken": trace.decision.tie_broken,
        },
        "confidence": trace.confidence,
        "config_snapshot": trace.config_snapshot.decode("utf-8"),
        "created_at": trace.created_at,
        "tie_broken": trace.tie_broken,
    }


def _expert_from_pair(pair: list) -> ExpertId:
    return ExpertId(kind=ExpertKind(pair[0]), name=pair[1])


def trace_from_dict(doc: dict) -> DecisionTrace:
    item = doc["item"]
    decision = doc["decision"]
    return DecisionTrace(
        trace_id=TraceId(doc["trace_id"]),
        item=ModerationItem(
            item_id=item["item_id"],
            subreddit=item["subreddit"],
            comment=item["comment"],
            context=item.get("context"),
            label=item.get("label"),
            norm_violation=item.get("norm_violation"),
        ),
        allocation=AllocationVector(
            experts=tuple(_expert_from_pair(p) for p in doc["allocation"]["experts"]),
            weights=tuple(doc["allocation"]["weights"]),
        ),
        selection=TopKSelection(
            experts=tuple(_expert_from_pair(p) for p in doc["selection"]["experts"]),
            weights=tuple(doc["selection"]["weights"]),
            original_weights=tuple(doc["selection"]["original_weights"]),
        ),
        votes=tuple(
            ExpertVote(
                expert=_expert_from_pair(v["expert"]),
                vote=v["vote"],
                confidence=v["confidence"],
                latency=v["latency"],
                status=VoteStatus(v["status"]),
                spans=tuple(v.get("spans", ())),
            )
            for v in doc["votes"]
        ),
        decision=AggregateDecision(
            decision=decision["decision"],
            score=decision["score"],
            method=AggregationMethod(decision["method"]),
            votes_for=decision["votes_for"],
            votes_against=decision["votes_against"],
            tie_broken=decision["tie_broken"],
        ),
        confidence=doc["confidence"],
        config_snapshot=doc["config_snapshot"].encode("utf-8"),
        created_at=doc["created_at"],
        tie_broken=doc["tie_broken"],
    )


# ---------------------------------------------------------------------------
# Explanation documents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplanationDoc:
    """Three-level moderator-facing rationale bound to one trace.

    Serialized key order is fixed: Summary, Key Points, Trace. ``raw_json``
    keeps the original serialized form (the model's own bytes for LLM docs)
    so key-order validation inspects what was actually produced.
    """

    summary: str
    key_points: tuple[str, ...]
    decision_label: str
    confidence: float
    salient_spans: tuple[str, ...]
    recommendation: Recommendation
    consensus: Consensus
    degraded: bool = False
    raw_json: str = ""

    def to_json(self) -> str:
        doc = {
            "Summary": self.summary,
            "Key Points": list(self.key_points),
            "Trace": {
                "Decision": self.decision_label,
                "Confidence": self.confidence,
                "Salient Spans": list(self.salient_spans),
            },
        }
        return json.dumps(doc, ensure_ascii=False)

    def serialized(self) -> str:
        return self.raw_json or self.to_json()


def explain_template(trace: DecisionTrace) -> ExplanationDoc:
    """Deterministic explainer: renders the trace into the fixed three-level
    shape. Salient spans come from the keyword matches reported by builtin
    experts that voted remove; Keep recommendations carry none."""
    recommendation, consensus = derive_recommendation(trace)
    top_name = trace.selection.experts[0].name
    top_weight = trace.selection.weights[0]
    k = len(trace.selection.experts)
    agreeing = (
        trace.decision.votes_for if trace.decision.decision else trace.decision.votes_against
    )
    summary = f"{recommendation.value}: {top_name}; {consensus.value} Consensus"
    key_points = (
        f"Top expert: {top_name} ({top_weight:.2f})",
        f"{consensus.value} consensus: {agreeing}/{k} experts – {recommendation.value}",
    )
    spans: tuple[str, ...] = ()
    if recommendation is not Recommendation.KEEP:
        seen: list[str] = []
        for vote in trace.votes:
            if vote.status is VoteStatus.OK and vote.vote:
                for span in vote.spans:
                    if span not in seen and span in trace.item.comment:
                        seen.append(span)
        spans = tuple(seen[:3])
    doc = ExplanationDoc(
        summary=summary,
        key_points=key_points,
        decision_label="REMOVE" if trace.decision.decision else "KEEP",
        confidence=round(trace.confidence, 2),
        salient_spans=spans,
        recommendation=recommendation,
        consensus=consensus,
    )
    return replace(doc, raw_json=doc.to_json())


# ---------------------------------------------------------------------------
# Prompt rendering for the LLM explainer
# ---------------------------------------------------------------------------

_SYSTEM_PROMPT = (
    'You are "ModPanel-Explain", an assistant that writes short, '
    "moderator-facing rationales for AI-based content moderation decisions.\n"
    "- Audience: Experienced Reddit moderators.\n"
    "- Style: concise, neutral, no technical jargon, no private model thoughts.\n"
    "- Output JSON keys in this exact order: Summary, Key Points, Trace."
)

_OUTPUT_SPEC = (
    "Generate:\n"
    "1. Summary: <=25 words stating outcome recommendation ('Remove', 'Review',"
    " 'Keep'), key norm violated, consensus-level among experts ('Low', 'High').\n"
    "\n"
    "2. Key Points: 2 bullet points (<=10 words each) covering:\n"
    "- Top expert: <Name_of_Expert> (<Weight>)\n"
    "- <Level_of_Consensus> consensus: X/K experts – <Recommendation>\n"
    "\n"
    "3. Trace:\n"
    '- Decision: "<Decision>"\n'
    "- Confidence: <confidence_score>\n"
    '- Salient Spans: ["<span_1>", "<span_2>"]\n'
    "\n"
    "For 'Salient Spans', identify up to three specific sequences within the"
    " comment that likely led to the moderation outcome, keeping in mind the"
    " top experts that voted for its removal. If the outcome is to 'Keep' the"
    " comment, leave the Salient Span list empty.\n"
    "\n"
    "Respond only with valid JSON."
)

# Fixed few-shot exemplars covering each outcome, serialized once so the
# rendering is byte-stable.
_EXEMPLARS = (
    (
        '{"decision": "REMOVE", "confidence": 0.91, "top_expert": ["community",'
        ' "r/politics", 0.62], "votes": "5/5 remove"}',
        '{"Summary": "Remove: r/politics; High Consensus", "Key Points":'
        ' ["Top expert: r/politics (0.62)", "High consensus: 5/5 experts –'
        ' Remove"], "Trace": {"Decision": "REMOVE", "Confidence": 0.91,'
        ' "Salient Spans": ["total moron"]}}',
    ),
    (
        '{"decision": "REMOVE", "confidence": 0.58, "top_expert":'
        ' ["norm_violation", "Civility and Respect", 0.35], "votes": "2/5 remove"}',
        '{"Summary": "Review: Civility and Respect; Low Consensus", "Key Points":'
        ' ["Top expert: Civility and Respect (0.35)", "Low consensus: 2/5 experts'
        ' – Review"], "Trace": {"Decision": "REMOVE", "Confidence": 0.58,'
        ' "Salient Spans": ["go back to your country", "lmao"]}}',
    ),
    (
        '{"decision": "KEEP", "confidence": 0.97, "top_expert": ["community",'
        ' "r/science", 0.44], "votes": "0/5 remove"}',
        '{"Summary": "Keep: r/science; High Consensus", "Key Points":'
        ' ["Top expert: r/science (0.44)", "High consensus: 5/5 experts –'
        ' Keep"], "Trace": {"Decision": "KEEP", "Confidence": 0.97,'
        ' "Salient Spans": []}}',
    ),
)


def _trace_prompt_payload(trace: DecisionTrace) -> str:
    doc = trace_to_dict(trace)
    # The prompt shows the decision-relevant slice, not raw plumbing fields.
    payload = {
        "trace_id": doc["trace_id"],
        "comment": doc["item"]["comment"],
        "context": doc["item"]["context"],
        "subreddit": doc["item"]["subreddit"],
        "selection": doc["selection"],
        "votes": [
            {"expert": v["expert"], "vote": v["vote"], "confidence": v["confidence"],
             "status": v["status"]}
            for v in doc["votes"]
        ],
        "decision": doc["decision"],
        "confidence": doc["confidence"],
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True)


def prompt_messages(trace: DecisionTrace) -> list[dict[str, str]]:
    """Chat messages for the explainer model; sampling must run at
    temperature 0 so the rendering stays reproducible end to end."""
    examples = "\n\n".join(
        f"Example trace: {trace_json}\nExample output: {output_json}"
        for trace_json, output_json in _EXEMPLARS
    )
    user = (
        f"Here is the decision trace for a comment: {_trace_prompt_payload(trace)}\n\n"
        f"{_OUTPUT_SPEC}\n\n### Examples:\n{examples}"
    )
    return [
        {"role": "system", "content": _SYSTEM_PROMPT},
        {"role": "user", "content": user},
    ]


def render_prompt(trace: DecisionTrace) -> str:
    """Single-document rendering of the prompt (system block then user
    block). Identical traces render identical bytes; distinct trace ids
    render distinct prompts."""
    messages = prompt_messages(trace)
    return f"### System:\n{messages[0]['content']}\n\n### User:\n{messages[1]['content']}\n"


class LlmClient(Protocol):
    def complete(self, messages: list[dict[str, str]]) -> str: ...


class HttpLlmClient:
    """Generic chat-completion wire client: POST {endpoint}
    {"messages": [...], "temperature": 0} -> {"content": str}.

    Endpoint and credentials come from EXPLAINER_URL / EXPLAINER_KEY unless
    given explicitly. A semaphore caps in-flight requests.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_in_flight: int = 4,
    ):
        self.endpoint = endpoint or os.environ.get("EXPLAINER_URL", "")
        self.api_key = api_key if api_key is not None else os.environ.get("EXPLAINER_KEY")
        if not self.endpoint:
            raise ExplainerUnavailable("no explainer endpoint configured (EXPLAINER_URL)")
        self.timeout = timeout
        self._gate = threading.Semaphore(max_in_flight)

    def complete(self, messages: list[dict[str, str]]) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        with self._gate:
            resp = requests.post(
                self.endpoint,
                json={"messages": messages, "temperature": 0},
                headers=headers,
                timeout=self.timeout,
            )
        resp.raise_for_status()
        return resp.json()["content"]


_SUMMARY_RE = re.compile(r"^\s*(Remove|Review|Keep)\b", re.IGNORECASE)
_CONSENSUS_RE = re.compile(r"\b(High|Low)\s+Consensus\b", re.IGNORECASE)


def parse_llm_doc(content: str) -> ExplanationDoc:
    """Parse a model response into an ExplanationDoc; any shape violation
    raises ValueError for the retry/fallback path to handle."""
    doc = json.loads(content)
    if not isinstance(doc, dict):
        raise ValueError("response is not a JSON object")
    for key in ("Summary", "Key Points", "Trace"):
        if key not in doc:
            raise ValueError(f"response missing {key!r} key")
    summary = doc["Summary"]
    key_points = doc["Key Points"]
    trace_view = doc["Trace"]
    if not isinstance(summary, str) or not isinstance(key_points, list):
        raise ValueError("malformed Summary or Key Points")
    if len(key_points) != 2:
        raise ValueError(f"expected exactly 2 key points, got {len(key_points)}")
    if not isinstance(trace_view, dict):
        raise ValueError("malformed Trace")
    for key in ("Decision", "Confidence", "Salient Spans"):
        if key not in trace_view:
            raise ValueError(f"Trace missing {key!r}")
    decision_label = str(trace_view["Decision"]).upper()
    if decision_label not in ("REMOVE", "KEEP"):
        raise ValueError(f"unknown decision label {trace_view['Decision']!r}")
    rec_match = _SUMMARY_RE.match(summary)
    if not rec_match:
        raise ValueError("summary does not open with Remove/Review/Keep")
    consensus_match = _CONSENSUS_RE.search(summary)
    if not consensus_match:
        raise ValueError("summary does not state High/Low consensus")
    return ExplanationDoc(
        summary=summary,
        key_points=tuple(str(k) for k in key_points),
        decision_label=decision_label,
        confidence=float(trace_view["Confidence"]),
        salient_spans=tuple(str(s) for s in trace_view["Salient Spans"]),
        recommendation=Recommendation(rec_match.group(1).capitalize()),
        consensus=Consensus(consensus_match.group(1).capitalize()),
        raw_json=content,
    )


def explain_llm(trace: DecisionTrace, client: LlmClient) -> ExplanationDoc:
    """Ask the explainer model to narrate the trace. One retry on a schema
    violation, then the template explainer takes over with the degraded
    flag set."""
    if client is None:
        raise ExplainerUnavailable("no LLM client configured")
    messages = prompt_messages(trace)
    for _ in range(2):
        try:
            content = client.complete(messages)
            return parse_llm_doc(content)
        except Exception:
            continue
    return replace(explain_template(trace), degraded=True)


# ---------------------------------------------------------------------------
# Reliability validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationVerdict:
    passed: bool
    failures: tuple[str, ...]


_TOP_EXPERT_RE = re.compile(r"Top expert:\s*[`'\"]?(.+?)[`'\"]?\s*\(([-0-9.]+)\)")
_COUNT_RE = re.compile(r"(\d+)\s*/\s*(\d+)\s*experts")


def validate_explanation(
    doc: ExplanationDoc, trace: DecisionTrace, strict_wording: bool = True
) -> ValidationVerdict:
    """Check that an explanation faithfully reflects its trace.

    Failures are data, not faults: the verdict lists every violated clause.
    ``strict_wording`` additionally holds the key points to the fixed
    top-expert and consensus-count formats.
    """
    failures: list[str] = []
    expected_label = "REMOVE" if trace.decision.decision else "KEEP"
    if doc.decision_label != expected_label:
        failures.append(f"a: decision label {doc.decision_label!r} != {expected_label!r}")
    if abs(doc.confidence - trace.confidence) > 0.005:
        failures.append(
            f"b: confidence {doc.confidence} deviates from {trace.confidence:.4f}"
        )
    if strict_wording:
        match = _TOP_EXPERT_RE.search(doc.key_points[0]) if doc.key_points else None
        if not match:
            failures.append("c: key point 1 does not name the top expert")
        else:
            name, weight_text = match.group(1), match.group(2)
            if name != trace.selection.experts[0].name:
                failures.append(
                    f"c: named expert {name!r} != {trace.selection.experts[0].name!r}"
                )
            elif abs(float(weight_text) - trace.selection.weights[0]) > 0.01:
                failures.append(
                    f"c: stated weight {weight_text} deviates from"
                    f" {trace.selection.weights[0]:.4f}"
                )
        count_match = (
            _COUNT_RE.search(doc.key_points[1]) if len(doc.key_points) > 1 else None
        )
        expected_n = (
            trace.decision.votes_for if trace.decision.decision
            else trace.decision.votes_against
        )
        k = len(trace.selection.experts)
        if not count_match:
            failures.append("d: key point 2 does not state the consensus count")
        elif (int(count_match.group(1)), int(count_match.group(2))) != (expected_n, k):
            failures.append(
                f"d: stated count {count_match.group(0)!r} != {expected_n}/{k}"
            )
    for span in doc.salient_spans:
        if span not in trace.item.comment:
            failures.append(f"e: span {span!r} is not a substring of the comment")
    if len(doc.summary.split()) > 25:
        failures.append("f: summary exceeds 25 words")
    if len(doc.key_points) != 2:
        failures.append(f"f: expected exactly 2 key points, got {len(doc.key_points)}")
    else:
        for i, point in enumerate(doc.key_points, start=1):
            if len(point.split()) > 10:
                failures.append(f"f: key point {i} exceeds 10 words")
    if len(doc.salient_spans) > 3:
        failures.append("f: more than 3 salient spans")
    if doc.recommendation is Recommendation.KEEP and doc.salient_spans:
        failures.append("f: Keep recommendation must carry no salient spans")
    serialized = doc.serialized()
    positions = [serialized.find(f'"{key}"') for key in ("Summary", "Key Points", "Trace")]
    if any(p < 0 for p in positions) or positions != sorted(positions):
        failures.append("f: serialized key order is not Summary, Key Points, Trace")
    return ValidationVerdict(passed=not failures, failures=tuple(failures))
