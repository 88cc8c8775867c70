"""Expert registry, the expert wire protocol, concurrent fan-out with a
shared deadline, quorum policy, and deterministic builtin lexicon experts.

Fan-out issues every selected backend call concurrently and joins on one
deadline; the returned vote list is sorted by registry order, so its shape
never depends on network timing.
"""

from __future__ import annotations

import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import requests

from .core import EngineError, ExpertId, ModerationItem, QuorumPolicy


class DuplicateExpert(EngineError):
    code = "duplicate_expert"


class UnreachableEndpoint(EngineError):
    code = "unreachable_endpoint"


class QuorumNotMet(EngineError):
    code = "quorum_not_met"


class UnknownExpert(EngineError):
    code = "unknown_expert"


class VoteStatus(str, Enum):
    OK = "ok"
    TIMED_OUT = "timed_out"
    FAILED = "failed"


@dataclass(frozen=True)
class ExpertVote:
    """One expert's binary removal vote.

    ``confidence`` is present iff status is OK; it is display metadata and
    never feeds aggregation. ``spans`` carries the matched comment
    substrings when the backend reports them (builtin lexicon experts do).
    """

    expert: ExpertId
    vote: bool | None
    confidence: float | None
    latency: float
    status: VoteStatus
    spans: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.status is VoteStatus.OK:
            if self.vote is None or self.confidence is None:
                raise EngineError("Ok votes must carry a vote and confidence")
            if not 0.0 <= self.confidence <= 1.0:
                raise EngineError("confidence must lie in [0, 1]")
        elif self.confidence is not None:
            raise EngineError("confidence is only defined for Ok votes")


# A backend callable returns (vote, confidence, matched_spans).
ExpertFn = Callable[[ModerationItem], tuple[bool, float, tuple[str, ...]]]


@dataclass(frozen=True)
class ExpertDescriptor:
    """Registration record for one expert backend."""

    id: ExpertId
    endpoint: str
    rules_or_norm: str
    timeout: float = 5.0

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise EngineError("expert timeout must be > 0", field="timeout")
        if not self.endpoint:
            raise EngineError("expert endpoint must be non-empty", field="endpoint")


def builtin_lexicon_expert(
    spec: Mapping[str, float], threshold: float
) -> ExpertFn:
    """Deterministic keyword expert: vote = (sum of weights of keywords
    present in the comment >= threshold), confidence = logistic of the
    margin. The margin-zero boundary votes remove at confidence 0.5.

    Keywords match case-insensitively on word boundaries; each keyword
    counts once. Matched substrings are reported verbatim for the salient
    spans of the explanation layer.
    """
    if not spec:
        raise EngineError("lexicon spec must be non-empty", field="spec")
    patterns = {
        keyword: re.compile(rf"\b{re.escape(keyword)}\b", re.IGNORECASE)
        for keyword in spec
    }

    def expert(item: ModerationItem) -> tuple[bool, float, tuple[str, ...]]:
        score = 0.0
        spans: list[str] = []
        for keyword, weight in spec.items():
            match = patterns[keyword].search(item.comment)
            if match:
                score += weight
                spans.append(match.group(0))
        margin = score - threshold
        confidence = 1.0 / (1.0 + math.exp(-margin))
        return margin >= 0.0, confidence, tuple(spans)

    return expert


class HttpExpertBackend:
    """Wire client for the expert protocol:
    POST {base}/v1/predict {"context", "comment", "rules_or_norm", "expert"}
    -> {"vote": bool, "confidence": float}; GET {base}/v1/health.
    """

    def __init__(self, base_url: str, desc: ExpertDescriptor):
        self.base_url = base_url.rstrip("/")
        self.desc = desc

    def __call__(self, item: ModerationItem) -> tuple[bool, float, tuple[str, ...]]:
        resp = requests.post(
            f"{self.base_url}/v1/predict",
            json={
                "context": item.context,
                "comment": item.comment,
                "rules_or_norm": self.desc.rules_or_norm,
                "expert": self.desc.id.name,
            },
            timeout=self.desc.timeout,
        )
        resp.raise_for_status()
        body = resp.json()
        return bool(body["vote"]), float(body["confidence"]), ()

    def health(self) -> bool:
        try:
            resp = requests.get(f"{self.base_url}/v1/health", timeout=self.desc.timeout)
            return resp.status_code == 200 and resp.json().get("status") == "ok"
        except Exception:
            return False


@dataclass
class ExpertRegistry:
    """Ordered collection of experts. Insertion order is the canonical
    order: it breaks every tie in selection and sorts every vote list.

    Registration happens at startup; prediction paths only read.
    """

    _descriptors: list[ExpertDescriptor] = field(default_factory=list)
    _backends: dict[ExpertId, ExpertFn] = field(default_factory=dict)

    def register(
        self,
        desc: ExpertDescriptor,
        backend: ExpertFn | None = None,
        health_check: bool = False,
    ) -> None:
        """Add one expert. ``backend`` overrides endpoint resolution (used
        for builtin experts); http endpoints get a wire client."""
        if any(d.id == desc.id for d in self._descriptors):
            raise DuplicateExpert(f"expert {desc.id} already registered")
        if backend is None:
            if desc.endpoint.startswith("builtin:"):
                raise EngineError(
                    f"builtin endpoint {desc.endpoint!r} requires an explicit backend"
                )
            client = HttpExpertBackend(desc.endpoint, desc)
            if health_check and not client.health():
                raise UnreachableEndpoint(f"expert endpoint {desc.endpoint} failed health check")
            backend = client
        self._descriptors.append(desc)
        self._backends[desc.id] = backend

    @property
    def ids(self) -> tuple[ExpertId, ...]:
        return tuple(d.id for d in self._descriptors)

    @property
    def descriptors(self) -> tuple[ExpertDescriptor, ...]:
        return tuple(self._descriptors)

    def __len__(self) -> int:
        return len(self._descriptors)

    def descriptor(self, expert: ExpertId) -> ExpertDescriptor:
        for d in self._descriptors:
            if d.id == expert:
                return d
        raise UnknownExpert(f"expert {expert} is not registered")

    def backend(self, expert: ExpertId) -> ExpertFn:
        try:
            return self._backends[expert]
        except KeyError:
            raise UnknownExpert(f"expert {expert} is not registered") from None

    def order_index(self, expert: ExpertId) -> int:
        for i, d in enumerate(self._descriptors):
            if d.id == expert:
                return i
        raise UnknownExpert(f"expert {expert} is not registered")


def _call_expert(
    registry: ExpertRegistry, expert: ExpertId, item: ModerationItem
) -> ExpertVote:
    backend = registry.backend(expert)
    desc = registry.descriptor(expert)
    started = time.monotonic()
    try:
        vote, confidence, spans = backend(item)
    except requests.Timeout:
        return ExpertVote(
            expert=expert,
            vote=None,
            confidence=None,
            latency=time.monotonic() - started,
            status=VoteStatus.TIMED_OUT,
        )
    except Exception:
        return ExpertVote(
            expert=expert,
            vote=None,
            confidence=None,
            latency=time.monotonic() - started,
            status=VoteStatus.FAILED,
        )
    latency = time.monotonic() - started
    if latency > desc.timeout:
        return ExpertVote(
            expert=expert, vote=None, confidence=None, latency=latency,
            status=VoteStatus.TIMED_OUT,
        )
    return ExpertVote(
        expert=expert,
        vote=bool(vote),
        confidence=float(confidence),
        latency=latency,
        status=VoteStatus.OK,
        spans=spans,
    )


def fan_out_predict(
    registry: ExpertRegistry,
    item: ModerationItem,
    selected: Sequence[ExpertId],
    deadline: float,
    quorum_policy: QuorumPolicy = QuorumPolicy.ABSTAIN_RENORMALIZE,
    min_quorum: int = 1,
) -> list[ExpertVote]:
    """Query every selected expert concurrently and join on one deadline.

    Returns one vote per selected expert, in registry order regardless of
    response arrival order. Under FAIL_FAST any non-Ok vote raises
    QuorumNotMet; under ABSTAIN_RENORMALIZE the error fires only when fewer
    than ``min_quorum`` experts answered Ok.
    """
    if not selected:
        raise EngineError("selected expert list must be non-empty")
    for expert in selected:
        registry.descriptor(expert)
    ordered = sorted(selected, key=registry.order_index)

    votes: dict[ExpertId, ExpertVote] = {}
    started = time.monotonic()
    # shutdown(wait=False) keeps the join bounded by the deadline even when
    # a backend thread is still blocked inside its call.
    pool = ThreadPoolExecutor(max_workers=len(ordered))
    try:
        futures = {
            expert: pool.submit(_call_expert, registry, expert, item)
            for expert in ordered
        }
        for expert, future in futures.items():
            remaining = max(0.0, deadline - (time.monotonic() - started))
            try:
                votes[expert] = future.result(timeout=remaining)
            except FutureTimeout:
                future.cancel()
                votes[expert] = ExpertVote(
                    expert=expert,
                    vote=None,
                    confidence=None,
                    latency=time.monotonic() - started,
                    status=VoteStatus.TIMED_OUT,
                )
    finally:
        pool.shutdown(wait=False, cancel_futures=True)

    result = [votes[expert] for expert in ordered]
    ok_count = sum(1 for v in result if v.status is VoteStatus.OK)
    if quorum_policy is QuorumPolicy.FAIL_FAST and ok_count < len(result):
        raise QuorumNotMet(
            f"fail-fast: {len(result) - ok_count} of {len(result)} experts did not answer"
        )
    if ok_count < min_quorum:
        raise QuorumNotMet(f"only {ok_count} Ok votes; quorum requires {min_quorum}")
    return result
