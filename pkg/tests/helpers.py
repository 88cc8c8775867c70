"""Shared builders for pipeline objects used across the test suite."""

from __future__ import annotations

import random

from modpanel.aggregation import (
    drop_abstentions,
    dot_product_aggregate,
    majority_vote_aggregate,
    top_k,
)
from modpanel.allocation import AllocationVector
from modpanel.core import (
    AggregationMethod,
    ExpertId,
    ExpertKind,
    NORM_THEMES,
    PipelineConfig,
    validate_item,
)
from modpanel.experts import ExpertVote, VoteStatus
from modpanel.explanation import DecisionTrace, build_trace


def norm_experts() -> tuple[ExpertId, ...]:
    return tuple(ExpertId(kind=ExpertKind.NORM_VIOLATION, name=t) for t in NORM_THEMES)


def community_experts(n: int) -> tuple[ExpertId, ...]:
    return tuple(ExpertId(kind=ExpertKind.COMMUNITY, name=f"r/c{i}") for i in range(n))


def make_trace(
    weights: tuple[float, ...],
    vote_pattern: tuple[int, ...],
    method: AggregationMethod = AggregationMethod.DOT_PRODUCT,
    experts: tuple[ExpertId, ...] | None = None,
    k: int | None = None,
    statuses: tuple[VoteStatus, ...] | None = None,
    comment: str = "you idiot, go back to your country lmao",
    spans_for_removers: tuple[str, ...] = ("go back to your country", "lmao"),
    consensus_high_fraction: float = 0.8,
    created_at: float = 1700000000.0,
    store=None,
) -> DecisionTrace:
    """Build a consistent trace from an allocation weight vector and a vote
    pattern over the selected experts."""
    if experts is None:
        experts = norm_experts()[: len(weights)]
    if k is None:
        k = len(weights)
    cfg = PipelineConfig(
        aggregation_method=method,
        k=k,
        consensus_high_fraction=consensus_high_fraction,
    )
    item = validate_item({"subreddit": "r/movies", "comment": comment})
    alloc = AllocationVector(experts=experts, weights=weights)
    sel = top_k(alloc.experts, alloc.weights, k)
    votes: list[ExpertVote] = []
    for i, expert in enumerate(sel.experts):
        status = statuses[i] if statuses else VoteStatus.OK
        if status is VoteStatus.OK:
            vote = bool(vote_pattern[i])
            votes.append(
                ExpertVote(
                    expert=expert,
                    vote=vote,
                    confidence=0.8,
                    latency=0.002,
                    status=status,
                    spans=spans_for_removers if vote else (),
                )
            )
        else:
            votes.append(
                ExpertVote(
                    expert=expert, vote=None, confidence=None, latency=0.002, status=status
                )
            )
    reduced, ok_votes = drop_abstentions(sel, votes)
    if method is AggregationMethod.DOT_PRODUCT:
        decision = dot_product_aggregate(reduced, ok_votes, cfg.decision_threshold)
    else:
        decision = majority_vote_aggregate(reduced, ok_votes, cfg.decision_threshold)
    return build_trace(
        item, alloc, sel, votes, decision, cfg, store=store, created_at=created_at
    )


def random_trace(rng: random.Random, store=None) -> DecisionTrace:
    """A randomized but internally consistent trace, for reliability sweeps."""
    n = rng.choice([5, 7])
    experts = norm_experts() if n == 5 else community_experts(7)
    raw = [rng.expovariate(1.0) + 1e-3 for _ in range(n)]
    total = sum(raw)
    weights = tuple(w / total for w in raw)
    k = rng.choice([kk for kk in (1, 3, 5) if kk <= n])
    method = rng.choice(list(AggregationMethod))
    pattern = tuple(rng.randint(0, 1) for _ in range(k))
    # Occasional abstentions, always keeping at least one Ok vote.
    statuses = [VoteStatus.OK] * k
    if k >= 3 and rng.random() < 0.3:
        statuses[rng.randrange(k)] = rng.choice([VoteStatus.FAILED, VoteStatus.TIMED_OUT])
    comment = "stop posting this garbage, total nonsense from you lol"
    return make_trace(
        weights,
        pattern,
        method=method,
        experts=experts,
        k=k,
        statuses=tuple(statuses),
        comment=comment,
        spans_for_removers=("garbage", "total nonsense"),
        created_at=1700000000.0 + rng.random() * 1000,
        store=store,
    )
