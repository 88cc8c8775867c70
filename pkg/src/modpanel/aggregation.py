"""Top-K expert selection and vote aggregation.

Both aggregation strategies share the weighted composition score
s = sum_i w_i * v_i over the selected experts' binary votes. Dot-product
aggregation thresholds s directly (strict: remove iff s > threshold);
majority vote counts heads and falls back to s only on an exact tie.
A renormalized weight above 0.5 therefore fully determines the dot-product
decision, whatever the other experts say.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import AggregationMethod, EngineError, ExpertId
from .experts import ExpertVote, VoteStatus


class KOutOfRange(EngineError):
    code = "k_out_of_range"


class VoteMismatch(EngineError):
    code = "vote_mismatch"


@dataclass(frozen=True)
class TopKSelection:
    """The K highest-weight experts with their renormalized weights.

    ``weights`` descend (ties broken by registry order) and sum to one when
    renormalization is on; ``original_weights`` keeps the pre-renormalization
    values from the full allocation.
    """

    experts: tuple[ExpertId, ...]
    weights: tuple[float, ...]
    original_weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (len(self.experts) == len(self.weights) == len(self.original_weights)):
            raise VoteMismatch("selection fields must have equal length")


@dataclass(frozen=True)
class AggregateDecision:
    """Final ensemble outcome: True means remove."""

    decision: bool
    score: float
    method: AggregationMethod
    votes_for: int
    votes_against: int
    tie_broken: bool = False


def top_k(alloc_experts: tuple[ExpertId, ...], alloc_weights: tuple[float, ...],
          k: int, renormalize: bool = True) -> TopKSelection:
    """Select the k largest weights; ties break toward earlier registry
    position, which makes the selection fully deterministic."""
    n = len(alloc_weights)
    if not 1 <= k <= n:
        raise KOutOfRange(f"k={k} outside [1, {n}]")
    order = sorted(range(n), key=lambda i: (-alloc_weights[i], i))[:k]
    experts = tuple(alloc_experts[i] for i in order)
    original = tuple(alloc_weights[i] for i in order)
    if renormalize:
        total = sum(original)
        if total <= 0:
            raise EngineError("selected weights sum to zero; cannot renormalize")
        weights = tuple(w / total for w in original)
    else:
        weights = original
    return TopKSelection(experts=experts, weights=weights, original_weights=original)


def _ordered_ok_votes(sel: TopKSelection, votes: list[ExpertVote]) -> list[ExpertVote]:
    """One Ok vote per selected expert, in selection order."""
    by_expert = {vote.expert: vote for vote in votes}
    ordered = []
    for expert in sel.experts:
        vote = by_expert.get(expert)
        if vote is None or vote.status is not VoteStatus.OK:
            raise VoteMismatch(f"no Ok vote for selected expert {expert}")
        ordered.append(vote)
    return ordered


def drop_abstentions(
    sel: TopKSelection, votes: list[ExpertVote]
) -> tuple[TopKSelection, list[ExpertVote]]:
    """Shrink a selection to the experts that answered Ok, rescaling the
    surviving weights to the selection's previous mass (so a renormalized
    selection stays summing to one, and a raw-weight selection keeps its
    scale). Quorum enforcement happens upstream."""
    by_expert = {vote.expert: vote for vote in votes}
    kept: list[int] = []
    for i, expert in enumerate(sel.experts):
        vote = by_expert.get(expert)
        if vote is not None and vote.status is VoteStatus.OK:
            kept.append(i)
    if not kept:
        raise VoteMismatch("no Ok votes cover the selection")
    if len(kept) == len(sel.experts):
        return sel, [by_expert[e] for e in sel.experts]
    total_before = sum(sel.weights)
    total_kept = sum(sel.weights[i] for i in kept)
    scale = total_before / total_kept
    reduced = TopKSelection(
        experts=tuple(sel.experts[i] for i in kept),
        weights=tuple(sel.weights[i] * scale for i in kept),
        original_weights=tuple(sel.weights[i] for i in kept),
    )
    return reduced, [by_expert[e] for e in reduced.experts]


def composition_score(sel: TopKSelection, votes: list[ExpertVote]) -> float:
    """Weighted vote share s = sum_i w_i * v_i over the selection."""
    ordered = _ordered_ok_votes(sel, votes)
    return float(sum(w for w, v in zip(sel.weights, ordered) if v.vote))


def dot_product_aggregate(
    sel: TopKSelection, votes: list[ExpertVote], threshold: float
) -> AggregateDecision:
    """Remove iff the composition score strictly exceeds the threshold."""
    ordered = _ordered_ok_votes(sel, votes)
    score = float(sum(w for w, v in zip(sel.weights, ordered) if v.vote))
    votes_for = sum(1 for v in ordered if v.vote)
    return AggregateDecision(
        decision=score > threshold,
        score=score,
        method=AggregationMethod.DOT_PRODUCT,
        votes_for=votes_for,
        votes_against=len(ordered) - votes_for,
    )


def majority_vote_aggregate(
    sel: TopKSelection, votes: list[ExpertVote], threshold: float = 0.5
) -> AggregateDecision:
    """Remove iff strictly more than half of the selected experts vote
    remove. An exact tie (even K, or abstentions upstream) falls back to the
    composition score against the threshold and flags the outcome."""
    ordered = _ordered_ok_votes(sel, votes)
    score = float(sum(w for w, v in zip(sel.weights, ordered) if v.vote))
    votes_for = sum(1 for v in ordered if v.vote)
    votes_against = len(ordered) - votes_for
    if votes_for == votes_against:
        return AggregateDecision(
            decision=score > threshold,
            score=score,
            method=AggregationMethod.MAJORITY_VOTE,
            votes_for=votes_for,
            votes_against=votes_against,
            tie_broken=True,
        )
    return AggregateDecision(
        decision=votes_for > votes_against,
        score=score,
        method=AggregationMethod.MAJORITY_VOTE,
        votes_for=votes_for,
        votes_against=votes_against,
    )


def pipeline_confidence(decision: AggregateDecision) -> float:
    """Weighted vote share of the winning side: max(s, 1 - s)."""
    return max(decision.score, 1.0 - decision.score)
