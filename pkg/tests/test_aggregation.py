from __future__ import annotations

import itertools
import random

import pytest

from modpanel.aggregation import (
    KOutOfRange,
    VoteMismatch,
    composition_score,
    dot_product_aggregate,
    drop_abstentions,
    majority_vote_aggregate,
    pipeline_confidence,
    top_k,
)
from modpanel.core import AggregationMethod, ExpertId, ExpertKind
from modpanel.experts import ExpertVote, VoteStatus


def experts(n: int) -> tuple[ExpertId, ...]:
    return tuple(ExpertId(kind=ExpertKind.COMMUNITY, name=f"r/c{i}") for i in range(n))


def ok_votes(sel_experts, pattern) -> list[ExpertVote]:
    return [
        ExpertVote(expert=e, vote=bool(v), confidence=0.9, latency=0.001, status=VoteStatus.OK)
        for e, v in zip(sel_experts, pattern)
    ]


def failed_vote(expert) -> ExpertVote:
    return ExpertVote(expert=expert, vote=None, confidence=None, latency=0.0,
                      status=VoteStatus.FAILED)


# -- top_k --------------------------------------------------------------------


def test_top_k_renormalizes() -> None:
    ids = experts(4)
    sel = top_k(ids, (0.4, 0.3, 0.2, 0.1), 2)
    assert sel.experts == ids[:2]
    assert sel.weights == pytest.approx((0.4 / 0.7, 0.3 / 0.7), abs=1e-3)
    assert sel.original_weights == (0.4, 0.3)
    assert sum(sel.weights) == pytest.approx(1.0, abs=1e-9)


def test_top_k_full_selection_is_identity() -> None:
    ids = experts(4)
    weights = (0.4, 0.3, 0.2, 0.1)
    sel = top_k(ids, weights, 4)
    assert sel.experts == ids
    assert sel.weights == pytest.approx(weights)


def test_top_k_tie_breaks_by_registry_order() -> None:
    ids = experts(5)
    sel = top_k(ids, (0.2, 0.2, 0.2, 0.2, 0.2), 3)
    assert sel.experts == ids[:3]


def test_top_k_out_of_range() -> None:
    ids = experts(3)
    with pytest.raises(KOutOfRange):
        top_k(ids, (0.5, 0.3, 0.2), 4)
    with pytest.raises(KOutOfRange):
        top_k(ids, (0.5, 0.3, 0.2), 0)


def test_top_k_without_renormalization_keeps_raw_weights() -> None:
    ids = experts(4)
    sel = top_k(ids, (0.4, 0.3, 0.2, 0.1), 2, renormalize=False)
    assert sel.weights == (0.4, 0.3)


# -- dot product ----------------------------------------------------------------


def test_dot_product_hand_example() -> None:
    ids = experts(3)
    sel = top_k(ids, (0.6, 0.3, 0.1), 3)
    decision = dot_product_aggregate(sel, ok_votes(ids, [1, 0, 0]), 0.5)
    assert decision.score == pytest.approx(0.6)
    assert decision.decision is True
    assert decision.votes_for == 1 and decision.votes_against == 2


def test_dot_product_zero_votes_keeps() -> None:
    ids = experts(3)
    sel = top_k(ids, (0.6, 0.3, 0.1), 3)
    decision = dot_product_aggregate(sel, ok_votes(ids, [0, 0, 0]), 0.5)
    assert decision.score == 0.0
    assert decision.decision is False


def test_dot_product_boundary_is_strict() -> None:
    ids = experts(2)
    sel = top_k(ids, (0.5, 0.5), 2)
    decision = dot_product_aggregate(sel, ok_votes(ids, [1, 0]), 0.5)
    assert decision.score == pytest.approx(0.5)
    assert decision.decision is False


def test_dot_product_vote_mismatch() -> None:
    ids = experts(3)
    sel = top_k(ids, (0.6, 0.3, 0.1), 3)
    with pytest.raises(VoteMismatch):
        dot_product_aggregate(sel, ok_votes(ids[:2], [1, 0]), 0.5)


# -- majority vote ---------------------------------------------------------------


def test_majority_strict() -> None:
    ids = experts(5)
    sel = top_k(ids, (0.2,) * 5, 5)
    assert majority_vote_aggregate(sel, ok_votes(ids, [1, 1, 1, 0, 0])).decision is True
    assert majority_vote_aggregate(sel, ok_votes(ids, [1, 1, 0, 0, 0])).decision is False


def test_majority_tie_falls_back_to_dot_product() -> None:
    ids = experts(4)
    sel = top_k(ids, (0.4, 0.3, 0.2, 0.1), 4)
    # removers hold 0.4 + 0.2 = 0.6
    decision = majority_vote_aggregate(sel, ok_votes(ids, [1, 0, 1, 0]), 0.5)
    assert decision.tie_broken is True
    assert decision.score == pytest.approx(0.6)
    assert decision.decision is True
    # removers hold 0.3 + 0.1 = 0.4: tie resolves to keep
    decision = majority_vote_aggregate(sel, ok_votes(ids, [0, 1, 0, 1]), 0.5)
    assert decision.tie_broken is True
    assert decision.decision is False


def test_majority_oracle_equivalence() -> None:
    rng = random.Random(5)
    for k in (1, 3, 5, 7):
        ids = experts(k)
        for _ in range(30):
            raw = [rng.random() for _ in range(k)]
            total = sum(raw)
            sel = top_k(ids, tuple(w / total for w in raw), k)
            for pattern in itertools.product([0, 1], repeat=k):
                got = majority_vote_aggregate(sel, ok_votes(ids, pattern), 0.5)
                count = sum(pattern)
                if count * 2 != k:
                    assert got.decision == (count > k - count)
                    assert got.tie_broken is False


def test_k1_methods_agree_with_single_vote() -> None:
    ids = experts(1)
    sel = top_k(ids, (1.0,), 1)
    for vote in (0, 1):
        dp = dot_product_aggregate(sel, ok_votes(ids, [vote]), 0.5)
        mv = majority_vote_aggregate(sel, ok_votes(ids, [vote]), 0.5)
        assert dp.decision == mv.decision == bool(vote)


# -- confidence -------------------------------------------------------------------


def test_confidence_unanimous() -> None:
    ids = experts(3)
    sel = top_k(ids, (0.5, 0.3, 0.2), 3)
    decision = dot_product_aggregate(sel, ok_votes(ids, [1, 1, 1]), 0.5)
    assert pipeline_confidence(decision) == pytest.approx(1.0)


def test_confidence_paper_magnitude() -> None:
    ids = experts(2)
    sel = top_k(ids, (0.58, 0.42), 2)
    decision = dot_product_aggregate(sel, ok_votes(ids, [1, 0]), 0.5)
    assert decision.decision is True
    assert pipeline_confidence(decision) == pytest.approx(0.58)


def test_confidence_symmetric_split() -> None:
    ids = experts(2)
    sel = top_k(ids, (0.5, 0.5), 2)
    decision = dot_product_aggregate(sel, ok_votes(ids, [1, 0]), 0.5)
    assert pipeline_confidence(decision) == pytest.approx(0.5)


# -- invariants --------------------------------------------------------------------


def test_dominance_property_spot() -> None:
    rng = random.Random(13)
    ids = experts(5)
    for _ in range(200):
        dominant = rng.uniform(0.5001, 0.99)
        rest = [rng.random() for _ in range(4)]
        scale = (1 - dominant) / sum(rest)
        weights = [dominant] + [w * scale for w in rest]
        pos = rng.randrange(5)
        weights[0], weights[pos] = weights[pos], weights[0]
        sel = top_k(ids, tuple(weights), 5)
        dom_idx = max(range(5), key=lambda i: sel.weights[i])
        for pattern in itertools.product([0, 1], repeat=5):
            decision = dot_product_aggregate(sel, ok_votes(sel.experts, pattern), 0.5)
            assert decision.decision == bool(pattern[dom_idx])


def test_monotonicity_of_dot_product() -> None:
    rng = random.Random(17)
    ids = experts(5)
    for _ in range(100):
        raw = [rng.random() for _ in range(5)]
        total = sum(raw)
        sel = top_k(ids, tuple(w / total for w in raw), 5)
        pattern = [rng.randint(0, 1) for _ in range(5)]
        base = dot_product_aggregate(sel, ok_votes(ids, pattern), 0.5).decision
        for i in range(5):
            if pattern[i] == 0:
                flipped = list(pattern)
                flipped[i] = 1
                after = dot_product_aggregate(sel, ok_votes(ids, flipped), 0.5).decision
                assert not (base and not after)


def test_permutation_invariance() -> None:
    rng = random.Random(19)
    ids = experts(5)
    raw = [rng.random() for _ in range(5)]
    total = sum(raw)
    weights = tuple(w / total for w in raw)
    pattern = [1, 0, 1, 1, 0]
    sel = top_k(ids, weights, 5)
    base_dp = dot_product_aggregate(sel, ok_votes(sel.experts, [pattern[ids.index(e)] for e in sel.experts]), 0.5)
    base_mv = majority_vote_aggregate(sel, ok_votes(sel.experts, [pattern[ids.index(e)] for e in sel.experts]), 0.5)
    for perm in itertools.permutations(range(5)):
        perm_ids = tuple(ids[i] for i in perm)
        perm_weights = tuple(weights[i] for i in perm)
        perm_sel = top_k(perm_ids, perm_weights, 5)
        votes = ok_votes(perm_sel.experts, [pattern[ids.index(e)] for e in perm_sel.experts])
        assert dot_product_aggregate(perm_sel, votes, 0.5).decision == base_dp.decision
        assert majority_vote_aggregate(perm_sel, votes, 0.5).decision == base_mv.decision


# -- abstention handling -------------------------------------------------------------


def test_drop_abstentions_renormalizes() -> None:
    ids = experts(5)
    sel = top_k(ids, (0.4, 0.25, 0.15, 0.12, 0.08), 5)
    votes = ok_votes(ids, [1, 0, 1, 0, 1])
    votes[1] = failed_vote(ids[1])
    reduced, ok = drop_abstentions(sel, votes)
    assert len(reduced.experts) == 4
    assert ids[1] not in reduced.experts
    assert sum(reduced.weights) == pytest.approx(1.0, abs=1e-9)
    assert len(ok) == 4


def test_drop_abstentions_preserves_raw_weight_scale() -> None:
    # with renormalization off the surviving weights keep the selection's mass
    ids = experts(4)
    sel = top_k(ids, (0.3, 0.25, 0.15, 0.1), 3, renormalize=False)
    votes = ok_votes(sel.experts, [1, 0, 1])
    votes[1] = failed_vote(sel.experts[1])
    reduced, _ = drop_abstentions(sel, votes)
    assert sum(reduced.weights) == pytest.approx(sum(sel.weights), abs=1e-12)


def test_drop_abstentions_noop_when_all_ok() -> None:
    ids = experts(3)
    sel = top_k(ids, (0.5, 0.3, 0.2), 3)
    votes = ok_votes(ids, [1, 1, 0])
    reduced, ok = drop_abstentions(sel, votes)
    assert reduced is sel
    assert [v.expert for v in ok] == list(ids)


def test_composition_score_matches_aggregate() -> None:
    ids = experts(3)
    sel = top_k(ids, (0.6, 0.3, 0.1), 3)
    votes = ok_votes(ids, [0, 1, 1])
    assert composition_score(sel, votes) == pytest.approx(
        dot_product_aggregate(sel, votes, 0.5).score
    )
    assert dot_product_aggregate(sel, votes, 0.5).method is AggregationMethod.DOT_PRODUCT
