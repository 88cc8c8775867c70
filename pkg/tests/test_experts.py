from __future__ import annotations

import random
import time

import pytest

from modpanel.core import ExpertId, ExpertKind, NORM_THEMES, QuorumPolicy, validate_item
from modpanel.experts import (
    DuplicateExpert,
    ExpertDescriptor,
    ExpertRegistry,
    ExpertVote,
    QuorumNotMet,
    VoteStatus,
    builtin_lexicon_expert,
    fan_out_predict,
)


def community(name: str) -> ExpertId:
    return ExpertId(kind=ExpertKind.COMMUNITY, name=name)


def make_registry(n: int = 5, backend=None) -> ExpertRegistry:
    registry = ExpertRegistry()
    for i in range(n):
        desc = ExpertDescriptor(
            id=community(f"r/c{i}"),
            endpoint="builtin:lexicon",
            rules_or_norm=f"rules for r/c{i}",
            timeout=1.0,
        )
        registry.register(desc, backend=backend or builtin_lexicon_expert({"spam": 1.0}, 0.5))
    return registry


ITEM = validate_item({"subreddit": "r/c0", "comment": "no trigger words here"})


# -- registry -------------------------------------------------------------------


def test_register_seven_community_experts_preserves_order() -> None:
    registry = make_registry(7)
    assert len(registry) == 7
    assert [e.name for e in registry.ids] == [f"r/c{i}" for i in range(7)]


def test_register_duplicate_rejected() -> None:
    registry = make_registry(1)
    desc = ExpertDescriptor(
        id=community("r/c0"), endpoint="builtin:lexicon", rules_or_norm="x"
    )
    with pytest.raises(DuplicateExpert):
        registry.register(desc, backend=builtin_lexicon_expert({"x": 1.0}, 0.5))


def test_register_health_check_rejects_dead_endpoint() -> None:
    from modpanel.experts import UnreachableEndpoint

    registry = ExpertRegistry()
    desc = ExpertDescriptor(
        id=community("r/dead"), endpoint="http://127.0.0.1:1", rules_or_norm="x", timeout=0.3
    )
    with pytest.raises(UnreachableEndpoint):
        registry.register(desc, health_check=True)
    assert len(registry) == 0


def test_register_five_norm_experts() -> None:
    registry = ExpertRegistry()
    for theme in NORM_THEMES:
        registry.register(
            ExpertDescriptor(
                id=ExpertId(kind=ExpertKind.NORM_VIOLATION, name=theme),
                endpoint="builtin:lexicon",
                rules_or_norm=theme,
            ),
            backend=builtin_lexicon_expert({"bad": 1.0}, 0.5),
        )
    assert len(registry) == 5


# -- builtin lexicon expert --------------------------------------------------------


def test_lexicon_direct_match() -> None:
    expert = builtin_lexicon_expert({"idiot": 1.0}, 0.5)
    vote, confidence, spans = expert(
        validate_item({"subreddit": "r/x", "comment": "you idiot"})
    )
    assert vote is True
    assert confidence > 0.5
    assert spans == ("idiot",)


def test_lexicon_no_match() -> None:
    expert = builtin_lexicon_expert({"idiot": 1.0}, 0.5)
    vote, confidence, spans = expert(
        validate_item({"subreddit": "r/x", "comment": "lovely weather"})
    )
    assert vote is False
    assert confidence < 0.5
    assert spans == ()


def test_lexicon_zero_margin_boundary() -> None:
    expert = builtin_lexicon_expert({"meh": 0.5}, 0.5)
    vote, confidence, _ = expert(validate_item({"subreddit": "r/x", "comment": "meh"}))
    assert vote is True
    assert confidence == pytest.approx(0.5)


def test_lexicon_case_insensitive_verbatim_span() -> None:
    expert = builtin_lexicon_expert({"idiot": 1.0}, 0.5)
    item = validate_item({"subreddit": "r/x", "comment": "You IDIOT really"})
    vote, _, spans = expert(item)
    assert vote is True
    assert spans == ("IDIOT",)
    assert spans[0] in item.comment


def test_lexicon_referentially_transparent() -> None:
    expert = builtin_lexicon_expert({"spam": 0.7, "scam": 0.7}, 0.5)
    item = validate_item({"subreddit": "r/x", "comment": "this spam is a scam"})
    assert expert(item) == expert(item)


# -- fan-out ----------------------------------------------------------------------


def test_fan_out_all_ok_in_registry_order() -> None:
    registry = make_registry(5)
    votes = fan_out_predict(registry, ITEM, registry.ids, deadline=2.0)
    assert len(votes) == 5
    assert [v.expert for v in votes] == list(registry.ids)
    assert all(v.status is VoteStatus.OK for v in votes)


def test_fan_out_order_invariant_under_response_delays() -> None:
    rng = random.Random(23)

    def delayed_backend(delay: float):
        inner = builtin_lexicon_expert({"spam": 1.0}, 0.5)

        def backend(item):
            time.sleep(delay)
            return inner(item)

        return backend

    registry = ExpertRegistry()
    for i in range(5):
        registry.register(
            ExpertDescriptor(
                id=community(f"r/c{i}"), endpoint="builtin:lexicon",
                rules_or_norm="r", timeout=1.0,
            ),
            backend=delayed_backend(rng.uniform(0, 0.004)),
        )
    baseline = [
        (v.expert, v.status, v.vote) for v in fan_out_predict(registry, ITEM, registry.ids, 2.0)
    ]
    for _ in range(20):
        votes = fan_out_predict(registry, ITEM, registry.ids, 2.0)
        assert [(v.expert, v.status, v.vote) for v in votes] == baseline


def test_fan_out_selected_subset_ordering() -> None:
    registry = make_registry(5)
    subset = [registry.ids[3], registry.ids[1]]
    votes = fan_out_predict(registry, ITEM, subset, deadline=2.0)
    assert [v.expert for v in votes] == [registry.ids[1], registry.ids[3]]


def test_fan_out_abstain_renormalize_tolerates_failures() -> None:
    registry = ExpertRegistry()
    good = builtin_lexicon_expert({"spam": 1.0}, 0.5)

    def broken(item):
        raise RuntimeError("backend down")

    for i in range(5):
        registry.register(
            ExpertDescriptor(
                id=community(f"r/c{i}"), endpoint="builtin:lexicon",
                rules_or_norm="r", timeout=1.0,
            ),
            backend=broken if i == 2 else good,
        )
    votes = fan_out_predict(
        registry, ITEM, registry.ids, deadline=2.0,
        quorum_policy=QuorumPolicy.ABSTAIN_RENORMALIZE, min_quorum=3,
    )
    statuses = [v.status for v in votes]
    assert statuses.count(VoteStatus.OK) == 4
    assert statuses[2] is VoteStatus.FAILED
    assert votes[2].confidence is None


def test_fan_out_fail_fast_raises_on_any_failure() -> None:
    registry = ExpertRegistry()

    def broken(item):
        raise RuntimeError("down")

    good = builtin_lexicon_expert({"spam": 1.0}, 0.5)
    for i in range(3):
        registry.register(
            ExpertDescriptor(
                id=community(f"r/c{i}"), endpoint="builtin:lexicon",
                rules_or_norm="r", timeout=1.0,
            ),
            backend=broken if i == 1 else good,
        )
    with pytest.raises(QuorumNotMet):
        fan_out_predict(
            registry, ITEM, registry.ids, deadline=2.0,
            quorum_policy=QuorumPolicy.FAIL_FAST, min_quorum=1,
        )


def test_fan_out_all_down_quorum_not_met() -> None:
    registry = ExpertRegistry()

    def broken(item):
        raise RuntimeError("down")

    for i in range(3):
        registry.register(
            ExpertDescriptor(
                id=community(f"r/c{i}"), endpoint="builtin:lexicon",
                rules_or_norm="r", timeout=1.0,
            ),
            backend=broken,
        )
    with pytest.raises(QuorumNotMet):
        fan_out_predict(registry, ITEM, registry.ids, deadline=2.0, min_quorum=2)


def test_fan_out_deadline_marks_slow_experts_timed_out() -> None:
    registry = ExpertRegistry()
    fast = builtin_lexicon_expert({"spam": 1.0}, 0.5)

    def slow(item):
        time.sleep(0.4)
        return True, 0.9, ()

    for i, backend in enumerate([fast, slow, fast]):
        registry.register(
            ExpertDescriptor(
                id=community(f"r/c{i}"), endpoint="builtin:lexicon",
                rules_or_norm="r", timeout=5.0,
            ),
            backend=backend,
        )
    started = time.monotonic()
    votes = fan_out_predict(registry, ITEM, registry.ids, deadline=0.1, min_quorum=2)
    elapsed = time.monotonic() - started
    assert elapsed < 0.35
    assert votes[1].status is VoteStatus.TIMED_OUT
    assert votes[0].status is VoteStatus.OK
    assert votes[2].status is VoteStatus.OK


def test_per_expert_timeout_marks_timed_out() -> None:
    registry = ExpertRegistry()

    def slow(item):
        time.sleep(0.05)
        return True, 0.9, ()

    registry.register(
        ExpertDescriptor(
            id=community("r/slow"), endpoint="builtin:lexicon",
            rules_or_norm="r", timeout=0.01,
        ),
        backend=slow,
    )
    votes = fan_out_predict(registry, ITEM, registry.ids, deadline=2.0, min_quorum=0)
    assert votes[0].status is VoteStatus.TIMED_OUT


def test_vote_invariant_confidence_only_when_ok() -> None:
    expert = community("r/x")
    with pytest.raises(Exception):
        ExpertVote(expert=expert, vote=True, confidence=None, latency=0.0, status=VoteStatus.OK)
    with pytest.raises(Exception):
        ExpertVote(
            expert=expert, vote=None, confidence=0.5, latency=0.0, status=VoteStatus.FAILED
        )
