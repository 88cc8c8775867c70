"""Integration with the engine over real sockets: the engine's clients talk
to adapter-served endpoints exactly as they would to model servers."""

from __future__ import annotations

import threading
import time

import pytest
import uvicorn

from modpanel_adapter import (
    ScorerBinding,
    TrainablePerceptronScorer,
    create_allocator_app,
    create_expert_app,
    hashed_embedding_model,
    keyword_scorer,
    trigger_logit_model,
)

from modpanel.allocation import HttpAllocatorBackend, LogitCountMismatch
from modpanel.core import ExpertId, ExpertKind, validate_item
from modpanel.experts import ExpertDescriptor, HttpExpertBackend


@pytest.fixture(scope="module")
def served():
    """One expert app and one allocator app on ephemeral ports."""
    binding = ScorerBinding(
        scorer=keyword_scorer({"idiot": 1.0, "crypto": 0.6}, 0.5), name="golden-expert"
    )
    allocator = create_allocator_app(
        trigger_logit_model(
            {"r/c0": "trig0", "r/c1": "trig1", "r/c2": "trig2"}, ["r/c0", "r/c1", "r/c2"]
        ),
        hashed_embedding_model(16),
    )
    servers = []
    urls = {}
    for name, app in (("expert", create_expert_app(binding)), ("allocator", allocator)):
        config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        while not server.started:
            time.sleep(0.02)
        port = server.servers[0].sockets[0].getsockname()[1]
        urls[name] = f"http://127.0.0.1:{port}"
        servers.append(server)
    yield urls
    for server in servers:
        server.should_exit = True


def test_engine_expert_client_against_adapter(served) -> None:
    desc = ExpertDescriptor(
        id=ExpertId(kind=ExpertKind.COMMUNITY, name="r/c0"),
        endpoint=served["expert"],
        rules_or_norm="no insults",
        timeout=3.0,
    )
    client = HttpExpertBackend(served["expert"], desc)
    assert client.health()
    item = validate_item({"subreddit": "r/c0", "comment": "you idiot"})
    vote, confidence, _ = client(item)
    assert vote is True
    assert 0.5 < confidence < 1.0


def test_engine_allocator_client_against_adapter(served) -> None:
    experts = tuple(ExpertId(kind=ExpertKind.COMMUNITY, name=f"r/c{i}") for i in range(3))
    client = HttpAllocatorBackend(served["allocator"])
    item = validate_item({"subreddit": "r/c0", "comment": "trig0 trig0 trig2"})
    assert client.logits(item, experts) == [2.0, 0.0, 1.0]


def test_order_mismatch_raises_logit_count_mismatch(served) -> None:
    reordered = tuple(
        ExpertId(kind=ExpertKind.COMMUNITY, name=name) for name in ("r/c2", "r/c1", "r/c0")
    )
    client = HttpAllocatorBackend(served["allocator"])
    item = validate_item({"subreddit": "r/c0", "comment": "trig0"})
    with pytest.raises(LogitCountMismatch):
        client.logits(item, reordered)


def test_trainable_scorer_learns_separable_data() -> None:
    samples = [(f"bad toxic insult {i}", True) for i in range(20)]
    samples += [(f"kind helpful words {i}", False) for i in range(20)]
    model = TrainablePerceptronScorer(dimension=64).fit(samples)
    vote_bad, conf_bad = model(None, "bad toxic insult again", "norm")
    vote_good, conf_good = model(None, "kind helpful words again", "norm")
    assert vote_bad is True and vote_good is False
    assert conf_bad > 0.5 > conf_good
