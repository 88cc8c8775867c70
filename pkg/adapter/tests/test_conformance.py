"""S2: the adapter replays the engine's golden wire-protocol fixtures for
/v1/predict, /v1/logits, and /v1/embed."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from modpanel_adapter import (
    ScorerBinding,
    create_allocator_app,
    create_expert_app,
    hashed_embedding_model,
    keyword_scorer,
    trigger_logit_model,
)

GOLDEN = json.loads(
    (Path(__file__).parent.parent.parent / "tests" / "fixtures" / "wire_golden.json").read_text()
)


@pytest.fixture(scope="module")
def expert_client() -> TestClient:
    scorer = keyword_scorer(
        GOLDEN["scorer"]["predict_keywords"], GOLDEN["scorer"]["predict_threshold"]
    )
    binding = ScorerBinding(scorer=scorer, name="golden-expert")
    return TestClient(create_expert_app(binding))


@pytest.fixture(scope="module")
def allocator_client() -> TestClient:
    logit_model = trigger_logit_model(
        GOLDEN["scorer"]["logit_triggers"], GOLDEN["expert_order"]
    )
    embed_model = hashed_embedding_model(GOLDEN["scorer"]["embed_dimension"])
    return TestClient(create_allocator_app(logit_model, embed_model))


def test_predict_fixture_replay(expert_client) -> None:
    for case in GOLDEN["predict"]:
        response = expert_client.post("/v1/predict", json=case["request"])
        assert response.status_code == 200
        body = response.json()
        assert body["vote"] == case["response"]["vote"]
        assert body["confidence"] == pytest.approx(case["response"]["confidence"], abs=1e-9)
        assert set(body) == {"vote", "confidence"}


def test_logits_fixture_replay(allocator_client) -> None:
    for case in GOLDEN["logits"]:
        response = allocator_client.post("/v1/logits", json=case["request"])
        assert response.status_code == 200
        body = response.json()
        assert body["expert_order"] == case["response"]["expert_order"]
        assert body["logits"] == pytest.approx(case["response"]["logits"], abs=1e-9)


def test_embed_fixture_replay(allocator_client) -> None:
    for case in GOLDEN["embed"]:
        response = allocator_client.post("/v1/embed", json=case["request"])
        assert response.status_code == 200
        embedding = response.json()["embedding"]
        assert embedding == pytest.approx(case["response"]["embedding"], abs=1e-9)


def test_health_endpoints(expert_client, allocator_client) -> None:
    assert expert_client.get("/v1/health").json() == {"status": "ok"}
    assert allocator_client.get("/v1/health").json() == {"status": "ok"}


def test_malformed_request_is_400_with_code(expert_client) -> None:
    response = expert_client.post("/v1/predict", json={"comment": 7})
    assert response.status_code == 400
    body = response.json()
    assert body["code"] == "bad_request"
    assert "message" in body


def test_seven_way_classifier_emits_logits_in_declared_order() -> None:
    order = [
        "r/AskHistorians", "r/AskReddit", "r/Games", "r/anime",
        "r/changemyview", "r/politics", "r/science",
    ]
    triggers = {name: name.removeprefix("r/").lower() for name in order}
    client = TestClient(
        create_allocator_app(trigger_logit_model(triggers, order), hashed_embedding_model(8))
    )
    response = client.post(
        "/v1/logits", json={"context": None, "comment": "anime games politics politics"}
    )
    body = response.json()
    assert body["expert_order"] == order
    assert len(body["logits"]) == 7
    assert body["logits"][order.index("r/politics")] == 2.0
    assert body["logits"][order.index("r/anime")] == 1.0
    embedding = client.post("/v1/embed", json={"text": "whatever"}).json()["embedding"]
    assert len(embedding) == 8
