from __future__ import annotations

import json
from pathlib import Path

import pytest

from test_gateway import write_config

from modpanel.cli import main, parse_seeds


def write_demo_dataset(path: Path, n: int = 60) -> Path:
    rows = []
    for i in range(n):
        removed = i % 2 == 0
        comment = f"you idiot lol piracy crypto number {i}" if removed else f"nice thoughtful words {i}"
        rows.append(
            json.dumps(
                {
                    "subreddit": f"r/s{i % 3}",
                    "context": None,
                    "comment": comment,
                    "label": removed,
                }
            )
        )
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def test_parse_seeds_forms() -> None:
    assert parse_seeds("1..10") == list(range(1, 11))
    assert parse_seeds("1,2,5") == [1, 2, 5]
    assert parse_seeds("7") == [7]


def test_cli_ingest_reports(tmp_path, capsys) -> None:
    data = write_demo_dataset(tmp_path / "demo.jsonl")
    out = tmp_path / "normalized.jsonl"
    rc = main(["ingest", "--input", str(data), "--out", str(out)])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["accepted"] == 60
    assert out.exists()


def test_cli_moderate_single_item(tmp_path, capsys) -> None:
    config = write_config(tmp_path)
    rc = main(
        ["moderate", "--config", str(config), "--subreddit", "r/x", "--comment", "you idiot lol"]
    )
    assert rc == 0
    body = json.loads(capsys.readouterr().out)
    assert body["recommendation"] == "Review"
    assert body["explanation"]["Summary"].startswith("Review:")


def test_cli_moderate_stdin(tmp_path, capsys, monkeypatch) -> None:
    import io

    config = write_config(tmp_path)
    monkeypatch.setattr(
        "sys.stdin", io.StringIO(json.dumps({"subreddit": "r/x", "comment": "fine words"}))
    )
    rc = main(["moderate", "--config", str(config), "--stdin"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["recommendation"] == "Keep"


def test_cli_eval_emits_report(tmp_path, capsys) -> None:
    config = write_config(tmp_path)
    data = write_demo_dataset(tmp_path / "demo.jsonl")
    out = tmp_path / "report.json"
    rc = main(
        [
            "eval",
            "--config", str(config),
            "--dataset", str(data),
            "--split", "balanced",
            "--seeds", "1..3",
            "--k", "5",
            "--aggregation", "majority_vote",
            "--emit", "both",
            "--out", str(out),
        ]
    )
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "overall" in stdout
    doc = json.loads(out.read_text())
    assert doc["split"] == "balanced"
    assert len(doc["overall"]["runs"]) == 3
    # lexicon experts recognize the trigger-word construction perfectly
    assert doc["overall"]["mean_sd"]["micro_f1"]["mean"] == pytest.approx(1.0)


def test_cli_explain_and_queue(tmp_path, capsys) -> None:
    config = write_config(tmp_path)
    rc = main(
        ["moderate", "--config", str(config), "--subreddit", "r/x", "--comment", "you idiot lol"]
    )
    assert rc == 0
    trace_id = json.loads(capsys.readouterr().out)["trace_id"]

    rc = main(["explain", "--config", str(config), "--trace-id", trace_id])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert list(doc) == ["Summary", "Key Points", "Trace"]

    rc = main(["queue", "--config", str(config), "list", "--status", "pending"])
    assert rc == 0
    entries = json.loads(capsys.readouterr().out)
    assert [e["trace_id"] for e in entries] == [trace_id]

    rc = main(
        [
            "queue", "--config", str(config), "resolve", trace_id,
            "--action", "keep", "--resolver", "mod1", "--note", "banter",
        ]
    )
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["status"] == "resolved_keep"


def test_cli_queue_resolve_unknown_fails(tmp_path, capsys) -> None:
    config = write_config(tmp_path)
    rc = main(
        [
            "queue", "--config", str(config), "resolve", "0" * 64,
            "--action", "keep", "--resolver", "mod1",
        ]
    )
    assert rc == 1
    err = json.loads(capsys.readouterr().err)
    assert err["code"] == "not_found"


def test_cli_missing_config_errors(capsys, monkeypatch) -> None:
    monkeypatch.delenv("ENGINE_CONFIG", raising=False)
    rc = main(["moderate", "--comment", "hello"])
    assert rc == 1
    assert "config" in json.loads(capsys.readouterr().err)["message"]
