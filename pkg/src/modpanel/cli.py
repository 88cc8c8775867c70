"""Command-line interface: serve, moderate, ingest, eval, explain, queue,
and report verbs over one engine config document."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .core import EngineError
from .datastore import QueueStatus, ingest
from .evaluation import SplitSpec, format_report_table, run_eval
from .gateway import ModerationEngine, load_config


def parse_seeds(text: str) -> list[int]:
    """Accepts "1..10" ranges (inclusive) and comma lists like "1,2,5"."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def _config_path(args: argparse.Namespace) -> str:
    path = args.config or os.environ.get("ENGINE_CONFIG")
    if not path:
        raise EngineError("no config: pass --config or set ENGINE_CONFIG")
    return path


def _engine(args: argparse.Namespace) -> ModerationEngine:
    return ModerationEngine(load_config(_config_path(args)))


def _cmd_serve(args: argparse.Namespace) -> int:
    from .gateway import serve

    serve(_config_path(args), host=args.host, port=args.port)
    return 0


def _cmd_moderate(args: argparse.Namespace) -> int:
    engine = _engine(args)
    if args.stdin:
        request = json.loads(sys.stdin.read())
    else:
        if not args.comment:
            raise EngineError("moderate needs --comment or --stdin")
        request = {
            "subreddit": args.subreddit,
            "comment": args.comment,
            "context": args.context,
        }
    response = engine.moderate(request)
    print(json.dumps(response.as_dict(), indent=1, ensure_ascii=False))
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    result = ingest(args.input)
    report = {
        "source": result.source,
        "accepted": result.accepted,
        "rejected": [
            {"line": line, "code": code, "message": message}
            for line, code, message in result.rejected
        ],
    }
    out_path = args.out
    if not out_path and (args.config or os.environ.get("ENGINE_CONFIG")):
        data_dir = load_config(_config_path(args)).data_dir
        out_path = data_dir / "datasets" / (Path(args.input).stem + ".jsonl")
    if out_path:
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", encoding="utf-8") as handle:
            for item in result.items:
                handle.write(
                    json.dumps(
                        {
                            "item_id": item.item_id,
                            "subreddit": item.subreddit,
                            "context": item.context,
                            "comment": item.comment,
                            "label": item.label,
                            "norm_violation": item.norm_violation,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        report["normalized"] = str(out)
    print(json.dumps(report, indent=1))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = load_config(_config_path(args))
    overrides = {}
    if args.strategy:
        overrides["allocation_strategy"] = args.strategy
    if args.aggregation:
        overrides["aggregation_method"] = args.aggregation
    if args.k:
        overrides["k"] = args.k
    engine = ModerationEngine(config)
    if overrides:
        engine.patch_config(overrides)
    dataset = ingest(args.dataset)
    split = SplitSpec.parse(args.split, budget=args.budget)
    report = run_eval(dataset.items, engine.decide, split, parse_seeds(args.seeds))
    if args.emit in ("json", "both"):
        print(report.to_json())
    if args.emit in ("table", "both"):
        print(format_report_table(report))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    return 0


def _cmd_explain(args: argparse.Namespace) -> int:
    engine = _engine(args)
    doc = engine.explain_trace(args.trace_id)
    print(doc.to_json())
    return 0


def _cmd_queue(args: argparse.Namespace) -> int:
    engine = _engine(args)
    if args.queue_verb == "list":
        status = QueueStatus(args.status) if args.status else None
        entries = engine.queue.entries(status)
        print(
            json.dumps(
                [
                    {
                        "trace_id": e.trace_id,
                        "status": e.status.value,
                        "resolver": e.resolver,
                        "note": e.note,
                    }
                    for e in entries
                ],
                indent=1,
            )
        )
        return 0
    entry = engine.queue.resolve(
        args.trace_id, args.action, args.resolver, note=args.note
    )
    print(json.dumps({"trace_id": entry.trace_id, "status": entry.status.value}, indent=1))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    from .report import render_report

    written = render_report(args.eval_json, args.out_dir)
    print(json.dumps({"written": [str(p) for p in written]}, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modpanel",
        description="Ensemble moderation engine: moderate comments, evaluate "
        "configurations, and manage the review queue.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="engine TOML config (or ENGINE_CONFIG env)")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    add_config(p_serve)
    p_serve.add_argument("--host")
    p_serve.add_argument("--port", type=int)
    p_serve.set_defaults(fn=_cmd_serve)

    p_mod = sub.add_parser("moderate", help="moderate one comment")
    add_config(p_mod)
    p_mod.add_argument("--subreddit", default="r/unknown")
    p_mod.add_argument("--comment")
    p_mod.add_argument("--context")
    p_mod.add_argument("--stdin", action="store_true", help="read one JSON request from stdin")
    p_mod.set_defaults(fn=_cmd_moderate)

    p_ing = sub.add_parser("ingest", help="validate a line-delimited JSON dataset")
    add_config(p_ing)
    p_ing.add_argument("--input", required=True)
    p_ing.add_argument(
        "--out", help="write normalized records here (default: <data_dir>/datasets/)"
    )
    p_ing.set_defaults(fn=_cmd_ingest)

    p_eval = sub.add_parser("eval", help="run the evaluation harness")
    add_config(p_eval)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--split", default="balanced", choices=["balanced", "imb5", "imb10"])
    p_eval.add_argument("--seeds", default="1..10")
    p_eval.add_argument("--strategy", choices=["classification", "similarity"])
    p_eval.add_argument("--aggregation", choices=["dot_product", "majority_vote"])
    p_eval.add_argument("--k", type=int)
    p_eval.add_argument("--budget", type=int, help="cap on items per seed")
    p_eval.add_argument("--emit", default="both", choices=["json", "table", "both"])
    p_eval.add_argument("--out", help="also write the JSON report here")
    p_eval.set_defaults(fn=_cmd_eval)

    p_exp = sub.add_parser("explain", help="re-explain a stored trace")
    add_config(p_exp)
    p_exp.add_argument("--trace-id", required=True)
    p_exp.set_defaults(fn=_cmd_explain)

    p_queue = sub.add_parser("queue", help="review queue operations")
    add_config(p_queue)
    queue_sub = p_queue.add_subparsers(dest="queue_verb", required=True)
    # SUPPRESS keeps a nested --config from clobbering the parent's value.
    p_list = queue_sub.add_parser("list")
    p_list.add_argument("--config", default=argparse.SUPPRESS)
    p_list.add_argument("--status", choices=[s.value for s in QueueStatus])
    p_list.set_defaults(fn=_cmd_queue, queue_verb="list")
    p_res = queue_sub.add_parser("resolve")
    p_res.add_argument("--config", default=argparse.SUPPRESS)
    p_res.add_argument("trace_id")
    p_res.add_argument("--action", required=True, choices=["keep", "remove"])
    p_res.add_argument("--resolver", required=True)
    p_res.add_argument("--note")
    p_res.set_defaults(fn=_cmd_queue, queue_verb="resolve")

    p_rep = sub.add_parser("report", help="render figures and CSV from eval JSON")
    p_rep.add_argument("eval_json", nargs="+")
    p_rep.add_argument("--out-dir", default="reports")
    p_rep.set_defaults(fn=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except EngineError as exc:
        body = {"code": exc.code, "message": str(exc)}
        if exc.field:
            body["field"] = exc.field
        print(json.dumps(body), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
