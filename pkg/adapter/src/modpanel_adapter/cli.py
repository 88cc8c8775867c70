"""CLI: serve one expert or one allocator from a scorer spec file."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .scorers import (
    ScorerBinding,
    TrainablePerceptronScorer,
    hashed_embedding_model,
    keyword_scorer,
    trigger_logit_model,
)
from .server import serve_allocator, serve_expert


def _load_spec(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _cmd_serve_expert(args: argparse.Namespace) -> int:
    spec = _load_spec(args.scorer)
    if spec.get("type", "keyword") == "keyword":
        scorer = keyword_scorer(spec["keywords"], spec.get("threshold", 0.5))
    elif spec["type"] == "perceptron":
        model = TrainablePerceptronScorer(dimension=spec.get("dimension", 64))
        model.fit([(row["text"], bool(row["label"])) for row in spec["samples"]])
        scorer = model
    else:
        print(json.dumps({"code": "bad_scorer", "message": spec["type"]}), file=sys.stderr)
        return 1
    binding = ScorerBinding(
        scorer=scorer, name=spec.get("name", "expert"), kind=spec.get("kind", "norm_violation")
    )
    serve_expert(binding, port=args.port, host=args.host)
    return 0


def _cmd_serve_allocator(args: argparse.Namespace) -> int:
    spec = _load_spec(args.scorer)
    logit_model = trigger_logit_model(spec["triggers"], spec["expert_order"])
    embed_model = hashed_embedding_model(spec.get("embed_dimension", 64))
    serve_allocator(logit_model, embed_model, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modpanel-adapter",
        description="Serve local scorers over the moderation engine's wire protocols.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_expert = sub.add_parser("serve-expert", help="expose POST /v1/predict")
    p_expert.add_argument("--scorer", required=True, help="scorer spec JSON file")
    p_expert.add_argument("--port", type=int, required=True)
    p_expert.add_argument("--host", default="127.0.0.1")
    p_expert.set_defaults(fn=_cmd_serve_expert)

    p_alloc = sub.add_parser("serve-allocator", help="expose POST /v1/logits and /v1/embed")
    p_alloc.add_argument("--scorer", required=True, help="allocator spec JSON file")
    p_alloc.add_argument("--port", type=int, required=True)
    p_alloc.add_argument("--host", default="127.0.0.1")
    p_alloc.set_defaults(fn=_cmd_serve_allocator)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
