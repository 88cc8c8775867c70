"""FastAPI apps exposing local scorers over the engine's wire protocols.

Expert side:    POST /v1/predict, GET /v1/health
Allocator side: POST /v1/logits, POST /v1/embed, GET /v1/health
"""

from __future__ import annotations

from typing import Callable

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .scorers import ScorerBinding


class PredictBody(BaseModel):
    context: str | None = None
    comment: str
    rules_or_norm: str
    expert: str


class LogitsBody(BaseModel):
    context: str | None = None
    comment: str


class EmbedBody(BaseModel):
    text: str


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"code": "bad_request", "message": message})


def _install_error_shape(app: FastAPI) -> None:
    # malformed bodies answer 400 with the {code, message} error shape
    @app.exception_handler(RequestValidationError)
    async def validation_handler(_req: Request, exc: RequestValidationError):
        return _bad_request(str(exc.errors()))


def create_expert_app(binding: ScorerBinding) -> FastAPI:
    app = FastAPI(title=f"expert:{binding.name}", version="1")
    _install_error_shape(app)

    @app.get("/v1/health")
    async def health():
        return {"status": "ok"}

    @app.post("/v1/predict")
    async def predict(body: PredictBody):
        vote, confidence = binding.scorer(body.context, body.comment, body.rules_or_norm)
        confidence = min(1.0, max(0.0, float(confidence)))
        return {"vote": bool(vote), "confidence": confidence}

    return app


def create_allocator_app(
    logit_model: Callable[[str | None, str], tuple[list[str], list[float]]],
    embed_model: Callable[[str], list[float]],
) -> FastAPI:
    app = FastAPI(title="allocator", version="1")
    _install_error_shape(app)

    @app.get("/v1/health")
    async def health():
        return {"status": "ok"}

    @app.post("/v1/logits")
    async def logits(body: LogitsBody):
        order, values = logit_model(body.context, body.comment)
        return {"expert_order": order, "logits": values}

    @app.post("/v1/embed")
    async def embed(body: EmbedBody):
        return {"embedding": embed_model(body.text)}

    return app


def serve_expert(binding: ScorerBinding, port: int, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_expert_app(binding), host=host, port=port, log_level="info")


def serve_allocator(
    logit_model: Callable[[str | None, str], tuple[list[str], list[float]]],
    embed_model: Callable[[str], list[float]],
    port: int,
    host: str = "127.0.0.1",
) -> None:
    import uvicorn

    uvicorn.run(create_allocator_app(logit_model, embed_model), host=host, port=port,
                log_level="info")
