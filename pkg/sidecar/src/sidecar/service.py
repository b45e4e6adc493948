"""HTTP service layer: validation, micro-batching, and error mapping.

Endpoints speak the three-operation scoring protocol plus a health probe:

* POST /v1/score    {"prompt", "candidates"} -> {"log_scores"}
* POST /v1/maskfill {"text", "candidates"}   -> {"log_probs", "ranks"}
* POST /v1/embed    {"texts"}                -> {"vectors", "dim"}
* GET  /healthz                              -> {"status", "mlm", "embedder"}

Request handling is concurrent; model evaluation is serialized and runs
in micro-batches of at most ``max_batch_size`` items, invisible to
clients. Overlong inputs are refused with 413, malformed ones with 422,
and model evaluation errors surface as 500 with a message.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterator, Sequence

import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .models import MASK_TOKEN, load_embedder, load_mlm

MAX_INPUT_CHARS = 8192
MAX_LIST_ITEMS = 1024


@dataclass(frozen=True)
class SidecarConfig:
    """Server configuration; ``device`` is a hint for model placement."""

    mlm_model: str = "count-cloze-base"
    embedder_model: str = "ppmi-svd-base"
    host: str = "127.0.0.1"
    port: int = 8790
    max_batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")
        if not self.host:
            raise ValueError("host must be non-empty")
        if not self.device:
            raise ValueError("device hint must be non-empty")


class ScoreBody(BaseModel):
    prompt: str
    candidates: list[str] = Field(min_length=1)


class MaskfillBody(BaseModel):
    text: str
    candidates: list[str] = Field(min_length=1)


class EmbedBody(BaseModel):
    texts: list[str] = Field(min_length=1)


def _chunked(items: Sequence[str], size: int) -> Iterator[Sequence[str]]:
    for start in range(0, len(items), size):
        yield items[start : start + size]


def _refuse_overlong(strings: Sequence[str], lists: Sequence[Sequence[str]]) -> None:
    for candidate_list in lists:
        if len(candidate_list) > MAX_LIST_ITEMS:
            raise HTTPException(
                status_code=413,
                detail=f"request lists are capped at {MAX_LIST_ITEMS} items",
            )
    for text in strings:
        if len(text) > MAX_INPUT_CHARS:
            raise HTTPException(
                status_code=413,
                detail=f"inputs are capped at {MAX_INPUT_CHARS} characters",
            )


def _require_units(candidates: Sequence[str]) -> None:
    for candidate in candidates:
        if not candidate.split():
            raise HTTPException(
                status_code=422,
                detail="every candidate needs at least one whitespace unit",
            )


def build_app(config: SidecarConfig | None = None) -> FastAPI:
    """Load the configured models and wire up the endpoints.

    Raises ``ValueError`` at startup when a model name is unknown.
    """
    config = config or SidecarConfig()
    app = FastAPI(title="scoring-sidecar")
    app.state.config = config
    app.state.mlm = load_mlm(config.mlm_model)
    app.state.embedder = load_embedder(config.embedder_model)
    lock = threading.Lock()

    def evaluate(compute):
        # model forward passes are serialized; anything they raise is a
        # server-side failure, reported with its message
        try:
            with lock:
                return compute()
        except HTTPException:
            raise
        except Exception as err:
            raise HTTPException(status_code=500, detail=f"model failure: {err}") from err

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "mlm": config.mlm_model,
            "embedder": config.embedder_model,
        }

    @app.post("/v1/score")
    def score(body: ScoreBody):
        _refuse_overlong([body.prompt, *body.candidates], [body.candidates])
        _require_units(body.candidates)
        log_scores: list[float] = []
        for batch in _chunked(body.candidates, config.max_batch_size):
            log_scores.extend(evaluate(lambda: app.state.mlm.score(body.prompt, batch)))
        return {"log_scores": log_scores}

    @app.post("/v1/maskfill")
    def maskfill(body: MaskfillBody):
        _refuse_overlong([body.text, *body.candidates], [body.candidates])
        _require_units(body.candidates)
        if body.text.count(MASK_TOKEN) != 1:
            raise HTTPException(
                status_code=422,
                detail=f"text must contain exactly one {MASK_TOKEN}",
            )
        log_probs: list[float] = []
        ranks: list[int] = []
        for batch in _chunked(body.candidates, config.max_batch_size):
            batch_probs, batch_ranks = evaluate(
                lambda: app.state.mlm.maskfill(body.text, batch)
            )
            log_probs.extend(batch_probs)
            ranks.extend(batch_ranks)
        return {"log_probs": log_probs, "ranks": ranks}

    @app.post("/v1/embed")
    def embed(body: EmbedBody):
        _refuse_overlong(body.texts, [body.texts])
        vectors: list[list[float]] = []
        for batch in _chunked(body.texts, config.max_batch_size):
            vectors.extend(evaluate(lambda: app.state.embedder.embed_batch(batch).tolist()))
        return {"vectors": vectors, "dim": app.state.embedder.dim}

    return app


def serve(config: SidecarConfig | None = None) -> None:
    """Run the service until interrupted."""
    config = config or SidecarConfig()
    uvicorn.run(build_app(config), host=config.host, port=config.port, log_level="info")
