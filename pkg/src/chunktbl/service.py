"""HTTP chunking service.

Wraps a trained model (tree or rule list) behind a small FastAPI app: POST
tokenized sentences with POS tags, get back chunk labels, extracted phrases,
and, for tree models, per-token probability distributions and entropies.
Start it with ``chunktbl serve --model tree.json``.
"""

from __future__ import annotations

from typing import Optional, Union

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .corpus import ChunkTag, Sentence, Token, extract_chunks
from .decoder import TreeModel, decode_sentence
from .trainer import RuleList

PLACEHOLDER_TAG = ChunkTag.parse("O")


class TokenIn(BaseModel):
    word: str = Field(min_length=1)
    pos: str = Field(min_length=1)


class SentenceIn(BaseModel):
    tokens: list[TokenIn] = Field(min_length=1)


class ChunkRequest(BaseModel):
    sentences: list[SentenceIn]


class ChunkSpan(BaseModel):
    phrase_type: str
    start: int
    end: int


class SentenceOut(BaseModel):
    labels: list[str]
    chunks: list[ChunkSpan]
    probs: Optional[list[list[float]]] = None
    entropy_bits: Optional[list[float]] = None


class ChunkResponse(BaseModel):
    tags: list[str]
    sentences: list[SentenceOut]


class ModelInfo(BaseModel):
    kind: str
    version: str
    tags: list[str]
    rules: Optional[int] = None
    question_nodes: Optional[int] = None
    leaves: Optional[int] = None


class HealthResponse(BaseModel):
    status: str


def create_app(model: Union[RuleList, TreeModel]) -> FastAPI:
    app = FastAPI(title="chunktbl", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok")

    @app.get("/model", response_model=ModelInfo)
    def model_info() -> ModelInfo:
        if isinstance(model, TreeModel):
            internal, leaves = model.tree.node_count()
            return ModelInfo(
                kind="tree",
                version=__version__,
                tags=[str(t) for t in model.tag_inventory],
                question_nodes=internal,
                leaves=leaves,
            )
        return ModelInfo(
            kind="rules",
            version=__version__,
            tags=[str(t) for t in model.tag_inventory],
            rules=len(model.rules),
        )

    @app.post("/chunk", response_model=ChunkResponse)
    def chunk(request: ChunkRequest) -> ChunkResponse:
        if not request.sentences:
            raise HTTPException(status_code=422, detail="no sentences given")
        out = []
        for sent_in in request.sentences:
            sentence = Sentence(
                tuple(Token(t.word, t.pos, PLACEHOLDER_TAG) for t in sent_in.tokens)
            )
            predictions = decode_sentence(model, sentence)
            labels = [p.label for p in predictions]
            spans = [
                ChunkSpan(phrase_type=c.phrase_type, start=c.start, end=c.end)
                for c in extract_chunks(labels)
            ]
            record = SentenceOut(labels=[str(l) for l in labels], chunks=spans)
            if predictions[0].distribution is not None:
                record.probs = [list(p.distribution.probs) for p in predictions]
                record.entropy_bits = [p.distribution.entropy_bits() for p in predictions]
            out.append(record)
        return ChunkResponse(
            tags=[str(t) for t in model.tag_inventory], sentences=out
        )

    return app
