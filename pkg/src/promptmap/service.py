"""HTTP service for the iterative exploration loop.

Sessions hold an embedded corpus plus an attention layer. Submitting or
reweighting prompts recomputes the composite document scores, refits the
circular map, recolors clusters, and refactorizes topics; every state change
bumps a version counter that responses echo so clients can drop stale reads.

Reads are served from an immutable published snapshot, so a long refit never
blocks retrieval of the previous state. Mutations on one session are
serialized by a per-session lock; sessions are independent.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import clustering, corpus, gridmap, topics
from .attention import (
    AttentionLayer,
    PromptResult,
    PromptWeighting,
    compose_prompts,
    evaluate_prompt,
    load_layer,
    relevance,
)
from .embeddings import EmbeddingStore, ToyEmbedder, load_store

__all__ = ["SessionConfig", "Session", "SessionRegistry", "create_app", "app"]

SNAPSHOT_DIR_ENV = "PROMPTMAP_SNAPSHOT_DIR"
_resolve_path = corpus.resolve_data_path


@dataclass
class SessionConfig:
    """Per-session pipeline knobs; defaults favor interactive latency."""

    dim: int = 32
    seed: int = 0
    omega_s: float = 1.0
    omega_r: float = 0.0
    map_epochs: int = 12
    map_lr: float = 0.5
    slack: float = 0.2
    topic_k: int = 6
    topic_auto: bool = False
    topic_iters: int = 100
    cluster_k_max: int = 6
    vocab_cap: int = 800


@dataclass(frozen=True)
class SessionView:
    """Immutable snapshot published after each recompute."""

    version: int
    layout: dict
    colors: dict[int, int]
    topics_export: dict
    per_layer_gamma: list[dict]
    prompts: list[dict]
    relevances: dict[str, float]
    raw_relevances: dict[str, float]
    results: dict[str, PromptResult]


class Session:
    def __init__(self, session_id: str, store: EmbeddingStore, layer: AttentionLayer,
                 config: SessionConfig):
        self.id = session_id
        self.store = store
        self.layer = layer
        self.config = config
        self.embedder = ToyEmbedder(store.dim, config.seed)
        self.prompts: list[dict] = []  # {"text", "weight", "embedding"}
        self.version = 0
        self.view: SessionView | None = None
        self.lock = threading.Lock()

    # -- state transitions; callers hold self.lock ---------------------------

    def add_prompt(self, text: str, weight: Optional[float]):
        if not text or not text.strip():
            raise ValueError("prompt text is empty")
        embedding = self.embedder.embed_prompt(text)
        if not self.prompts:
            if weight is not None and abs(weight - 1.0) > 1e-9:
                raise ValueError("the first prompt must carry weight 1")
            self.prompts.append({"text": text, "weight": 1.0, "embedding": embedding})
        else:
            w = 0.5 if weight is None else float(weight)
            if not 0.0 < w <= 1.0:
                raise ValueError(f"weight must be in (0, 1], got {w}")
            for p in self.prompts:
                p["weight"] *= 1.0 - w
            self.prompts.append({"text": text, "weight": w, "embedding": embedding})
        self._recompute()

    def set_weights(self, weights: list[float]):
        if not self.prompts:
            raise ValueError("no prompts submitted yet")
        if len(weights) != len(self.prompts):
            raise ValueError(f"expected {len(self.prompts)} weights, got {len(weights)}")
        arr = np.asarray(weights, dtype=np.float64)
        if np.any(arr < 0):
            raise ValueError("weights must be non-negative")
        if abs(float(arr.sum()) - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got {float(arr.sum()):.6f}")
        for p, w in zip(self.prompts, arr):
            p["weight"] = float(w)
        self._recompute()

    def weighting(self) -> PromptWeighting:
        return compose_prompts(
            [p["embedding"] for p in self.prompts], [p["weight"] for p in self.prompts]
        )

    def _recompute(self):
        cfg = self.config
        weighting = self.weighting()
        results: dict[str, PromptResult] = {}
        raw = np.empty(len(self.store))
        dynamic = np.empty((len(self.store), self.store.dim))
        for i, doc in enumerate(self.store):
            res = evaluate_prompt(self.layer, weighting, doc)
            results[doc.doc_id] = res
            # fast-path relevance so served values match compose_prompts bit for bit
            raw[i] = relevance(self.layer, weighting, doc)
            dynamic[i] = res.dynamic_embedding
        norm = gridmap.normalize_relevance(raw)
        items = [
            gridmap.MapItem(id=doc.doc_id, embedding=dynamic[i], relevance=float(norm[i]))
            for i, doc in enumerate(self.store)
        ]
        map_cfg = gridmap.MapConfig(
            omega_s=cfg.omega_s, omega_r=cfg.omega_r, epochs=cfg.map_epochs,
            lr0=cfg.map_lr, slack=cfg.slack, seed=cfg.seed,
        )
        grid, history = gridmap.fit(items, map_cfg)

        if len(items) >= 2:
            k = clustering.elbow_k(dynamic, min(cfg.cluster_k_max, len(items)), seed=cfg.seed)
            labels = clustering.kmeans(dynamic, k, seed=cfg.seed, ids=self.store.doc_ids).labels
        else:
            labels = {doc.doc_id: 0 for doc in self.store}
        colors = clustering.color_cells(grid, labels)

        model = topics.AttentionTopicModel(
            n_topics=None if cfg.topic_auto else min(cfg.topic_k, len(self.store)),
            k_max=cfg.cluster_k_max, iters=cfg.topic_iters, seed=cfg.seed,
            vocab_cap=cfg.vocab_cap,
        )
        model.fit(results, self.store)

        gamma_by_layer = []
        for layer_idx in sorted(set(int(v) for v in grid.layers)):
            mask = grid.layers == layer_idx
            gamma_by_layer.append({"layer": layer_idx, "gamma": float(grid.gammas[mask].mean())})

        self.version += 1
        self.view = SessionView(
            version=self.version,
            layout=gridmap.export_layout(grid, history),
            colors={int(k2): int(v) for k2, v in colors.items()},
            topics_export=model.export(),
            per_layer_gamma=gamma_by_layer,
            prompts=[{"text": p["text"], "weight": p["weight"]} for p in self.prompts],
            relevances={doc.doc_id: float(norm[i]) for i, doc in enumerate(self.store)},
            raw_relevances={doc.doc_id: float(raw[i]) for i, doc in enumerate(self.store)},
            results=results,
        )
        self._snapshot()

    def _snapshot(self):
        snap_dir = os.environ.get(SNAPSHOT_DIR_ENV)
        if not snap_dir or self.view is None:
            return
        Path(snap_dir).mkdir(parents=True, exist_ok=True)
        payload = {
            "session_id": self.id,
            "version": self.view.version,
            "prompts": self.view.prompts,
            "layout": self.view.layout,
            "topics": self.view.topics_export,
        }
        with open(Path(snap_dir) / f"{self.id}.json", "w", encoding="utf-8") as out:
            json.dump(payload, out, sort_keys=True)


class SessionRegistry:
    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def add(self, session: Session):
        with self._lock:
            self._sessions[session.id] = session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


# ---------------------------------------------------------------------------
# request / response bodies
# ---------------------------------------------------------------------------


class DocIn(BaseModel):
    id: str
    title: str = ""
    text: str


class CreateSessionRequest(BaseModel):
    csv_text: Optional[str] = None
    column_map: Optional[dict] = None
    docs: Optional[list[DocIn]] = None
    store_path: Optional[str] = None
    checkpoint_path: Optional[str] = None
    dim: int = 32
    seed: int = 0
    omega_s: float = 1.0
    omega_r: float = 0.0
    map_epochs: int = 12
    map_lr: float = 0.5
    slack: float = 0.2
    topic_k: int = 6
    topic_auto: bool = False
    topic_iters: int = 100
    cluster_k_max: int = 6
    vocab_cap: int = 800


class PromptRequest(BaseModel):
    text: str
    weight: Optional[float] = None


class WeightsRequest(BaseModel):
    weights: list[float]


class LassoRequest(BaseModel):
    doc_ids: list[str]


def _view_or_409(session: Session, version: Optional[int]) -> SessionView:
    view = session.view
    if view is None:
        raise HTTPException(status_code=409, detail="no prompt submitted")
    if version is not None and version != view.version:
        raise HTTPException(
            status_code=409,
            detail={"error": "stale version", "current_version": view.version},
        )
    return view


def _map_payload(session: Session, view: SessionView) -> dict:
    return {
        "session_id": session.id,
        "version": view.version,
        "n_docs": len(session.store),
        "prompts": view.prompts,
        "layout": view.layout,
        "colors": {str(k): v for k, v in view.colors.items()},
        "per_layer_gamma": view.per_layer_gamma,
        "relevances": view.relevances,
    }


def _build_store(req: CreateSessionRequest) -> EmbeddingStore:
    supplied = [x is not None for x in (req.csv_text, req.docs, req.store_path)]
    if sum(supplied) != 1:
        raise HTTPException(
            status_code=400, detail="provide exactly one of csv_text, docs, store_path"
        )
    if req.store_path is not None:
        path = _resolve_path(req.store_path)
        if not path.exists():
            raise HTTPException(status_code=400, detail=f"store not found: {req.store_path}")
        return load_store(path)
    if req.csv_text is not None:
        import tempfile

        with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False, encoding="utf-8") as tmp:
            tmp.write(req.csv_text)
            tmp_path = tmp.name
        try:
            records = corpus.load_corpus_csv(tmp_path, req.column_map)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"malformed corpus: {exc}") from exc
        finally:
            os.unlink(tmp_path)
    else:
        if not req.docs:
            raise HTTPException(status_code=400, detail="docs list is empty")
        try:
            records = [corpus.CorpusRecord(id=d.id, title=d.title, text=d.text) for d in req.docs]
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"malformed corpus: {exc}") from exc
    try:
        return corpus.embed_records(records, req.dim, req.seed)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=f"cannot embed corpus: {exc}") from exc


def create_app(registry: SessionRegistry | None = None) -> FastAPI:
    registry = registry or SessionRegistry()
    app = FastAPI(title="promptmap service")
    app.state.registry = registry
    # the browser UI is served from its own origin (dev server or file://)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/")
    def root():
        return {"service": "promptmap", "sessions": len(registry)}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        store = _build_store(req)
        if req.checkpoint_path is not None:
            path = _resolve_path(req.checkpoint_path)
            if not path.exists():
                raise HTTPException(status_code=400, detail=f"checkpoint not found: {req.checkpoint_path}")
            try:
                layer = load_layer(path)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            if layer.dim != store.dim:
                raise HTTPException(
                    status_code=400,
                    detail=f"checkpoint dim {layer.dim} does not match corpus dim {store.dim}",
                )
        else:
            layer = AttentionLayer.identity(store.dim)
        cfg = SessionConfig(
            dim=store.dim, seed=req.seed, omega_s=req.omega_s, omega_r=req.omega_r,
            map_epochs=req.map_epochs, map_lr=req.map_lr, slack=req.slack,
            topic_k=req.topic_k, topic_auto=req.topic_auto, topic_iters=req.topic_iters,
            cluster_k_max=req.cluster_k_max, vocab_cap=req.vocab_cap,
        )
        session = Session(uuid.uuid4().hex, store, layer, cfg)
        registry.add(session)
        return {"session_id": session.id, "version": session.version, "n_docs": len(store), "dim": store.dim}

    @app.post("/sessions/{session_id}/prompts")
    def submit_prompt(session_id: str, req: PromptRequest):
        session = registry.get(session_id)
        with session.lock:
            try:
                session.add_prompt(req.text, req.weight)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            view = session.view
        return _map_payload(session, view)

    @app.patch("/sessions/{session_id}/weights")
    def update_weights(session_id: str, req: WeightsRequest):
        session = registry.get(session_id)
        with session.lock:
            try:
                session.set_weights(req.weights)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            view = session.view
        return _map_payload(session, view)

    @app.get("/sessions/{session_id}/map")
    def get_map(session_id: str, version: Optional[int] = None):
        session = registry.get(session_id)
        view = _view_or_409(session, version)
        return _map_payload(session, view)

    @app.get("/sessions/{session_id}/topics")
    def get_topics(session_id: str, version: Optional[int] = None):
        session = registry.get(session_id)
        view = _view_or_409(session, version)
        return {"session_id": session.id, "version": view.version, **view.topics_export}

    @app.get("/sessions/{session_id}/docs/{doc_id}")
    def get_doc(session_id: str, doc_id: str, version: Optional[int] = None):
        session = registry.get(session_id)
        if doc_id not in session.store:
            raise HTTPException(status_code=404, detail=f"unknown document {doc_id!r}")
        view = _view_or_409(session, version)
        doc = session.store.get(doc_id)
        weights = view.results[doc_id].weights
        span = float(weights.max() - weights.min())
        if span > 0:
            heat = (weights - weights.min()) / span
        else:
            heat = np.full_like(weights, 0.5)
        return {
            "session_id": session.id,
            "version": view.version,
            "doc_id": doc_id,
            "title": doc.title,
            "text": doc.text,
            "tokens": [{"t": t, "weight": float(h)} for t, h in zip(doc.tokens, heat)],
            "raw_relevance": view.raw_relevances[doc_id],
            "relevance": view.relevances[doc_id],
        }

    @app.post("/sessions/{session_id}/lasso", status_code=201)
    def lasso(session_id: str, req: LassoRequest):
        session = registry.get(session_id)
        if not req.doc_ids:
            raise HTTPException(status_code=400, detail="empty selection")
        unknown = [d for d in req.doc_ids if d not in session.store]
        if unknown:
            raise HTTPException(status_code=400, detail=f"unknown doc ids: {unknown[:5]}")
        with session.lock:
            docs = [session.store.get(d) for d in dict.fromkeys(req.doc_ids)]
            child_store = EmbeddingStore(dim=session.store.dim, documents=docs)
            child = Session(uuid.uuid4().hex, child_store, session.layer, session.config)
            for p in session.prompts:
                child.prompts.append(dict(p))
            if child.prompts:
                child._recompute()
        registry.add(child)
        return {"session_id": child.id, "version": child.version, "n_docs": len(child_store)}

    return app


app = create_app()
