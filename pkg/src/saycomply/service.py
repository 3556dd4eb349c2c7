"""HTTP gateway: submit queries, stream episode events, preview retrieval.

Episodes run on background threads against a snapshot copy of the world,
so concurrent queries stay independent; the context store is shared (site
orientation and observation write-back become visible to later retrieval
previews) with serialized writes. Event delivery is long-poll with
resumable sequence numbers: at-least-once, ordered, gapless.
"""

from __future__ import annotations

import copy
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .episode import EpisodeConfig, EpisodeState, EpisodeStatus, begin_episode, step_episode
from .retrieval import RetrievalMethod, retrieve
from .store import Category, ContextStore, Level
from .worldsim import WorldModel, ingest_site_orientation

logger = logging.getLogger(__name__)

BIND_ENV = "SAYCOMPLY_BIND"
DEFAULT_BIND = "127.0.0.1:8777"
MAX_QUERY_CHARS = 2000
DEFAULT_EPISODE_LIMIT = 8
DEFAULT_POLL_TIMEOUT = 25.0


class QueryIn(BaseModel):
    text: str


class OrientationIn(BaseModel):
    room_id: str = ""
    text: str = ""


@dataclass
class ServiceConfig:
    method: RetrievalMethod = RetrievalMethod.TREE
    budget: int = 4000
    k: int = 3
    observation_log_id: str | None = None
    episode_limit: int = DEFAULT_EPISODE_LIMIT
    poll_timeout: float = DEFAULT_POLL_TIMEOUT
    console_dir: str | None = None


class EpisodeManager:
    """Owns running episodes; one background thread drives each episode."""

    def __init__(self, store: ContextStore, world: WorldModel, embedder, llm_factory, config: ServiceConfig):
        self.store = store
        self.world = world
        self.embedder = embedder
        self.llm_factory = llm_factory
        self.config = config
        self.episodes: dict[str, EpisodeState] = {}
        self._lock = threading.Lock()

    def active_count(self) -> int:
        with self._lock:
            return sum(1 for e in self.episodes.values() if not e.terminal)

    def submit(self, query: str) -> EpisodeState:
        state = EpisodeState(query)
        with self._lock:
            if sum(1 for e in self.episodes.values() if not e.terminal) >= self.config.episode_limit:
                raise RuntimeError("episode concurrency limit reached")
            self.episodes[state.id] = state
        thread = threading.Thread(target=self._drive, args=(state,), daemon=True)
        thread.start()
        return state

    def _drive(self, state: EpisodeState) -> None:
        world = copy.deepcopy(self.world)
        episode_config = EpisodeConfig(
            embedder=self.embedder,
            llm=self.llm_factory(),
            method=self.config.method,
            budget=self.config.budget,
            k=self.config.k,
            observation_log_id=self.config.observation_log_id,
        )
        begin_episode(state, self.store, world, episode_config)
        while state.status is EpisodeStatus.EXECUTING:
            step_episode(state, self.store, world, episode_config)

    def get(self, episode_id: str) -> EpisodeState | None:
        with self._lock:
            return self.episodes.get(episode_id)


def create_app(
    store: ContextStore,
    world: WorldModel,
    embedder,
    llm_factory,
    config: ServiceConfig | None = None,
) -> FastAPI:
    config = config or ServiceConfig()
    manager = EpisodeManager(store, world, embedder, llm_factory, config)
    app = FastAPI(title="saycomply gateway")
    app.state.manager = manager

    @app.post("/api/queries")
    def submit_query(body: QueryIn):
        text = body.text.strip()
        if not text:
            raise HTTPException(status_code=400, detail="query text is empty")
        if len(body.text) > MAX_QUERY_CHARS:
            raise HTTPException(status_code=400, detail=f"query exceeds {MAX_QUERY_CHARS} characters")
        try:
            state = manager.submit(body.text)
        except RuntimeError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        return {"episode_id": state.id}

    @app.get("/api/episodes/{episode_id}/events")
    def episode_events(episode_id: str, since: int = Query(0, ge=0)):
        state = manager.get(episode_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown episode {episode_id!r}")
        events = state.events_since(since)
        if not events and not state.terminal:
            events = state.wait_events(since, timeout=config.poll_timeout)
        return {"events": [e.to_dict(state.id) for e in events]}

    @app.get("/api/retrieval/preview")
    def retrieval_preview(q: str = "", method: str = ""):
        if not q.strip():
            raise HTTPException(status_code=400, detail="query is empty")
        try:
            chosen = RetrievalMethod(method) if method else config.method
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown method {method!r}") from None
        try:
            ctx, trace = retrieve(chosen, q, store, config.budget, embedder, llm_factory(), config.k)
        except Exception as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {**ctx.to_dict(), "trace": trace.to_dict()}

    @app.post("/api/orientation")
    def orientation(body: OrientationIn):
        if not body.room_id.strip() or not body.text.strip():
            raise HTTPException(status_code=400, detail="room_id and text are required")
        try:
            entry_id = ingest_site_orientation(store, body.room_id, body.text, embedder)
        except Exception as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"entry_id": entry_id}

    @app.get("/api/contexts")
    def contexts(level: str = "", category: str = ""):
        lvl = None
        cat = None
        if level:
            try:
                lvl = Level[level.upper()] if level.upper().startswith("L") else Level(int(level))
            except (KeyError, ValueError):
                raise HTTPException(status_code=400, detail=f"unknown level {level!r}") from None
        if category:
            try:
                cat = Category(category.lower())
            except ValueError:
                raise HTTPException(status_code=400, detail=f"unknown category {category!r}") from None
        return {
            "entries": [
                {
                    "id": e.id,
                    "level": e.level.name,
                    "category": e.category.value,
                    "title": e.title,
                    "summary": e.summary,
                    "word_count": e.word_count,
                    "refs": list(e.refs),
                }
                for e in store.entries_at(lvl, cat)
            ]
        }

    console_dir = config.console_dir
    if console_dir and Path(console_dir).is_dir():
        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app


def parse_bind(bind: str | None = None) -> tuple[str, int]:
    value = bind or os.environ.get(BIND_ENV, DEFAULT_BIND)
    host, _, port = value.rpartition(":")
    return host or "127.0.0.1", int(port)
