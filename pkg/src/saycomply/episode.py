"""Episode orchestration: retrieve, plan, dispatch, feedback, replan, answer.

One episode owns one user query end to end. Exactly one task is in flight
at any time; only the head of the accepted plan is dispatched, and every
execution feedback triggers a replan until the terminal Respond executes.
Module errors never escape: they become a terminal Errored status with a
diagnostic event, so the service and the eval harness handle every outcome
uniformly.
"""

from __future__ import annotations

import logging
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable

from .llm import LlmGateway
from .planner import (
    Accepted,
    PlanCache,
    Refused,
    Task,
    TaskKind,
    compose_final_answer,
    plan_from_query,
    replan_from_feedback,
)
from .retrieval import (
    DEFAULT_FLAT_K,
    RetrievalMethod,
    RetrievalTrace,
    RetrievedContext,
    default_budget,
    retrieve,
)
from .store import ContextStore
from .worldsim import ExecutionFeedback, WorldModel, writeback_observation

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 20


class EpisodeStatus(Enum):
    RETRIEVING = "retrieving"
    PLANNING = "planning"
    EXECUTING = "executing"
    REPLANNING = "replanning"
    COMPLETED = "completed"
    REFUSED = "refused"
    ERRORED = "errored"


TERMINAL_STATUSES = (EpisodeStatus.COMPLETED, EpisodeStatus.REFUSED, EpisodeStatus.ERRORED)


@dataclass
class EpisodeEvent:
    seq: int
    kind: str
    payload: dict
    ts: str

    def to_dict(self, episode_id: str) -> dict:
        return {"episode_id": episode_id, "seq": self.seq, "kind": self.kind, "payload": self.payload, "ts": self.ts}


@dataclass
class EpisodeConfig:
    """Wiring for one episode: retrieval method, budget, and backends."""

    embedder: object
    llm: LlmGateway | None
    method: RetrievalMethod = RetrievalMethod.TREE
    budget: int = field(default_factory=default_budget)
    k: int = DEFAULT_FLAT_K
    observation_log_id: str | None = None
    max_iterations: int = MAX_ITERATIONS
    clock: Callable[[], str] | None = None

    def now(self) -> str:
        if self.clock is not None:
            return self.clock()
        return datetime.now(timezone.utc).isoformat()


class EpisodeState:
    """Lifecycle state of one query, with an append-only event log.

    Event sequence numbers are gapless and strictly increasing from 1;
    readers can snapshot by sequence number while the single writer
    advances the episode.
    """

    def __init__(self, query: str, episode_id: str | None = None):
        self.id = episode_id or uuid.uuid4().hex
        self.query = query
        self.status = EpisodeStatus.RETRIEVING
        self.retrieved: RetrievedContext | None = None
        self.trace: RetrievalTrace | None = None
        self.cache: PlanCache | None = None
        self.dispatched: Task | None = None
        self.feedback_log: list[ExecutionFeedback] = []
        self.events: list[EpisodeEvent] = []
        self.final_answer: str | None = None
        self.cited_entry_ids: list[str] = []
        self.iterations = 0
        self.error: str | None = None
        self._cond = threading.Condition()

    @property
    def terminal(self) -> bool:
        return self.status in TERMINAL_STATUSES

    def emit(self, kind: str, payload: dict, ts: str) -> None:
        with self._cond:
            self.events.append(EpisodeEvent(seq=len(self.events) + 1, kind=kind, payload=payload, ts=ts))
            self._cond.notify_all()

    def events_since(self, seq: int) -> list[EpisodeEvent]:
        with self._cond:
            return [e for e in self.events if e.seq > seq]

    def wait_events(self, seq: int, timeout: float) -> list[EpisodeEvent]:
        """Long-poll helper: block until events past ``seq`` exist or timeout."""
        with self._cond:
            self._cond.wait_for(lambda: len(self.events) > seq, timeout=timeout)
            return [e for e in self.events if e.seq > seq]


def state_summary(world: WorldModel) -> str:
    objects_here = sorted(o_id for o_id, o in world.objects.items() if o.room == world.robot_room)
    where = f"The robot is in {world.robot_room}."
    if objects_here:
        return f"{where} Objects here: {', '.join(objects_here)}."
    return f"{where} No objects here."


def _fail(state: EpisodeState, config: EpisodeConfig, error: str, detail: str = "") -> EpisodeState:
    logger.warning("episode %s errored: %s %s", state.id, error, detail)
    state.status = EpisodeStatus.ERRORED
    state.error = error
    state.emit("errored", {"error": error, "detail": detail}, config.now())
    return state


def _dispatch_head(state: EpisodeState, config: EpisodeConfig) -> None:
    assert state.cache is not None and state.cache.remaining
    state.dispatched = state.cache.remaining.pop(0)
    state.emit("dispatched", {"task": state.dispatched.to_dict()}, config.now())
    state.status = EpisodeStatus.EXECUTING


def begin_episode(
    state: EpisodeState,
    store: ContextStore,
    world: WorldModel,
    config: EpisodeConfig,
) -> EpisodeState:
    """Run retrieval and initial planning on a prepared state object."""
    if not state.query.strip():
        return _fail(state, config, "validation: empty query")
    try:
        state.status = EpisodeStatus.RETRIEVING
        ctx, trace = retrieve(
            config.method, state.query, store, config.budget, config.embedder, config.llm, config.k
        )
        state.retrieved = ctx
        state.trace = trace
        state.emit("retrieved", {**ctx.to_dict(), "trace": trace.to_dict()}, config.now())

        state.status = EpisodeStatus.PLANNING
        if config.llm is None:
            raise ValueError("planning requires an LLM gateway")
        outcome = plan_from_query(state.query, state_summary(world), ctx, config.llm)
        if isinstance(outcome, Refused):
            state.status = EpisodeStatus.REFUSED
            state.cited_entry_ids = list(outcome.cited_entry_ids)
            state.final_answer = (
                f"Query refused: {outcome.reason} (cited: {', '.join(outcome.cited_entry_ids)})"
            )
            state.emit(
                "refused",
                {"reason": outcome.reason, "cited_entry_ids": outcome.cited_entry_ids},
                config.now(),
            )
            return state

        state.cache = PlanCache(
            query=state.query,
            context_entry_ids=ctx.entry_ids,
            remaining=list(outcome.plan.tasks),
        )
        state.emit("planned", {"tasks": [t.to_dict() for t in outcome.plan.tasks]}, config.now())
        _dispatch_head(state, config)
        return state
    except Exception as exc:
        return _fail(state, config, type(exc).__name__, str(exc))


def start_episode(
    query: str,
    store: ContextStore,
    world: WorldModel,
    config: EpisodeConfig,
    episode_id: str | None = None,
) -> EpisodeState:
    """Create an episode for a query; retrieval and first dispatch included."""
    return begin_episode(EpisodeState(query, episode_id), store, world, config)


def step_episode(
    state: EpisodeState,
    store: ContextStore,
    world: WorldModel,
    config: EpisodeConfig,
) -> EpisodeState:
    """Execute the dispatched task, then finish or replan and dispatch next."""
    if state.status is not EpisodeStatus.EXECUTING:
        raise ValueError(f"step_episode requires status Executing, not {state.status.value}")
    state.iterations += 1
    if state.iterations > config.max_iterations:
        return _fail(state, config, "iteration budget", f"exceeded {config.max_iterations} task executions")

    task = state.dispatched
    assert task is not None and state.cache is not None
    try:
        from .worldsim import execute_task

        world, feedback = execute_task(world, task)
        state.dispatched = None
        state.feedback_log.append(feedback)
        state.cache.executed.append((task, feedback.status.value))
        state.emit("feedback", feedback.to_dict(), config.now())

        if config.observation_log_id:
            writeback_observation(store, feedback, config.observation_log_id, config.embedder)

        if task.kind is TaskKind.RESPOND:
            state.status = EpisodeStatus.COMPLETED
            state.final_answer = compose_final_answer(state.cache)
            state.emit("completed", {"final_answer": state.final_answer}, config.now())
            return state

        state.status = EpisodeStatus.REPLANNING
        if config.llm is None:
            raise ValueError("replanning requires an LLM gateway")
        outcome, state.cache = replan_from_feedback(
            state.cache, feedback, state_summary(world), state.retrieved, config.llm
        )
        if outcome is None or isinstance(outcome, Refused):
            # A refusal belongs to fresh-query planning; mid-episode it is a
            # fixture or model defect.
            return _fail(state, config, "replan produced no continuable plan")
        state.emit("replanned", {"tasks": [t.to_dict() for t in outcome.plan.tasks]}, config.now())
        _dispatch_head(state, config)
        return state
    except Exception as exc:
        return _fail(state, config, type(exc).__name__, str(exc))


def run_to_completion(
    query: str,
    store: ContextStore,
    world: WorldModel,
    config: EpisodeConfig,
    episode_id: str | None = None,
) -> EpisodeState:
    """Drive one episode from query to a terminal status."""
    state = start_episode(query, store, world, config, episode_id)
    while state.status is EpisodeStatus.EXECUTING:
        state = step_episode(state, store, world, config)
    return state
