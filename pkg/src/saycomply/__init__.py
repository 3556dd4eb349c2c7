"""Compliance-grounded task planning for field robots.

Hierarchical context store, budgeted tree retrieval, LLM-backed plan and
replan loop against a deterministic world simulator, an evaluation
harness, and an HTTP gateway for the operator console.
"""

from .embedding import HashedBowEmbedder, RemoteEmbedder, cosine_similarity, embed_text
from .episode import EpisodeConfig, EpisodeState, EpisodeStatus, run_to_completion, start_episode, step_episode
from .evalharness import EvalCase, EvalMetrics, emit_report, judge_episode, run_suite
from .llm import AuditLog, ChatRequest, LlmGateway, RemoteBackend, ScriptedBackend, ScriptedRule, render_template
from .planner import (
    Accepted,
    Plan,
    PlanCache,
    PlannerOutcome,
    Refused,
    Task,
    TaskKind,
    compose_final_answer,
    parse_plan_output,
    plan_from_query,
    replan_from_feedback,
)
from .retrieval import (
    RetrievalMethod,
    RetrievalTrace,
    RetrievedContext,
    RetrievedItem,
    retrieve,
    retrieve_env_only,
    retrieve_topk_flat,
    retrieve_tree,
    select_level1,
)
from .store import (
    Category,
    ContextEntry,
    ContextStore,
    Level,
    ingest_corpus,
    load_store,
    save_store,
)
from .worldsim import (
    ExecutionFeedback,
    FeedbackStatus,
    WorldModel,
    WorldObject,
    execute_task,
    ingest_site_orientation,
    load_world,
    reachable,
    writeback_observation,
)

__version__ = "0.1.0"
