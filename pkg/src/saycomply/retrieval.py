"""Budgeted context retrieval: tree-organized plus two flat baselines.

Tree retrieval ranks level-2 instructions by cosine similarity, takes the
top two, follows their references into level-3 manuals and keeps the one
manual most similar to the query, and asks the LLM to pick level-1
observation databases from a title/summary catalog (plain similarity is a
poor signal on tabular logs). The result is assembled under a word budget
with priority L2 > L3 > L1: level-2 entries are never truncated, the
level-3 body is cut to leading whole paragraphs, and level-1 entries are
dropped last-selected-first.

Baselines: top-k flat ranking over all entries, and environment-only.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field
from enum import Enum

from .embedding import cosine_similarity
from .errors import BudgetTooSmall, EmptyStore, NoLevel2Context
from .llm import ChatRequest, LlmGateway, render_template
from .store import Category, ContextEntry, ContextStore, Level

DEFAULT_BUDGET = 4000
DEFAULT_FLAT_K = 3
BUDGET_ENV = "SAYCOMPLY_CONTEXT_BUDGET"

_PARAGRAPH_SPLIT = re.compile(r"\n\s*\n")


class RetrievalMethod(Enum):
    TREE = "tree"
    TOP_K_FLAT = "top3"
    ENV_ONLY = "env"


def default_budget() -> int:
    return int(os.environ.get(BUDGET_ENV, DEFAULT_BUDGET))


@dataclass
class RetrievedItem:
    """One entry included in the retrieved context.

    ``score`` is the cosine similarity for similarity-ranked entries;
    LLM-selected level-1 entries carry a ``reason`` instead. ``text`` is
    the included body, possibly truncated for level-3 manuals.
    """

    entry_id: str
    level: Level
    score: float | None
    reason: str | None
    included_words: int
    text: str


@dataclass
class RetrievedContext:
    """The budget-limited context subset handed to the planner."""

    items: list[RetrievedItem]
    total_words: int
    budget: int
    method: RetrievalMethod

    def __post_init__(self):
        if self.total_words != sum(i.included_words for i in self.items):
            raise ValueError("total_words does not match item word counts")
        if self.total_words > self.budget:
            raise ValueError(f"retrieved context exceeds budget: {self.total_words} > {self.budget}")
        ids = [i.entry_id for i in self.items]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate entry ids in retrieved context")

    @property
    def entry_ids(self) -> list[str]:
        return [i.entry_id for i in self.items]

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "budget": self.budget,
            "total_words": self.total_words,
            "items": [
                {
                    "entry_id": i.entry_id,
                    "level": i.level.name,
                    "score": i.score,
                    "reason": i.reason,
                    "included_words": i.included_words,
                }
                for i in self.items
            ],
        }


@dataclass
class RetrievalTrace:
    """Everything needed to replay one retrieval decision."""

    query_digest: str
    l2_ranking: list[tuple[str, float]] = field(default_factory=list)
    l3_candidates: list[str] = field(default_factory=list)
    l3_scores: list[tuple[str, float]] = field(default_factory=list)
    l3_chosen: str | None = None
    l1_catalog: list[str] = field(default_factory=list)
    l1_selected: list[str] = field(default_factory=list)
    flat_ranking: list[tuple[str, float]] = field(default_factory=list)
    truncations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "query_digest": self.query_digest,
            "l2_ranking": [[i, s] for i, s in self.l2_ranking],
            "l3_candidates": self.l3_candidates,
            "l3_scores": [[i, s] for i, s in self.l3_scores],
            "l3_chosen": self.l3_chosen,
            "l1_catalog": self.l1_catalog,
            "l1_selected": self.l1_selected,
            "flat_ranking": [[i, s] for i, s in self.flat_ranking],
            "truncations": self.truncations,
            "warnings": self.warnings,
        }


def _digest(vec) -> str:
    return hashlib.sha256(vec.tobytes()).hexdigest()[:16]


# Ranking quantizes similarities to 1e-9 so scores that are equal as real
# numbers (e.g. permuted token counts) tie exactly regardless of float
# summation order; ties then break by ascending id.
SCORE_DECIMALS = 9


def _ranked(entries: list[ContextEntry], query_vec) -> list[tuple[ContextEntry, float]]:
    """Entries by descending similarity, ties broken by ascending id."""
    scored = [(e, round(cosine_similarity(query_vec, e.embedding), SCORE_DECIMALS)) for e in entries]
    return sorted(scored, key=lambda pair: (-pair[1], pair[0].id))


def _truncate_paragraphs(body: str, max_words: int) -> tuple[str, int]:
    """Leading whole paragraphs (blank-line delimited) fitting max_words."""
    kept: list[str] = []
    used = 0
    for para in _PARAGRAPH_SPLIT.split(body):
        words = len(para.split())
        if words == 0:
            continue
        if used + words > max_words:
            break
        kept.append(para)
        used += words
    return "\n\n".join(kept), used


def select_level1(query: str, store: ContextStore, llm: LlmGateway, trace: RetrievalTrace | None = None) -> list[str]:
    """Ask the LLM to pick level-1 databases from a title/summary catalog.

    An empty level-1 tier short-circuits to an empty selection without an
    LLM call. Unknown ids in the completion are dropped with a trace
    warning.
    """
    l1_entries = store.entries_at(level=Level.L1)
    if trace is not None:
        trace.l1_catalog = [e.id for e in l1_entries]
    if not l1_entries:
        return []
    catalog = "\n".join(f"{e.id} | {e.title} | {e.summary}" for e in l1_entries)
    prompt = render_template("l1-select", {"catalog": catalog, "query": query})
    completion = llm.complete(
        ChatRequest(system="", turns=[("user", prompt)], max_words=100, tag="l1-select")
    )
    known = {e.id for e in l1_entries}
    selected: list[str] = []
    for token in re.split(r"[,\n]", completion):
        token = token.strip()
        if not token or token.lower() == "none":
            continue
        if token not in known:
            if trace is not None:
                trace.warnings.append(f"l1-select returned unknown id {token!r}")
            continue
        if token not in selected:
            selected.append(token)
    if trace is not None:
        trace.l1_selected = list(selected)
    return selected


def retrieve_tree(
    query: str,
    store: ContextStore,
    budget: int,
    embedder,
    llm: LlmGateway,
) -> tuple[RetrievedContext, RetrievalTrace]:
    """Tree-organized retrieval: top-2 L2, their best-pointed L3, LLM-picked L1."""
    if budget < 200:
        raise BudgetTooSmall(f"budget {budget} is below the 200-word minimum")
    l2_entries = store.entries_at(level=Level.L2)
    if not l2_entries:
        raise NoLevel2Context("store has no level-2 entries")

    query_vec = embedder.embed(query)
    trace = RetrievalTrace(query_digest=_digest(query_vec))

    ranked_l2 = _ranked(l2_entries, query_vec)
    trace.l2_ranking = [(e.id, s) for e, s in ranked_l2]
    top_l2 = ranked_l2[:2]

    l2_words = sum(e.word_count for e, _ in top_l2)
    if l2_words > budget:
        raise BudgetTooSmall(
            f"top level-2 entries alone are {l2_words} words, over the {budget}-word budget"
        )

    # Union of references of the selected L2 entries; keep the single most
    # query-similar manual among them.
    candidate_ids = sorted({ref for e, _ in top_l2 for ref in e.refs})
    trace.l3_candidates = candidate_ids
    chosen_l3: tuple[ContextEntry, float] | None = None
    if candidate_ids:
        ranked_l3 = _ranked([store.get(c) for c in candidate_ids], query_vec)
        trace.l3_scores = [(e.id, s) for e, s in ranked_l3]
        chosen_l3 = ranked_l3[0]
        trace.l3_chosen = chosen_l3[0].id

    l1_ids = select_level1(query, store, llm, trace)

    items: list[RetrievedItem] = [
        RetrievedItem(e.id, e.level, score, None, e.word_count, e.body) for e, score in top_l2
    ]
    used = l2_words

    if chosen_l3 is not None:
        entry, score = chosen_l3
        remaining = budget - used
        if entry.word_count <= remaining:
            items.append(RetrievedItem(entry.id, entry.level, score, None, entry.word_count, entry.body))
            used += entry.word_count
        else:
            text, words = _truncate_paragraphs(entry.body, remaining)
            trace.truncations.append(
                f"truncated {entry.id} from {entry.word_count} to {words} words"
            )
            if words > 0:
                items.append(RetrievedItem(entry.id, entry.level, score, None, words, text))
                used += words

    for l1_id in l1_ids:
        entry = store.get(l1_id)
        if used + entry.word_count > budget:
            trace.truncations.append(f"dropped {entry.id} and later level-1 selections (over budget)")
            break
        items.append(RetrievedItem(entry.id, entry.level, None, "llm-selected", entry.word_count, entry.body))
        used += entry.word_count

    ctx = RetrievedContext(items=items, total_words=used, budget=budget, method=RetrievalMethod.TREE)
    return ctx, trace


def _enforce_flat_budget(
    picked: list[tuple[ContextEntry, float]], budget: int, trace: RetrievalTrace
) -> list[RetrievedItem]:
    """Flat-budget rule: truncate the largest entry first, then drop lowest-ranked."""
    items = [
        RetrievedItem(e.id, e.level, score, None, e.word_count, e.body) for e, score in picked
    ]
    total = sum(i.included_words for i in items)
    if total > budget and items:
        largest = max(range(len(items)), key=lambda i: (items[i].included_words, -i))
        room = budget - (total - items[largest].included_words)
        text, words = _truncate_paragraphs(items[largest].text, max(room, 0))
        trace.truncations.append(
            f"truncated {items[largest].entry_id} from {items[largest].included_words} to {words} words"
        )
        if words > 0:
            items[largest] = RetrievedItem(
                items[largest].entry_id,
                items[largest].level,
                items[largest].score,
                items[largest].reason,
                words,
                text,
            )
        else:
            del items[largest]
    total = sum(i.included_words for i in items)
    while total > budget and items:
        dropped = items.pop()
        trace.truncations.append(f"dropped {dropped.entry_id} (over budget)")
        total -= dropped.included_words
    return items


def retrieve_topk_flat(
    query: str,
    store: ContextStore,
    k: int,
    budget: int,
    embedder,
) -> tuple[RetrievedContext, RetrievalTrace]:
    """Baseline: top-k most similar entries over all levels and categories."""
    entries = store.entries_at()
    if not entries:
        raise EmptyStore("flat retrieval over an empty store")
    query_vec = embedder.embed(query)
    trace = RetrievalTrace(query_digest=_digest(query_vec))
    ranked = _ranked(entries, query_vec)
    trace.flat_ranking = [(e.id, s) for e, s in ranked]
    items = _enforce_flat_budget(ranked[:k], budget, trace)
    ctx = RetrievedContext(
        items=items,
        total_words=sum(i.included_words for i in items),
        budget=budget,
        method=RetrievalMethod.TOP_K_FLAT,
    )
    return ctx, trace


def retrieve_env_only(
    query: str,
    store: ContextStore,
    budget: int,
    embedder,
) -> tuple[RetrievedContext, RetrievalTrace]:
    """Baseline: environment-category entries only, no LLM involvement."""
    entries = store.entries_at(category=Category.ENVIRONMENT)
    if not entries:
        return (
            RetrievedContext(items=[], total_words=0, budget=budget, method=RetrievalMethod.ENV_ONLY),
            RetrievalTrace(query_digest=""),
        )
    query_vec = embedder.embed(query)
    trace = RetrievalTrace(query_digest=_digest(query_vec))
    ranked = _ranked(entries, query_vec)
    trace.flat_ranking = [(e.id, s) for e, s in ranked]
    items = _enforce_flat_budget(ranked, budget, trace)
    ctx = RetrievedContext(
        items=items,
        total_words=sum(i.included_words for i in items),
        budget=budget,
        method=RetrievalMethod.ENV_ONLY,
    )
    return ctx, trace


def retrieve(
    method: RetrievalMethod,
    query: str,
    store: ContextStore,
    budget: int,
    embedder,
    llm: LlmGateway | None = None,
    k: int = DEFAULT_FLAT_K,
) -> tuple[RetrievedContext, RetrievalTrace]:
    """Dispatch to the configured retrieval method."""
    if method is RetrievalMethod.TREE:
        if llm is None:
            raise ValueError("tree retrieval requires an LLM gateway for level-1 selection")
        return retrieve_tree(query, store, budget, embedder, llm)
    if method is RetrievalMethod.TOP_K_FLAT:
        return retrieve_topk_flat(query, store, k, budget, embedder)
    return retrieve_env_only(query, store, budget, embedder)
