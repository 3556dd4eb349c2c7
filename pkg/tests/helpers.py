"""Shared test utilities: independent oracles, store builders, LLM doubles.

The oracles here deliberately re-derive rankings and reachability with
their own arithmetic so they stay independent of the code paths they
check.
"""

from __future__ import annotations

import math
import random
from pathlib import Path

import numpy as np

from saycomply.llm import AuditLog, ChatRequest, LlmGateway
from saycomply.store import Category, ContextEntry, ContextStore, Level

FIXTURES = Path(__file__).parent / "fixtures"

WORD_POOL = """pump valve gauge fire floor robot stair manual corridor inspection torque seal
badge visitor boiler panel kitchen lobby server rack door hall zone clearance pressure
extinguisher reading log patrol duty limit service bracket unit thermal filter vent alarm
storage shaft hose tank meter crane belt motor relay sensor grease bolt flange""".split()


# --- independent similarity oracle ------------------------------------------


def oracle_similarity(a: np.ndarray, b: np.ndarray) -> float:
    dot = float(np.sum(a * b))
    na = math.sqrt(float(np.sum(a * a)))
    nb = math.sqrt(float(np.sum(b * b)))
    return dot / (na * nb)


def oracle_rank_ids(entries, query_vec) -> list[str]:
    """Brute-force argmax ranking: descending similarity, ascending id ties.

    Scores are quantized to the same 1e-9 grid the engine ranks on, so
    mathematically equal scores tie exactly here too.
    """
    scored = [(round(oracle_similarity(query_vec, e.embedding), 9), e.id) for e in entries]
    return [i for _, i in sorted(scored, key=lambda p: (-p[0], p[1]))]


def oracle_bfs_reachable(adjacency: dict[str, set[str]], src: str, dst: str) -> bool:
    """Independent reachability check via iterative depth-first search."""
    stack, seen = [src], {src}
    while stack:
        room = stack.pop()
        if room == dst:
            return True
        for nxt in adjacency[room]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


# --- programmatic store construction ----------------------------------------


def make_entry(
    embedder,
    entry_id: str,
    level: Level,
    category: Category = Category.OPERATION,
    title: str = "",
    summary: str = "",
    body: str = "",
    refs: tuple[str, ...] = (),
) -> ContextEntry:
    return ContextEntry.build(
        entry_id,
        category,
        level,
        title or f"Title {entry_id}",
        summary or f"Summary for {entry_id}.",
        body or f"Body text for {entry_id}.",
        refs,
        embedder,
    )


def random_words(rng: random.Random, low: int, high: int) -> str:
    return " ".join(rng.choice(WORD_POOL) for _ in range(rng.randint(low, high)))


def random_store(rng: random.Random, embedder, max_entries: int = 200, min_entries: int = 4) -> ContextStore:
    """A random valid store: unique ids, all L3 entries referenced from L2."""
    n = rng.randint(min_entries, max_entries)
    n_l3 = rng.randint(0, max(0, n // 3))
    n_l2 = rng.randint(1, max(1, n - n_l3 - 1))
    n_l1 = n - n_l3 - n_l2

    l3_ids = [f"manual-{i:04d}" for i in range(n_l3)]
    entries: list[ContextEntry] = []
    for entry_id in l3_ids:
        entries.append(
            make_entry(
                embedder,
                entry_id,
                Level.L3,
                rng.choice(list(Category)),
                title=random_words(rng, 2, 4),
                summary=random_words(rng, 4, 8) + ".",
                body=random_words(rng, 10, 60),
            )
        )
    # Spread every manual over the level-2 tier so none is orphaned.
    l2_refs: list[list[str]] = [[] for _ in range(n_l2)]
    for ref in l3_ids:
        l2_refs[rng.randrange(n_l2)].append(ref)
    for i in range(n_l2):
        if l3_ids and rng.random() < 0.3:
            extra = rng.choice(l3_ids)
            if extra not in l2_refs[i]:
                l2_refs[i].append(extra)
        entries.append(
            make_entry(
                embedder,
                f"instruction-{i:04d}",
                Level.L2,
                rng.choice(list(Category)),
                title=random_words(rng, 2, 4),
                summary=random_words(rng, 4, 8) + ".",
                body=random_words(rng, 5, 40),
                refs=tuple(l2_refs[i]),
            )
        )
    for i in range(n_l1):
        entries.append(
            make_entry(
                embedder,
                f"log-{i:04d}",
                Level.L1,
                rng.choice(list(Category)),
                title=random_words(rng, 2, 4),
                summary=random_words(rng, 4, 8) + ".",
                body="\n".join(random_words(rng, 3, 8) for _ in range(rng.randint(1, 6))),
            )
        )
    return ContextStore(entries)


# --- LLM doubles -------------------------------------------------------------


class StaticBackend:
    """Always returns the same completion."""

    def __init__(self, completion: str):
        self.completion = completion
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        return self.completion


class CatalogPickBackend:
    """L1-selection double: picks every other id from the rendered catalog."""

    def complete(self, request: ChatRequest) -> str:
        text = request.full_text()
        if "[L1 CATALOG]" not in text:
            return "KEEP"
        lines = text.split("[L1 CATALOG]", 1)[1].split("[QUERY]")[0].strip().splitlines()
        ids = [line.split("|")[0].strip() for line in lines if "|" in line]
        return ", ".join(ids[::2]) if ids else "none"


def static_gateway(completion: str) -> LlmGateway:
    return LlmGateway(StaticBackend(completion), AuditLog())
