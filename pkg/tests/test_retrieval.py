from __future__ import annotations

import random

import pytest

from helpers import (
    CatalogPickBackend,
    FIXTURES,
    make_entry,
    oracle_rank_ids,
    random_store,
    random_words,
    static_gateway,
)
from saycomply.embedding import HashedBowEmbedder
from saycomply.errors import BudgetTooSmall, EmptyStore, NoLevel2Context
from saycomply.llm import AuditLog, LlmGateway, ScriptedBackend, ScriptedRule, scripted_gateway
from saycomply.retrieval import (
    RetrievalMethod,
    retrieve_env_only,
    retrieve_topk_flat,
    retrieve_tree,
    select_level1,
)
from saycomply.store import Category, ContextStore, Level

EXT_QUERY = "check the pressure of the fire extinguishers on floor 3"


def test_default_budget_env_override(monkeypatch):
    from saycomply.retrieval import default_budget

    assert default_budget() == 4000
    monkeypatch.setenv("SAYCOMPLY_CONTEXT_BUDGET", "1234")
    assert default_budget() == 1234


def test_tree_retrieval_oracle_example(f1_store, embedder, f1_gateway):
    ctx, trace = retrieve_tree(EXT_QUERY, f1_store, 2000, embedder, f1_gateway)
    assert ctx.entry_ids == [
        "fire-extinguisher-instruction",
        "floor3-orientation",
        "extinguisher-inspection-manual",
        "fire-extinguisher-log",
    ]
    assert ctx.method is RetrievalMethod.TREE
    assert ctx.total_words <= 2000
    # Levels included in priority order L2, L2, L3, L1.
    assert [i.level for i in ctx.items] == [Level.L2, Level.L2, Level.L3, Level.L1]
    assert trace.l3_chosen == "extinguisher-inspection-manual"
    assert trace.l1_selected == ["fire-extinguisher-log"]


def test_tree_requires_level2(embedder):
    store = ContextStore([make_entry(embedder, "log-a", Level.L1)])
    with pytest.raises(NoLevel2Context):
        retrieve_tree("any query", store, 1000, embedder, static_gateway("none"))


def test_tree_budget_too_small_when_l2_alone_exceeds(embedder):
    big_body = " ".join(f"word{i}" for i in range(300))
    store = ContextStore(
        [
            make_entry(embedder, "note-a", Level.L2, body=big_body),
            make_entry(embedder, "note-b", Level.L2, body=big_body),
        ]
    )
    with pytest.raises(BudgetTooSmall):
        retrieve_tree("word1 word2", store, 200, embedder, static_gateway("none"))


def test_tree_rejects_budget_below_minimum(f1_store, embedder, f1_gateway):
    with pytest.raises(BudgetTooSmall):
        retrieve_tree(EXT_QUERY, f1_store, 100, embedder, f1_gateway)


def test_tree_tie_at_rank_two_prefers_smaller_id(embedder):
    shared = dict(title="Twin note", summary="Twin summary.", body="pump seal torque value")
    store = ContextStore(
        [
            make_entry(embedder, "aaa-winner", Level.L2, body="boiler gauge reading daily value"),
            make_entry(embedder, "dup-b", Level.L2, **shared),
            make_entry(embedder, "dup-a", Level.L2, **shared),
        ]
    )
    ctx, trace = retrieve_tree("boiler gauge pump", store, 1000, embedder, static_gateway("none"))
    l2_ids = [i.entry_id for i in ctx.items if i.level is Level.L2]
    assert l2_ids[0] == "aaa-winner"
    assert l2_ids[1] == "dup-a"
    scores = dict(trace.l2_ranking)
    assert scores["dup-a"] == scores["dup-b"]


def test_tree_truncates_l3_to_whole_paragraphs(embedder):
    paragraphs = [("alpha " * 80).strip(), ("beta " * 80).strip(), ("gamma " * 80).strip()]
    store = ContextStore(
        [
            make_entry(embedder, "note-a", Level.L2, body="alpha beta gamma", refs=("manual-m",)),
            make_entry(embedder, "note-b", Level.L2, body="delta words here"),
            make_entry(embedder, "manual-m", Level.L3, body="\n\n".join(paragraphs)),
        ]
    )
    # L2 total is 6 words; budget 200 leaves 194 for the 240-word manual, so
    # exactly the first two 80-word paragraphs fit as whole units.
    ctx, trace = retrieve_tree("alpha beta", store, 200, embedder, static_gateway("none"))
    manual_item = next(i for i in ctx.items if i.entry_id == "manual-m")
    assert manual_item.included_words == 160
    assert manual_item.text == "\n\n".join(paragraphs[:2])
    assert trace.truncations
    assert ctx.total_words <= 200


def test_tree_drops_l1_last_selected_first(embedder):
    entries = [
        make_entry(embedder, "note-a", Level.L2, body="alpha beta"),
        make_entry(embedder, "note-b", Level.L2, body="gamma delta"),
        make_entry(embedder, "log-one", Level.L1, body=" ".join(["x"] * 80)),
        make_entry(embedder, "log-two", Level.L1, body=" ".join(["y"] * 80)),
        make_entry(embedder, "log-three", Level.L1, body=" ".join(["z"] * 80)),
    ]
    store = ContextStore(entries)
    llm = LlmGateway(
        ScriptedBackend([ScriptedRule(["[L1 CATALOG]"], "log-one, log-two, log-three")]), AuditLog()
    )
    ctx, trace = retrieve_tree("alpha gamma", store, 200, embedder, llm)
    included_l1 = [i.entry_id for i in ctx.items if i.level is Level.L1]
    assert included_l1 == ["log-one", "log-two"]
    assert any("log-three" in t for t in trace.truncations)
    assert ctx.total_words <= 200


def test_select_level1_scripted(f1_store, f1_gateway):
    assert select_level1(EXT_QUERY, f1_store, f1_gateway) == ["fire-extinguisher-log"]


def test_select_level1_empty_tier_makes_no_llm_call(embedder):
    store = ContextStore([make_entry(embedder, "note-a", Level.L2)])
    gateway = static_gateway("unused")
    assert select_level1("query", store, gateway) == []
    assert gateway.audit.count("l1-select") == 0


def test_select_level1_drops_unknown_ids_with_warning(f1_store):
    from saycomply.retrieval import RetrievalTrace

    gateway = static_gateway("fire-extinguisher-log, nonexistent-db")
    trace = RetrievalTrace(query_digest="")
    ids = select_level1("query about units", f1_store, gateway, trace)
    assert ids == ["fire-extinguisher-log"]
    assert len(trace.warnings) == 1 and "nonexistent-db" in trace.warnings[0]


def test_topk_flat_returns_k_descending(f1_store, embedder):
    ctx, trace = retrieve_topk_flat(EXT_QUERY, f1_store, 3, 4000, embedder)
    assert len(ctx.items) == 3
    scores = [i.score for i in ctx.items]
    assert scores == sorted(scores, reverse=True)
    assert ctx.entry_ids == [i for i, _ in trace.flat_ranking[:3]]


def test_topk_flat_clamps_k_to_store_size(f1_store, embedder):
    ctx, _ = retrieve_topk_flat(EXT_QUERY, f1_store, 99, 10_000, embedder)
    assert len(ctx.items) == 13


def test_topk_flat_empty_store(embedder):
    with pytest.raises(EmptyStore):
        retrieve_topk_flat("query", ContextStore([]), 3, 1000, embedder)


def test_topk_flat_misses_pointer_reachable_manual_on_f2(f2_store, embedder):
    # The adversarial fixture: the required manual ranks 5th, outside top-3.
    query = "tighten the dosing pump seal housing bolts to the correct torque before restart"
    ctx, trace = retrieve_topk_flat(query, f2_store, 3, 4000, embedder)
    assert "pump-maintenance-manual" not in ctx.entry_ids
    flat_ids = [i for i, _ in trace.flat_ranking]
    assert flat_ids.index("pump-maintenance-manual") == 4  # zero-based: rank 5


def test_topk_budget_truncates_largest_then_drops_lowest(embedder):
    entries = [
        make_entry(embedder, "small-a", Level.L2, body="alpha " * 10),
        make_entry(embedder, "big-b", Level.L2, body="\n\n".join(["alpha " * 40, "beta " * 40])),
        make_entry(embedder, "small-c", Level.L2, body="alpha " * 12),
    ]
    store = ContextStore(entries)
    ctx, trace = retrieve_topk_flat("alpha", store, 3, 60, embedder)
    # big-b (80 words) is truncated to its first paragraph (40), then the
    # lowest-ranked remaining entry is dropped until the total fits.
    assert ctx.total_words <= 60
    assert any("big-b" in t for t in trace.truncations)


def test_env_only_includes_only_environment(f1_store, embedder):
    ctx, _ = retrieve_env_only(EXT_QUERY, f1_store, 4000, embedder)
    assert {i.entry_id for i in ctx.items} == {
        "floor3-orientation",
        "lobby-orientation",
        "office-blueprint",
        "room-occupancy-log",
    }
    for item in ctx.items:
        assert f1_store.get(item.entry_id).category is Category.ENVIRONMENT


def test_env_only_no_environment_entries(embedder):
    store = ContextStore([make_entry(embedder, "note-a", Level.L2, category=Category.OPERATION)])
    ctx, _ = retrieve_env_only("query", store, 1000, embedder)
    assert ctx.items == []


def test_env_only_never_includes_operation_even_if_similar(f1_store, embedder):
    ctx, _ = retrieve_env_only("h2s zone gas clearance certificate", f1_store, 4000, embedder)
    assert "h2s-restriction" not in ctx.entry_ids


def test_determinism_identical_calls(f1_store, embedder):
    g1 = scripted_gateway(FIXTURES / "rules_f1.json")
    g2 = scripted_gateway(FIXTURES / "rules_f1.json")
    ctx1, trace1 = retrieve_tree(EXT_QUERY, f1_store, 2000, embedder, g1)
    ctx2, trace2 = retrieve_tree(EXT_QUERY, f1_store, 2000, embedder, g2)
    assert ctx1.entry_ids == ctx2.entry_ids
    assert ctx1.total_words == ctx2.total_words
    assert trace1.to_dict() == trace2.to_dict()


@pytest.mark.parametrize("seed", range(40))
def test_oracle_equivalence_randomized(seed, embedder):
    rng = random.Random(seed)
    store = random_store(rng, embedder, max_entries=60)
    query = random_words(rng, 2, 8)
    query_vec = embedder.embed(query)
    big_budget = sum(e.word_count for e in store.entries_at()) + 500

    l2_entries = store.entries_at(level=Level.L2)
    oracle_top2 = oracle_rank_ids(l2_entries, query_vec)[:2]
    ctx, trace = retrieve_tree(query, store, big_budget, embedder, static_gateway("none"))
    got_l2 = [i.entry_id for i in ctx.items if i.level is Level.L2]
    assert got_l2 == oracle_top2

    refs = sorted({r for i in oracle_top2 for r in store.get(i).refs})
    if refs:
        assert trace.l3_chosen == oracle_rank_ids([store.get(r) for r in refs], query_vec)[0]
    else:
        assert trace.l3_chosen is None

    k = rng.randint(1, 6)
    flat_ctx, _ = retrieve_topk_flat(query, store, k, big_budget, embedder)
    assert flat_ctx.entry_ids == oracle_rank_ids(store.entries_at(), query_vec)[:k]


@pytest.mark.parametrize("seed", range(25))
def test_budget_invariant_randomized(seed, embedder):
    rng = random.Random(1000 + seed)
    store = random_store(rng, embedder, max_entries=40)
    query = random_words(rng, 2, 8)
    budget = rng.randint(200, 8000)
    llm = LlmGateway(CatalogPickBackend(), AuditLog())
    try:
        ctx, _ = retrieve_tree(query, store, budget, embedder, llm)
        assert ctx.total_words <= budget
    except BudgetTooSmall:
        pass
    for method_ctx, _ in (
        retrieve_topk_flat(query, store, 3, budget, embedder),
        retrieve_env_only(query, store, budget, embedder),
    ):
        assert method_ctx.total_words <= budget


@pytest.mark.parametrize("seed", range(15))
def test_tree_reachability_property(seed, embedder):
    rng = random.Random(2000 + seed)
    store = random_store(rng, embedder, max_entries=50)
    query = random_words(rng, 2, 8)
    ctx, _ = retrieve_tree(
        query, store, 10_000 + sum(e.word_count for e in store.entries_at()), embedder, static_gateway("none")
    )
    included_l2_refs = {
        r for i in ctx.items if i.level is Level.L2 for r in store.get(i.entry_id).refs
    }
    for item in ctx.items:
        if item.level is Level.L3:
            assert item.entry_id in included_l2_refs
