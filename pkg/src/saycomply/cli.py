"""Command-line interface: ingest, retrieve, run, eval, serve."""

from __future__ import annotations

import argparse
import json
import sys

from .embedding import HashedBowEmbedder, embedder_from_env
from .episode import EpisodeConfig, run_to_completion
from .evalharness import emit_report, run_suite
from .llm import AuditLog, LlmGateway, ScriptedBackend, gateway_from_env, load_rules
from .retrieval import RetrievalMethod, default_budget, retrieve
from .store import ingest_corpus
from .worldsim import load_world


def _method(value: str) -> RetrievalMethod:
    return RetrievalMethod(value)


def _gateway(args) -> LlmGateway:
    if getattr(args, "rules", None):
        return LlmGateway(ScriptedBackend(load_rules(args.rules)), AuditLog())
    return gateway_from_env(AuditLog())


def _llm_factory(args):
    if getattr(args, "rules", None):
        rules = load_rules(args.rules)
        return lambda: LlmGateway(ScriptedBackend(list(rules)), AuditLog())
    return lambda: gateway_from_env(AuditLog())


def cmd_ingest(args) -> int:
    embedder = embedder_from_env()
    llm = _gateway(args) if args.rules else None
    store = ingest_corpus(args.corpus, embedder, llm)
    by_level = {lvl: 0 for lvl in ("L1", "L2", "L3")}
    for entry in store.entries_at():
        by_level[entry.level.name] += 1
    print(f"ingested {len(store)} entries from {args.corpus} (version {store.version})")
    print(" ".join(f"{lvl}={n}" for lvl, n in by_level.items()))
    return 0


def cmd_retrieve(args) -> int:
    embedder = embedder_from_env()
    store = ingest_corpus(args.corpus, embedder)
    llm = _gateway(args) if args.method is RetrievalMethod.TREE else None
    ctx, trace = retrieve(args.method, args.query, store, args.budget, embedder, llm, k=3)
    print(json.dumps({**ctx.to_dict(), "trace": trace.to_dict()}, indent=2))
    return 0


def cmd_run(args) -> int:
    embedder = embedder_from_env()
    store = ingest_corpus(args.corpus, embedder)
    world = load_world(args.world)
    config = EpisodeConfig(
        embedder=embedder,
        llm=_gateway(args),
        method=args.method,
        budget=args.budget,
        observation_log_id=args.obs_log,
    )
    state = run_to_completion(args.query, store, world, config)
    for event in state.events:
        print(json.dumps(event.to_dict(state.id)))
    print(f"status: {state.status.value}")
    if state.final_answer:
        print(state.final_answer)
    return 0 if state.status.value in ("completed", "refused") else 1


def cmd_eval(args) -> int:
    embedder = embedder_from_env()
    metrics, records = run_suite(
        args.suite,
        args.corpus,
        args.world,
        args.method,
        embedder,
        rules_path=args.rules,
        llm_factory=None if args.rules else _llm_factory(args),
        budget=args.budget,
        observation_log_id=args.obs_log,
    )
    fmt = "markdown" if args.report == "md" else "csv"
    print(emit_report(records, {args.method.value: metrics}, fmt), end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app, parse_bind

    embedder = embedder_from_env()
    store = ingest_corpus(args.corpus, embedder)
    world = load_world(args.world)
    config = ServiceConfig(
        method=args.method,
        budget=args.budget,
        observation_log_id=args.obs_log,
        console_dir=args.console,
    )
    app = create_app(store, world, embedder, _llm_factory(args), config)
    host, port = parse_bind(args.bind)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saycomply")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, world=False):
        p.add_argument("--corpus", required=True, help="corpus directory")
        p.add_argument("--rules", help="scripted LLM rules file (JSON)")
        p.add_argument("--budget", type=int, default=default_budget(), help="context word budget")
        p.add_argument(
            "--method",
            type=_method,
            choices=list(RetrievalMethod),
            default=RetrievalMethod.TREE,
            help="retrieval method: tree, top3, or env",
        )
        if world:
            p.add_argument("--world", required=True, help="world model JSON file")
            p.add_argument("--obs-log", help="level-1 entry id for observation write-back")

    p_ingest = sub.add_parser("ingest", help="ingest and validate a corpus")
    p_ingest.add_argument("--corpus", required=True)
    p_ingest.add_argument("--rules", help="scripted rules for level-1 summary generation")
    p_ingest.set_defaults(func=cmd_ingest)

    p_retrieve = sub.add_parser("retrieve", help="print retrieved context and trace for a query")
    p_retrieve.add_argument("--query", required=True)
    common(p_retrieve)
    p_retrieve.set_defaults(func=cmd_retrieve)

    p_run = sub.add_parser("run", help="run a single episode and print its event log")
    p_run.add_argument("--query", required=True)
    common(p_run, world=True)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="run an eval suite and print the report")
    p_eval.add_argument("--suite", required=True)
    p_eval.add_argument("--report", choices=("md", "csv"), default="md")
    common(p_eval, world=True)
    p_eval.set_defaults(func=cmd_eval)

    p_serve = sub.add_parser("serve", help="start the gateway service")
    common(p_serve, world=True)
    p_serve.add_argument("--bind", help="host:port (default from SAYCOMPLY_BIND or 127.0.0.1:8777)")
    p_serve.add_argument("--console", help="directory with the built operator console")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
