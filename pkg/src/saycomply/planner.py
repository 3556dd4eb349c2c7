"""Compliance-first task planning against retrieved context.

The planner renders one base prompt for both planning cases (fresh query,
and replanning from execution feedback with the previous task and cached
plan appended). Completions follow a strict pipe-delimited grammar; a
single repair turn is attempted on a parse failure before giving up. A
query that violates the retrieved context is refused with the violated
entry ids cited.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import NotTerminal, ParseError, PlanParseFailed
from .llm import ChatRequest, LlmGateway, render_template
from .retrieval import RetrievedContext

INSPECT_MODES = ("read", "scan", "measure", "photo")

PLAN_MAX_WORDS = 600

TASK_TYPES_TEXT = """GOTO: move to a room, or to the room containing an object.
SEARCH: locate an object anywhere on site; reports the room it is in without moving.
INSPECT: read, scan, measure, or photo an object in the robot's current room.
RESPOND: send the final message to the user; always the last task of a plan.
REFUSE: answer the user directly instead of planning, when the query violates the retrieved context."""

_SYSTEM = "You plan tasks for a site inspection robot under operational compliance."


class TaskKind(Enum):
    GOTO = "GOTO"
    SEARCH = "SEARCH"
    INSPECT = "INSPECT"
    RESPOND = "RESPOND"


@dataclass
class Task:
    kind: TaskKind
    target: str = ""
    mode: str | None = None
    message: str | None = None
    justification: str = ""

    def validate(self) -> None:
        if self.kind is TaskKind.RESPOND:
            if not (self.message or "").strip():
                raise ValueError("Respond requires a message")
            if self.target:
                raise ValueError("Respond takes no target")
        else:
            if not self.target.strip():
                raise ValueError(f"{self.kind.value} requires a target")
        if self.kind is TaskKind.INSPECT:
            if not self.mode:
                raise ValueError("Inspect requires mode")
            if self.mode not in INSPECT_MODES:
                raise ValueError(f"unknown Inspect mode {self.mode!r}")
        elif self.kind is not TaskKind.RESPOND and self.mode:
            raise ValueError(f"{self.kind.value} takes no mode")
        if not self.justification.strip():
            raise ValueError("missing justification")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "target": self.target,
            "mode": self.mode,
            "message": self.message,
            "justification": self.justification,
        }

    def as_line(self) -> str:
        third = self.mode if self.kind is TaskKind.INSPECT else (self.message or "")
        return f"{self.kind.value} | {self.target} | {third or ''} | {self.justification}"


@dataclass
class Plan:
    tasks: list[Task]

    def validate(self) -> None:
        if not self.tasks:
            raise ValueError("empty plan")
        for task in self.tasks:
            task.validate()
        if self.tasks[-1].kind is not TaskKind.RESPOND:
            raise ValueError("missing terminal RESPOND")
        for task in self.tasks[:-1]:
            if task.kind is TaskKind.RESPOND:
                raise ValueError("RESPOND before last")


@dataclass
class Accepted:
    plan: Plan
    trailing: str = ""


@dataclass
class Refused:
    reason: str
    cited_entry_ids: list[str]


PlannerOutcome = Accepted | Refused


@dataclass
class PlanCache:
    """Per-episode planning state: the original query, context, and task lists."""

    query: str
    context_entry_ids: list[str]
    remaining: list[Task] = field(default_factory=list)
    executed: list[tuple[Task, str]] = field(default_factory=list)
    iterations: int = 0


def parse_plan_output(text: str) -> PlannerOutcome:
    """Parse a completion against the strict plan/refusal grammar.

    Trailing prose after the final task line is ignored but recorded on
    the Accepted outcome.
    """
    lines = text.splitlines()
    idx = 0
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines):
        raise ParseError("empty completion")

    first = lines[idx].strip()
    if first.startswith("REFUSE"):
        parts = [p.strip() for p in first.split("|")]
        if len(parts) != 3 or parts[0] != "REFUSE":
            raise ParseError("refusal line must be REFUSE | <ids> | <reason>", idx + 1)
        cited = [c.strip() for c in parts[1].split(",") if c.strip()]
        if not cited:
            raise ParseError("refusal cites no entry ids", idx + 1)
        if not parts[2]:
            raise ParseError("refusal has no reason", idx + 1)
        return Refused(reason=parts[2], cited_entry_ids=cited)

    if first != "PLAN:":
        raise ParseError("expected PLAN: header or REFUSE line", idx + 1)

    tasks: list[Task] = []
    trailing_lines: list[str] = []
    expected_number = 1
    in_tasks = True
    for line_no, raw in enumerate(lines[idx + 1 :], start=idx + 2):
        stripped = raw.strip()
        if not in_tasks:
            trailing_lines.append(raw)
            continue
        if not stripped:
            continue
        head, dot, rest = stripped.partition(".")
        if not dot or not head.isdigit():
            in_tasks = False
            trailing_lines.append(raw)
            continue
        if int(head) != expected_number:
            raise ParseError(f"expected task number {expected_number}", line_no)
        expected_number += 1
        fields = [p.strip() for p in rest.split("|")]
        if len(fields) != 4:
            raise ParseError("task line needs KIND | target | mode | justification", line_no)
        kind_token, target, third, justification = fields
        try:
            kind = TaskKind(kind_token)
        except ValueError:
            raise ParseError(f"unknown kind {kind_token!r}", line_no) from None
        task = Task(
            kind=kind,
            target=target,
            mode=third if kind is TaskKind.INSPECT else None,
            message=third if kind is TaskKind.RESPOND else None,
            justification=justification,
        )
        if kind not in (TaskKind.INSPECT, TaskKind.RESPOND) and third:
            raise ParseError(f"{kind.value} takes no mode", line_no)
        try:
            task.validate()
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
        tasks.append(task)

    plan = Plan(tasks)
    try:
        plan.validate()
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return Accepted(plan=plan, trailing="\n".join(trailing_lines).strip())


def format_context(context: RetrievedContext) -> str:
    """Retrieved texts with entry-id headers, in retrieval order."""
    if not context.items:
        return "(no context retrieved)"
    blocks = []
    for item in context.items:
        blocks.append(f"### {item.entry_id} ({item.level.name})\n{item.text}")
    return "\n\n".join(blocks)


def _validate_citations(outcome: PlannerOutcome, context: RetrievedContext) -> PlannerOutcome:
    """Enforce that justifications and refusals cite retrieved entries."""
    known = set(context.entry_ids)
    if isinstance(outcome, Refused):
        cited = [c for c in outcome.cited_entry_ids if c in known]
        if not cited:
            raise ParseError("refusal cites no retrieved entry id")
        return Refused(reason=outcome.reason, cited_entry_ids=cited)
    for i, task in enumerate(outcome.plan.tasks, start=1):
        text = task.justification
        if "general" in text.lower():
            continue
        if not any(entry_id in text for entry_id in known):
            raise ParseError(f'task {i} justification cites no retrieved entry id (or "general")')
    return outcome


def _complete_with_repair(
    llm: LlmGateway, prompt: str, tag: str, context: RetrievedContext
) -> PlannerOutcome:
    """One completion plus at most one repair turn on a parse failure."""
    turns: list[tuple[str, str]] = [("user", prompt)]
    completion = llm.complete(ChatRequest(system=_SYSTEM, turns=turns, max_words=PLAN_MAX_WORDS, tag=tag))
    try:
        return _validate_citations(parse_plan_output(completion), context)
    except ParseError as first_error:
        turns = turns + [
            ("assistant", completion),
            (
                "user",
                f"Your previous reply could not be used: {first_error}. "
                "Answer again following the [OUTPUT FORMAT] exactly.",
            ),
        ]
        repaired = llm.complete(
            ChatRequest(system=_SYSTEM, turns=turns, max_words=PLAN_MAX_WORDS, tag=tag)
        )
        try:
            return _validate_citations(parse_plan_output(repaired), context)
        except ParseError as second_error:
            raise PlanParseFailed(
                f"plan output unusable after repair: {second_error} (first error: {first_error})"
            ) from second_error


def plan_from_query(
    query: str,
    state_summary: str,
    context: RetrievedContext,
    llm: LlmGateway,
) -> PlannerOutcome:
    """Generate a compliant plan (or refusal) for a fresh user query."""
    if not query.strip():
        raise ValueError("query must be nonempty")
    prompt = render_template(
        "plan",
        {
            "task_types": TASK_TYPES_TEXT,
            "context": format_context(context),
            "state": state_summary,
            "query": query,
        },
    )
    return _complete_with_repair(llm, prompt, "plan", context)


def replan_from_feedback(
    cache: PlanCache,
    feedback,
    state_summary: str,
    context: RetrievedContext,
    llm: LlmGateway,
) -> tuple[PlannerOutcome | None, PlanCache]:
    """Replan after execution feedback; returns None when nothing remains.

    The replan prompt is the plan prompt plus the previous task's status
    and the cached remaining tasks. A bare KEEP completion re-emits the
    cached plan unchanged.
    """
    if not cache.executed:
        raise ValueError("replanning requires at least one executed task")
    if not cache.remaining:
        return None, cache

    previous = f"{feedback.task.as_line()} -> {feedback.status.name.capitalize()}: {feedback.observation}"
    cached = "\n".join(f"{i}. {t.as_line()}" for i, t in enumerate(cache.remaining, start=1))
    prompt = render_template(
        "replan",
        {
            "task_types": TASK_TYPES_TEXT,
            "context": format_context(context),
            "state": state_summary,
            "query": cache.query,
            "previous_task": previous,
            "cached_plan": cached,
        },
    )
    completion = llm.complete(
        ChatRequest(system=_SYSTEM, turns=[("user", prompt)], max_words=PLAN_MAX_WORDS, tag="replan")
    )
    if completion.strip() == "KEEP":
        outcome: PlannerOutcome = Accepted(Plan(list(cache.remaining)))
    else:
        try:
            outcome = _validate_citations(parse_plan_output(completion), context)
        except ParseError as first_error:
            turns = [
                ("user", prompt),
                ("assistant", completion),
                (
                    "user",
                    f"Your previous reply could not be used: {first_error}. "
                    "Answer again following the [OUTPUT FORMAT] exactly, or reply KEEP.",
                ),
            ]
            repaired = llm.complete(
                ChatRequest(system=_SYSTEM, turns=turns, max_words=PLAN_MAX_WORDS, tag="replan")
            )
            if repaired.strip() == "KEEP":
                outcome = Accepted(Plan(list(cache.remaining)))
            else:
                try:
                    outcome = _validate_citations(parse_plan_output(repaired), context)
                except ParseError as second_error:
                    raise PlanParseFailed(
                        f"replan output unusable after repair: {second_error} "
                        f"(first error: {first_error})"
                    ) from second_error
    if isinstance(outcome, Accepted):
        cache.remaining = list(outcome.plan.tasks)
    cache.iterations += 1
    return outcome, cache


def compose_final_answer(cache: PlanCache) -> str:
    """The executed Respond message plus a per-task status tally."""
    if cache.remaining:
        raise NotTerminal("tasks remain to be executed")
    respond = next(
        (t for t, _ in reversed(cache.executed) if t.kind is TaskKind.RESPOND),
        None,
    )
    if respond is None:
        raise NotTerminal("no Respond task has executed")
    total = len(cache.executed)
    succeeded = sum(1 for _, status in cache.executed if status == "succeeded")
    failed = total - succeeded
    tally = f"{succeeded}/{total} tasks succeeded"
    if failed:
        tally += f"; {failed} failed"
    return f"{respond.message}\n{tally}"
