"""Exception types shared across the package."""

from __future__ import annotations


class SayComplyError(Exception):
    """Base class for all package errors."""


# --- context store ---------------------------------------------------------


class CorpusFormatError(SayComplyError):
    """Malformed manifest, front-matter, or on-disk corpus layout."""


class DuplicateId(SayComplyError):
    def __init__(self, entry_id: str):
        super().__init__(f"duplicate entry id: {entry_id!r}")
        self.entry_id = entry_id


class DanglingRef(SayComplyError):
    def __init__(self, ref: str, entry_id: str = ""):
        src = f" (referenced by {entry_id!r})" if entry_id else ""
        super().__init__(f"ref to missing entry: {ref!r}{src}")
        self.ref = ref
        self.entry_id = entry_id


class OrphanLevel3(SayComplyError):
    def __init__(self, entry_id: str):
        super().__init__(f"level-3 entry {entry_id!r} is referenced by no level-2 entry")
        self.entry_id = entry_id


class EmptyBody(SayComplyError):
    def __init__(self, entry_id: str):
        super().__init__(f"entry {entry_id!r} has an empty body")
        self.entry_id = entry_id


class UnknownEntry(SayComplyError):
    def __init__(self, entry_id: str):
        super().__init__(f"no entry with id {entry_id!r}")
        self.entry_id = entry_id


class WrongLevel(SayComplyError):
    def __init__(self, entry_id: str, expected: str, actual: str):
        super().__init__(f"entry {entry_id!r} is {actual}, expected {expected}")
        self.entry_id = entry_id


# --- embedding -------------------------------------------------------------


class EmptyText(SayComplyError):
    """Text has no alphanumeric token after normalization."""


class ProviderError(SayComplyError):
    """Remote provider failed after exhausting retries."""


class DimensionMismatch(SayComplyError):
    def __init__(self, a: int, b: int):
        super().__init__(f"vector dimensions differ: {a} vs {b}")


class ZeroVector(SayComplyError):
    """Cosine similarity is undefined for an all-zero vector."""


# --- llm gateway -----------------------------------------------------------


class NoRuleMatched(SayComplyError):
    """No scripted rule matched the prompt; signals a missing fixture."""


class UnknownTemplate(SayComplyError):
    def __init__(self, name: str):
        super().__init__(f"no prompt template named {name!r}")
        self.name = name


class MissingSlot(SayComplyError):
    def __init__(self, name: str):
        super().__init__(f"template slot {name!r} was not provided")
        self.name = name


class UnusedSlot(SayComplyError):
    def __init__(self, name: str):
        super().__init__(f"slot {name!r} does not appear in the template")
        self.name = name


# --- retrieval -------------------------------------------------------------


class NoLevel2Context(SayComplyError):
    """Tree retrieval needs at least one level-2 entry."""


class BudgetTooSmall(SayComplyError):
    """The untruncatable level-2 selection alone exceeds the word budget."""


class EmptyStore(SayComplyError):
    """Flat retrieval over a store with no entries."""


# --- planner ---------------------------------------------------------------


class ParseError(SayComplyError):
    def __init__(self, reason: str, line_no: int | None = None):
        loc = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{loc}{reason}")
        self.reason = reason
        self.line_no = line_no


class PlanParseFailed(SayComplyError):
    """Plan output unusable after the single repair attempt."""


class NotTerminal(SayComplyError):
    """Final answer requested before the episode finished."""


# --- world simulator -------------------------------------------------------


class UnknownTarget(SayComplyError):
    def __init__(self, target: str):
        super().__init__(f"target {target!r} names no room or object in the world")
        self.target = target


class NoObservationLog(SayComplyError):
    """Observation write-back requires a configured level-1 log entry."""


class EmptyUtterance(SayComplyError):
    """Site orientation text must be nonempty."""


# --- eval harness ----------------------------------------------------------


class NonTerminalEpisode(SayComplyError):
    """Judging requires a terminal episode."""


class SuiteFormatError(SayComplyError):
    """Malformed eval suite file."""
