"""Uniform chat-completion interface with scripted and remote backends.

The scripted backend is the test backbone: a JSON rules file maps prompt
substrings to fixed completions, in precedence order, so every pipeline
run is reproducible offline. The remote backend talks to an OpenAI-style
chat endpoint configured by environment variables. All prompt templates
are rendered here from text files under ``prompts/``.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import MissingSlot, NoRuleMatched, ProviderError, UnknownTemplate, UnusedSlot

LLM_URL_ENV = "SAYCOMPLY_LLM_URL"
LLM_MODEL_ENV = "SAYCOMPLY_LLM_MODEL"
LLM_API_KEY_ENV = "SAYCOMPLY_LLM_API_KEY"

_SLOT_RE = re.compile(r"\{\{([a-z][a-z0-9_-]*)\}\}")


@dataclass
class ChatRequest:
    """One chat-completion request, tagged with the pipeline stage."""

    system: str
    turns: list[tuple[str, str]]
    max_words: int
    tag: str

    def __post_init__(self):
        if not self.turns:
            raise ValueError("turns must be nonempty")
        for role, _ in self.turns:
            if role not in ("user", "assistant"):
                raise ValueError(f"unknown turn role {role!r}")
        if self.turns[-1][0] != "user":
            raise ValueError("last turn must be a user turn")
        if self.max_words <= 0:
            raise ValueError("max_words must be positive")

    def full_text(self) -> str:
        return "\n".join([self.system] + [content for _, content in self.turns])


@dataclass
class ScriptedRule:
    """Substring matchers (all must occur) mapped to a fixed completion."""

    matchers: list[str]
    completion: str
    max_uses: int | None = None

    def __post_init__(self):
        if not self.matchers:
            raise ValueError("matchers must be nonempty")


def load_rules(path: str | Path) -> list[ScriptedRule]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise ValueError("rules file must be a JSON list")
    return [
        ScriptedRule(
            matchers=list(item["matchers"]),
            completion=item["completion"],
            max_uses=item.get("max_uses"),
        )
        for item in payload
    ]


class ScriptedBackend:
    """Deterministic backend: first rule whose matchers all occur wins.

    A prompt that matches no rule raises NoRuleMatched — a missing fixture
    must never silently produce an empty plan.
    """

    def __init__(self, rules: list[ScriptedRule]):
        self.rules = rules
        self._uses = [0] * len(rules)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        return cls(load_rules(path))

    def complete(self, request: ChatRequest) -> str:
        text = request.full_text()
        with self._lock:
            for i, rule in enumerate(self.rules):
                if rule.max_uses is not None and self._uses[i] >= rule.max_uses:
                    continue
                if all(m in text for m in rule.matchers):
                    self._uses[i] += 1
                    return rule.completion
        excerpt = text[:160].replace("\n", " ")
        raise NoRuleMatched(f"no scripted rule matched request tagged {request.tag!r}: {excerpt!r}...")


class RemoteBackend:
    """OpenAI-style chat-completions backend, temperature 0."""

    def __init__(
        self,
        url: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        retries: int = 3,
        transport=None,
    ):
        import httpx

        self.url = url or os.environ.get(LLM_URL_ENV, "")
        self.model = model or os.environ.get(LLM_MODEL_ENV, "")
        self.api_key = api_key or os.environ.get(LLM_API_KEY_ENV, "")
        self.retries = retries
        if not self.url:
            raise ProviderError(f"{LLM_URL_ENV} is not configured")
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._client = httpx.Client(headers=headers, transport=transport, timeout=120.0)

    def complete(self, request: ChatRequest) -> str:
        messages = [{"role": "system", "content": request.system}] if request.system else []
        messages += [{"role": role, "content": content} for role, content in request.turns]
        payload = {"model": self.model, "messages": messages, "temperature": 0}
        last_error: Exception | None = None
        for _ in range(self.retries):
            try:
                resp = self._client.post(self.url, json=payload)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:
                last_error = exc
        raise ProviderError(f"chat provider failed after {self.retries} attempts: {last_error}")


@dataclass
class AuditRecord:
    index: int
    tag: str
    system: str
    turns: list[tuple[str, str]]
    max_words: int
    completion: str
    truncated: bool


class AuditLog:
    """Append-only log of every request/response pair, serialized writes."""

    def __init__(self):
        self._records: list[AuditRecord] = []
        self._lock = threading.Lock()

    def record(self, request: ChatRequest, completion: str, truncated: bool) -> AuditRecord:
        with self._lock:
            rec = AuditRecord(
                index=len(self._records) + 1,
                tag=request.tag,
                system=request.system,
                turns=list(request.turns),
                max_words=request.max_words,
                completion=completion,
                truncated=truncated,
            )
            self._records.append(rec)
            return rec

    def entries(self) -> list[AuditRecord]:
        with self._lock:
            return list(self._records)

    def count(self, tag: str | None = None) -> int:
        return len([r for r in self.entries() if tag is None or r.tag == tag])


class LlmGateway:
    """Backend wrapper that enforces word budgets and audits every call."""

    def __init__(self, backend, audit: AuditLog | None = None):
        self.backend = backend
        self.audit = audit if audit is not None else AuditLog()

    def complete(self, request: ChatRequest) -> str:
        completion = self.backend.complete(request)
        words = completion.split()
        truncated = len(words) > request.max_words
        if truncated:
            # Over-budget completions are truncated with a recorded warning,
            # never failed.
            completion = " ".join(words[: request.max_words])
        self.audit.record(request, completion, truncated)
        return completion


def scripted_gateway(rules_path: str | Path, audit: AuditLog | None = None) -> LlmGateway:
    return LlmGateway(ScriptedBackend.from_file(rules_path), audit)


def gateway_from_env(audit: AuditLog | None = None) -> LlmGateway:
    return LlmGateway(RemoteBackend(), audit)


# --- prompt templates --------------------------------------------------------


def _read_prompt(name: str) -> str:
    return resources.files("saycomply").joinpath("prompts", name).read_text(encoding="utf-8")


def _template_text(name: str) -> str:
    # "replan" shares the plan template verbatim and appends its extra
    # sections, so the two planning cases can never drift apart.
    if name == "plan":
        return _read_prompt("plan.txt")
    if name == "replan":
        return _read_prompt("plan.txt").rstrip("\n") + "\n" + _read_prompt("replan_suffix.txt")
    if name == "l1-select":
        return _read_prompt("l1_select.txt")
    if name == "summarize":
        return _read_prompt("summarize.txt")
    raise UnknownTemplate(name)


def render_template(name: str, slots: dict[str, str]) -> str:
    """Substitute ``{{slot}}`` placeholders; any slot mismatch is an error."""
    template = _template_text(name)
    required = set(_SLOT_RE.findall(template))
    missing = required - set(slots)
    if missing:
        raise MissingSlot(sorted(missing)[0])
    unused = set(slots) - required
    if unused:
        raise UnusedSlot(sorted(unused)[0])
    return _SLOT_RE.sub(lambda m: slots[m.group(1)], template)
