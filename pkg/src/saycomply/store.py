"""Hierarchical context database: build, validate, persist, and serve entries.

Entries live on three levels (L1 observation databases, L2 site-specific
instructions, L3 full manuals) across three categories (environment,
operation, embodiment). Level-2 entries may reference level-3 manuals;
every level-3 entry must be referenced by at least one level-2 entry.

On-disk corpus layout::

    <root>/manifest.json          {"version": 1, "entries": ["<id>", ...]}
    <root>/entries/<id>.md        front-matter block between --- lines,
                                  then the body text (UTF-8)

Embeddings are recomputed at load time with the configured embedder, so a
deterministic embedder makes load(save(store)) an identity.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    CorpusFormatError,
    DanglingRef,
    DuplicateId,
    EmptyBody,
    OrphanLevel3,
    UnknownEntry,
    WrongLevel,
)

_ID_RE = re.compile(r"^[a-z0-9]+(-[a-z0-9]+)*$")
_NORM_TOL = 1e-9


class Level(Enum):
    L1 = 1
    L2 = 2
    L3 = 3


class Category(Enum):
    ENVIRONMENT = "environment"
    OPERATION = "operation"
    EMBODIMENT = "embodiment"


@dataclass
class ContextEntry:
    """One document, instruction, or observation database in the store."""

    id: str
    category: Category
    level: Level
    title: str
    summary: str
    body: str
    refs: tuple[str, ...]
    embedding: np.ndarray
    word_count: int

    @classmethod
    def build(
        cls,
        entry_id: str,
        category: Category,
        level: Level,
        title: str,
        summary: str,
        body: str,
        refs: Iterable[str],
        embedder,
    ) -> "ContextEntry":
        """Construct an entry, computing embedding and word count."""
        entry = cls(
            id=entry_id,
            category=category,
            level=level,
            title=title,
            summary=summary,
            body=body,
            refs=tuple(refs),
            embedding=embedder.embed(_embed_text_of(title, summary, body)),
            word_count=len(body.split()),
        )
        entry.validate()
        return entry

    def validate(self) -> None:
        if not _ID_RE.match(self.id):
            raise CorpusFormatError(f"entry id {self.id!r} is not lowercase kebab-case")
        if not self.title.strip():
            raise CorpusFormatError(f"entry {self.id!r} has an empty title")
        if not self.summary.strip():
            raise CorpusFormatError(f"entry {self.id!r} has an empty summary")
        if not self.body.strip():
            raise EmptyBody(self.id)
        if self.refs and self.level is not Level.L2:
            raise CorpusFormatError(f"entry {self.id!r} has refs but is {self.level.name}, not L2")
        if self.word_count != len(self.body.split()):
            raise CorpusFormatError(f"entry {self.id!r} word_count does not match its body")
        norm = float(np.linalg.norm(self.embedding))
        if abs(norm - 1.0) > _NORM_TOL:
            raise CorpusFormatError(f"entry {self.id!r} embedding norm {norm} is not 1")

    def same_content(self, other: "ContextEntry") -> bool:
        return (
            self.id == other.id
            and self.category is other.category
            and self.level is other.level
            and self.title == other.title
            and self.summary == other.summary
            and self.body == other.body
            and self.refs == other.refs
            and self.word_count == other.word_count
            and np.array_equal(self.embedding, other.embedding)
        )


def _embed_text_of(title: str, summary: str, body: str) -> str:
    return f"{title}\n{summary}\n{body}"


class ContextStore:
    """Id-keyed collection of context entries with a mutation version.

    Mutations go through a single serialized writer (an internal lock);
    read helpers copy under the same lock, so any number of readers can
    run concurrently with one writer.
    """

    def __init__(self, entries: Iterable[ContextEntry] = (), version: int = 1):
        self._entries: dict[str, ContextEntry] = {}
        self._lock = threading.RLock()
        self.version = version
        for entry in entries:
            if entry.id in self._entries:
                raise DuplicateId(entry.id)
            self._entries[entry.id] = entry
        self.validate()

    # --- read path ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._entries

    def __iter__(self) -> Iterator[ContextEntry]:
        return iter(self.entries_at())

    def get(self, entry_id: str) -> ContextEntry:
        try:
            return self._entries[entry_id]
        except KeyError:
            raise UnknownEntry(entry_id) from None

    def entries_at(self, level: Level | None = None, category: Category | None = None) -> list[ContextEntry]:
        """Entries filtered conjunctively, in ascending id order."""
        with self._lock:
            entries = list(self._entries.values())
        return sorted(
            (
                e
                for e in entries
                if (level is None or e.level is level) and (category is None or e.category is category)
            ),
            key=lambda e: e.id,
        )

    def validate(self) -> None:
        """Check referential integrity over the whole store."""
        referenced: set[str] = set()
        for entry in self._entries.values():
            entry.validate()
            for ref in entry.refs:
                target = self._entries.get(ref)
                if target is None:
                    raise DanglingRef(ref, entry.id)
                if target.level is not Level.L3:
                    raise CorpusFormatError(
                        f"entry {entry.id!r} ref {ref!r} resolves to {target.level.name}, not L3"
                    )
                referenced.add(ref)
        for entry in self._entries.values():
            if entry.level is Level.L3 and entry.id not in referenced:
                raise OrphanLevel3(entry.id)

    def same_content(self, other: "ContextStore") -> bool:
        if set(self._entries) != set(other._entries):
            return False
        return all(self._entries[k].same_content(other._entries[k]) for k in self._entries)

    def copy(self) -> "ContextStore":
        """Independent store sharing entry records (mutations replace entries)."""
        clone = ContextStore.__new__(ContextStore)
        with self._lock:
            clone._entries = dict(self._entries)
            clone.version = self.version
        clone._lock = threading.RLock()
        return clone

    def __deepcopy__(self, memo) -> "ContextStore":
        return self.copy()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ContextStore):
            return NotImplemented
        return self.version == other.version and self.same_content(other)

    # --- write path --------------------------------------------------------

    def add_entry(self, entry: ContextEntry) -> None:
        with self._lock:
            if entry.id in self._entries:
                raise DuplicateId(entry.id)
            self._entries[entry.id] = entry
            try:
                self.validate()
            except Exception:
                del self._entries[entry.id]
                raise
            self.version += 1

    def append_observation(self, l1_id: str, row: str, embedder) -> None:
        """Append one text row to a level-1 entry's body.

        Word count and embedding are recomputed; no other entry changes.
        """
        with self._lock:
            entry = self.get(l1_id)
            if entry.level is not Level.L1:
                raise WrongLevel(l1_id, "L1", entry.level.name)
            body = entry.body + "\n" + row
            self._entries[l1_id] = replace(
                entry,
                body=body,
                word_count=len(body.split()),
                embedding=embedder.embed(_embed_text_of(entry.title, entry.summary, body)),
            )
            self.version += 1


# --- persistence ------------------------------------------------------------

_FRONT_KEYS = ("id", "level", "category", "title", "summary", "refs")


def _parse_entry_file(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or lines[0].strip() != "---":
        raise CorpusFormatError(f"{path.name}: missing front-matter opening '---'")
    fields: dict[str, str] = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line.strip() == "---":
            body_start = i + 1
            break
        if not line.strip():
            continue
        if ":" not in line:
            raise CorpusFormatError(f"{path.name}: bad front-matter line {line!r}")
        key, _, value = line.partition(":")
        key = key.strip()
        if key not in _FRONT_KEYS:
            raise CorpusFormatError(f"{path.name}: unknown front-matter key {key!r}")
        if key in fields:
            raise CorpusFormatError(f"{path.name}: repeated front-matter key {key!r}")
        fields[key] = value.strip()
    if body_start is None:
        raise CorpusFormatError(f"{path.name}: missing front-matter closing '---'")
    fields["body"] = "\n".join(lines[body_start:]).strip("\n")
    return fields


def _entry_from_fields(fields: dict, path_name: str, embedder, llm=None, on_summary=None) -> ContextEntry:
    for required in ("id", "level", "category", "title"):
        if not fields.get(required):
            raise CorpusFormatError(f"{path_name}: missing front-matter field {required!r}")
    try:
        level = Level(int(fields["level"]))
    except (ValueError, KeyError):
        raise CorpusFormatError(f"{path_name}: level must be 1, 2, or 3") from None
    try:
        category = Category(fields["category"].lower())
    except ValueError:
        raise CorpusFormatError(f"{path_name}: unknown category {fields['category']!r}") from None
    refs = tuple(r.strip() for r in fields.get("refs", "").split(",") if r.strip())
    body = fields.get("body", "")
    if not body.strip():
        raise EmptyBody(fields["id"])
    summary = fields.get("summary", "")
    if not summary:
        if level is Level.L1 and llm is not None:
            summary = _generate_summary(llm, fields["title"], body)
            if on_summary is not None:
                on_summary(fields["id"], summary)
        else:
            raise CorpusFormatError(f"{path_name}: entry {fields['id']!r} has no summary")
    return ContextEntry.build(fields["id"], category, level, fields["title"], summary, body, refs, embedder)


def _generate_summary(llm, title: str, body: str) -> str:
    from .llm import ChatRequest, render_template

    prompt = render_template("summarize", {"title": title, "body": body})
    completion = llm.complete(ChatRequest(system="", turns=[("user", prompt)], max_words=60, tag="summarize"))
    # Keep the first sentence only; the template asks for exactly one.
    sentence = re.split(r"(?<=[.!?])\s", completion.strip())[0].strip()
    if not sentence:
        raise CorpusFormatError(f"summary generation returned empty text for {title!r}")
    return sentence


def ingest_corpus(root_path: str | Path, embedder, llm=None) -> ContextStore:
    """Load and validate a corpus directory into a ContextStore.

    Level-1 entries without an authored summary get a one-sentence summary
    from ``llm``; the generated summary is persisted back into the entry
    file. Without an llm, a missing summary is an error.
    """
    root = Path(root_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise CorpusFormatError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"manifest.json is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("entries"), list):
        raise CorpusFormatError("manifest.json must be an object with an 'entries' list")

    ids: list[str] = manifest["entries"]
    seen: set[str] = set()
    entries: list[ContextEntry] = []
    for entry_id in ids:
        if entry_id in seen:
            raise DuplicateId(entry_id)
        seen.add(entry_id)
        path = root / "entries" / f"{entry_id}.md"
        if not path.is_file():
            raise CorpusFormatError(f"manifest names {entry_id!r} but {path} does not exist")
        fields = _parse_entry_file(path)
        if fields.get("id") != entry_id:
            raise CorpusFormatError(f"{path.name}: front-matter id {fields.get('id')!r} != filename id")

        def persist_summary(eid: str, summary: str, _fields=fields, _path=path):
            _fields["summary"] = summary
            _write_entry_file(_path, _fields)

        entries.append(_entry_from_fields(fields, path.name, embedder, llm, on_summary=persist_summary))

    store_version = manifest.get("store_version", 1)
    return ContextStore(entries, version=store_version)


def _write_entry_file(path: Path, fields: dict) -> None:
    lines = ["---"]
    lines.append(f"id: {fields['id']}")
    lines.append(f"level: {fields['level']}")
    lines.append(f"category: {fields['category']}")
    lines.append(f"title: {fields['title']}")
    lines.append(f"summary: {fields['summary']}")
    if fields.get("refs"):
        lines.append(f"refs: {fields['refs']}")
    lines.append("---")
    lines.append(fields["body"])
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_store(store: ContextStore, root_path: str | Path) -> None:
    """Write a store back out in the corpus directory format."""
    root = Path(root_path)
    entries_dir = root / "entries"
    entries_dir.mkdir(parents=True, exist_ok=True)
    ordered = store.entries_at()
    manifest = {
        "version": 1,
        "entries": [e.id for e in ordered],
        "store_version": store.version,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    wanted = {f"{e.id}.md" for e in ordered}
    for stale in entries_dir.glob("*.md"):
        if stale.name not in wanted:
            stale.unlink()
    for entry in ordered:
        _write_entry_file(
            entries_dir / f"{entry.id}.md",
            {
                "id": entry.id,
                "level": entry.level.value,
                "category": entry.category.value,
                "title": entry.title,
                "summary": entry.summary,
                "refs": ", ".join(entry.refs),
                "body": entry.body,
            },
        )


def load_store(root_path: str | Path, embedder) -> ContextStore:
    """Load a previously saved (or hand-authored) corpus directory."""
    return ingest_corpus(root_path, embedder, llm=None)
