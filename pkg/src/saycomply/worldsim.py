"""Deterministic world simulator standing in for the robot behavior manager.

Tasks execute atomically against a declarative world model of rooms,
adjacency, and attributed objects. Successful inspections are written back
into a designated level-1 observation log, and site-orientation utterances
become new level-2 entries associated with the room they were given in.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .errors import EmptyUtterance, NoObservationLog, UnknownTarget
from .planner import Task, TaskKind
from .store import Category, ContextEntry, ContextStore, Level

# Inspect mode -> object attribute consulted for the observation.
INSPECT_MODE_ATTR = {"read": "reading", "measure": "measurement", "scan": "scan", "photo": "photo"}


class FeedbackStatus(Enum):
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass
class ExecutionFeedback:
    task: Task
    status: FeedbackStatus
    observation: str

    def __post_init__(self):
        if self.status is FeedbackStatus.FAILED and not self.observation.strip():
            raise ValueError("failed feedback requires an observation")

    def to_dict(self) -> dict:
        return {"task": self.task.to_dict(), "status": self.status.value, "observation": self.observation}


@dataclass
class WorldObject:
    room: str
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass
class WorldModel:
    """Rooms with symmetric adjacency, attributed objects, and the robot's room."""

    rooms: dict[str, set[str]]
    objects: dict[str, WorldObject]
    robot_room: str

    def __post_init__(self):
        # Symmetrize adjacency so one-directional author listings stay valid.
        for room, adjacent in list(self.rooms.items()):
            for other in adjacent:
                if other not in self.rooms:
                    raise ValueError(f"room {room!r} adjacent to unknown room {other!r}")
                self.rooms[other].add(room)
        if self.robot_room not in self.rooms:
            raise ValueError(f"robot_room {self.robot_room!r} is not a room")
        for obj_id, obj in self.objects.items():
            if obj.room not in self.rooms:
                raise ValueError(f"object {obj_id!r} placed in unknown room {obj.room!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "WorldModel":
        return cls(
            rooms={room: set(spec.get("adjacent", [])) for room, spec in data["rooms"].items()},
            objects={
                obj_id: WorldObject(room=spec["room"], attributes=dict(spec.get("attributes", {})))
                for obj_id, spec in data.get("objects", {}).items()
            },
            robot_room=data["robot_room"],
        )

    def to_dict(self) -> dict:
        return {
            "rooms": {room: {"adjacent": sorted(adj)} for room, adj in self.rooms.items()},
            "objects": {
                obj_id: {"room": obj.room, "attributes": dict(obj.attributes)}
                for obj_id, obj in self.objects.items()
            },
            "robot_room": self.robot_room,
        }


def load_world(path: str | Path) -> WorldModel:
    return WorldModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def reachable(world: WorldModel, src: str, dst: str) -> bool:
    """Breadth-first reachability over room adjacency."""
    if src == dst:
        return True
    seen = {src}
    queue = deque([src])
    while queue:
        room = queue.popleft()
        for nxt in world.rooms[room]:
            if nxt == dst:
                return True
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return False


def execute_task(world: WorldModel, task: Task) -> tuple[WorldModel, ExecutionFeedback]:
    """Execute one task atomically; returns the world and its feedback.

    A target naming neither a room nor an object raises UnknownTarget
    (malformed id); legitimately absent or unreachable targets yield
    Failed feedback instead.
    """
    task.validate()
    if task.kind is TaskKind.GOTO:
        room = task.target
        if room not in world.rooms:
            obj = world.objects.get(task.target)
            if obj is None:
                raise UnknownTarget(task.target)
            room = obj.room
        if not reachable(world, world.robot_room, room):
            return world, ExecutionFeedback(task, FeedbackStatus.FAILED, f"no path to {room}")
        world.robot_room = room
        return world, ExecutionFeedback(task, FeedbackStatus.SUCCEEDED, f"arrived at {room}")

    if task.kind is TaskKind.SEARCH:
        obj = world.objects.get(task.target)
        if obj is None:
            return world, ExecutionFeedback(task, FeedbackStatus.FAILED, f"{task.target} not found")
        return world, ExecutionFeedback(task, FeedbackStatus.SUCCEEDED, f"found in {obj.room}")

    if task.kind is TaskKind.INSPECT:
        obj = world.objects.get(task.target)
        if obj is None:
            raise UnknownTarget(task.target)
        if obj.room != world.robot_room:
            return world, ExecutionFeedback(
                task, FeedbackStatus.FAILED, f"not co-located: {task.target} is in {obj.room}"
            )
        attr = INSPECT_MODE_ATTR[task.mode]
        value = obj.attributes.get(attr)
        if value is None:
            return world, ExecutionFeedback(
                task, FeedbackStatus.FAILED, f"{task.target} has no {attr} for mode {task.mode}"
            )
        return world, ExecutionFeedback(task, FeedbackStatus.SUCCEEDED, value)

    # Respond: terminal, never mutates the world.
    return world, ExecutionFeedback(task, FeedbackStatus.SUCCEEDED, task.message or "")


def writeback_observation(
    store: ContextStore,
    feedback: ExecutionFeedback,
    log_id: str | None,
    embedder,
    now: datetime | None = None,
) -> ContextStore:
    """Append a successful inspection to the designated level-1 log.

    Non-inspect or failed feedback is a no-op; the store version does not
    change.
    """
    if feedback.task.kind is not TaskKind.INSPECT or feedback.status is not FeedbackStatus.SUCCEEDED:
        return store
    if not log_id:
        raise NoObservationLog("no level-1 observation log configured")
    stamp = (now or datetime.now(timezone.utc)).isoformat()
    store.append_observation(log_id, f"{stamp} | {feedback.task.target} | {feedback.observation}", embedder)
    return store


def ingest_site_orientation(store: ContextStore, room_id: str, utterance: str, embedder) -> str:
    """Store a site-orientation utterance as a new level-2 operation entry.

    Returns the new entry id, ``orientation-<room>-<seq>``.
    """
    if not room_id.strip():
        raise ValueError("room_id must be nonempty")
    if not utterance.strip():
        raise EmptyUtterance("orientation utterance is empty")
    pattern = re.compile(rf"^orientation-{re.escape(room_id)}-(\d+)$")
    existing = [int(m.group(1)) for e in store.entries_at() if (m := pattern.match(e.id))]
    seq = max(existing, default=0) + 1
    entry_id = f"orientation-{room_id}-{seq}"
    summary = re.split(r"(?<=[.!?])\s", utterance.strip())[0].strip()
    entry = ContextEntry.build(
        entry_id,
        Category.OPERATION,
        Level.L2,
        f"Site orientation: {room_id}",
        summary,
        utterance.strip(),
        refs=(),
        embedder=embedder,
    )
    store.add_entry(entry)
    return entry_id
