"""Demonstration data model and on-disk format.

A demonstration is an ordered list of frames, each holding the observation,
the action applied at that frame, and an opaque snapshot of the simulator
state taken before the action.  Snapshots make replay-based augmentation
possible: any frame can be restored bit-exactly and re-stepped.

File layout (field names are normative for interop):

    {"format_version": 1, "id": ..., "task": {...}, "provenance": {...},
     "action_scale": {...}, "sha256": ...,
     "frames": [{"t": ..., "obs": {"image": {"w", "h", "rgb8_b64"},
                                   "proprio": [...]},
                 "action": {"ee_delta": [6], "fingers": [F]},
                 "sim_state_b64": ...}]}
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .se3 import Twist

FORMAT_VERSION = 1


class DemoError(Exception):
    pass


class FormatVersionMismatch(DemoError):
    """File declares a format_version this code does not read."""


class CorruptFile(DemoError):
    """File is truncated, unparseable, or fails its checksum."""


class StateVersionMismatch(DemoError):
    """A sim_state snapshot uses an unsupported encoding version."""


@dataclass(frozen=True)
class ActionScale:
    """Physical value of a unit action component, per control step."""

    pos_m: float = 0.01
    rot_rad: float = 0.05

    def to_json(self) -> dict:
        return {"pos_m": self.pos_m, "rot_rad": self.rot_rad}

    @staticmethod
    def from_json(d: dict) -> "ActionScale":
        return ActionScale(float(d["pos_m"]), float(d["rot_rad"]))


@dataclass(frozen=True)
class Action:
    """One control step: normalized hand-pose delta plus finger targets.

    ee_delta components live in [-1, 1]; ActionScale turns them into meters
    and radians.  Finger values are joint position targets in radians and are
    applied directly.
    """

    ee_delta: Twist
    fingers: tuple[float, ...]

    def __post_init__(self):
        for c in self.ee_delta.as_tuple():
            if not -1.0 - 1e-12 <= c <= 1.0 + 1e-12:
                raise ValueError(f"normalized ee_delta component {c} outside [-1, 1]")
        object.__setattr__(self, "fingers", tuple(float(f) for f in self.fingers))

    @staticmethod
    def zero(fingers: tuple[float, ...]) -> "Action":
        return Action(Twist.zero(), fingers)

    def to_json(self) -> dict:
        return {"ee_delta": list(self.ee_delta.as_tuple()), "fingers": list(self.fingers)}

    @staticmethod
    def from_json(d: dict) -> "Action":
        return Action(Twist.from_sequence(d["ee_delta"]), tuple(float(f) for f in d["fingers"]))


@dataclass(frozen=True)
class Observation:
    """What a policy sees: an RGB8 image plus the proprioception vector."""

    image: np.ndarray  # (h, w, 3) uint8
    proprio: tuple[float, ...]  # hand pose (7) + finger values (F)

    def __post_init__(self):
        img = np.ascontiguousarray(self.image, dtype=np.uint8)
        img.setflags(write=False)
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "proprio", tuple(float(p) for p in self.proprio))


@dataclass(frozen=True)
class FrameRecord:
    time: float  # seconds since demo start, nominal spacing 1/30 s
    observation: Observation
    action: Action
    sim_state: bytes  # opaque versioned snapshot, decoded by the simulator


@dataclass(frozen=True)
class TaskRef:
    """Lightweight reference to a task; the simulator resolves it to a spec."""

    kind: str
    level: int

    def to_json(self) -> dict:
        return {"kind": self.kind, "level": self.level}

    @staticmethod
    def from_json(d: dict) -> "TaskRef":
        return TaskRef(str(d["kind"]), int(d["level"]))


@dataclass(frozen=True)
class Provenance:
    kind: str  # teleop | scripted | augmented
    operator: str | None = None
    parent_id: str | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("teleop", "scripted", "augmented"):
            raise ValueError(f"unknown provenance kind {self.kind!r}")
        if self.kind == "augmented" and (self.operator is None or self.parent_id is None):
            raise ValueError("augmented provenance needs operator and parent_id")

    def to_json(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.operator is not None:
            d["operator"] = self.operator
        if self.parent_id is not None:
            d["parent_id"] = self.parent_id
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    @staticmethod
    def from_json(d: dict) -> "Provenance":
        return Provenance(
            str(d["kind"]),
            d.get("operator"),
            d.get("parent_id"),
            int(d["seed"]) if d.get("seed") is not None else None,
        )


@dataclass(frozen=True)
class Demonstration:
    """A successful, replayable trajectory.

    Producers guarantee the storage invariant: replaying all actions from
    frame 0's snapshot reaches task success.  Operators in `augment` verify
    this by rollout before returning anything.
    """

    id: str
    task: TaskRef
    frames: tuple[FrameRecord, ...]
    provenance: Provenance
    action_scale: ActionScale = field(default_factory=ActionScale)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 2:
            raise ValueError("a demonstration needs at least 2 frames")
        times = [f.time for f in self.frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("frame times must be strictly increasing")
        dims = {len(f.action.fingers) for f in self.frames}
        if len(dims) != 1:
            raise ValueError("finger dimension must be constant across a demonstration")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def finger_dim(self) -> int:
        return len(self.frames[0].action.fingers)

    def actions(self) -> list[Action]:
        return [f.action for f in self.frames]


def _frame_to_json(f: FrameRecord) -> dict:
    img = f.observation.image
    return {
        "t": f.time,
        "obs": {
            "image": {
                "w": int(img.shape[1]),
                "h": int(img.shape[0]),
                "rgb8_b64": base64.b64encode(img.tobytes()).decode("ascii"),
            },
            "proprio": list(f.observation.proprio),
        },
        "action": f.action.to_json(),
        "sim_state_b64": base64.b64encode(f.sim_state).decode("ascii"),
    }


def _frame_from_json(d: dict) -> FrameRecord:
    imgd = d["obs"]["image"]
    w, h = int(imgd["w"]), int(imgd["h"])
    raw = base64.b64decode(imgd["rgb8_b64"], validate=True)
    if len(raw) != w * h * 3:
        raise ValueError("image payload size mismatch")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return FrameRecord(
        time=float(d["t"]),
        observation=Observation(img, tuple(float(p) for p in d["obs"]["proprio"])),
        action=Action.from_json(d["action"]),
        sim_state=base64.b64decode(d["sim_state_b64"], validate=True),
    )


def demo_to_json(demo: Demonstration) -> dict:
    doc = {
        "format_version": demo.format_version,
        "id": demo.id,
        "task": demo.task.to_json(),
        "provenance": demo.provenance.to_json(),
        "action_scale": demo.action_scale.to_json(),
        "frames": [_frame_to_json(f) for f in demo.frames],
    }
    doc["sha256"] = _checksum(doc)
    return doc


def _checksum(doc: dict) -> str:
    body = {k: v for k, v in doc.items() if k != "sha256"}
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save(demo: Demonstration, path) -> None:
    doc = demo_to_json(demo)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load(path) -> Demonstration:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError, OSError) as e:
        raise CorruptFile(f"unreadable demo file {path}: {e}") from e
    return demo_from_json(doc)


def demo_from_json(doc: dict) -> Demonstration:
    try:
        version = int(doc["format_version"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"missing or bad format_version: {e}") from e
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"format_version {version} not supported (want {FORMAT_VERSION})")
    stored = doc.get("sha256")
    if stored is None or stored != _checksum(doc):
        raise CorruptFile("checksum missing or mismatched")
    try:
        return Demonstration(
            id=str(doc["id"]),
            task=TaskRef.from_json(doc["task"]),
            frames=tuple(_frame_from_json(f) for f in doc["frames"]),
            provenance=Provenance.from_json(doc["provenance"]),
            action_scale=ActionScale.from_json(doc["action_scale"]),
            format_version=version,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"malformed demo document: {e}") from e


def demos_equal(a: Demonstration, b: Demonstration) -> bool:
    """Structural equality, including bit-exact images and state snapshots."""
    if (a.id, a.task, a.provenance, a.action_scale, len(a)) != (b.id, b.task, b.provenance, b.action_scale, len(b)):
        return False
    for fa, fb in zip(a.frames, b.frames):
        if fa.time != fb.time or fa.sim_state != fb.sim_state:
            return False
        if fa.action.ee_delta != fb.action.ee_delta or fa.action.fingers != fb.action.fingers:
            return False
        if fa.observation.proprio != fb.observation.proprio:
            return False
        if fa.observation.image.shape != fb.observation.image.shape:
            return False
        if fa.observation.image.tobytes() != fb.observation.image.tobytes():
            return False
    return True


def resolve_chain(demo: Demonstration, corpus: dict[str, Demonstration]) -> list[str]:
    """Walk parent ids back to a teleop/scripted root; raises on a broken link."""
    chain = [demo.id]
    cur = demo
    while cur.provenance.kind == "augmented":
        pid = cur.provenance.parent_id
        if pid not in corpus:
            raise KeyError(f"provenance parent {pid!r} not found")
        cur = corpus[pid]
        chain.append(cur.id)
    return chain


def replay(demo: Demonstration, world) -> tuple[bool, object]:
    """Re-step the demo from frame 0's snapshot; returns (success, final state).

    The world argument is any simulator exposing decode_state / step /
    eval_success with this package's conventions (see `world.KinematicWorld`).
    """
    state = world.decode_state(demo.frames[0].sim_state)
    task = world.task_from_ref(demo.task)
    for f in demo.frames:
        state = world.step(state, f.action, demo.action_scale)
    return world.eval_success(task, state), state
