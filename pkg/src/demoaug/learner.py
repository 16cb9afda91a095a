"""Reference policy learner: chunked nearest-neighbor behavior cloning.

Stands in for a neural action-chunking policy so the curriculum loop runs
end to end with zero training stochasticity.  fit() indexes a feature vector
for every frame of every demo; predict_chunk() returns the next chunk_size
actions of the nearest stored frame (Euclidean distance over z-scored
features, ties broken by lowest demo id then frame index).  Any object with
the same fit/predict_chunk surface drops in as a replacement.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .demos import Action, Demonstration, Observation
from .se3 import Twist

CHUNK_SIZE_DEFAULT = 50


class EmptyDataset(ValueError):
    pass


def pooled_gray(image: np.ndarray) -> np.ndarray:
    """8x8 mean-pooled grayscale descriptor (64 values in [0, 1])."""
    h, w = image.shape[:2]
    if h % 8 or w % 8:
        raise ValueError(f"image size {w}x{h} must be divisible by 8 for pooling")
    gray = image.astype(np.float64).mean(axis=2) / 255.0
    return gray.reshape(8, h // 8, 8, w // 8).mean(axis=(1, 3)).ravel()


def feature_vector(obs: Observation) -> np.ndarray:
    return np.concatenate([np.asarray(obs.proprio, dtype=np.float64), pooled_gray(obs.image)])


@dataclass
class ChunkPolicy:
    chunk_size: int
    mean: np.ndarray  # (d,)
    std: np.ndarray  # (d,)
    keys: np.ndarray  # (n, d) float32, z-scored
    pair_demo: np.ndarray  # (n,) int32 index into demo tables
    pair_frame: np.ndarray  # (n,) int32 start frame
    demo_ids: list[str]
    demo_actions: list[np.ndarray]  # per demo: (N, 6 + F) float64 raw actions
    finger_dim: int

    # -- training ------------------------------------------------------------

    @classmethod
    def fit(cls, dataset: list[Demonstration], chunk_size: int = CHUNK_SIZE_DEFAULT) -> "ChunkPolicy":
        """Index (feature -> next chunk) pairs for every frame of every demo.

        Chunks that run past a demo's end are padded with hold actions (zero
        hand delta, final finger target).  Features are z-scored with
        training-set statistics so image cells and proprioception share a
        common scale.
        """
        if not dataset:
            raise EmptyDataset("cannot fit a policy on an empty dataset")
        ordered = sorted(dataset, key=lambda d: d.id)
        finger_dim = ordered[0].finger_dim
        feats, pair_demo, pair_frame = [], [], []
        demo_ids, demo_actions = [], []
        for di, demo in enumerate(ordered):
            if demo.finger_dim != finger_dim:
                raise ValueError("mixed finger dimensions in dataset")
            acts = np.array([f.action.ee_delta.as_tuple() + f.action.fingers for f in demo.frames])
            demo_ids.append(demo.id)
            demo_actions.append(acts)
            for i, f in enumerate(demo.frames):
                feats.append(feature_vector(f.observation))
                pair_demo.append(di)
                pair_frame.append(i)
        raw = np.vstack(feats)
        mean = raw.mean(axis=0)
        std = raw.std(axis=0)
        std = np.where(std < 1e-8, 1.0, std)
        keys = ((raw - mean) / std).astype(np.float32)
        return cls(
            chunk_size=chunk_size,
            mean=mean,
            std=std,
            keys=keys,
            pair_demo=np.array(pair_demo, dtype=np.int32),
            pair_frame=np.array(pair_frame, dtype=np.int32),
            demo_ids=demo_ids,
            demo_actions=demo_actions,
            finger_dim=finger_dim,
        )

    # -- inference -----------------------------------------------------------

    def predict_chunk(self, obs: Observation) -> list[Action]:
        """Nearest stored frame's next chunk; always exactly chunk_size long."""
        q = ((feature_vector(obs) - self.mean) / self.std).astype(np.float32)
        d2 = ((self.keys - q) ** 2).sum(axis=1)
        best = int(np.argmin(d2))  # first minimum = lowest (demo id, frame)
        di, fi = int(self.pair_demo[best]), int(self.pair_frame[best])
        acts = self.demo_actions[di]
        rows = acts[fi : fi + self.chunk_size]
        chunk = [
            Action(Twist.from_sequence(row[:6]), tuple(row[6:]))
            for row in rows
        ]
        if chunk:
            hold = Action(Twist.zero(), chunk[-1].fingers)
        else:
            hold = Action(Twist.zero(), (0.0,) * self.finger_dim)
        while len(chunk) < self.chunk_size:
            chunk.append(hold)
        return chunk

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        doc = {
            "kind": "nearest-neighbor-chunk-policy",
            "chunk_size": self.chunk_size,
            "finger_dim": self.finger_dim,
            "demo_ids": self.demo_ids,
            "mean": _arr_b64(self.mean),
            "std": _arr_b64(self.std),
            "keys": _arr_b64(self.keys),
            "pair_demo": _arr_b64(self.pair_demo),
            "pair_frame": _arr_b64(self.pair_frame),
            "demo_actions": [_arr_b64(a) for a in self.demo_actions],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ChunkPolicy":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(
            chunk_size=int(doc["chunk_size"]),
            mean=_arr_from_b64(doc["mean"]),
            std=_arr_from_b64(doc["std"]),
            keys=_arr_from_b64(doc["keys"]),
            pair_demo=_arr_from_b64(doc["pair_demo"]),
            pair_frame=_arr_from_b64(doc["pair_frame"]),
            demo_ids=list(doc["demo_ids"]),
            demo_actions=[_arr_from_b64(a) for a in doc["demo_actions"]],
            finger_dim=int(doc["finger_dim"]),
        )


def _arr_b64(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {"dtype": str(a.dtype), "shape": list(a.shape), "b64": base64.b64encode(a.tobytes()).decode("ascii")}


def _arr_from_b64(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["b64"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


class NearestNeighborLearner:
    """fit(dataset) -> ChunkPolicy; the learner interface the curriculum uses."""

    def __init__(self, chunk_size: int = CHUNK_SIZE_DEFAULT):
        self.chunk_size = chunk_size

    def fit(self, dataset: list[Demonstration]) -> ChunkPolicy:
        return ChunkPolicy.fit(dataset, self.chunk_size)


@dataclass
class RolloutResult:
    success: bool
    steps: int
    final_state: object


def rollout_policy(policy, world, task, max_steps: int, seed: int, *, settings,
                   scale: float = 10.0, initial_state=None) -> RolloutResult:
    """Run chunks open loop, re-querying the policy between chunks.

    The world resets at the task's level ranges (or starts from
    initial_state); the episode ends at task success or max_steps.
    """
    from .render import observe

    state = initial_state if initial_state is not None else world.reset(task, seed, scale)
    if world.eval_success(task, state):
        return RolloutResult(True, 0, state)
    steps = 0
    while steps < max_steps:
        chunk = policy.predict_chunk(observe(state, settings))
        for action in chunk:
            state = world.step(state, action)
            steps += 1
            if world.eval_success(task, state):
                return RolloutResult(True, steps, state)
            if steps >= max_steps:
                break
    return RolloutResult(False, steps, state)
