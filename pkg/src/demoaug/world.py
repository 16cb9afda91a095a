"""Deterministic kinematic "floating hand" simulator for three tabletop tasks.

World stepping is a pure function of (state, action): the hand pose advances
by the de-normalized body-frame delta, a kinematic attach/release rule stands
in for grasping, valves accumulate the hand's motion about their axis, and a
tilt-over-bowl rule transfers pour particles.  There is no contact dynamics
on purpose; the augmentation and curriculum machinery needs a binary success
oracle and bit-exact replay, not force simulation.

Coordinates: the table top is the z = 0 plane, (0, 0) its center, z up.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

from . import demos
from .demos import Action, ActionScale, Demonstration, FrameRecord, Provenance, StateVersionMismatch, TaskRef
from .geometry import Bowl, Box, Cylinder, Geometry, Particle, Plate, Valve, rest_half_height, valve_blade_azimuths
from .rng import make_rng
from .se3 import Pose, Twist, compose, exp_map, inverse

STATE_VERSION = 1
TASK_KINDS = ("pick_place", "rotate", "pour")
FULL_TURNS_GOAL = math.radians(720.0)


class ExpertFailed(RuntimeError):
    """Scripted expert could not produce a successful demo."""


# ---------------------------------------------------------------------------
# Task configuration
# ---------------------------------------------------------------------------

Interval = tuple[float, float]


def _scaled(iv: Interval, scale: float) -> Interval:
    mid = 0.5 * (iv[0] + iv[1])
    half = 0.5 * (iv[1] - iv[0]) * (scale / 10.0)
    return (mid - half, mid + half)


@dataclass(frozen=True)
class LevelRanges:
    """Randomization intervals for one (task, level).

    For rotate tasks `target_xy` displaces the hand's start pose instead of a
    target object (the task has none); that mirrors how the range tables are
    laid out upstream.
    """

    manipulated_xy: tuple[Interval, Interval]
    manipulated_yaw: Interval  # degrees
    target_xy: tuple[Interval, Interval] | None = None
    light_scale: float = 0.0

    def scaled(self, scale: float) -> "LevelRanges":
        t = None
        if self.target_xy is not None:
            t = (_scaled(self.target_xy[0], scale), _scaled(self.target_xy[1], scale))
        return LevelRanges(
            (_scaled(self.manipulated_xy[0], scale), _scaled(self.manipulated_xy[1], scale)),
            _scaled(self.manipulated_yaw, scale),
            t,
            self.light_scale,
        )


_SMALL_PICK = ((-0.1, 0.1), (0.2, 0.3))
_SMALL_POUR = ((-0.1, 0.1), (-0.2, -0.1))

LEVEL_TABLES: dict[str, dict[int, LevelRanges]] = {
    "pick_place": {
        1: LevelRanges(_SMALL_PICK, (80.0, 90.0)),
        2: LevelRanges(_SMALL_PICK, (80.0, 90.0), light_scale=2.0),
        3: LevelRanges(_SMALL_PICK, (80.0, 90.0), ((-0.1, 0.1), (-0.3, -0.1)), light_scale=2.0),
        # the wider of the two published yaw lines (70-90 vs 80-90) is used
        4: LevelRanges(((-0.2, 0.2), (0.1, 0.3)), (70.0, 90.0), ((-0.2, 0.2), (-0.3, 0.0)), light_scale=2.0),
    },
    "pour": {
        1: LevelRanges(_SMALL_POUR, (0.0, 179.0)),
        2: LevelRanges(_SMALL_POUR, (0.0, 179.0), light_scale=2.0),
        3: LevelRanges(_SMALL_POUR, (0.0, 179.0), ((-0.1, 0.1), (0.2, 0.3)), light_scale=2.0),
        4: LevelRanges(((-0.1, 0.15), (-0.3, 0.0)), (0.0, 359.0), ((-0.2, 0.2), (0.2, 0.4)), light_scale=2.0),
    },
    "rotate": {
        1: LevelRanges(((0.0, 0.0), (0.0, 0.0)), (0.0, 30.0)),
        2: LevelRanges(((0.0, 0.0), (0.0, 0.0)), (0.0, 30.0), light_scale=2.0),
        3: LevelRanges(((0.0, 0.0), (0.0, 0.0)), (0.0, 30.0), ((-0.1, 0.1), (-0.15, 0.15)), light_scale=2.0),
        4: LevelRanges(((-0.2, 0.2), (-0.3, 0.3)), (0.0, 60.0), light_scale=2.0),
    },
}

# fixed home placements; level tables randomize around these
TASK_LAYOUT = {
    "pick_place": {"target_home": (0.0, -0.2), "ee_home": (0.0, 0.05, 0.2)},
    "pour": {"target_home": (0.0, 0.25), "ee_home": (0.0, 0.05, 0.2)},
    "rotate": {"target_home": None, "ee_home": (0.0, -0.22, 0.12)},
}


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    level: int
    ranges: LevelRanges

    def ref(self) -> TaskRef:
        return TaskRef(self.kind, self.level)


def task_spec(kind: str, level: int, overrides: dict | None = None) -> TaskSpec:
    if kind not in TASK_KINDS:
        raise ValueError(f"unknown task kind {kind!r}")
    if level not in (1, 2, 3, 4):
        raise ValueError(f"level must be 1..4, got {level}")
    ranges = LEVEL_TABLES[kind][level]
    if overrides and kind in overrides and str(level) in overrides[kind]:
        ranges = _ranges_from_json(overrides[kind][str(level)], ranges)
    return TaskSpec(kind, level, ranges)


def _ranges_from_json(d: dict, base: LevelRanges) -> LevelRanges:
    def iv(v):
        return (float(v[0]), float(v[1]))

    man = d.get("manipulated_xy")
    tgt = d.get("target_xy")
    return LevelRanges(
        (iv(man[0]), iv(man[1])) if man else base.manipulated_xy,
        iv(d["manipulated_yaw"]) if "manipulated_yaw" in d else base.manipulated_yaw,
        ((iv(tgt[0]), iv(tgt[1])) if tgt else base.target_xy),
        float(d.get("light_scale", base.light_scale)),
    )


@dataclass(frozen=True)
class WorldConfig:
    grasp_radius: float = 0.045
    close_aperture: float = 0.35  # attach when aperture falls below
    open_aperture: float = 0.60  # detach when aperture rises above
    pour_tilt_deg: float = 60.0
    pour_mouth_radius: float = 0.06
    particle_count: int = 4
    finger_dim: int = 2  # aperture + curl for the toy hand
    action_scale: ActionScale = field(default_factory=ActionScale)
    image_size: int = 64
    table_half: tuple[float, float, float] = (0.4, 0.45, 0.01)
    # object shapes
    box_half: tuple[float, float, float] = (0.02, 0.02, 0.02)
    bottle_radius: float = 0.018
    bottle_half_length: float = 0.06
    bowl_radius: float = 0.055
    bowl_height: float = 0.05
    plate_radius: float = 0.08
    plate_height: float = 0.012
    valve_blades: int = 3
    valve_blade_length: float = 0.07
    valve_hub_radius: float = 0.02
    valve_height: float = 0.05

    @staticmethod
    def from_json(d: dict) -> "WorldConfig":
        base = WorldConfig()
        kwargs = {}
        for name in base.__dataclass_fields__:
            if name in d:
                v = d[name]
                if name == "action_scale":
                    v = ActionScale.from_json(v)
                elif isinstance(getattr(base, name), tuple):
                    v = tuple(float(x) for x in v)
                elif isinstance(getattr(base, name), int) and not isinstance(getattr(base, name), bool):
                    v = int(v)
                else:
                    v = float(v)
                kwargs[name] = v
        return WorldConfig(**kwargs)


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectState:
    id: str
    geometry: Geometry
    pose: Pose
    attached: bool = False
    grasp_offset: Pose | None = None
    graspable: bool = False


@dataclass(frozen=True)
class WorldState:
    ee_pose: Pose
    finger_values: tuple[float, ...]
    objects: tuple[ObjectState, ...]
    valve_angle: float = 0.0
    particles_in_bowl: int = 0
    rng_state: bytes = b""
    step_index: int = 0

    def object_by_id(self, oid: str) -> ObjectState:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def proprio(self) -> tuple[float, ...]:
        return tuple(self.ee_pose.as_list()) + self.finger_values


def _xy_dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _dist3(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


_PARTICLE_BOWL_SLOTS = ((-0.012, -0.012), (0.012, -0.012), (-0.012, 0.012), (0.012, 0.012))


class KinematicWorld:
    """Simulator facade: reset / step / eval_success / scripted experts."""

    def __init__(self, cfg: WorldConfig | None = None, level_overrides: dict | None = None):
        self.cfg = cfg or WorldConfig()
        self.level_overrides = level_overrides

    # -- task plumbing ------------------------------------------------------

    def task_from_ref(self, ref: TaskRef) -> TaskSpec:
        return task_spec(ref.kind, ref.level, self.level_overrides)

    def manipulated_id(self, kind: str) -> str:
        return "valve" if kind == "rotate" else ("bottle" if kind == "pour" else "box")

    def target_id(self, kind: str) -> str | None:
        return {"pick_place": "plate", "pour": "bowl", "rotate": None}[kind]

    # -- reset --------------------------------------------------------------

    def reset(self, task: TaskSpec, seed: int, scale: float = 10.0) -> WorldState:
        """Sample object and target poses from the level ranges.

        `scale` in [0, 10] shrinks every interval around its midpoint; 10
        reproduces the published ranges, 0 collapses them to points.
        """
        cfg = self.cfg
        rng = make_rng(seed, "reset", task.kind, task.level)
        rr = task.ranges.scaled(scale)
        mx = rng.uniform(*rr.manipulated_xy[0])
        my = rng.uniform(*rr.manipulated_xy[1])
        myaw = math.radians(rng.uniform(*rr.manipulated_yaw))
        layout = TASK_LAYOUT[task.kind]
        objects: list[ObjectState] = [
            ObjectState(
                "table",
                Box(cfg.table_half),
                Pose.from_translation(0.0, 0.0, -cfg.table_half[2]),
            )
        ]
        ee_home = layout["ee_home"]
        ee = Pose.from_translation(*ee_home)

        if task.kind == "pick_place":
            tx, ty = layout["target_home"]
            if rr.target_xy is not None:
                tx = rng.uniform(*rr.target_xy[0])
                ty = rng.uniform(*rr.target_xy[1])
            objects.append(
                ObjectState("box", Box(cfg.box_half), Pose.planar(mx, my, myaw, cfg.box_half[2]), graspable=True)
            )
            objects.append(
                ObjectState("plate", Plate(cfg.plate_radius, cfg.plate_height), Pose.planar(tx, ty, 0.0, cfg.plate_height / 2))
            )
        elif task.kind == "pour":
            tx, ty = layout["target_home"]
            if rr.target_xy is not None:
                tx = rng.uniform(*rr.target_xy[0])
                ty = rng.uniform(*rr.target_xy[1])
            bottle = ObjectState(
                "bottle",
                Cylinder(cfg.bottle_radius, cfg.bottle_half_length),
                Pose.planar(mx, my, myaw, cfg.bottle_half_length),
                graspable=True,
            )
            objects.append(bottle)
            objects.append(
                ObjectState("bowl", Bowl(cfg.bowl_radius, cfg.bowl_height), Pose.planar(tx, ty, 0.0, cfg.bowl_height / 2))
            )
            for i in range(cfg.particle_count):
                objects.append(ObjectState(f"particle{i}", Particle(0.008), Pose.identity()))
        else:  # rotate
            valve = Valve(cfg.valve_blades, cfg.valve_blade_length, cfg.valve_hub_radius, cfg.valve_height)
            objects.append(ObjectState("valve", valve, Pose.planar(mx, my, myaw, cfg.valve_height), graspable=True))
            if rr.target_xy is not None:  # hand start displacement family
                dx = rng.uniform(*rr.target_xy[0])
                dy = rng.uniform(*rr.target_xy[1])
                ee = Pose.from_translation(ee_home[0] + dx, ee_home[1] + dy, ee_home[2])

        state = WorldState(
            ee_pose=ee,
            finger_values=(1.0,) * cfg.finger_dim,
            objects=tuple(objects),
            rng_state=struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF),
        )
        return self._settle_particles(state)

    def _settle_particles(self, state: WorldState) -> WorldState:
        """Recompute derived particle poses from containment counters."""
        bottle = bowl = None
        particles: list[int] = []
        for i, o in enumerate(state.objects):
            if isinstance(o.geometry, Particle):
                particles.append(i)
            elif isinstance(o.geometry, Cylinder):
                bottle = o
            elif isinstance(o.geometry, Bowl):
                bowl = o
        if not particles:
            return state
        objects = list(state.objects)
        in_bowl = state.particles_in_bowl
        for j, idx in enumerate(particles):
            p = objects[idx]
            half = p.geometry.half_size
            if j < in_bowl:
                sx, sy = _PARTICLE_BOWL_SLOTS[j % len(_PARTICLE_BOWL_SLOTS)]
                pose = Pose.from_translation(bowl.pose.t[0] + sx, bowl.pose.t[1] + sy, bowl.pose.t[2] + bowl.geometry.height / 2 + half)
            else:
                k = j - in_bowl
                pose = compose(bottle.pose, Pose.from_translation(0.0, 0.0, -0.03 + k * 0.015))
            objects[idx] = replace(p, pose=pose)
        return replace(state, objects=tuple(objects))

    # -- stepping -----------------------------------------------------------

    def step(self, state: WorldState, action: Action, scale: ActionScale | None = None) -> WorldState:
        cfg = self.cfg
        sc = scale or cfg.action_scale
        tw = Twist(
            tuple(c * sc.rot_rad for c in action.ee_delta.angular),
            tuple(c * sc.pos_m for c in action.ee_delta.linear),
        )
        ee = state.ee_pose if tw.is_zero() else compose(state.ee_pose, exp_map(tw))
        fingers = action.fingers
        objects = list(state.objects)
        valve_angle = state.valve_angle
        pib = state.particles_in_bowl

        att = next((i for i, o in enumerate(objects) if o.attached), None)

        # attached objects ride with the hand; valves are axis-fixed and
        # instead accumulate the hand's azimuth change about their axis
        if att is not None:
            obj = objects[att]
            if isinstance(obj.geometry, Valve):
                c = obj.pose.t
                r0 = _xy_dist(state.ee_pose.t, c)
                r1 = _xy_dist(ee.t, c)
                if min(r0, r1) >= 1e-3:
                    a0 = math.atan2(state.ee_pose.t[1] - c[1], state.ee_pose.t[0] - c[0])
                    a1 = math.atan2(ee.t[1] - c[1], ee.t[0] - c[0])
                    d = a1 - a0
                    while d > math.pi:
                        d -= 2.0 * math.pi
                    while d <= -math.pi:
                        d += 2.0 * math.pi
                    valve_angle += d
            else:
                objects[att] = replace(obj, pose=compose(ee, obj.grasp_offset))

        aperture = fingers[0] if fingers else 1.0
        if att is None and aperture < cfg.close_aperture:
            best_i, best_d = None, math.inf
            for i, obj in enumerate(objects):
                if not obj.graspable:
                    continue
                for gp in self._grasp_points(obj, valve_angle):
                    d = _dist3(gp, ee.t)
                    # strict improvement required, so ties keep the earliest
                    # object in state order (deterministic)
                    if d <= cfg.grasp_radius and d < best_d - 1e-15:
                        best_i, best_d = i, d
            if best_i is not None:
                obj = objects[best_i]
                objects[best_i] = replace(obj, attached=True, grasp_offset=compose(inverse(ee), obj.pose))
        elif att is not None and aperture > cfg.open_aperture:
            obj = objects[att]
            if isinstance(obj.geometry, Valve):
                objects[att] = replace(obj, attached=False, grasp_offset=None)
            else:
                objects[att] = replace(
                    obj, attached=False, grasp_offset=None, pose=self._rest_pose(obj, objects)
                )

        # pour rule: a held, tilted bottle over the bowl rim sheds one
        # particle per step
        att2 = next((o for o in objects if o.attached), None)
        if att2 is not None and isinstance(att2.geometry, Cylinder) and pib < cfg.particle_count:
            bowl = next((o for o in objects if isinstance(o.geometry, Bowl)), None)
            if bowl is not None:
                axis = att2.pose.rotate((0.0, 0.0, 1.0))
                tilt = math.acos(max(-1.0, min(1.0, axis[2])))
                if tilt > math.radians(cfg.pour_tilt_deg):
                    mouth = att2.pose.apply((0.0, 0.0, att2.geometry.half_length))
                    rim_z = bowl.pose.t[2] + bowl.geometry.height / 2
                    if _xy_dist(mouth, bowl.pose.t) <= cfg.pour_mouth_radius and mouth[2] > rim_z:
                        pib += 1

        out = WorldState(
            ee_pose=ee,
            finger_values=fingers,
            objects=tuple(objects),
            valve_angle=valve_angle,
            particles_in_bowl=pib,
            rng_state=state.rng_state,
            step_index=state.step_index + 1,
        )
        return self._settle_particles(out)

    def _grasp_points(self, obj: ObjectState, valve_angle: float) -> list:
        if isinstance(obj.geometry, Valve):
            g = obj.geometry
            c = obj.pose.t
            return [
                (c[0] + g.blade_length * math.cos(a), c[1] + g.blade_length * math.sin(a), c[2])
                for a in valve_blade_azimuths(g, obj.pose.yaw(), valve_angle)
            ]
        return [obj.pose.t]

    def _rest_pose(self, obj: ObjectState, objects: list[ObjectState]) -> Pose:
        # released objects settle upright, keeping yaw; they land on the plate
        # if their center is over it, else on the table
        half = rest_half_height(obj.geometry)
        x, y = obj.pose.t[0], obj.pose.t[1]
        z = half
        plate = next((o for o in objects if isinstance(o.geometry, Plate)), None)
        if plate is not None and _xy_dist(obj.pose.t, plate.pose.t) <= plate.geometry.radius:
            z = plate.geometry.height + half
        return Pose.planar(x, y, obj.pose.yaw(), z)

    # -- success oracles ----------------------------------------------------

    def eval_success(self, task: TaskSpec, state: WorldState) -> bool:
        cfg = self.cfg
        if task.kind == "rotate":
            return state.valve_angle >= FULL_TURNS_GOAL
        if task.kind == "pour":
            return state.particles_in_bowl >= cfg.particle_count
        # pick_place: resting on the plate, not held
        box = state.object_by_id("box")
        plate = state.object_by_id("plate")
        if box.attached:
            return False
        if _xy_dist(box.pose.t, plate.pose.t) > plate.geometry.radius:
            return False
        rest_z = plate.geometry.height + rest_half_height(box.geometry)
        return abs(box.pose.t[2] - rest_z) <= 1e-6

    # -- replay helpers -----------------------------------------------------

    def rollout_actions(self, state: WorldState, actions, scale: ActionScale | None = None):
        """Apply actions in order; returns (records, final) with records
        holding (state before, action) pairs."""
        records = []
        cur = state
        for a in actions:
            records.append((cur, a))
            cur = self.step(cur, a, scale)
        return records, cur

    def replay(self, demo: Demonstration) -> tuple[bool, WorldState]:
        return demos.replay(demo, self)

    # -- state codec ---------------------------------------------------------

    def encode_state(self, state: WorldState) -> bytes:
        return encode_state(state)

    def decode_state(self, blob: bytes) -> WorldState:
        return decode_state(blob)

    # -- scripted experts ----------------------------------------------------

    def scripted_expert(self, task: TaskSpec, state: WorldState, seed: int, settings=None, retries: int = 3) -> Demonstration:
        """Drive a hand controller through the task; returns a verified demo.

        The controller is state-feedback, so it converges from any reset the
        level tables can produce.  Raises ExpertFailed after `retries`
        attempts (each retry jitters the hover waypoints slightly).
        """
        from .render import default_settings

        settings = settings or default_settings(self.cfg.image_size)
        last_exc = None
        for attempt in range(max(1, retries)):
            rng = make_rng(seed, "expert", attempt)
            try:
                records, final = self._expert_records(task, state, rng)
            except _PhaseTimeout as e:
                last_exc = e
                continue
            if self.eval_success(task, final):
                demo_id = f"{task.kind}-L{task.level}-s{seed}"
                return build_demo(
                    self,
                    task,
                    records,
                    demo_id=demo_id,
                    provenance=Provenance("scripted", seed=seed),
                    settings=settings,
                )
        raise ExpertFailed(f"scripted expert failed for {task.kind} (last: {last_exc})")

    def _expert_records(self, task, state, rng):
        ctl = _ExpertController(self, state, rng)
        if task.kind == "pick_place":
            ctl.run_pick_place()
        elif task.kind == "pour":
            ctl.run_pour()
        else:
            ctl.run_rotate()
        return ctl.records, ctl.state


class _PhaseTimeout(RuntimeError):
    pass


class _ExpertController:
    """Shared motion primitives for the scripted experts."""

    # leave action headroom below the per-step cap so downstream trajectory
    # edits (retargeting deltas, noise) stay inside the normalized range
    RATE = 0.8
    OPEN, CLOSED = 1.0, 0.12

    def __init__(self, world: KinematicWorld, state: WorldState, rng):
        self.world = world
        self.cfg = world.cfg
        self.state = state
        self.rng = rng
        self.records: list[tuple[WorldState, Action]] = []
        self.aperture = state.finger_values[0]

    def fingers(self) -> tuple[float, ...]:
        f = [self.aperture] * self.cfg.finger_dim
        if self.cfg.finger_dim >= 2:
            f[1] = 1.0 - self.aperture  # curl synergy, decorative
        return tuple(f)

    def emit(self, ee6=(0.0,) * 6):
        a = Action(Twist.from_sequence(ee6), self.fingers())
        self.records.append((self.state, a))
        self.state = self.world.step(self.state, a)

    def move_to(self, target, tol=5e-4, max_steps=400):
        sc = self.cfg.action_scale.pos_m
        for _ in range(max_steps):
            ee = self.state.ee_pose.t
            d = (target[0] - ee[0], target[1] - ee[1], target[2] - ee[2])
            m = max(abs(c) for c in d)
            if m <= tol:
                return
            k = min(1.0, self.RATE * sc / m)
            self.emit((0.0, 0.0, 0.0, d[0] * k / sc, d[1] * k / sc, d[2] * k / sc))
        raise _PhaseTimeout(f"move_to {target} did not converge")

    def set_aperture(self, value, steps=2):
        start = self.aperture
        for i in range(steps):
            self.aperture = start + (value - start) * (i + 1) / steps
            self.emit()

    def dwell(self, steps):
        for _ in range(steps):
            self.emit()

    def jitter(self, mag=0.004):
        return float(self.rng.uniform(-mag, mag))

    # -- task scripts --------------------------------------------------------

    def run_pick_place(self):
        box = self.state.object_by_id("box")
        plate = self.state.object_by_id("plate")
        bx, by, bz = box.pose.t
        self.move_to((bx + self.jitter(0.002), by + self.jitter(0.002), bz + 0.08))
        self.move_to((bx, by, bz))
        self.set_aperture(self.CLOSED)
        if not self.state.object_by_id("box").attached:
            raise _PhaseTimeout("grasp missed")
        px, py = plate.pose.t[0], plate.pose.t[1]
        self.move_to((bx, by, 0.12))
        self.move_to((px, py, 0.12))
        self.move_to((px, py, 0.055))
        self.set_aperture(self.OPEN)
        self.dwell(3)

    def run_rotate(self):
        valve = self.state.object_by_id("valve")
        g = valve.geometry
        c = valve.pose.t
        az = valve_blade_azimuths(g, valve.pose.yaw(), self.state.valve_angle)[0]
        tip = (c[0] + g.blade_length * math.cos(az), c[1] + g.blade_length * math.sin(az), c[2])
        self.move_to((tip[0], tip[1], tip[2] + 0.05))
        self.move_to(tip)
        self.set_aperture(self.CLOSED)
        if not self.state.object_by_id("valve").attached:
            raise _PhaseTimeout("valve grasp missed")
        goal = FULL_TURNS_GOAL + 0.3
        # orbit rate: chord per step r * 2 sin(daz/2) stays under the per-step
        # translation budget at the blade radius
        daz = 0.1
        for _ in range(900):
            if self.state.valve_angle >= goal:
                break
            ee = self.state.ee_pose.t
            r = _xy_dist(ee, c)
            a = math.atan2(ee[1] - c[1], ee[0] - c[0]) + daz
            self.move_to((c[0] + r * math.cos(a), c[1] + r * math.sin(a), tip[2]), max_steps=4)
        else:
            raise _PhaseTimeout("valve goal not reached")
        self.dwell(3)

    def run_pour(self):
        bottle = self.state.object_by_id("bottle")
        bowl = self.state.object_by_id("bowl")
        ox, oy, oz = bottle.pose.t
        self.move_to((ox + self.jitter(0.002), oy + self.jitter(0.002), oz + 0.1))
        self.move_to((ox, oy, oz))
        self.set_aperture(self.CLOSED)
        if not self.state.object_by_id("bottle").attached:
            raise _PhaseTimeout("bottle grasp missed")
        tilt_goal = math.radians(75.0)
        # stance offset: after tilting about body x, the mouth swings toward -y
        reach = self.cfg.bottle_half_length * math.sin(tilt_goal)
        wx, wy = bowl.pose.t[0], bowl.pose.t[1] + reach
        self.move_to((ox, oy, 0.14))
        self.move_to((wx, wy, 0.14))
        rate = self.RATE  # angular, in normalized units
        steps = int(math.ceil(tilt_goal / (rate * self.cfg.action_scale.rot_rad)))
        for _ in range(steps):
            self.emit((rate, 0.0, 0.0, 0.0, 0.0, 0.0))
        for _ in range(30):
            if self.state.particles_in_bowl >= self.cfg.particle_count:
                break
            self.emit()
        self.dwell(3)


# ---------------------------------------------------------------------------
# Demo assembly
# ---------------------------------------------------------------------------


def build_demo(world: KinematicWorld, task: TaskSpec, records, *, demo_id, provenance, settings,
               action_scale: ActionScale | None = None) -> Demonstration:
    """Render observations for (state, action) records and assemble a demo.

    Callers are responsible for having verified task success on the record's
    final state; this function only packages.
    """
    from .render import observe

    scale = action_scale or world.cfg.action_scale
    frames = [
        FrameRecord(
            time=i / 30.0,
            observation=observe(state, settings),
            action=action,
            sim_state=encode_state(state),
        )
        for i, (state, action) in enumerate(records)
    ]
    return Demonstration(
        id=demo_id,
        task=task.ref(),
        frames=tuple(frames),
        provenance=provenance,
        action_scale=scale,
    )


# ---------------------------------------------------------------------------
# State codec (version 1): little-endian struct packing, bit-exact floats
# ---------------------------------------------------------------------------

_GEOM_CODES = {Box: 1, Cylinder: 2, Valve: 3, Bowl: 4, Plate: 5, Particle: 6}


def _pack_pose(out: bytearray, p: Pose):
    out += struct.pack("<7d", *p.q, *p.t)


def _unpack_pose(buf, off):
    vals = struct.unpack_from("<7d", buf, off)
    return Pose((vals[0], vals[1], vals[2], vals[3]), (vals[4], vals[5], vals[6])), off + 56


def encode_state(state: WorldState) -> bytes:
    out = bytearray()
    out += struct.pack("<B", STATE_VERSION)
    _pack_pose(out, state.ee_pose)
    out += struct.pack("<H", len(state.finger_values))
    out += struct.pack(f"<{len(state.finger_values)}d", *state.finger_values)
    out += struct.pack("<H", len(state.objects))
    for o in state.objects:
        idb = o.id.encode("utf-8")
        out += struct.pack("<B", len(idb)) + idb
        code = _GEOM_CODES[type(o.geometry)]
        out += struct.pack("<B", code)
        g = o.geometry
        if isinstance(g, Box):
            out += struct.pack("<3d", *g.half_extents)
        elif isinstance(g, Cylinder):
            out += struct.pack("<2d", g.radius, g.half_length)
        elif isinstance(g, Valve):
            out += struct.pack("<B3d", g.blades, g.blade_length, g.hub_radius, g.height)
        elif isinstance(g, (Bowl, Plate)):
            out += struct.pack("<2d", g.radius, g.height)
        else:
            out += struct.pack("<d", g.half_size)
        _pack_pose(out, o.pose)
        flags = (1 if o.attached else 0) | (2 if o.grasp_offset is not None else 0) | (4 if o.graspable else 0)
        out += struct.pack("<B", flags)
        if o.grasp_offset is not None:
            _pack_pose(out, o.grasp_offset)
    out += struct.pack("<dIq", state.valve_angle, state.particles_in_bowl, state.step_index)
    out += struct.pack("<H", len(state.rng_state)) + state.rng_state
    return bytes(out)


def decode_state(blob: bytes) -> WorldState:
    try:
        off = 0
        (version,) = struct.unpack_from("<B", blob, off)
        off += 1
        if version != STATE_VERSION:
            raise StateVersionMismatch(f"sim_state version {version} unsupported")
        ee, off = _unpack_pose(blob, off)
        (nf,) = struct.unpack_from("<H", blob, off)
        off += 2
        fingers = struct.unpack_from(f"<{nf}d", blob, off)
        off += 8 * nf
        (nobj,) = struct.unpack_from("<H", blob, off)
        off += 2
        objects = []
        for _ in range(nobj):
            (ln,) = struct.unpack_from("<B", blob, off)
            off += 1
            oid = blob[off : off + ln].decode("utf-8")
            off += ln
            (code,) = struct.unpack_from("<B", blob, off)
            off += 1
            if code == 1:
                geom = Box(struct.unpack_from("<3d", blob, off))
                off += 24
            elif code == 2:
                r, h = struct.unpack_from("<2d", blob, off)
                geom = Cylinder(r, h)
                off += 16
            elif code == 3:
                b, bl, hr, ht = struct.unpack_from("<B3d", blob, off)
                geom = Valve(b, bl, hr, ht)
                off += 25
            elif code in (4, 5):
                r, h = struct.unpack_from("<2d", blob, off)
                geom = (Bowl if code == 4 else Plate)(r, h)
                off += 16
            elif code == 6:
                (hs,) = struct.unpack_from("<d", blob, off)
                geom = Particle(hs)
                off += 8
            else:
                raise ValueError(f"bad geometry code {code}")
            pose, off = _unpack_pose(blob, off)
            (flags,) = struct.unpack_from("<B", blob, off)
            off += 1
            offset = None
            if flags & 2:
                offset, off = _unpack_pose(blob, off)
            objects.append(
                ObjectState(oid, geom, pose, attached=bool(flags & 1), grasp_offset=offset, graspable=bool(flags & 4))
            )
        valve_angle, pib, step_index = struct.unpack_from("<dIq", blob, off)
        off += 20
        (nr,) = struct.unpack_from("<H", blob, off)
        off += 2
        rng_state = blob[off : off + nr]
        off += nr
    except StateVersionMismatch:
        raise
    except (struct.error, UnicodeDecodeError, ValueError) as e:
        raise StateVersionMismatch(f"undecodable sim_state: {e}") from e
    return WorldState(
        ee_pose=ee,
        finger_values=tuple(fingers),
        objects=tuple(objects),
        valve_angle=valve_angle,
        particles_in_bowl=pib,
        rng_state=rng_state,
        step_index=step_index,
    )
