"""Trajectory augmentation operators.

Four families, mirrored by the CLI:

* visual replay: re-render every frame of a demo from its stored simulator
  states under a perturbed camera (`randomize_camera`) or randomized light,
  sky, ground, and object materials (`randomize_light_texture`);
* diverse objects: swap the manipulated object's geometry and search over
  Gaussian action perturbations until the task succeeds
  (`swap_object_resample`);
* object-pose relocation: the naive whole-scene strategy (`naive_relocate`),
  the interpolate-to-pre-grasp baseline (`interpolation_baseline`), and
  sensitivity-aware retargeting (`estimate_sensitivity` + `retarget`) that
  redistributes a pose change across the trajectory without prepending a
  reach segment;
* action aggregation: merge runs of sub-threshold motions
  (`aggregate_small_motions`).

Every operator verifies its output by rollout before returning it, so
anything that comes out of this module replays to task success.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .demos import Action, Demonstration, Provenance
from .render import MaterialConfig, RenderSettings, offset_camera
from .rng import derive_seed, make_rng
from .se3 import (
    NearPiRotation,
    Pose,
    PoseDelta,
    Twist,
    compose,
    exp_map,
    inverse,
    log_map,
)
from .world import KinematicWorld, TaskSpec, build_demo, task_spec


class AugmentError(Exception):
    pass


class ReplayFailed(AugmentError):
    """An augmented candidate did not replay to task success."""


class RetargetReplayFailed(ReplayFailed):
    """Retargeted trajectory failed verification: the requested pose change
    exceeds the demo's robustness budget."""


class ExhaustedAttempts(AugmentError):
    """Perturbation search ran out of attempts; the new geometry is too far
    from the demonstrated strategy."""


class UnreachablePose(AugmentError):
    pass


class NoGraspEvent(AugmentError):
    """The demo never closes the hand, so there is no pre-grasp frame."""


@dataclass(frozen=True)
class AugmentConfig:
    """Knobs for all operators; scales follow the 0-10 convention."""

    camera_rot_range_deg: float = 15.0
    camera_trans_range_m: float = 0.05
    light_scale: float = 2.0
    texture_scale: float = 2.0
    object_noise_sigma: float = 0.05
    max_attempts: int = 200
    delta_cap: float = 1.0
    delta_step: float = 0.05
    trials_per_delta: int = 3
    ee_epsilon: float = 0.002  # meters / radians, physical units
    finger_epsilon: float = 0.01  # radians
    segments: int = 10
    pose_scale: float = 10.0  # width of pose-randomization ranges, 0-10
    batch_attempt_factor: int = 6

    def __post_init__(self):
        for name in ("light_scale", "texture_scale", "pose_scale"):
            v = getattr(self, name)
            if not 0.0 <= v <= 10.0:
                raise ValueError(f"{name} must lie in [0, 10], got {v}")
        if self.delta_step <= 0:
            raise ValueError("delta_step must be positive")
        if self.trials_per_delta < 1:
            raise ValueError("trials_per_delta must be at least 1")

    @staticmethod
    def from_json(d: dict) -> "AugmentConfig":
        base = AugmentConfig()
        kwargs = {}
        for name in base.__dataclass_fields__:
            if name in d:
                kwargs[name] = type(getattr(base, name))(d[name])
        return AugmentConfig(**kwargs)


@dataclass
class GenerationStats:
    attempts: int = 0
    successes: int = 0
    errors: dict = field(default_factory=dict)

    @property
    def rate(self) -> float:
        """Successes per attempt; an empty batch counts as vacuously perfect."""
        return self.successes / self.attempts if self.attempts else 1.0

    def count_error(self, code: str):
        self.errors[code] = self.errors.get(code, 0) + 1

    def to_json(self) -> dict:
        return {"attempts": self.attempts, "successes": self.successes, "rate": self.rate, "errors": dict(self.errors)}


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _initial_state(world: KinematicWorld, demo: Demonstration):
    return world.decode_state(demo.frames[0].sim_state)


def _ee_poses(demo: Demonstration) -> list[Pose]:
    """Recorded hand poses at frames 0..N-1 (from proprioception)."""
    return [Pose.from_list(f.observation.proprio[:7]) for f in demo.frames]


def _final_ee_pose(world: KinematicWorld, demo: Demonstration) -> Pose:
    last = world.decode_state(demo.frames[-1].sim_state)
    return world.step(last, demo.frames[-1].action, demo.action_scale).ee_pose


def _with_poses(world: KinematicWorld, state, pose_by_id: dict[str, Pose], ee_pose: Pose | None = None):
    objs = []
    for o in state.objects:
        if o.id in pose_by_id:
            if o.attached:
                raise AugmentError(f"cannot relocate attached object {o.id!r}")
            o = replace(o, pose=pose_by_id[o.id])
        objs.append(o)
    out = replace(state, objects=tuple(objs))
    if ee_pose is not None:
        out = replace(out, ee_pose=ee_pose)
    return world._settle_particles(out)


def _verified_demo(world, task: TaskSpec, state0, actions, *, demo_id, provenance, settings,
                   action_scale, error: type[ReplayFailed] = ReplayFailed) -> Demonstration:
    records, final = world.rollout_actions(state0, actions, action_scale)
    if not world.eval_success(task, final):
        raise error(f"augmented candidate failed {task.kind} verification")
    return build_demo(world, task, records, demo_id=demo_id, provenance=provenance,
                      settings=settings, action_scale=action_scale)


def _planar_world_delta(old: Pose, new: Pose) -> Pose:
    """World-frame delta W with new = W * old; must be a tabletop motion."""
    w = compose(new, inverse(old))
    if abs(w.q[1]) > 1e-9 or abs(w.q[2]) > 1e-9 or abs(w.t[2]) > 1e-9:
        raise UnreachablePose("relocation must keep the object flat on the table")
    return w


def _check_workspace(world: KinematicWorld, pose: Pose):
    hx, hy, _ = world.cfg.table_half
    x, y, _ = pose.t
    if abs(x) > hx - 0.02 or abs(y) > hy - 0.02:
        raise UnreachablePose(f"target pose ({x:.3f}, {y:.3f}) leaves the workspace")


def _pose_tag(pose: Pose) -> str:
    """Short deterministic id suffix distinguishing relocation targets."""
    return f"{derive_seed(0, 'pose', *(f'{v:.6f}' for v in pose.as_list())) % 1_000_000:06d}"


def _straight_line_actions(start: Pose, goal: Pose, fingers, scale, frac=0.85) -> list[Action]:
    """Reach segment: constant body-frame twist steps from start to goal."""
    total = log_map(compose(inverse(start), goal))
    comps = [abs(c) / scale.rot_rad for c in total.angular] + [abs(c) / scale.pos_m for c in total.linear]
    biggest = max(comps)
    if biggest <= 1e-12:
        return []
    n = max(1, int(math.ceil(biggest / frac)))
    step = total.scaled(1.0 / n)
    norm = Twist(
        tuple(c / scale.rot_rad for c in step.angular),
        tuple(c / scale.pos_m for c in step.linear),
    )
    return [Action(norm, tuple(fingers)) for _ in range(n)]


# ---------------------------------------------------------------------------
# Visual replay operators
# ---------------------------------------------------------------------------


def sample_camera_offset(cfg: AugmentConfig, seed: int) -> tuple[tuple, tuple]:
    """One (euler degrees, translation meters) draw for camera randomization."""
    rng = make_rng(seed, "camera")
    r = cfg.camera_rot_range_deg
    t = cfg.camera_trans_range_m
    euler = tuple(rng.uniform(-r, r) for _ in range(3))
    trans = tuple(rng.uniform(-t, t) for _ in range(3))
    return euler, trans


def randomize_camera(demo: Demonstration, cfg: AugmentConfig, seed: int, *, world: KinematicWorld,
                     settings: RenderSettings, demo_id: str | None = None) -> Demonstration:
    """Re-render every frame from a camera pose sampled about the default.

    One camera draw per output demo: Euler offsets uniform within the rotation
    range, translation offsets uniform within the translation range, both in
    the camera's own frame.  Actions and simulator states are untouched.
    """
    ok, _ = world.replay(demo)
    if not ok:
        raise ReplayFailed("input demo does not replay to success")
    euler, trans = sample_camera_offset(cfg, seed)
    cam = offset_camera(settings.camera, euler, trans)
    new_settings = replace(settings, camera=cam)
    return _rerender(demo, new_settings, world,
                     demo_id or f"{demo.id}.cam{seed}", Provenance("augmented", "camera", demo.id, seed))


def sample_visuals(settings: RenderSettings, light_scale: float, texture_scale: float, rng) -> RenderSettings:
    """Randomized light direction/colors, sky, and object materials.

    The light direction moves inside a cone about the default whose half
    angle is 0.5 * scale * 0.1 radians; every color channel moves uniformly
    within +/- scale * 0.1 of its default, clamped to [0, 1].
    """
    light = settings.light
    half = 0.5 * light_scale * 0.1
    direction = light.direction
    if half > 0.0:
        phi = rng.uniform(0.0, 2.0 * math.pi)
        ang = half * math.sqrt(rng.uniform(0.0, 1.0))
        # rotate about an axis perpendicular to the default direction
        d = direction
        ref = (1.0, 0.0, 0.0) if abs(d[0]) < 0.9 else (0.0, 1.0, 0.0)
        u = _unit(_cross3(d, ref))
        v = _unit(_cross3(d, u))
        axis = tuple(u[i] * math.cos(phi) + v[i] * math.sin(phi) for i in range(3))
        rot = Pose.from_axis_angle(axis, ang)
        direction = _unit(rot.rotate(d))

    def jigger(color, scale):
        return tuple(min(1.0, max(0.0, c + rng.uniform(-scale * 0.1, scale * 0.1))) for c in color)

    new_light = replace(light, direction=direction, color=jigger(light.color, light_scale),
                        ambient=jigger(light.ambient, light_scale))
    sky = jigger(settings.sky, light_scale)
    materials = {}
    for oid, mat in settings.materials.items():
        albedo = jigger(mat.albedo, texture_scale)
        pattern, cs = mat.pattern, mat.checker_scale
        if texture_scale > 0.0 and oid not in ("hand",):
            if rng.uniform(0.0, 1.0) < 0.5:
                pattern, cs = "checker", rng.uniform(0.01, 0.03)
            else:
                pattern = "solid"
        materials[oid] = MaterialConfig(albedo, pattern, cs)
    return replace(settings, light=new_light, sky=sky, materials=materials)


def _unit(v):
    n = math.sqrt(sum(c * c for c in v))
    return tuple(c / n for c in v)


def _cross3(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def randomize_light_texture(demo: Demonstration, cfg: AugmentConfig, seed: int, *, world: KinematicWorld,
                            settings: RenderSettings, demo_id: str | None = None) -> Demonstration:
    ok, _ = world.replay(demo)
    if not ok:
        raise ReplayFailed("input demo does not replay to success")
    rng = make_rng(seed, "light")
    new_settings = sample_visuals(settings, cfg.light_scale, cfg.texture_scale, rng)
    return _rerender(demo, new_settings, world,
                     demo_id or f"{demo.id}.lt{seed}", Provenance("augmented", "light", demo.id, seed))


def _rerender(demo: Demonstration, settings: RenderSettings, world: KinematicWorld,
              demo_id: str, provenance: Provenance) -> Demonstration:
    from .render import observe

    frames = []
    for f in demo.frames:
        state = world.decode_state(f.sim_state)
        frames.append(replace(f, observation=observe(state, settings)))
    return Demonstration(demo_id, demo.task, tuple(frames), provenance, demo.action_scale)


# ---------------------------------------------------------------------------
# Diverse objects
# ---------------------------------------------------------------------------


def swap_object_resample(demo: Demonstration, new_geometry, cfg: AugmentConfig, seed: int, *,
                         world: KinematicWorld, settings: RenderSettings,
                         demo_id: str | None = None) -> Demonstration:
    """Replace the manipulated object's shape and search noisy replays.

    Candidate k perturbs every action dimension with sigma * N(0, 1) noise
    (hand deltas clipped back to [-1, 1]); the first candidate whose rollout
    succeeds is returned with refreshed snapshots and renders.
    """
    task = world.task_from_ref(demo.task)
    obj_id = world.manipulated_id(task.kind)
    state0 = _initial_state(world, demo)
    old = state0.object_by_id(obj_id)
    from .geometry import rest_half_height

    pose = old.pose
    new_pose = Pose.planar(pose.t[0], pose.t[1], pose.yaw(), rest_half_height(new_geometry))
    objs = tuple(replace(o, geometry=new_geometry, pose=new_pose) if o.id == obj_id else o for o in state0.objects)
    state0 = world._settle_particles(replace(state0, objects=objs))

    base = demo.actions()
    sigma = cfg.object_noise_sigma
    for attempt in range(cfg.max_attempts):
        rng = make_rng(seed, "swap", attempt)
        actions = []
        for a in base:
            ee = [max(-1.0, min(1.0, c + sigma * rng.standard_normal())) for c in a.ee_delta.as_tuple()]
            fingers = tuple(max(0.0, f + sigma * rng.standard_normal()) for f in a.fingers)
            actions.append(Action(Twist.from_sequence(ee), fingers))
        records, final = world.rollout_actions(state0, actions, demo.action_scale)
        if world.eval_success(task, final):
            return build_demo(
                world, task, records,
                demo_id=demo_id or f"{demo.id}.swap{seed}",
                provenance=Provenance("augmented", "objects", demo.id, seed),
                settings=settings, action_scale=demo.action_scale,
            )
    raise ExhaustedAttempts(f"no successful perturbation within {cfg.max_attempts} attempts")


# ---------------------------------------------------------------------------
# Naive relocation and the interpolation baseline
# ---------------------------------------------------------------------------


def naive_relocate(demo: Demonstration, new_object_pose: Pose, *, world: KinematicWorld,
                   settings: RenderSettings, demo_id: str | None = None) -> Demonstration:
    """Move the hand to restore the original hand-object relative pose, then
    replay the original actions.

    The whole initial scene (manipulated object, target, anything loose) is
    carried by the same planar world delta, which is what makes the replay an
    exact relative-pose restoration: the result is a rigid transform of the
    original episode plus a prepended reach, and the success oracles are
    invariant under planar scene motions.  Output length strictly exceeds the
    input's unless the pose change is the identity.
    """
    task = world.task_from_ref(demo.task)
    obj_id = world.manipulated_id(task.kind)
    state0 = _initial_state(world, demo)
    o_old = state0.object_by_id(obj_id).pose
    if new_object_pose.q == o_old.q and new_object_pose.t == o_old.t:
        return demo
    _check_workspace(world, new_object_pose)
    w = _planar_world_delta(o_old, new_object_pose)

    moved = {
        o.id: compose(w, o.pose)
        for o in state0.objects
        if o.id != "table" and not isinstance_particle(o)
    }
    moved[obj_id] = new_object_pose
    state0 = _with_poses(world, state0, moved)

    e0 = state0.ee_pose
    reach_goal = compose(w, Pose.from_list(demo.frames[0].observation.proprio[:7]))
    fingers0 = demo.frames[0].action.fingers
    reach = _straight_line_actions(e0, reach_goal, fingers0, demo.action_scale)
    actions = reach + demo.actions()
    return _verified_demo(
        world, task, state0, actions,
        demo_id=demo_id or f"{demo.id}.rel{_pose_tag(new_object_pose)}",
        provenance=Provenance("augmented", "relocate", demo.id, 0),
        settings=settings, action_scale=demo.action_scale,
    )


def isinstance_particle(o) -> bool:
    from .geometry import Particle

    return isinstance(o.geometry, Particle)


def grasp_frame_index(demo: Demonstration, close_aperture: float) -> int:
    """First frame whose action commands the hand shut."""
    for i, f in enumerate(demo.frames):
        if f.action.fingers and f.action.fingers[0] < close_aperture:
            return i
    raise NoGraspEvent("demo never closes the hand")


def interpolation_baseline(demo: Demonstration, new_object_pose: Pose, *, world: KinematicWorld,
                           settings: RenderSettings, new_target_pose: Pose | None = None,
                           demo_id: str | None = None) -> Demonstration:
    """Interpolate straight to the transformed pre-grasp pose, then replay the
    original post-grasp actions verbatim.

    Only the manipulated object's change is compensated; a moved target (as
    in level-3 worlds, passed via new_target_pose) is left unhandled, which
    is the point of comparing against it.
    """
    task = world.task_from_ref(demo.task)
    obj_id = world.manipulated_id(task.kind)
    i_grasp = grasp_frame_index(demo, world.cfg.close_aperture)
    state0 = _initial_state(world, demo)
    o_old = state0.object_by_id(obj_id).pose
    if new_object_pose.q == o_old.q and new_object_pose.t == o_old.t and new_target_pose is None:
        return demo
    _check_workspace(world, new_object_pose)
    w = _planar_world_delta(o_old, new_object_pose)

    moved = {obj_id: new_object_pose}
    t_id = world.target_id(task.kind)
    if new_target_pose is not None and t_id is not None:
        moved[t_id] = new_target_pose
    state0 = _with_poses(world, state0, moved)

    pre_grasp = Pose.from_list(demo.frames[i_grasp].observation.proprio[:7])
    reach_goal = compose(w, pre_grasp)
    fingers0 = demo.frames[0].action.fingers
    reach = _straight_line_actions(state0.ee_pose, reach_goal, fingers0, demo.action_scale)
    actions = reach + [f.action for f in demo.frames[i_grasp:]]
    return _verified_demo(
        world, task, state0, actions,
        demo_id=demo_id or f"{demo.id}.interp{_pose_tag(new_object_pose)}",
        provenance=Provenance("augmented", "interp", demo.id, 0),
        settings=settings, action_scale=demo.action_scale,
    )


# ---------------------------------------------------------------------------
# Sensitivity-aware retargeting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensitivityProfile:
    """Per-segment robustness of a demo under action noise.

    psi[j] = exp(max_delta[j]) where max_delta[j] is the largest noise scale
    the segment tolerated with every trial still succeeding; weights are psi
    normalized to sum to one.  When the segment count does not divide the
    demo length, the final segment absorbs the remainder.
    """

    demo_id: str
    n_steps: int
    segment_lengths: tuple[int, ...]
    max_delta: tuple[float, ...]

    def __post_init__(self):
        if sum(self.segment_lengths) != self.n_steps:
            raise ValueError("segment lengths must cover the trajectory")
        if any(d < 0 for d in self.max_delta):
            raise ValueError("max_delta entries must be nonnegative")

    @property
    def segments(self) -> int:
        return len(self.segment_lengths)

    @property
    def base_steps_per_segment(self) -> int:
        return self.n_steps // self.segments

    @property
    def psi(self) -> tuple[float, ...]:
        return tuple(math.exp(d) for d in self.max_delta)

    @property
    def weights(self) -> tuple[float, ...]:
        return normalize_psi(self.psi)

    def table(self) -> list[dict]:
        return [
            {"segment": j, "steps": k, "max_delta": d, "psi": p, "weight": w}
            for j, (k, d, p, w) in enumerate(zip(self.segment_lengths, self.max_delta, self.psi, self.weights))
        ]


def normalize_psi(psi) -> tuple[float, ...]:
    total = sum(psi)
    return tuple(p / total for p in psi)


def segment_bounds(n_steps: int, segments: int) -> tuple[int, ...]:
    """Segment lengths: floor division, remainder absorbed by the last one."""
    if not 1 <= segments <= n_steps:
        raise ValueError(f"segment count {segments} must lie in [1, {n_steps}]")
    k = n_steps // segments
    lengths = [k] * segments
    lengths[-1] += n_steps - k * segments
    return tuple(lengths)


def _perturb_segment(actions: list[Action], start: int, stop: int, delta: float, rng) -> list[Action]:
    out = list(actions)
    for i in range(start, stop):
        a = out[i]
        ee = [max(-1.0, min(1.0, c + delta * rng.standard_normal())) for c in a.ee_delta.as_tuple()]
        out[i] = Action(Twist.from_sequence(ee), a.fingers)
    return out


def estimate_sensitivity(demo: Demonstration, world: KinematicWorld, segments: int, cfg: AugmentConfig,
                         seed: int, evaluator=None) -> SensitivityProfile:
    """Probe each segment's tolerance to hand-action noise.

    For each segment independently the noise scale escalates over the grid
    {delta_step, 2*delta_step, ..., delta_cap}; at each scale,
    trials_per_delta rollouts perturb only that segment's hand actions (6
    dims, per-dimension fresh standard normal noise) while everything else
    replays verbatim.  max_delta is the largest scale with all trials
    succeeding, zero if the first scale already fails.

    `evaluator(actions, context)` may be injected for testing; the default
    replays in the simulator.  Degenerate profiles (all zeros) are valid.
    """
    n = len(demo)
    lengths = segment_bounds(n, segments)
    if evaluator is None:
        task = world.task_from_ref(demo.task)
        state0 = _initial_state(world, demo)

        def evaluator(actions, _ctx):
            _, final = world.rollout_actions(state0, actions, demo.action_scale)
            return world.eval_success(task, final)

    base = demo.actions()
    grid = []
    k = 1
    while k * cfg.delta_step <= cfg.delta_cap + 1e-12:
        grid.append(k * cfg.delta_step)
        k += 1

    max_delta = []
    start = 0
    for j, length in enumerate(lengths):
        stop = start + length
        best = 0.0
        for g, delta in enumerate(grid):
            all_pass = True
            for trial in range(cfg.trials_per_delta):
                rng = make_rng(seed, "sens", j, g, trial)
                candidate = _perturb_segment(base, start, stop, delta, rng)
                if not evaluator(candidate, {"segment": j, "delta": delta, "trial": trial}):
                    all_pass = False
                    break
            if not all_pass:
                break
            best = delta
        max_delta.append(best)
        start = stop
    return SensitivityProfile(demo.id, n, lengths, tuple(max_delta))


def compute_step_deltas(profile: SensitivityProfile, delta: PoseDelta) -> list[Pose | None]:
    """Per-step object-frame pose modification.

    Step i in segment j gets exp(weight_j * log(delta) / K_j) where K_j is
    the segment's own length; composing all of them over the trajectory
    reproduces `delta` exactly because the weights sum to one.  Returns None
    entries for an identity delta so callers can keep actions bit-identical.
    """
    lt = log_map(delta.delta)
    if lt.is_zero():
        return [None] * profile.n_steps
    out: list[Pose | None] = []
    for length, w in zip(profile.segment_lengths, profile.weights):
        step_pose = exp_map(lt.scaled(w / length))
        out.extend([step_pose] * length)
    return out


def retarget(demo: Demonstration, profile: SensitivityProfile, delta_T: PoseDelta,
             target_delta: PoseDelta | None = None, *, world: KinematicWorld,
             settings: RenderSettings, seed: int = 0,
             new_object_pose: Pose | None = None, new_target_pose: Pose | None = None,
             new_ee_start: Pose | None = None, demo_id: str | None = None) -> Demonstration:
    """Amend every action so the trajectory absorbs an object-pose change.

    delta_T is expressed in the old object frame (new pose = old * delta_T);
    its log is distributed over steps proportionally to the profile weights
    and conjugated into the hand frame at each recorded pose.  Robust
    segments therefore absorb most of the change.  target_delta applies the
    same machinery against the target object's frame.  The output keeps
    exactly the input's length (no prepended reach) and is verified by
    rollout against the relocated world; failure raises
    RetargetReplayFailed.
    """
    if profile.demo_id != demo.id or profile.n_steps != len(demo):
        raise ValueError("profile was not computed on this demo")
    task = world.task_from_ref(demo.task)
    obj_id = world.manipulated_id(task.kind)
    t_id = world.target_id(task.kind)

    state0 = _initial_state(world, demo)
    o_old = state0.object_by_id(obj_id).pose
    t_old = state0.object_by_id(t_id).pose if t_id else None

    obj_deltas = compute_step_deltas(profile, delta_T)
    tgt_deltas = None
    if target_delta is not None:
        if t_id is None:
            raise ValueError(f"task {task.kind} has no target object for target_delta")
        tgt_deltas = compute_step_deltas(profile, target_delta)

    ee = _ee_poses(demo)
    ee.append(_final_ee_pose(world, demo))

    scale = demo.action_scale
    actions = []
    for i, f in enumerate(demo.frames):
        d_obj = obj_deltas[i]
        d_tgt = tgt_deltas[i] if tgt_deltas is not None else None
        if d_obj is None and d_tgt is None:
            actions.append(f.action)
            continue
        tw = f.action.ee_delta
        step_pose = exp_map(Twist(
            tuple(c * scale.rot_rad for c in tw.angular),
            tuple(c * scale.pos_m for c in tw.linear),
        ))
        post = ee[i + 1]
        if d_obj is not None:
            conj = compose(inverse(post), o_old)
            step_pose = compose(step_pose, compose(conj, compose(d_obj, inverse(conj))))
        if d_tgt is not None:
            conj = compose(inverse(post), t_old)
            step_pose = compose(step_pose, compose(conj, compose(d_tgt, inverse(conj))))
        out_tw = log_map(step_pose)
        norm = [
            *(max(-1.0, min(1.0, c / scale.rot_rad)) for c in out_tw.angular),
            *(max(-1.0, min(1.0, c / scale.pos_m)) for c in out_tw.linear),
        ]
        actions.append(Action(Twist.from_sequence(norm), f.action.fingers))

    moved: dict[str, Pose] = {}
    obj_pose = new_object_pose if new_object_pose is not None else compose(o_old, delta_T.delta)
    moved[obj_id] = obj_pose
    if t_id is not None:
        if new_target_pose is not None:
            moved[t_id] = new_target_pose
        elif target_delta is not None:
            moved[t_id] = compose(t_old, target_delta.delta)
    state0 = _with_poses(world, state0, moved, ee_pose=new_ee_start)

    return _verified_demo(
        world, task, state0, actions,
        demo_id=demo_id or f"{demo.id}.rt{seed}",
        provenance=Provenance("augmented", "retarget", demo.id, seed),
        settings=settings, action_scale=scale, error=RetargetReplayFailed,
    )


# ---------------------------------------------------------------------------
# Action aggregation
# ---------------------------------------------------------------------------


def aggregate_small_motions(demo: Demonstration, ee_epsilon: float, finger_epsilon: float, *,
                            world: KinematicWorld, settings: RenderSettings,
                            demo_id: str | None = None) -> Demonstration:
    """Merge maximal runs of sub-threshold motions into single actions.

    A frame qualifies when every physical hand-delta component is below
    ee_epsilon and its finger-target change from the previous frame is below
    finger_epsilon.  Merged actions compose the run's deltas (splitting when
    that would overflow the normalized range) and take the run's final finger
    target.  The result is verified by rollout; if merging ever broke a demo
    the original is returned unchanged, so replay success is preserved
    unconditionally.
    """
    if ee_epsilon < 0 or finger_epsilon < 0:
        raise ValueError("thresholds must be nonnegative")
    n = len(demo)
    scale = demo.action_scale
    state0 = _initial_state(world, demo)

    prev_fingers = state0.finger_values
    qualifies = []
    for f in demo.frames:
        tw = f.action.ee_delta
        small_ee = all(abs(c * scale.rot_rad) < ee_epsilon for c in tw.angular) and all(
            abs(c * scale.pos_m) < ee_epsilon for c in tw.linear
        )
        small_f = all(abs(a - b) < finger_epsilon for a, b in zip(f.action.fingers, prev_fingers))
        qualifies.append(small_ee and small_f)
        prev_fingers = f.action.fingers

    merged: list[Action] = []
    i = 0
    any_merge = False
    while i < n:
        if not qualifies[i]:
            merged.append(demo.frames[i].action)
            i += 1
            continue
        j = i
        while j < n and qualifies[j]:
            j += 1
        merged.extend(_merge_run([demo.frames[k].action for k in range(i, j)], scale))
        if j - i >= 2:
            any_merge = True
        i = j

    if not any_merge or len(merged) >= n:
        return demo

    try:
        return _verified_demo(
            world, world.task_from_ref(demo.task), state0, merged,
            demo_id=demo_id or f"{demo.id}.agg{len(merged)}",
            provenance=Provenance("augmented", "aggregate", demo.id, 0),
            settings=settings, action_scale=scale,
        )
    except ReplayFailed:
        return demo


def _merge_run(run: list[Action], scale) -> list[Action]:
    if len(run) == 1:
        return list(run)
    out: list[Action] = []
    acc = Pose.identity()
    acc_norm = None
    last_fingers = run[0].fingers
    for a in run:
        tw = a.ee_delta
        phys = exp_map(Twist(
            tuple(c * scale.rot_rad for c in tw.angular),
            tuple(c * scale.pos_m for c in tw.linear),
        ))
        candidate = compose(acc, phys)
        ct = log_map(candidate)
        norm = [
            *(c / scale.rot_rad for c in ct.angular),
            *(c / scale.pos_m for c in ct.linear),
        ]
        if all(-1.0 <= c <= 1.0 for c in norm):
            acc, acc_norm, last_fingers = candidate, norm, a.fingers
        else:
            # composed motion would overflow the action range; flush and restart
            out.append(Action(Twist.from_sequence(acc_norm), last_fingers))
            acc = phys
            ct = log_map(acc)
            acc_norm = [
                *(c / scale.rot_rad for c in ct.angular),
                *(c / scale.pos_m for c in ct.linear),
            ]
            last_fingers = a.fingers
    out.append(Action(Twist.from_sequence(acc_norm), last_fingers))
    return out


# ---------------------------------------------------------------------------
# Level batches
# ---------------------------------------------------------------------------

_WRAP = 2.0 * math.pi


def _yaw_dist(a: float, b: float) -> float:
    d = (a - b) % _WRAP
    return min(d, _WRAP - d)


def generate_level_batch(seed_demos: list[Demonstration], level: int, count: int, cfg: AugmentConfig,
                         seed: int, *, world: KinematicWorld, settings: RenderSettings,
                         profiles: dict[str, SensitivityProfile] | None = None,
                         ) -> tuple[list[Demonstration], GenerationStats]:
    """Produce verified demos for one curriculum level.

    Level 1 retargets the manipulated object's pose inside the small ranges;
    level 2 adds light/texture randomization; level 3 adds target-pose (or,
    for rotate, hand-start) retargeting; level 4 uses the enlarged ranges.
    Every output is verified by replay; the stats carry attempts versus
    successes (the data-generation rate).
    """
    if level not in (1, 2, 3, 4):
        raise ValueError("level must be 1..4")
    if not seed_demos:
        raise ValueError("need at least one seed demo")
    kind = seed_demos[0].task.kind
    task = task_spec(kind, level, world.level_overrides)
    ranges = task.ranges.scaled(cfg.pose_scale)
    profiles = profiles if profiles is not None else {}

    from .geometry import Cylinder

    seeds_info = []
    for d in seed_demos:
        st = world.decode_state(d.frames[0].sim_state)
        seeds_info.append((d, st, st.object_by_id(world.manipulated_id(kind)).pose))
    # a cylinder's yaw is unobservable (continuous symmetry): the world still
    # spawns the sampled yaw, but the retarget delta drops it
    symmetric = isinstance(seeds_info[0][1].object_by_id(world.manipulated_id(kind)).geometry, Cylinder)

    stats = GenerationStats()
    out: list[Demonstration] = []
    budget = max(count, count * cfg.batch_attempt_factor)
    attempt = 0
    while len(out) < count and attempt < budget:
        rng = make_rng(seed, "batch", level, attempt)
        attempt += 1
        stats.attempts += 1
        nx = rng.uniform(*ranges.manipulated_xy[0])
        ny = rng.uniform(*ranges.manipulated_xy[1])
        nyaw = math.radians(rng.uniform(*ranges.manipulated_yaw))

        # the closest seed demo takes the smallest pose change
        def closeness(info):
            pose = info[2]
            return math.hypot(pose.t[0] - nx, pose.t[1] - ny) + 0.05 * _yaw_dist(pose.yaw(), nyaw)

        demo, state0, o_old = min(seeds_info, key=closeness)
        new_obj = Pose.planar(nx, ny, nyaw, o_old.t[2])
        delta_goal = Pose.planar(nx, ny, o_old.yaw(), o_old.t[2]) if symmetric else new_obj
        delta = PoseDelta(compose(inverse(o_old), delta_goal))

        target_delta = None
        new_target = None
        new_ee = None
        if level >= 3 and ranges.target_xy is not None:
            tx = rng.uniform(*ranges.target_xy[0])
            ty = rng.uniform(*ranges.target_xy[1])
            t_id = world.target_id(kind)
            if t_id is not None:
                t_old = state0.object_by_id(t_id).pose
                new_target = Pose.planar(tx, ty, t_old.yaw(), t_old.t[2])
                target_delta = PoseDelta(compose(inverse(t_old), new_target))
            else:
                # rotate: the sampled offset displaces the hand start; fold it
                # into the object-frame delta so the same machinery absorbs it
                e0 = state0.ee_pose
                new_ee = Pose((e0.q), (e0.t[0] + tx, e0.t[1] + ty, e0.t[2]))
                g_inv = compose(e0, inverse(new_ee))
                equiv = compose(compose(inverse(o_old), g_inv), o_old)
                delta = PoseDelta(compose(equiv, delta.delta))

        frame_settings = settings
        if level >= 2 and (ranges.light_scale > 0 or cfg.texture_scale > 0):
            frame_settings = sample_visuals(settings, ranges.light_scale, cfg.texture_scale, rng)

        prof = profiles.get(demo.id)
        if prof is None:
            prof = estimate_sensitivity(demo, world, min(cfg.segments, len(demo)), cfg,
                                        derive_seed(seed, "profile", demo.id))
            profiles[demo.id] = prof

        try:
            out.append(
                retarget(
                    demo, prof, delta, target_delta,
                    world=world, settings=frame_settings, seed=derive_seed(seed, "rt", attempt),
                    new_object_pose=new_obj, new_target_pose=new_target, new_ee_start=new_ee,
                    demo_id=f"{demo.id}.L{level}b{seed % 100_000}a{attempt - 1}",
                )
            )
            stats.successes += 1
        except RetargetReplayFailed:
            stats.count_error("replay_failed")
        except NearPiRotation:
            stats.count_error("near_pi_delta")
    return out, stats
