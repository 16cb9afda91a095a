"""Operator-facing command surface for the whole pipeline.

Subcommands: record (scripted experts or a live teleop server), augment (one
operator per invocation), sensitivity (profile table), train (curriculum
run), eval (success rates, optionally per level), render (PNG export),
inspect (metadata and provenance), report (CSV + figures from logs).

Every invocation derives all randomness from one --seed; artifact
directories receive a manifest recording the command, config snapshot, seed,
and paths, and rerunning a command with its manifest's arguments reproduces
the output files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, demos as demos_mod
from .augment import (
    AugmentConfig,
    AugmentError,
    aggregate_small_motions,
    estimate_sensitivity,
    generate_level_batch,
    interpolation_baseline,
    naive_relocate,
    randomize_camera,
    randomize_light_texture,
    retarget,
    swap_object_resample,
)
from .curriculum import CurriculumConfig, run as curriculum_run
from .demos import DemoError, Demonstration
from .geometry import Valve
from .learner import ChunkPolicy, NearestNeighborLearner, rollout_policy
from .render import default_settings, render
from .rng import derive_seed
from .se3 import Pose, PoseDelta, compose, inverse
from .teleop import BindFailure, TeleopServer, save_demo_to_dir
from .world import ExpertFailed, KinematicWorld, WorldConfig, task_spec


class CliError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


def load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CliError("bad_config", f"cannot read config {path}: {e}") from e


def build_world(cfg: dict) -> KinematicWorld:
    wcfg = dict(cfg.get("world", {}))
    overrides = wcfg.pop("level_ranges", None)
    if "render" in cfg and "image_size" in cfg["render"]:
        wcfg.setdefault("image_size", cfg["render"]["image_size"])
    return KinematicWorld(WorldConfig.from_json(wcfg), overrides)


def build_settings(cfg: dict, world: KinematicWorld):
    return default_settings(world.cfg.image_size)


def write_manifest(out_dir: Path, args: argparse.Namespace, cfg: dict, outputs: list[str], t0: float):
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "seed": getattr(args, "seed", None),
        "config": cfg,
        "inputs": sorted(str(getattr(args, k)) for k in ("demos", "input", "demo", "policy", "log")
                         if getattr(args, k, None)),
        "outputs": sorted(outputs),
        "version": __version__,
        "timings": {"elapsed_s": round(time.monotonic() - t0, 3)},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_demo_inputs(path_str: str) -> list[Demonstration]:
    p = Path(path_str)
    if p.is_dir():
        files = sorted(p.glob("*.json"))
        files = [f for f in files if f.name != "manifest.json"]
        if not files:
            raise CliError("no_demos", f"no demo files in {p}")
        return [demos_mod.load(f) for f in files]
    if not p.exists():
        raise CliError("no_demos", f"{p} does not exist")
    return [demos_mod.load(p)]


def save_demos(demos: list[Demonstration], out_dir: Path) -> list[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, d in enumerate(demos):
        name = f"demo-{i:03d}.json"
        demos_mod.save(d, out_dir / name)
        names.append(name)
    return names


def parse_pose(text: str, z: float) -> Pose:
    try:
        x, y, yaw = (float(v) for v in text.split(","))
    except ValueError as e:
        raise CliError("bad_pose", f"--pose wants 'x,y,yaw_rad', got {text!r}") from e
    return Pose.planar(x, y, yaw, z)


def parse_geometry(text: str, world: KinematicWorld):
    kind, _, arg = text.partition(":")
    if kind == "valve":
        blades = int(arg) if arg else world.cfg.valve_blades
        return Valve(blades, world.cfg.valve_blade_length, world.cfg.valve_hub_radius, world.cfg.valve_height)
    raise CliError("bad_geometry", f"unsupported geometry {text!r} (use valve:N)")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_record(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config)
    world = build_world(cfg)
    settings = build_settings(cfg, world)
    out = Path(args.out)
    if args.serve:
        host, _, port = args.serve.partition(":")
        task = task_spec(args.task, args.level, world.level_overrides)
        server = TeleopServer(world, task, args.seed, settings, on_demo=save_demo_to_dir(out))
        print(f"serving teleop for {args.task} level {args.level} on {host}:{port or 0}", flush=True)
        try:
            server.serve(host or "127.0.0.1", int(port or 0), max_ticks=args.max_ticks)
        except KeyboardInterrupt:
            pass
        write_manifest(out, args, cfg, sorted(p.name for p in out.glob("demo-*.json")), t0)
        return 0
    task = task_spec(args.task, args.level, world.level_overrides)
    demos = []
    for i in range(args.count):
        seed = derive_seed(args.seed, "record", i)
        state = world.reset(task, seed)
        demos.append(world.scripted_expert(task, state, seed=seed, settings=settings))
    names = save_demos(demos, out)
    write_manifest(out, args, cfg, names, t0)
    print(f"recorded {len(demos)} expert demos into {out}")
    return 0


def cmd_augment(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config)
    world = build_world(cfg)
    settings = build_settings(cfg, world)
    acfg = AugmentConfig.from_json(cfg.get("augment", {}))
    inputs = load_demo_inputs(args.input)
    out = Path(args.out)
    produced: list[Demonstration] = []
    stats = {"attempts": 0, "successes": 0, "errors": {}}

    def note(err: str):
        stats["errors"][err] = stats["errors"].get(err, 0) + 1

    def run_one(op, i, demo):
        seed = derive_seed(args.seed, "augment", i)
        if op == "camera":
            return randomize_camera(demo, acfg, seed, world=world, settings=settings)
        if op == "light":
            return randomize_light_texture(demo, acfg, seed, world=world, settings=settings)
        if op == "objects":
            geom = parse_geometry(args.geometry, world)
            return swap_object_resample(demo, geom, acfg, seed, world=world, settings=settings)
        if op == "aggregate":
            return aggregate_small_motions(demo, acfg.ee_epsilon, acfg.finger_epsilon,
                                           world=world, settings=settings)
        state0 = world.decode_state(demo.frames[0].sim_state)
        o_old = state0.object_by_id(world.manipulated_id(demo.task.kind)).pose
        if args.pose:
            new_pose = parse_pose(args.pose, o_old.t[2])
        else:
            from .rng import make_rng

            task = task_spec(demo.task.kind, args.level or demo.task.level, world.level_overrides)
            rr = task.ranges.scaled(acfg.pose_scale)
            rng = make_rng(seed, "pose")
            new_pose = Pose.planar(
                float(rng.uniform(*rr.manipulated_xy[0])),
                float(rng.uniform(*rr.manipulated_xy[1])),
                math.radians(float(rng.uniform(*rr.manipulated_yaw))),
                o_old.t[2],
            )
        if op == "relocate":
            return naive_relocate(demo, new_pose, world=world, settings=settings)
        if op == "interp":
            return interpolation_baseline(demo, new_pose, world=world, settings=settings)
        if op == "retarget":
            prof = estimate_sensitivity(demo, world, min(acfg.segments, len(demo)), acfg,
                                        derive_seed(args.seed, "profile", demo.id))
            return retarget(demo, prof, PoseDelta(compose(inverse(o_old), new_pose)),
                            world=world, settings=settings, seed=seed, new_object_pose=new_pose)
        raise CliError("bad_op", f"unknown operator {op!r}")

    if args.op == "level-batch":
        produced, gstats = generate_level_batch(
            inputs, args.level or 1, args.count, acfg, args.seed, world=world, settings=settings
        )
        stats = gstats.to_json()
    else:
        requested = args.count if args.count else len(inputs)
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            futures = [
                pool.submit(run_one, args.op, i, inputs[i % len(inputs)]) for i in range(requested)
            ]
            for f in futures:
                stats["attempts"] += 1
                try:
                    produced.append(f.result())
                    stats["successes"] += 1
                except AugmentError as e:
                    note(type(e).__name__)
        stats["rate"] = stats["successes"] / stats["attempts"] if stats["attempts"] else 1.0

    names = save_demos(produced, out)
    write_manifest(out, args, cfg, names, t0)
    print(json.dumps({"op": args.op, "stats": stats}, sort_keys=True))
    return 0 if produced or args.op == "level-batch" else 1


def cmd_sensitivity(args) -> int:
    cfg = load_config(args.config)
    world = build_world(cfg)
    acfg = AugmentConfig.from_json(cfg.get("augment", {}))
    demo = load_demo_inputs(args.input)[0]
    prof = estimate_sensitivity(demo, world, args.segments, acfg, args.seed)
    print(f"demo {demo.id}: {len(demo)} steps, {prof.segments} segments")
    print(f"{'seg':>3} {'steps':>5} {'max_delta':>9} {'psi':>8} {'weight':>7}")
    for row in prof.table():
        print(f"{row['segment']:>3} {row['steps']:>5} {row['max_delta']:>9.3f} {row['psi']:>8.4f} {row['weight']:>7.4f}")
    return 0


def cmd_train(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config)
    world = build_world(cfg)
    settings = build_settings(cfg, world)
    acfg = AugmentConfig.from_json(cfg.get("augment", {}))
    ccfg = CurriculumConfig.from_json(cfg.get("curriculum", {}))
    human = load_demo_inputs(args.demos)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = curriculum_run(
        NearestNeighborLearner(ccfg.chunk_size), world, human, ccfg, acfg, args.seed, settings,
        log_path=out / "cycles.jsonl",
    )
    result.policy.save(out / "policy.json")
    write_manifest(out, args, cfg, ["policy.json", "cycles.jsonl"], t0)
    last = result.log_rows[-1] if result.log_rows else {}
    print(json.dumps({"cycles": len(result.log_rows), "final": last}, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config)
    world = build_world(cfg)
    settings = build_settings(cfg, world)
    policy = ChunkPolicy.load(args.policy)
    levels = [1, 2, 3, 4] if args.all_levels else [args.level]
    per_level = {}
    from .augment import sample_visuals
    from .rng import make_rng

    def episode(lv: int, ep: int) -> bool:
        task = task_spec(args.task, lv, world.level_overrides)
        ep_seed = derive_seed(args.seed, "eval", lv, ep)
        ep_settings = settings
        if task.ranges.light_scale > 0:
            ep_settings = sample_visuals(settings, task.ranges.light_scale, task.ranges.light_scale,
                                         make_rng(ep_seed, "eval-visuals"))
        return rollout_policy(policy, world, task, args.max_steps, ep_seed, settings=ep_settings).success

    for lv in levels:
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            wins = sum(pool.map(lambda ep: episode(lv, ep), range(args.episodes)))
        per_level[lv] = wins / args.episodes
    results = {"task": args.task, "episodes": args.episodes, "per_level": {str(k): v for k, v in per_level.items()}}
    if args.all_levels:
        print("\t".join(f"level{lv}" for lv in levels))
        print("\t".join(f"{per_level[lv]:.3f}" for lv in levels))
    else:
        print(f"success rate: {per_level[args.level]:.3f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "eval.json", "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=1, sort_keys=True)
            fh.write("\n")
        write_manifest(out, args, cfg, ["eval.json"], t0)
    return 0


def cmd_render(args) -> int:
    from PIL import Image

    demo = load_demo_inputs(args.demo)[0]
    if not 0 <= args.frame < len(demo):
        raise CliError("bad_frame", f"frame {args.frame} outside 0..{len(demo) - 1}")
    img = demo.frames[args.frame].observation.image
    Image.fromarray(img).save(args.png)
    print(f"wrote {args.png} ({img.shape[1]}x{img.shape[0]})")
    return 0


def cmd_inspect(args) -> int:
    demo = load_demo_inputs(args.demo)[0]
    corpus = {demo.id: demo}
    if args.dir:
        for f in sorted(Path(args.dir).glob("*.json")):
            if f.name == "manifest.json":
                continue
            try:
                d = demos_mod.load(f)
                corpus[d.id] = d
            except DemoError:
                continue
    info = {
        "id": demo.id,
        "task": demo.task.to_json(),
        "frames": len(demo),
        "duration_s": round(demo.frames[-1].time, 3),
        "finger_dim": demo.finger_dim,
        "provenance": demo.provenance.to_json(),
        "action_scale": demo.action_scale.to_json(),
    }
    try:
        info["provenance_chain"] = demos_mod.resolve_chain(demo, corpus)
    except KeyError as e:
        info["provenance_chain"] = f"broken: {e}"
    print(json.dumps(info, indent=1, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    t0 = time.monotonic()
    from .report import generate_report

    written = generate_report(args.log, args.out, args.eval_json)
    write_manifest(Path(args.out), args, load_config(args.config), written, t0)
    print(json.dumps({"written": written}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="demoaug", description=__doc__)
    p.add_argument("--version", action="version", version=f"demoaug {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, config=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        if config:
            sp.add_argument("--config", default=None, help="JSON config with world/augment/curriculum sections")

    sp = sub.add_parser("record", help="record expert demos or serve live steering")
    sp.add_argument("--task", required=True, choices=["pick_place", "rotate", "pour"])
    sp.add_argument("--level", type=int, default=1, choices=[1, 2, 3, 4])
    sp.add_argument("-n", "--count", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.add_argument("--expert", action="store_true", help="use the scripted expert (default)")
    sp.add_argument("--serve", default=None, metavar="HOST:PORT", help="run the live steering server instead")
    sp.add_argument("--max-ticks", type=int, default=None)
    common(sp)
    sp.set_defaults(func=cmd_record)

    sp = sub.add_parser("augment", help="apply one augmentation operator")
    sp.add_argument("--op", required=True,
                    choices=["camera", "light", "objects", "relocate", "interp", "retarget", "aggregate", "level-batch"])
    sp.add_argument("--in", dest="input", required=True, help="demo file or directory")
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int, default=0, help="outputs to produce (default: one per input)")
    sp.add_argument("--level", type=int, default=None, choices=[1, 2, 3, 4])
    sp.add_argument("--pose", default=None, help="x,y,yaw_rad target pose for relocate/interp/retarget")
    sp.add_argument("--geometry", default="valve:4", help="objects op: geometry spec (valve:N)")
    sp.add_argument("--jobs", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("sensitivity", help="print a demo's robustness profile")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--segments", type=int, default=10)
    common(sp)
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("train", help="run curriculum training")
    sp.add_argument("--demos", required=True, help="directory of human/seed demos")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a policy")
    sp.add_argument("--policy", required=True)
    sp.add_argument("--task", required=True, choices=["pick_place", "rotate", "pour"])
    sp.add_argument("--level", type=int, default=1, choices=[1, 2, 3, 4])
    sp.add_argument("--episodes", type=int, default=50)
    sp.add_argument("--all-levels", action="store_true")
    sp.add_argument("--max-steps", type=int, default=450)
    sp.add_argument("--out", default=None)
    sp.add_argument("--jobs", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("render", help="export one frame as PNG")
    sp.add_argument("--demo", required=True)
    sp.add_argument("--frame", type=int, default=0)
    sp.add_argument("--png", required=True)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("inspect", help="print demo metadata and provenance")
    sp.add_argument("--demo", required=True)
    sp.add_argument("--dir", default=None, help="corpus directory for provenance resolution")
    common(sp, seed=False, config=False)
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("report", help="render logs into CSV tables and figures")
    sp.add_argument("--log", default=None, help="cycles.jsonl from train")
    sp.add_argument("--eval-json", default=None, help="eval.json from eval --out")
    sp.add_argument("--out", required=True)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_report)

    return p


_ERROR_CODES = {
    "FormatVersionMismatch": "format_version_mismatch",
    "CorruptFile": "corrupt_file",
    "StateVersionMismatch": "state_version_mismatch",
    "ReplayFailed": "replay_failed",
    "RetargetReplayFailed": "retarget_replay_failed",
    "ExhaustedAttempts": "exhausted_attempts",
    "UnreachablePose": "unreachable_pose",
    "NoGraspEvent": "no_grasp_event",
    "ExpertFailed": "expert_failed",
    "BindFailure": "bind_failure",
    "EmptyDataset": "empty_dataset",
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(json.dumps({"error": e.code, "detail": e.detail}), file=sys.stderr)
        return 1
    except (DemoError, AugmentError, ExpertFailed, BindFailure, ValueError) as e:
        code = _ERROR_CODES.get(type(e).__name__, "invalid_input")
        print(json.dumps({"error": code, "detail": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
