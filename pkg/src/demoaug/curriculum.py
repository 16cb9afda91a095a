"""Auto-curriculum training loop over augmentation levels 0..4.

Each cycle: (entering a level generates a batch of augmented demos,) fit the
learner on the accumulated dataset, evaluate, then either advance the level
(criterion met, or the per-level failure budget N_max is spent) or grow the
dataset and stay.  Level 0 trains on the human demos verbatim.  The
progression criterion is the evaluated success rate or the data-generation
rate; a no-curriculum mode pins the level and only grows the randomness
scale, which mimics plain automatic domain randomization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .augment import AugmentConfig, GenerationStats, generate_level_batch, sample_visuals
from .demos import Demonstration
from .learner import rollout_policy
from .render import RenderSettings
from .rng import derive_seed
from .world import KinematicWorld, task_spec

CRITERIA = ("task_success", "data_rate", "data_rate_no_curriculum")


@dataclass(frozen=True)
class CurriculumConfig:
    r_up: float = 0.15  # success-rate threshold
    g_up: float = 0.30  # data-generation-rate threshold
    n_max: int = 5  # failures tolerated per level before the fail-safe fires
    eval_episodes: int = 50
    demos_per_generation: int = 50
    criterion: str = "task_success"
    randomness_variance_per_cycle: float = 0.2
    max_cycles: int = 300
    initial_scale: float = 2.0
    eval_mode: str = "averaged"  # "averaged" over levels 1..4 | "current_level"
    max_steps_per_episode: int = 450
    chunk_size: int = 50

    def __post_init__(self):
        if not 0.0 < self.r_up <= 1.0 or not 0.0 < self.g_up <= 1.0:
            raise ValueError("thresholds must lie in (0, 1]")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if self.eval_mode not in ("averaged", "current_level"):
            raise ValueError("eval_mode must be 'averaged' or 'current_level'")

    @property
    def threshold(self) -> float:
        return self.r_up if self.criterion == "task_success" else self.g_up

    @staticmethod
    def from_json(d: dict) -> "CurriculumConfig":
        base = CurriculumConfig()
        kwargs = {}
        for name in base.__dataclass_fields__:
            if name in d:
                cur = getattr(base, name)
                kwargs[name] = type(cur)(d[name]) if not isinstance(cur, str) else str(d[name])
        return CurriculumConfig(**kwargs)


@dataclass(frozen=True)
class EvalReport:
    r_succ: float
    per_level: dict
    g_rate: float

    def __post_init__(self):
        for v in (self.r_succ, self.g_rate, *self.per_level.values()):
            if not 0.0 <= v <= 1.0:
                raise ValueError("rates must lie in [0, 1]")


@dataclass(frozen=True)
class CurriculumState:
    level: int = 0
    n_fail: int = 0
    dataset: tuple = ()
    human_demos: tuple = ()
    cycle: int = 0
    scale: float = 2.0
    entering: bool = True
    last_g_rate: float = 1.0  # vacuous before the first batch
    history: tuple = ()


def advance(state: CurriculumState, report: EvalReport, cfg: CurriculumConfig, generator) -> CurriculumState:
    """One criterion check: level up, or generate more data and stay.

    `generator(level, count)` returns (demos, GenerationStats) and is called
    only in the stay branch (Algorithm-style on-demand data).  Under the
    no-curriculum criterion the level is pinned and the randomness scale
    grows every cycle instead of only on passing checks.
    """
    metric = report.g_rate if cfg.criterion.startswith("data_rate") else report.r_succ
    row = {
        "cycle": state.cycle,
        "L": state.level,
        "N_fail": state.n_fail,
        "r_succ": report.r_succ,
        "g_rate": report.g_rate,
        "dataset_size": len(state.dataset),
        "scale": state.scale,
    }
    history = state.history + (row,)
    bump = min(10.0, state.scale + cfg.randomness_variance_per_cycle)

    if cfg.criterion == "data_rate_no_curriculum":
        demos, stats = generator(max(state.level, 1), cfg.demos_per_generation)
        return replace(
            state,
            dataset=state.dataset + tuple(demos),
            cycle=state.cycle + 1,
            scale=bump,
            last_g_rate=stats.rate,
            history=history,
        )

    if metric >= cfg.threshold or state.n_fail >= cfg.n_max:
        return replace(
            state,
            level=state.level + 1,
            n_fail=0,
            cycle=state.cycle + 1,
            entering=True,
            scale=bump if metric >= cfg.threshold else state.scale,
            history=history,
        )
    # stay and generate more; level 0 has nothing to generate (no
    # augmentation there: the training set is the human demos verbatim)
    dataset = state.dataset
    last_g = state.last_g_rate
    if state.level >= 1:
        demos, stats = generator(state.level, cfg.demos_per_generation)
        dataset = dataset + tuple(demos)
        last_g = stats.rate
    return replace(
        state,
        dataset=dataset,
        n_fail=state.n_fail + 1,
        cycle=state.cycle + 1,
        last_g_rate=last_g,
        history=history,
    )


def enter_level(state: CurriculumState, cfg: CurriculumConfig, generator) -> CurriculumState:
    """Top-of-cycle generation, once per level entry (levels 1..4 only)."""
    if not state.entering:
        return state
    if state.level < 1 or state.level > 4:
        return replace(state, entering=False)
    demos, stats = generator(state.level, cfg.demos_per_generation)
    return replace(
        state,
        dataset=state.dataset + tuple(demos),
        entering=False,
        last_g_rate=stats.rate,
    )


@dataclass
class RunResult:
    policy: object
    state: CurriculumState
    log_rows: list = field(default_factory=list)


def evaluate_policy(policy, world: KinematicWorld, kind: str, cfg: CurriculumConfig, seed: int,
                    cycle: int, settings: RenderSettings, current_level: int,
                    episodes: int | None = None) -> EvalReport:
    """Success rates over seeded episodes at full published ranges.

    Averaged mode splits the episode budget across levels 1..4 and averages
    the per-level rates; current-level mode spends it all at the curriculum's
    present level (level 0 evaluates at level-1 ranges with zero-width
    randomization).  Levels with light randomization also randomize the
    evaluation rendering.
    """
    episodes = episodes if episodes is not None else cfg.eval_episodes
    if cfg.eval_mode == "averaged" and current_level >= 1:
        levels = [1, 2, 3, 4]
    else:
        levels = [max(1, current_level)]
    scale = 0.0 if current_level == 0 else 10.0
    per_level: dict[int, float] = {}
    for lv in levels:
        task = task_spec(kind, lv, world.level_overrides)
        n = max(1, episodes // len(levels))
        wins = 0
        for ep in range(n):
            ep_seed = derive_seed(seed, "eval", cycle, lv, ep)
            ep_settings = settings
            if task.ranges.light_scale > 0:
                from .rng import make_rng

                ep_settings = sample_visuals(settings, task.ranges.light_scale, task.ranges.light_scale,
                                             make_rng(ep_seed, "eval-visuals"))
            res = rollout_policy(policy, world, task, cfg.max_steps_per_episode, ep_seed,
                                 settings=ep_settings, scale=scale)
            wins += 1 if res.success else 0
        per_level[lv] = wins / n
    r_succ = sum(per_level.values()) / len(per_level)
    return EvalReport(r_succ=r_succ, per_level=per_level, g_rate=0.0)


def run(learner, world: KinematicWorld, human_demos: list[Demonstration], cfg: CurriculumConfig,
        aug_cfg: AugmentConfig, seed: int, settings: RenderSettings,
        log_path=None) -> RunResult:
    """Full training loop; reproducible from (inputs, seed).

    Returns the final policy plus the cycle history; optionally streams one
    JSON line per cycle to log_path.
    """
    if not human_demos:
        raise ValueError("need at least one human demo")
    kind = human_demos[0].task.kind
    profiles: dict = {}

    state = CurriculumState(
        level=4 if cfg.criterion == "data_rate_no_curriculum" else 0,
        dataset=tuple(human_demos),
        human_demos=tuple(human_demos),
        scale=cfg.initial_scale,
    )

    def generator(level: int, count: int):
        batch_cfg = replace(aug_cfg, pose_scale=min(10.0, state.scale))
        return generate_level_batch(
            list(state.human_demos), level, count, batch_cfg,
            derive_seed(seed, "gen", state.cycle, level),
            world=world, settings=settings, profiles=profiles,
        )

    policy = None
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        while state.level <= 4 and state.cycle < cfg.max_cycles:
            state = enter_level(state, cfg, generator)
            policy = learner.fit(list(state.dataset))
            report = evaluate_policy(policy, world, kind, cfg, seed, state.cycle, settings, state.level)
            report = replace(report, g_rate=state.last_g_rate)
            state = advance(state, report, cfg, generator)
            if log_fh:
                log_fh.write(json.dumps(state.history[-1], sort_keys=True) + "\n")
                log_fh.flush()
    finally:
        if log_fh:
            log_fh.close()
    return RunResult(policy=policy, state=state, log_rows=list(state.history))
