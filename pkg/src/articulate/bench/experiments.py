"""Evaluation protocols: sample evaluation, task evaluation and seed sensitivity."""
from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..affordance.estimator import (
    N_MC,
    N_ORIENTATIONS,
    Estimator,
    affordance_A,
    infer_pose,
    propose_Q,
    ranked_points,
)
from ..affordance.surface import InteractionPose, sample_surface
from ..datagen import (
    EVAL_SAMPLES,
    EVAL_TASKS,
    EpisodeSettings,
    EpisodeTiming,
    episode_rng,
    parallel_map,
    run_episode,
    sample_interaction_pose,
)
from ..episode import run_scheduled_episode
from ..kinematics import IKParams, ik_reachable, robot_object_collision
from ..scene import Scenario, ScenarioBounds, TaskKind, fixed_task_scenario, sample_scenario
from ..scheduler import SchedulerConfig
from .metrics import TrialResult

log = logging.getLogger(__name__)

VARIANTS = ("random", "ee_aware", "ee_aware+ik", "ee_aware+ik+collision", "agent_aware")
# which training data each variant's estimator comes from
VARIANT_DATA = {
    "random": None,
    "ee_aware": "disembodied",
    "ee_aware+ik": "disembodied",
    "ee_aware+ik+collision": "disembodied",
    "agent_aware": "full",
}
SURFACE_POINTS = 20
MAX_REPROPOSALS = 20
# rng stream ids; stream 0 is data collection
STREAM_SAMPLES = 1
STREAM_TASKS = 2


@dataclass(frozen=True)
class SampleTrialSpec:
    task_kind: TaskKind
    variant: str
    seed: int
    estimator: Estimator | None = None
    bounds: ScenarioBounds = ScenarioBounds()
    timing: EpisodeTiming = EVAL_SAMPLES
    # keep reaching after early progress so the reach rate is measured
    settings: EpisodeSettings = EpisodeSettings(stop_while_reaching=False)
    stream: int = STREAM_SAMPLES
    surface_points: int = SURFACE_POINTS

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant != "random" and self.estimator is None:
            raise ValueError(f"variant {self.variant} needs a fitted estimator")


def _filters(variant: str) -> tuple[bool, bool]:
    return "+ik" in variant, variant.endswith("+collision")


def feasible(sc: Scenario, pose: InteractionPose, collision: bool, rng: np.random.Generator) -> bool:
    """IK reachability of the pose target, then a collision check of the IK solution."""
    robot = sc.robot
    ok, q = ik_reachable(robot, pose.ee_target(robot.finger_radius), IKParams(), rng)
    if not ok:
        return False
    return not (collision and robot_object_collision(robot, q, sc.object, sc.task.o_0))


def choose_pose(spec: SampleTrialSpec, sc: Scenario, rng: np.random.Generator
                ) -> tuple[InteractionPose, int]:
    """Pose for one trial and the number of candidates rejected by filters."""
    obj, task = sc.object, sc.task
    if spec.variant == "random":
        return sample_interaction_pose(obj, task.o_0, rng), 0
    est = spec.estimator
    surface = sample_surface(obj, task.o_0, spec.surface_points, with_static=False)
    use_ik, use_col = _filters(spec.variant)
    if not use_ik:
        return infer_pose(est, surface, obj, task.o_0, task.o_star, rng).pose, 0
    first = None
    ranked = ranked_points(est, surface, obj, task.o_0, task.o_star, rng, N_MC)
    for k, (pt, f, _) in enumerate(ranked[:MAX_REPROPOSALS]):
        phis = propose_Q(est, f, rng, N_ORIENTATIONS)
        scores = affordance_A(est, np.repeat(f[None], len(phis), axis=0), phis)
        pose = InteractionPose(pt, float(phis[int(np.argmax(scores))]))
        if first is None:
            first = pose
        if feasible(sc, pose, use_col, rng):
            return pose, k
    # nothing passed: execute the most actionable candidate anyway
    return first, min(len(ranked), MAX_REPROPOSALS)


def run_sample_trial(spec: SampleTrialSpec, index: int) -> TrialResult:
    rng = episode_rng(spec.seed, index, spec.stream)
    sc = sample_scenario(rng, spec.bounds, spec.task_kind)
    pose, rejections = choose_pose(spec, sc, rng)
    J, res = run_episode(sc, pose, spec.timing, "full", rng, spec.settings)
    return TrialResult(
        scenario_id=index,
        task=spec.task_kind,
        variant=spec.variant,
        success=bool(J),
        reached=res.reached,
        n_interactions=res.n_interactions,
        n_motions=res.n_motions,
        elapsed=round(res.elapsed, 9),
        seed=spec.seed,
        o_0=sc.task.o_0,
        o_star=sc.task.o_star,
        o_end=res.o_end,
        theta=sc.task.theta,
        blowup=res.blowup,
        reason=res.reason,
        s=pose.point.s,
        side=pose.point.side,
        phi=pose.phi,
        rejections=rejections,
    )


def _sample_star(args) -> TrialResult:
    return run_sample_trial(*args)


def eval_samples(spec: SampleTrialSpec, indices: Sequence[int], jobs: int = 1):
    """Yield one fixed-pose trial per index, in index order."""
    for k, r in enumerate(parallel_map(_sample_star, [(spec, i) for i in indices], jobs)):
        if (k + 1) % 50 == 0:
            log.info("%s/%s: %d/%d trials", spec.task_kind, spec.variant, k + 1, len(indices))
        yield r


@dataclass(frozen=True)
class TaskTrialSpec:
    task_kind: TaskKind
    closed_loop: bool
    seed: int
    estimator: Estimator
    bounds: ScenarioBounds = ScenarioBounds()
    timing: EpisodeTiming = EVAL_TASKS
    settings: EpisodeSettings = field(default_factory=lambda: EpisodeSettings(stop_on_progress=False))
    stream: int = STREAM_TASKS
    surface_points: int = SURFACE_POINTS

    @property
    def variant(self) -> str:
        return "closed_loop" if self.closed_loop else "fixed_pose"

    def scheduler(self) -> SchedulerConfig:
        return SchedulerConfig(
            reach_timeout=self.timing.reach_budget,
            interact_timeout=self.timing.interact_budget,
            closed_loop=self.closed_loop,
        )


def run_task_trial(spec: TaskTrialSpec, index: int) -> TrialResult:
    rng = episode_rng(spec.seed, index, spec.stream)
    sc = fixed_task_scenario(rng, spec.bounds, spec.task_kind)
    obj, task = sc.object, sc.task
    chosen: list[InteractionPose] = []

    def propose(state, g):
        surface = sample_surface(obj, state.o, spec.surface_points, with_static=False)
        pose = infer_pose(spec.estimator, surface, obj, state.o, task.o_star, g).pose
        chosen.append(pose)
        return pose

    res = run_scheduled_episode(sc, propose, spec.scheduler(), rng, "full",
                                spec.settings.controller, spec.settings.sim)
    first = chosen[0]
    return TrialResult(
        scenario_id=index,
        task=spec.task_kind,
        variant=spec.variant,
        success=res.task_success,
        reached=res.reached,
        n_interactions=res.n_interactions,
        n_motions=res.n_motions,
        elapsed=round(res.elapsed, 9),
        seed=spec.seed,
        o_0=task.o_0,
        o_star=task.o_star,
        o_end=res.o_end,
        theta=task.theta,
        blowup=res.blowup,
        reason=res.reason,
        s=first.point.s,
        side=first.point.side,
        phi=first.phi,
    )


def _task_star(args) -> TrialResult:
    return run_task_trial(*args)


def eval_tasks(spec: TaskTrialSpec, indices: Sequence[int], jobs: int = 1):
    """Yield one scheduler-driven task trial per index, in index order."""
    for k, r in enumerate(parallel_map(_task_star, [(spec, i) for i in indices], jobs)):
        if (k + 1) % 20 == 0:
            log.info("%s/%s: %d/%d tasks", spec.task_kind, spec.variant, k + 1, len(indices))
        yield r


def spread(rates: Sequence[float]) -> dict:
    rates = list(rates)
    if len(rates) < 1:
        raise ValueError("no rates")
    return {
        "mean": sum(rates) / len(rates),
        "min": min(rates),
        "max": max(rates),
        "std": statistics.pstdev(rates),
        "spread": max(rates) - min(rates),
    }
