"""Closed-loop episode execution shared by data collection and evaluation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal

import numpy as np

from .affordance.surface import InteractionPose
from .controller import ControllerConfig, MPPIController, target_to_local, target_to_world
from .kinematics import Pose2, forward_kinematics
from .scene import RobotModel, Scenario, SystemState
from .scheduler import Kind, Mode, SchedulerConfig, new_scheduler, scheduler_step
from .simulator import LowLevelState, Plant, SimParams, SimulationError, TrajectoryWriter

AgentMode = Literal["full", "disembodied"]
PoseSource = Callable[[SystemState, np.random.Generator], InteractionPose | None]

OBSERVE_GAIN = 2.0


@dataclass
class EpisodeResult:
    o_0: float
    o_end: float
    o_star: float
    reached: bool
    task_success: bool
    progress: float
    n_interactions: int
    n_motions: int
    elapsed: float
    blowup: bool = False
    reason: str = ""
    max_penetration: float = 0.0
    events: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _ee_pose(robot: RobotModel, q) -> Pose2:
    return forward_kinematics(robot, q)[0]


def replan_chunks(sim: SimParams, rate: float):
    """Plant step counts per control period, keeping the average period exact."""
    period = 1.0 / rate
    k = 0
    while True:
        a = math.floor(k * period / sim.dt + 1e-9)
        b = math.floor((k + 1) * period / sim.dt + 1e-9)
        k += 1
        yield max(1, b - a)


def free_finger_state(robot: RobotModel, target: Pose2, o: float) -> SystemState:
    return SystemState(np.array([target.x, target.z, target.phi]), o, np.zeros(3))


def run_scheduled_episode(
    scenario: Scenario,
    propose: PoseSource,
    sched_cfg: SchedulerConfig,
    rng: np.random.Generator,
    agent_mode: AgentMode = "full",
    ctl_cfg: ControllerConfig = ControllerConfig(),
    sim: SimParams = SimParams(),
    writer: TrajectoryWriter | None = None,
) -> EpisodeResult:
    """Run the scheduler / controller / plant loop until a stop directive.

    In disembodied mode the free finger is placed at the first proposed pose
    and starts in the interacting phase.
    """
    task = scenario.task
    obj = scenario.object
    state = scenario.initial_state()
    sched = new_scheduler(sched_cfg)
    sched, directive = scheduler_step(sched, state, task, 0.0)
    pose = propose(state, rng)
    if pose is None:
        return _result(scenario, state, sched, False, "no pose")

    if agent_mode == "disembodied":
        robot = RobotModel.free_finger(finger_radius=scenario.robot.finger_radius)
        target = pose.ee_target(robot.finger_radius)
        state = free_finger_state(robot, target, state.o)
    else:
        robot = scenario.robot
    plant = Plant(robot, obj, sim)
    ll = LowLevelState.initial(robot)
    ctl = MPPIController(robot, obj, ctl_cfg, sim)
    target_local = target_to_local(obj, state.o, pose.ee_target(robot.finger_radius))
    mode = 1
    chunks = replan_chunks(sim, ctl_cfg.replan_rate)
    q_obs = robot.observation_config(0.0)

    blowup = False
    while not sched.finished:
        if sched.mode is Mode.OBSERVING:
            goal = q_obs.copy()
            goal[: robot.base_dof] = state.q[: robot.base_dof]
            u = np.clip(OBSERVE_GAIN * (goal - state.q), -robot.vmax, robot.vmax)
        else:
            u = ctl.step(state, task.o_star, target_local, rng, mode)
        n = next(chunks)
        try:
            rec = plant.advance(state, u, ll, n)
        except SimulationError:
            blowup = True
            break
        tw = target_to_world(obj, state.o, target_local)
        err = _ee_pose(robot, state.q).error_to(tw)
        if agent_mode == "disembodied" and not sched.reached_once:
            err = (0.0, 0.0)
        sched, directive = scheduler_step(sched, state, task, n * sim.dt, err)
        if writer is not None:
            writer.write(state, u, rec.contact, rec.finger_impulse / (n * sim.dt),
                         mode=sched.mode.value, directive=str(directive),
                         min_cost=ctl.last.min_cost, ess=ctl.last.ess)
        if directive.kind is Kind.SET_MODE:
            mode = directive.mode
            ctl.reset()
        elif directive.kind is Kind.REQUEST_POSE:
            new_pose = propose(state, rng)
            if new_pose is not None:
                pose = new_pose
                target_local = target_to_local(obj, state.o, pose.ee_target(robot.finger_radius))
            mode = 1
            ctl.reset()
    res = _result(scenario, state, sched, blowup, "blowup" if blowup else _reason(sched))
    res.max_penetration = plant.max_penetration
    return res


def _reason(sched) -> str:
    for ev in reversed(sched.events):
        if ev["event"].startswith("stop:"):
            return ev["event"][5:]
    return ""


def _result(scenario: Scenario, state: SystemState, sched, blowup: bool, reason: str) -> EpisodeResult:
    task = scenario.task
    return EpisodeResult(
        o_0=task.o_0,
        o_end=state.o,
        o_star=task.o_star,
        reached=sched.reached_once,
        task_success=(not blowup) and task.fulfilled(state.o),
        progress=task.progress(state.o),
        n_interactions=sched.n_interactions,
        n_motions=min(sched.n_motions, sched.n_interactions),
        elapsed=sched.elapsed,
        blowup=blowup,
        reason=reason,
        events=list(sched.events),
    )
