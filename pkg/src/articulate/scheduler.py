"""Finite-state task scheduler: reaching, interacting, observing and termination."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .scene import DEG, SystemState, Task


class Mode(enum.Enum):
    REACHING = "reaching"
    INTERACTING = "interacting"
    OBSERVING = "observing"
    DONE = "done"
    FAILED = "failed"


class Kind(enum.Enum):
    REQUEST_POSE = "request_pose"
    SET_MODE = "set_mode"
    STOP = "stop"
    CONTINUE = "continue"


@dataclass(frozen=True)
class Directive:
    kind: Kind
    mode: int | None = None
    success: bool | None = None
    reason: str = ""

    def __str__(self) -> str:
        if self.kind is Kind.SET_MODE:
            return f"SetMode({self.mode})"
        if self.kind is Kind.STOP:
            return f"Stop({'success' if self.success else 'failure'}: {self.reason})"
        return {"request_pose": "RequestPose", "continue": "Continue"}[self.kind.value]


CONTINUE = Directive(Kind.CONTINUE)
REQUEST_POSE = Directive(Kind.REQUEST_POSE)


@dataclass(frozen=True)
class SchedulerConfig:
    # per pose reference; observing before a re-reach counts toward it
    reach_timeout: float = 40.0
    interact_timeout: float = 300.0
    stagnation_window: float = 5.0
    improvement_eps: float = 0.5 * DEG
    max_pose_updates: int = 8
    reach_pos_tol: float = 0.02
    reach_ang_tol: float = 10.0 * DEG
    observe_duration: float = 2.0
    # closed loop only: give up on a pose that cannot be reached in this time
    reach_attempt_timeout: float = 15.0
    closed_loop: bool = True
    # optional early exit when progress toward o* exceeds theta
    stop_on_progress: bool = False
    # when False, early exits wait until the pose has been reached once so that
    # the reached flag is measured rather than cut short
    stop_while_reaching: bool = True
    # abandon reaching when the pose error stops shrinking (0 disables)
    reach_stall_window: float = 0.0
    reach_stall_pos: float = 0.01
    reach_stall_ang: float = 2.0 * DEG

    def __post_init__(self) -> None:
        if self.reach_timeout <= 0 or self.interact_timeout <= 0:
            raise ValueError("budgets must be positive")
        if self.max_pose_updates < 1:
            raise ValueError("max_pose_updates must be at least 1")


@dataclass
class SchedulerState:
    cfg: SchedulerConfig
    mode: Mode | None = None
    t_last_improvement: float = 0.0
    best_gap: float = math.inf
    # gap when the stagnation clock was last reset
    ref_gap: float = math.inf
    n_interactions: int = 0
    n_motions: int = 0
    reach_time: float = 0.0
    attempt_reach_time: float = 0.0
    interact_time: float = 0.0
    phase_time: float = 0.0
    o_at_interaction: float = math.nan
    counted_motion: bool = False
    best_pose_error: tuple[float, float] = (math.inf, math.inf)
    t_reach_progress: float = 0.0
    reached_once: bool = False
    events: list = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return self.mode in (Mode.DONE, Mode.FAILED)

    @property
    def elapsed(self) -> float:
        return self.reach_time + self.interact_time


def new_scheduler(cfg: SchedulerConfig = SchedulerConfig()) -> SchedulerState:
    return SchedulerState(cfg)


def _log(s: SchedulerState, t: float, what: str) -> None:
    s.events.append({"t": round(t, 6), "event": what})


def _stop(s: SchedulerState, t: float, success: bool, reason: str) -> Directive:
    s.mode = Mode.DONE if success else Mode.FAILED
    _log(s, t, f"stop:{reason}")
    return Directive(Kind.STOP, success=success, reason=reason)


def _request(s: SchedulerState, t: float) -> Directive:
    s.n_interactions += 1
    s.counted_motion = False
    s.phase_time = 0.0
    s.attempt_reach_time = 0.0
    s.best_pose_error = (math.inf, math.inf)
    s.t_reach_progress = t
    _log(s, t, "request_pose")
    return REQUEST_POSE


def scheduler_step(
    s: SchedulerState,
    state: SystemState,
    task: Task,
    dt: float,
    pose_error: tuple[float, float] | None = None,
) -> tuple[SchedulerState, Directive]:
    """Advance the state machine by dt of simulated time; mutates and returns s.

    pose_error is (position error, angle error) of the end effector against
    the current reference, needed while reaching.
    """
    cfg = s.cfg
    t = state.t
    if s.finished:
        return s, Directive(Kind.STOP, success=s.mode is Mode.DONE, reason="absorbed")
    gap = abs(state.o - task.o_star)
    if s.mode is None:
        s.mode = Mode.REACHING
        s.best_gap = s.ref_gap = gap
        s.t_last_improvement = t
        return s, _request(s, t)

    # account time for the phase that just elapsed
    if s.mode is Mode.INTERACTING:
        s.interact_time += dt
    else:
        s.reach_time += dt
        s.attempt_reach_time += dt
    s.phase_time += dt

    if gap < s.ref_gap - cfg.improvement_eps:
        s.t_last_improvement = t
        s.ref_gap = gap
    if gap < s.best_gap:
        s.best_gap = gap
    if s.mode is Mode.INTERACTING and not s.counted_motion:
        if abs(state.o - s.o_at_interaction) >= task.theta:
            s.n_motions += 1
            s.counted_motion = True

    may_stop = cfg.stop_while_reaching or s.reached_once
    if may_stop and task.fulfilled(state.o):
        return s, _stop(s, t, True, "fulfilled")
    if may_stop and cfg.stop_on_progress and task.progress(state.o) > task.theta:
        return s, _stop(s, t, True, "progress")
    if s.attempt_reach_time >= cfg.reach_timeout - 1e-9:
        return s, _stop(s, t, False, "reach budget")
    if s.interact_time >= cfg.interact_timeout - 1e-9:
        return s, _stop(s, t, False, "interact budget")

    if s.mode is Mode.REACHING:
        if pose_error is not None and pose_error[0] < cfg.reach_pos_tol \
                and pose_error[1] < cfg.reach_ang_tol:
            s.mode = Mode.INTERACTING
            s.phase_time = 0.0
            s.reached_once = True
            s.o_at_interaction = state.o
            s.t_last_improvement = t
            s.ref_gap = gap
            _log(s, t, "reached")
            return s, Directive(Kind.SET_MODE, mode=2)
        if pose_error is not None:
            bp, ba = s.best_pose_error
            if pose_error[0] < bp - cfg.reach_stall_pos or pose_error[1] < ba - cfg.reach_stall_ang:
                s.t_reach_progress = t
                s.best_pose_error = (min(bp, pose_error[0]), min(ba, pose_error[1]))
        if cfg.reach_stall_window > 0 and t - s.t_reach_progress >= cfg.reach_stall_window:
            if not cfg.closed_loop:
                return s, _stop(s, t, False, "reach stalled")
        if cfg.closed_loop and s.phase_time >= cfg.reach_attempt_timeout - 1e-9:
            if s.n_interactions >= cfg.max_pose_updates:
                return s, _stop(s, t, False, "max pose updates")
            return s, _request(s, t)
        return s, CONTINUE

    if s.mode is Mode.INTERACTING:
        if cfg.closed_loop and t - s.t_last_improvement >= cfg.stagnation_window - 1e-9:
            if s.n_interactions >= cfg.max_pose_updates:
                return s, _stop(s, t, False, "max pose updates")
            s.mode = Mode.OBSERVING
            _log(s, t, "stagnation")
            return s, _request(s, t)
        return s, CONTINUE

    # observing: hold the raised arm, then reach for the new pose
    if s.phase_time >= cfg.observe_duration - 1e-9:
        s.mode = Mode.REACHING
        s.phase_time = 0.0
        _log(s, t, "observed")
        return s, Directive(Kind.SET_MODE, mode=1)
    return s, CONTINUE


def with_budgets(cfg: SchedulerConfig, reach: float, interact: float) -> SchedulerConfig:
    return replace(cfg, reach_timeout=reach, interact_timeout=interact)
