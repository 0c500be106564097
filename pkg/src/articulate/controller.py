"""Sampling-based whole-body controller (MPPI) and its stage costs.

Targets handed to the controller are stored in the object's local frame as
``(a, b, dphi)`` so an interaction pose on the door moves with the door. The
cost helpers below take world-frame poses and exist for analysis and tests;
the compiled rollout cost evaluates the same terms in one pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _jit
from .kinematics import Pose2, forward_kinematics, reach, robot_object_collision
from .scene import ObjectModel, RobotModel, SystemState, Task, wrap_angle
from .simulator import SimParams, SimulationError, object_vector, robot_vector


@dataclass(frozen=True)
class ControllerConfig:
    K: int = 64
    horizon: float = 1.0
    lam: float = 1.0
    sigma_base: float = 0.3
    sigma_joint: float = 0.5
    replan_rate: float = 50.0
    W_o: float = 50.0
    W_t: tuple[float, float, float] = (10.0, 10.0, 2.0)
    w_c: float = 1000.0
    w_j: float = 100.0
    W_j: float = 10.0
    w_a: float = 100.0
    w_as: float = 50.0
    eps_c: float = 0.01
    mode: int = 1

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.mode not in (1, 2):
            raise ValueError("mode must be 1 or 2")
        weights = (self.W_o, *self.W_t, self.w_c, self.w_j, self.W_j, self.w_a, self.w_as)
        if any(w < 0 for w in weights):
            raise ValueError("cost weights must be non-negative")

    def n_steps(self, rollout_dt: float) -> int:
        n = self.horizon / rollout_dt
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("horizon must be an integer multiple of rollout_dt")
        return int(round(n))

    def sigma(self, robot: RobotModel) -> np.ndarray:
        if robot.kind == "free":
            return np.array([self.sigma_base, self.sigma_base, self.sigma_joint])
        return np.array([self.sigma_base] + [self.sigma_joint] * robot.n_links)

    def weight_vector(self) -> np.ndarray:
        return np.array(
            [self.W_o, *self.W_t, self.w_c, self.w_j, self.w_a, self.w_as, self.eps_c], dtype=float
        )


@dataclass
class ControlPlan:
    nominal: np.ndarray
    age: int = 0

    @classmethod
    def zeros(cls, n_steps: int, n_q: int) -> "ControlPlan":
        return cls(np.zeros((n_steps, n_q)))

    def copy(self) -> "ControlPlan":
        return ControlPlan(self.nominal.copy(), self.age)


# ----------------------------------------------------------------------------
# stage costs
# ----------------------------------------------------------------------------


def cost_object(o: float, o_star: float, W_o: float) -> float:
    return W_o * (o - o_star) ** 2


def cost_pose_reach(ee: Pose2, target: Pose2, W_t) -> float:
    e = np.array([ee.x - target.x, ee.z - target.z, wrap_angle(ee.phi - target.phi)])
    return float(e @ (np.asarray(W_t, dtype=float) * e))


def cost_collision(model: RobotModel, q, obj: ObjectModel, o: float, w_c: float,
                   clearance: float = 0.01) -> float:
    return w_c if robot_object_collision(model, q, obj, o, clearance) else 0.0


def cost_joint_limit(q, lower, upper, w_j: float, W_j) -> float:
    q = np.asarray(q, dtype=float)
    W_j = np.broadcast_to(np.asarray(W_j, dtype=float), q.shape)
    over = q > upper
    under = q < lower
    e = np.where(over, q - upper, np.where(under, q - lower, 0.0))
    return float(np.sum((over | under) * w_j + W_j * e * e))


def cost_arm_reach(model: RobotModel, q, w_a: float, w_as: float) -> float:
    if model.kind == "free":
        return 0.0
    r = reach(model, q)
    r_max = model.reach_limit
    return w_a + w_as * (r - r_max) if r > r_max else 0.0


def stage_cost(
    model: RobotModel,
    state: SystemState,
    obj: ObjectModel,
    target: Pose2,
    task: Task,
    cfg: ControllerConfig,
    mode: int | None = None,
) -> float:
    """l(x; m): c_c + c_j + c_a + c_t in mode 1, c_o + c_j + c_a + c_t in mode 2.

    A disembodied finger has no collision, limit or reach terms.
    """
    mode = cfg.mode if mode is None else mode
    ee, _ = forward_kinematics(model, state.q)
    cost = cost_pose_reach(ee, target, cfg.W_t)
    if mode == 2:
        cost += cost_object(state.o, task.o_star, cfg.W_o)
    if model.kind == "arm":
        cost += cost_joint_limit(state.q, model.lower, model.upper, cfg.w_j, cfg.W_j)
        cost += cost_arm_reach(model, state.q, cfg.w_a, cfg.w_as)
        if mode == 1:
            cost += cost_collision(model, state.q, obj, state.o, cfg.w_c, cfg.eps_c)
    return cost


# ----------------------------------------------------------------------------
# target frames
# ----------------------------------------------------------------------------


def target_to_local(obj: ObjectModel, o: float, pose: Pose2) -> np.ndarray:
    """World pose at object configuration o -> (a, b, dphi) in the moving frame."""
    origin, d, n = obj.frame(o)
    rel = pose.p - origin
    base = math.atan2(n[1], n[0])
    return np.array([rel @ d, rel @ n, wrap_angle(pose.phi - base)])


def target_to_world(obj: ObjectModel, o: float, local) -> Pose2:
    x, z, phi = _jit.target_world(obj.params(), float(o), np.asarray(local, dtype=float))
    return Pose2(x, z, phi)


# ----------------------------------------------------------------------------
# MPPI
# ----------------------------------------------------------------------------


def softmax_weights(costs, lam: float) -> np.ndarray:
    """Normalised exp(-(S - min S)/lam)."""
    costs = np.asarray(costs, dtype=float)
    finite = np.isfinite(costs)
    if not finite.any():
        raise SimulationError("all rollouts are non-finite")
    s = np.where(finite, costs, np.inf)
    w = np.exp(-(s - s.min()) / lam)
    return w / w.sum()


def mppi_update(nominal, samples, costs, lam: float, vmax) -> tuple[np.ndarray, np.ndarray]:
    """Weighted average of the samples, clamped; returns (plan, weights)."""
    w = softmax_weights(costs, lam)
    plan = np.tensordot(w, samples, axes=1)
    np.clip(plan, -vmax, vmax, out=plan)
    return plan, w


def shift_plan(plan: np.ndarray) -> np.ndarray:
    out = np.empty_like(plan)
    out[:-1] = plan[1:]
    out[-1] = plan[-1]
    return out


@dataclass
class StepDiagnostics:
    min_cost: float
    mean_cost: float
    ess: float


@dataclass
class MPPIController:
    """MPPI over the kinematic rollout model for one robot/object pair."""

    robot: RobotModel
    obj: ObjectModel
    cfg: ControllerConfig = field(default_factory=ControllerConfig)
    sim: SimParams = field(default_factory=SimParams)

    def __post_init__(self) -> None:
        self.H = self.cfg.n_steps(self.sim.rollout_dt)
        self.rp = robot_vector(self.robot, self.sim)
        self.op = object_vector(self.obj, self.sim)
        self.mov = self.obj.movable_array()
        self.stat = self.obj.static_array()
        self.sp = self.sim.vector()
        self.lo = self.robot.lower
        self.hi = self.robot.upper
        self.vmax = self.robot.vmax
        self.sigma = self.cfg.sigma(self.robot)
        self.cw = self.cfg.weight_vector()
        self.wjd = np.full(self.robot.n_q, float(self.cfg.W_j))
        self.costs = np.empty(self.cfg.K)
        self.plan = ControlPlan.zeros(self.H, self.robot.n_q)
        self.last = StepDiagnostics(math.nan, math.nan, math.nan)

    def reset(self) -> None:
        self.plan = ControlPlan.zeros(self.H, self.robot.n_q)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        x = rng.standard_normal((self.cfg.K, self.H, self.robot.n_q))
        x *= self.sigma
        x += self.plan.nominal
        return np.clip(x, -self.vmax, self.vmax, out=x)

    def evaluate(self, state: SystemState, samples: np.ndarray, o_star: float, target_local,
                 mode: int) -> np.ndarray:
        costs = np.empty(samples.shape[0])
        _jit.rollout_costs(
            self.rp, self.lo, self.hi, self.op, self.mov, self.stat, self.sp,
            state.q, state.o, state.do, samples, self.sim.rollout_dt, float(o_star),
            np.asarray(target_local, dtype=float), self.cw, self.wjd, int(mode), costs,
        )
        return costs

    def step(self, state: SystemState, o_star: float, target_local, rng: np.random.Generator,
             mode: int | None = None) -> np.ndarray:
        """One planning iteration; returns the velocity reference to apply now."""
        mode = self.cfg.mode if mode is None else mode
        samples = self.sample(rng)
        costs = self.evaluate(state, samples, o_star, target_local, mode)
        plan, w = mppi_update(self.plan.nominal, samples, costs, self.cfg.lam, self.vmax)
        fin = costs[np.isfinite(costs)]
        self.last = StepDiagnostics(float(fin.min()), float(fin.mean()), float(1.0 / np.sum(w * w)))
        u0 = plan[0].copy()
        self.plan = ControlPlan(shift_plan(plan), 0)
        return u0


def mppi_step(
    state: SystemState,
    plan: ControlPlan,
    cfg: ControllerConfig,
    sim: SimParams,
    rng: np.random.Generator,
    robot: RobotModel,
    obj: ObjectModel,
    o_star: float,
    target_local,
) -> tuple[np.ndarray, ControlPlan]:
    """Functional form of :meth:`MPPIController.step`; plan is not modified."""
    ctl = MPPIController(robot, obj, cfg, sim)
    ctl.plan = plan.copy()
    u0 = ctl.step(state, o_star, target_local, rng)
    return u0, ctl.plan
