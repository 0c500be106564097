"""Ground-truth plant and the controller's coarse rollout model.

The plant integrates full rigid-body arm dynamics driven by a computed-torque
PI velocity controller at ``dt``; finger/object contact is a penalty
spring-damper with regularised Coulomb friction. The object joint is updated
implicitly so its stiff damping and friction stay stable.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from . import _jit
from .scene import ObjectModel, RobotModel, SystemState


class SimulationError(RuntimeError):
    """The integrated state became non-finite."""


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.0015
    contact_stiffness: float = 5e4
    contact_damping: float = 200.0
    surface_friction: float = 0.01
    rollout_dt: float = 0.02
    gravity: float = 9.81
    tangential_smoothing: float = 1e-3
    integral_clamp: float = 10.0

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.rollout_dt < self.dt:
            raise ValueError("need dt > 0 and rollout_dt >= dt")
        if self.surface_friction < 0:
            raise ValueError("surface friction must be non-negative")

    def vector(self) -> np.ndarray:
        return np.array(
            [
                self.dt,
                self.contact_stiffness,
                self.contact_damping,
                self.surface_friction,
                self.rollout_dt,
                self.tangential_smoothing,
                self.integral_clamp,
            ]
        )


@dataclass(frozen=True)
class Contact:
    point: np.ndarray
    normal: np.ndarray
    penetration: float
    rel_velocity: np.ndarray
    movable: bool = True
    # d(contact point)/do, zero for static contacts
    point_jacobian: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class LowLevelState:
    integral_error: np.ndarray
    kd: np.ndarray
    ki: np.ndarray
    u_prev: np.ndarray

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.kd) <= 0) or np.any(np.asarray(self.ki) <= 0):
            raise ValueError("PI gains must be strictly positive")

    @classmethod
    def initial(cls, robot: RobotModel, u_prev=None) -> "LowLevelState":
        n = robot.n_q
        return cls(
            np.zeros(n),
            np.array(robot.kd, dtype=float),
            np.array(robot.ki, dtype=float),
            np.zeros(n) if u_prev is None else np.asarray(u_prev, dtype=float).copy(),
        )

    def copy(self) -> "LowLevelState":
        return LowLevelState(
            self.integral_error.copy(), self.kd.copy(), self.ki.copy(), self.u_prev.copy()
        )


def robot_vector(robot: RobotModel, sim: SimParams) -> np.ndarray:
    rp = robot.params()
    rp[6] = sim.gravity
    return rp


def object_vector(obj: ObjectModel, sim: SimParams) -> np.ndarray:
    op = obj.params()
    op[9] = sim.gravity
    return op


def contact_query(
    finger_center,
    finger_radius: float,
    obj: ObjectModel,
    o: float,
    finger_velocity=(0.0, 0.0),
    do: float = 0.0,
    movable_only: bool = False,
) -> Contact | None:
    """Deepest disc/segment overlap, or None when the finger is clear."""
    out = np.empty(8)
    _jit.contact_query_into(
        obj.params(), obj.movable_array(), obj.static_array(),
        float(finger_center[0]), float(finger_center[1]), float(finger_radius),
        float(o), movable_only, out,
    )
    if out[0] == _jit.CONTACT_NONE:
        return None
    jac = out[6:8].copy()
    vrel = np.asarray(finger_velocity, dtype=float) - jac * do
    return Contact(out[4:6].copy(), out[2:4].copy(), float(out[1]), vrel,
                   out[0] == _jit.CONTACT_MOVABLE, jac)


def contact_force(contact: Contact, params: SimParams = SimParams()) -> np.ndarray:
    """Penalty force on the finger; the object receives the opposite force."""
    fx, fz = _jit.contact_force(
        contact.penetration,
        contact.normal[0],
        contact.normal[1],
        contact.rel_velocity[0],
        contact.rel_velocity[1],
        params.contact_stiffness,
        params.contact_damping,
        params.surface_friction,
        params.tangential_smoothing,
    )
    return np.array([fx, fz])


def object_joint_step(obj: ObjectModel, o: float, do: float, tau: float, dt: float,
                      gravity: float = 9.81) -> tuple[float, float]:
    """One implicit step of I*o'' = tau - b*o' - f*tanh(o'/eps) (- gravity)."""
    op = obj.params()
    op[9] = gravity
    o1, v1 = _jit.object_step(op, float(o), float(do), float(tau), float(dt), 0.0, 0.0, 0.0)
    return float(o1), float(v1)


def pi_torque(robot: RobotModel, q, dq, u, ll: LowLevelState, dt: float,
              sim: SimParams = SimParams()) -> tuple[np.ndarray, LowLevelState]:
    """Dynamically compensated PI torque for velocity reference u."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape != (robot.n_q,):
        raise ValueError("velocity reference has the wrong size")
    n = robot.n_q
    M, C, g = np.empty((n, n)), np.empty((n, n)), np.empty(n)
    _jit.dynamics_into(robot_vector(robot, sim), q, dq, M, C, g,
                       np.empty((n, n, n)), np.empty((2, n)), np.empty((2, n, n)))
    new = ll.copy()
    tau = np.empty(n)
    _jit.pi_torque_into(M, C, g, dq, u, new.u_prev, new.integral_error, new.kd, new.ki,
                        float(dt), sim.integral_clamp, tau)
    new.u_prev = u.copy()
    return tau, new


@dataclass
class StepRecord:
    contact: bool
    contact_kind: int
    max_penetration: float
    finger_impulse: np.ndarray
    object_impulse: float


class Plant:
    """Ground-truth system bundle with preallocated kernel inputs."""

    def __init__(self, robot: RobotModel, obj: ObjectModel, sim: SimParams = SimParams()):
        self.robot = robot
        self.object = obj
        self.sim = sim
        self.rp = robot_vector(robot, sim)
        self.op = object_vector(obj, sim)
        self.mov = obj.movable_array()
        self.stat = obj.static_array()
        self.sp = sim.vector()
        self.lo = robot.lower
        self.hi = robot.upper
        self.max_penetration = 0.0

    def advance(self, state: SystemState, u, ll: LowLevelState, n_steps: int) -> StepRecord:
        """Advance state and ll in place by n_steps plant steps holding u."""
        obj = np.array([state.o, state.do])
        rec = np.zeros(6)
        ok = _jit.gt_advance(
            self.rp, self.lo, self.hi, self.op, self.mov, self.stat, self.sp,
            ll.kd, ll.ki, state.q, state.dq, obj, np.asarray(u, dtype=float),
            ll.u_prev, ll.integral_error, int(n_steps), rec,
        )
        state.o, state.do = float(obj[0]), float(obj[1])
        state.t += n_steps * self.sim.dt
        if not ok or not state.is_finite():
            raise SimulationError(f"non-finite state at t={state.t:.4f}")
        self.max_penetration = max(self.max_penetration, rec[0])
        return StepRecord(rec[1] > 0, int(rec[5]), float(rec[0]), rec[2:4].copy(), float(rec[4]))


def step(
    robot: RobotModel,
    obj: ObjectModel,
    state: SystemState,
    u,
    sim: SimParams = SimParams(),
    ll: LowLevelState | None = None,
) -> tuple[SystemState, LowLevelState, StepRecord]:
    """One plant step of length sim.dt; inputs are not modified."""
    new = state.copy()
    new_ll = (ll or LowLevelState.initial(robot)).copy()
    rec = Plant(robot, obj, sim).advance(new, u, new_ll, 1)
    return new, new_ll, rec


@dataclass
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    o: np.ndarray
    do: np.ndarray
    ee: np.ndarray  # (H, 3) finger x, z, phi

    def states(self) -> list[SystemState]:
        dq = np.zeros(self.q.shape[1])
        return [SystemState(self.q[i], self.o[i], dq, self.do[i], self.t[i])
                for i in range(len(self.t))]


def rollout(
    robot: RobotModel,
    obj: ObjectModel,
    state: SystemState,
    controls,
    sim: SimParams = SimParams(),
) -> Trajectory:
    """Coarse forward simulation used inside the controller (dq = u exactly)."""
    controls = np.ascontiguousarray(controls, dtype=float)
    if controls.ndim != 2 or controls.shape[1] != robot.n_q:
        raise ValueError("controls must have shape (H, n_q)")
    H = controls.shape[0]
    h = sim.rollout_dt
    tq = np.empty((H, robot.n_q))
    to = np.empty(H)
    tdo = np.empty(H)
    tpts = np.empty((H, robot.n_links + 1, 2))
    tphi = np.empty(H)
    _jit.rollout_into(robot_vector(robot, sim), object_vector(obj, sim), obj.movable_array(),
                      sim.vector(), state.q.astype(float), state.o, state.do, controls, h,
                      tq, to, tdo, tpts, tphi)
    if not (np.all(np.isfinite(tq)) and np.all(np.isfinite(to))):
        raise SimulationError("rollout diverged")
    ee = np.column_stack([tpts[:, -1, 0], tpts[:, -1, 1], tphi])
    t = state.t + h * np.arange(1, H + 1)
    return Trajectory(t, tq, to, tdo, ee)


class TrajectoryWriter:
    """Line-delimited trajectory records for later analysis."""

    SCHEMA = "articulate.trajectory/1"

    def __init__(self, fh: IO[str]):
        self.fh = fh
        self.fh.write(json.dumps({"schema": self.SCHEMA}) + "\n")

    def write(self, state: SystemState, u, contact: bool, force=(0.0, 0.0), **extra) -> None:
        rec = {
            "t": round(state.t, 6),
            "q": [float(v) for v in state.q],
            "o": state.o,
            "u": [float(v) for v in u],
            "contact": bool(contact),
            "force": [float(f) for f in force],
        }
        rec.update(extra)
        self.fh.write(json.dumps(rec) + "\n")


def read_trajectory(path: str | Path) -> list[dict]:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("schema") != TrajectoryWriter.SCHEMA:
        raise ValueError(f"{path} is not a trajectory file")
    return lines[1:]


def mechanical_energy_door(obj: ObjectModel, do: float, penetration: float,
                           stiffness: float) -> float:
    """Door kinetic energy plus elastic contact energy."""
    inertia = obj.door_mass * obj.door_length**2 / 3.0 if obj.joint_type == "revolute" \
        else obj.door_mass
    return 0.5 * inertia * do * do + 0.5 * stiffness * penetration * penetration


def iter_finite(values: Iterable[float]) -> bool:
    return all(math.isfinite(v) for v in values)
