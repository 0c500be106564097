"""World description: robot, articulated object, state, task and scenario sampling.

The world is a vertical side-view plane (x horizontal, z up). The object sits
at x = 0 and its movable part opens toward -x, where the robot stands. The
robot is a carriage translating along x with a planar revolute arm mounted at
``base_height``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import _jit

JointType = Literal["revolute", "prismatic"]
TaskKind = Literal["open", "close"]

DEG = math.pi / 180.0


class ScenarioError(RuntimeError):
    """Raised when scenario bounds admit no valid sample."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return float(_jit.wrap(float(a)))


@dataclass(frozen=True)
class RobotModel:
    """Mobile manipulator: prismatic base plus a planar revolute chain.

    ``kind="free"`` describes a disembodied finger whose configuration is
    (x, z, phi) directly.
    """

    link_lengths: tuple[float, ...] = (0.4, 0.4, 0.3)
    link_masses: tuple[float, ...] = (1.0, 1.0, 0.5)
    base_mass: float = 10.0
    base_height: float = 0.5
    finger_radius: float = 0.03
    armature: float = 0.1
    joint_limits: tuple[tuple[float, float], ...] = (
        (-4.0, -0.45),
        (-1.6, 2.4),
        (-2.6, 2.6),
        (-2.2, 2.2),
    )
    velocity_limits: tuple[float, ...] = (0.5, 1.0, 1.0, 1.0)
    r_max: float | None = None
    gravity: float = 9.81
    kd: tuple[float, ...] = (400.0, 20.0, 20.0, 20.0)
    ki: tuple[float, ...] = (4000.0, 400.0, 400.0, 400.0)
    kind: Literal["arm", "free"] = "arm"

    def __post_init__(self) -> None:
        if self.kind == "arm":
            if len(self.link_masses) != len(self.link_lengths):
                raise ValueError("link_masses and link_lengths differ in length")
            if any(ln <= 0 for ln in self.link_lengths):
                raise ValueError("link lengths must be positive")
        for name in ("joint_limits", "velocity_limits", "kd", "ki"):
            if len(getattr(self, name)) != self.n_q:
                raise ValueError(f"{name} needs {self.n_q} entries")
        if any(lo >= hi for lo, hi in self.joint_limits):
            raise ValueError("joint limits need lower < upper")
        if self.kind == "arm" and self.reach_limit > sum(self.link_lengths) + 1e-12:
            raise ValueError("r_max exceeds the total link length")

    @property
    def base_dof(self) -> int:
        return 1 if self.kind == "arm" else 3

    @property
    def n_links(self) -> int:
        return len(self.link_lengths) if self.kind == "arm" else 0

    @property
    def n_q(self) -> int:
        return self.n_links + 1 if self.kind == "arm" else 3

    @property
    def reach_limit(self) -> float:
        if self.kind == "free":
            return math.inf
        if self.r_max is not None:
            return self.r_max
        return 0.95 * sum(self.link_lengths)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits], dtype=float)

    @property
    def vmax(self) -> np.ndarray:
        return np.array(self.velocity_limits, dtype=float)

    def params(self) -> np.ndarray:
        """Flat parameter vector consumed by the compiled kernels."""
        head = [
            0.0 if self.kind == "arm" else 1.0,
            float(self.n_links),
            self.base_height,
            self.base_mass,
            self.finger_radius,
            self.armature,
            self.gravity,
            self.reach_limit if self.kind == "arm" else 1e9,
        ]
        tail = list(self.link_lengths) + list(self.link_masses) if self.kind == "arm" else []
        return np.array(head + tail, dtype=float)

    def observation_config(self, base_x: float) -> np.ndarray:
        """Raised arm pose used at episode start and while observing."""
        if self.kind == "free":
            return np.array([base_x, self.base_height + 0.5, 0.0])
        arm = [1.5, -1.0, -1.0] + [0.0] * max(0, self.n_links - 3)
        q = np.array([base_x] + arm[: self.n_links], dtype=float)
        return np.clip(q, self.lower, self.upper)

    @classmethod
    def free_finger(
        cls,
        finger_radius: float = 0.03,
        mass: float = 1.0,
        linear_speed: float = 1.0,
        angular_speed: float = 1.5,
        gravity: float = 9.81,
    ) -> "RobotModel":
        """Disembodied finger with the arm's end-effector speed envelope."""
        big = 50.0
        return cls(
            link_lengths=(),
            link_masses=(),
            base_mass=mass,
            finger_radius=finger_radius,
            armature=0.05,
            joint_limits=((-big, big), (-big, big), (-big, big)),
            velocity_limits=(linear_speed, linear_speed, angular_speed),
            gravity=gravity,
            kd=(20.0, 20.0, 1.0),
            ki=(200.0, 200.0, 10.0),
            kind="free",
        )


@dataclass(frozen=True)
class ObjectModel:
    """A 1-DOF articulated object (revolute door or prismatic drawer).

    ``movable`` holds the movable geometry in local (a, b) coordinates where a
    runs along the panel from the joint anchor and b along the outer normal.
    Segment 0 is always the panel whose surface is sampled for interaction.
    """

    joint_type: JointType = "revolute"
    anchor: tuple[float, float] = (0.0, 0.85)
    door_length: float = 0.5
    door_mass: float = 3.0
    o_max: float = 90.0 * DEG
    joint_damping: float = 20.0
    joint_coulomb_friction: float = 40.0
    static_geometry: tuple[tuple[float, float, float, float], ...] = ()
    movable: tuple[tuple[float, float, float, float], ...] = ()
    gravity_on_joint: bool = False
    gravity: float = 9.81
    friction_smoothing: float = 0.01

    def __post_init__(self) -> None:
        if self.door_length <= 0 or self.o_max <= 0:
            raise ValueError("door_length and o_max must be positive")
        if self.joint_damping < 0 or self.joint_coulomb_friction < 0:
            raise ValueError("damping and friction must be non-negative")
        if not self.movable:
            object.__setattr__(self, "movable", ((0.0, 0.0, self.door_length, 0.0),))

    def params(self) -> np.ndarray:
        return np.array(
            [
                0.0 if self.joint_type == "revolute" else 1.0,
                self.anchor[0],
                self.anchor[1],
                self.door_length,
                self.o_max,
                self.door_mass,
                self.joint_damping,
                self.joint_coulomb_friction,
                1.0 if self.gravity_on_joint else 0.0,
                self.gravity,
                self.friction_smoothing,
            ],
            dtype=float,
        )

    def movable_array(self) -> np.ndarray:
        return np.array(self.movable, dtype=float).reshape(-1, 4)

    def static_array(self) -> np.ndarray:
        return np.array(self.static_geometry, dtype=float).reshape(-1, 4)

    def frame(self, o: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(origin, panel direction, outer normal) of the movable part at o."""
        ox, oz, dx, dz, nx, nz = _jit.object_frame(self.params(), float(o))
        return np.array([ox, oz]), np.array([dx, dz]), np.array([nx, nz])

    def movable_segments(self, o: float) -> np.ndarray:
        out = np.empty((len(self.movable), 4))
        _jit.movable_world(self.params(), self.movable_array(), float(o), out)
        return out

    def segments(self, o: float) -> np.ndarray:
        """All object segments in world coordinates, movable first."""
        return np.vstack([self.movable_segments(o), self.static_array()])

    @classmethod
    def oven(
        cls,
        door_length: float = 0.5,
        hinge_height: float = 0.85,
        depth: float = 0.5,
        handle: tuple[float, float, float] | None = None,
        **kw,
    ) -> "ObjectModel":
        """Bottom-hinged door in front of a cavity, on a cabinet.

        ``handle=(s_lo, s_hi, standoff)`` adds a bar parallel to the door on
        its outer side.
        """
        h, L = hinge_height, door_length
        static = (
            (-6.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, h),
            (0.0, h, depth, h),
            (depth, h, depth, h + L),
            (depth, h + L, 0.0, h + L),
        )
        movable = [(0.0, 0.0, L, 0.0)]
        if handle is not None:
            s_lo, s_hi, standoff = handle
            movable.append((s_lo * L, standoff, s_hi * L, standoff))
        return cls(
            joint_type="revolute",
            anchor=(0.0, h),
            door_length=L,
            static_geometry=static,
            movable=tuple(movable),
            **kw,
        )

    @classmethod
    def drawer(
        cls,
        front_height: float = 0.3,
        bottom_height: float = 0.6,
        depth: float = 0.4,
        travel: float = 0.4,
        **kw,
    ) -> "ObjectModel":
        h, L = bottom_height, front_height
        static = (
            (-6.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, h),
            (0.0, h + L, 0.0, h + L + 0.2),
            (0.0, h + L, depth + 0.1, h + L),
        )
        movable = ((0.0, 0.0, L, 0.0), (0.0, 0.0, 0.0, -depth))
        return cls(
            joint_type="prismatic",
            anchor=(0.0, h),
            door_length=L,
            o_max=travel,
            static_geometry=static,
            movable=movable,
            **kw,
        )


@dataclass
class SystemState:
    """Robot and object configuration with velocities at time t."""

    q: np.ndarray
    o: float
    dq: np.ndarray
    do: float = 0.0
    t: float = 0.0

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float).copy()
        self.dq = np.asarray(self.dq, dtype=float).copy()
        self.o = float(self.o)
        self.do = float(self.do)

    def copy(self) -> "SystemState":
        return SystemState(self.q, self.o, self.dq, self.do, self.t)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.q))
            and np.all(np.isfinite(self.dq))
            and math.isfinite(self.o)
            and math.isfinite(self.do)
        )


@dataclass(frozen=True)
class Task:
    o_0: float
    o_star: float
    kind: TaskKind = "open"
    theta: float = 5.0 * DEG

    @property
    def distance(self) -> float:
        return abs(self.o_star - self.o_0)

    def progress(self, o: float) -> float:
        """Reduction of the distance to the target relative to the start."""
        return abs(self.o_0 - self.o_star) - abs(o - self.o_star)

    def fulfilled(self, o: float) -> bool:
        return abs(o - self.o_star) <= self.theta


@dataclass(frozen=True)
class ScenarioBounds:
    object_scale_range: tuple[float, float] = (0.45, 0.55)
    anchor_x: float = 0.0
    anchor_height_range: tuple[float, float] = (0.75, 0.95)
    agent_distance_range: tuple[float, float] = (1.75, 3.0)
    rest_init_prob: float = 0.5
    min_task_distance: float = 20.0 * DEG
    joint_type: JointType = "revolute"
    nominal_length: float = 1.0
    # pull bar on the outer face: (start, end) as panel fractions, standoff in m
    handle: tuple[float, float, float] | None = (0.7, 0.9, 0.08)

    def __post_init__(self) -> None:
        for name in ("object_scale_range", "anchor_height_range", "agent_distance_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty")
        if not 0.0 <= self.rest_init_prob <= 1.0:
            raise ValueError("rest_init_prob must lie in [0, 1]")


@dataclass(frozen=True)
class Scenario:
    robot: RobotModel
    object: ObjectModel
    task: Task
    q_init: np.ndarray = field(compare=False)
    rest_init: bool = False
    scale: float = 0.5
    distance: float = 2.0

    def initial_state(self) -> SystemState:
        return SystemState(self.q_init, self.task.o_0, np.zeros_like(self.q_init), 0.0, 0.0)


def make_object(bounds: ScenarioBounds, scale: float, height: float, **kw) -> ObjectModel:
    length = scale * bounds.nominal_length
    if bounds.joint_type == "revolute":
        obj = ObjectModel.oven(door_length=length, hinge_height=height, handle=bounds.handle, **kw)
    else:
        obj = ObjectModel.drawer(front_height=length, bottom_height=height, **kw)
    if bounds.anchor_x != 0.0:
        obj = _shift_object(obj, bounds.anchor_x)
    return obj


def _shift_object(obj: ObjectModel, dx: float) -> ObjectModel:
    static = tuple((a + dx, b, c + dx, d) for a, b, c, d in obj.static_geometry)
    return replace(obj, anchor=(obj.anchor[0] + dx, obj.anchor[1]), static_geometry=static)


def sample_task(rng: np.random.Generator, o_max: float, kind: TaskKind, bounds: ScenarioBounds,
                theta: float = 5.0 * DEG) -> tuple[Task, bool]:
    """Draw (o_0, o*) with the rest-initialisation rule and minimum distance."""
    dmin = bounds.min_task_distance
    if dmin > o_max:
        raise ScenarioError("minimum task distance exceeds the joint range")
    rest = bool(rng.random() < bounds.rest_init_prob)
    for _ in range(1000):
        if rest:
            o0 = 0.0 if kind == "open" else o_max
        else:
            o0 = float(rng.uniform(0.0, o_max))
        if kind == "open":
            if o_max - o0 < dmin:
                continue
            ostar = float(rng.uniform(o0 + dmin, o_max))
        else:
            if o0 < dmin:
                continue
            ostar = float(rng.uniform(0.0, o0 - dmin))
        return Task(o0, ostar, kind, theta), rest
    raise ScenarioError("task rejection sampling failed after 1000 draws")


def sample_scenario(
    rng: np.random.Generator,
    bounds: ScenarioBounds = ScenarioBounds(),
    task_kind: TaskKind = "open",
    robot: RobotModel = RobotModel(),
    theta: float = 5.0 * DEG,
    object_kw: dict | None = None,
) -> Scenario:
    """Draw a randomized scenario: object size/placement, robot placement, task."""
    scale = float(rng.uniform(*bounds.object_scale_range))
    height = float(rng.uniform(*bounds.anchor_height_range))
    distance = float(rng.uniform(*bounds.agent_distance_range))
    obj = make_object(bounds, scale, height, **(object_kw or {}))
    task, rest = sample_task(rng, obj.o_max, task_kind, bounds, theta)
    base_x = obj.anchor[0] - distance
    q0 = robot.observation_config(base_x)
    return Scenario(robot, obj, task, q0, rest, scale, distance)


def fixed_task_scenario(
    rng: np.random.Generator,
    bounds: ScenarioBounds,
    task_kind: TaskKind,
    robot: RobotModel = RobotModel(),
    theta: float = 5.0 * DEG,
    object_kw: dict | None = None,
) -> Scenario:
    """Full opening (0 -> o_max) or closing (o_max -> 0) on a random object."""
    scale = float(rng.uniform(*bounds.object_scale_range))
    height = float(rng.uniform(*bounds.anchor_height_range))
    distance = float(rng.uniform(*bounds.agent_distance_range))
    obj = make_object(bounds, scale, height, **(object_kw or {}))
    if task_kind == "open":
        task = Task(0.0, obj.o_max, "open", theta)
    else:
        task = Task(obj.o_max, 0.0, "close", theta)
    q0 = robot.observation_config(obj.anchor[0] - distance)
    return Scenario(robot, obj, task, q0, True, scale, distance)
