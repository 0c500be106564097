"""Forward kinematics, Jacobians, dynamics terms, IK reachability and collisions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _jit
from .scene import ObjectModel, RobotModel, wrap_angle


@dataclass(frozen=True)
class Pose2:
    """Planar pose: position (x, z) and orientation phi, stored wrapped."""

    x: float
    z: float
    phi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    @property
    def p(self) -> np.ndarray:
        return np.array([self.x, self.z])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.z, self.phi])

    def error_to(self, other: "Pose2") -> tuple[float, float]:
        """(position error, absolute wrapped angle error)."""
        return (
            math.hypot(self.x - other.x, self.z - other.z),
            abs(wrap_angle(self.phi - other.phi)),
        )


@dataclass(frozen=True)
class DynamicsTerms:
    M: np.ndarray
    C: np.ndarray
    g: np.ndarray


def _points(model: RobotModel, q) -> tuple[np.ndarray, float]:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_q,):
        raise ValueError(f"expected {model.n_q} joint values, got {q.shape}")
    pts = np.empty((model.n_links + 1, 2))
    phi = _jit.fk_points(model.params(), q, pts)
    return pts, phi


def forward_kinematics(model: RobotModel, q) -> tuple[Pose2, list[np.ndarray]]:
    """Finger-centre pose and world-frame link segments [(x0, z0, x1, z1), ...]."""
    pts, phi = _points(model, q)
    ee = Pose2(pts[-1, 0], pts[-1, 1], phi)
    links = [np.concatenate([pts[i], pts[i + 1]]) for i in range(model.n_links)]
    return ee, links


def joint_positions(model: RobotModel, q) -> np.ndarray:
    """Shoulder, intermediate joints and finger centre, shape (n_links + 1, 2)."""
    return _points(model, q)[0]


def jacobian(model: RobotModel, q) -> np.ndarray:
    """Analytic d(x, z, phi)/dq, shape (3, n_q)."""
    pts, _ = _points(model, q)
    J = np.empty((3, model.n_q))
    _jit.jacobian_into(model.params(), np.asarray(q, dtype=float), pts, J)
    return J


def dynamics_terms(model: RobotModel, q, dq) -> DynamicsTerms:
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    n = model.n_q
    M = np.empty((n, n))
    C = np.empty((n, n))
    g = np.empty(n)
    _jit.dynamics_into(
        model.params(), q, dq, M, C, g,
        np.empty((n, n, n)), np.empty((2, n)), np.empty((2, n, n)),
    )
    return DynamicsTerms(M, C, g)


def kinetic_energy(model: RobotModel, q, dq) -> float:
    dq = np.asarray(dq, dtype=float)
    return 0.5 * float(dq @ dynamics_terms(model, q, dq).M @ dq)


def potential_energy(model: RobotModel, q) -> float:
    """Gravitational potential of the link point masses."""
    if model.kind == "free":
        return model.base_mass * model.gravity * float(q[1])
    pts = joint_positions(model, q)
    mid_z = 0.5 * (pts[:-1, 1] + pts[1:, 1])
    return float(model.gravity * np.dot(model.link_masses, mid_z))


def reach(model: RobotModel, q) -> float:
    """Distance from the shoulder to the finger centre."""
    pts, _ = _points(model, q)
    return float(np.hypot(*(pts[-1] - pts[0])))


@dataclass(frozen=True)
class IKParams:
    damping: float = 0.05
    max_iter: int = 200
    tol_pos: float = 0.02
    tol_ang: float = 5.0 * math.pi / 180.0
    n_seeds: int = 8
    standoff_range: tuple[float, float] = (0.3, 0.9)


def ik_reachable(
    model: RobotModel,
    target: Pose2,
    params: IKParams = IKParams(),
    rng: np.random.Generator | None = None,
) -> tuple[bool, np.ndarray | None]:
    """Damped-least-squares reachability check from several base standoffs.

    Each seed places the base so the target lies a given horizontal standoff
    ahead of the shoulder and starts the arm from a random in-limit posture.
    """
    if not all(map(math.isfinite, (target.x, target.z, target.phi))):
        return False, None
    if rng is None:
        rng = np.random.default_rng(0)
    rp = model.params()
    lo, hi = model.lower, model.upper
    tgt = target.as_array()
    standoffs = np.linspace(*params.standoff_range, params.n_seeds)
    for k in range(params.n_seeds):
        q = rng.uniform(lo, hi)
        if model.kind == "arm":
            q[0] = np.clip(target.x - standoffs[k], lo[0], hi[0])
        else:
            q[:2] = tgt[:2] + rng.normal(0.0, 0.2, 2)
        ok = _jit.ik_dls(
            rp, lo, hi, tgt, q, params.damping, params.max_iter, params.tol_pos, params.tol_ang
        )
        if ok:
            return True, q
    return False, None


def robot_object_collision(
    model: RobotModel, q, obj: ObjectModel, o: float, clearance: float = 0.01
) -> bool:
    """Non-finger links within ``clearance`` of the object, or finger in static geometry.

    Finger contact with the movable part is the intended interaction and is
    not a collision.
    """
    pts, _ = _points(model, q)
    segw = np.empty((len(obj.movable), 4))
    return bool(
        _jit.robot_collision(
            model.params(), pts, obj.params(), obj.movable_array(), obj.static_array(),
            float(o), clearance, segw,
        )
    )
