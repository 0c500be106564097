"""Planar surface sampling, per-point features and interaction poses."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..kinematics import Pose2
from ..scene import DEG, ObjectModel, wrap_angle

# the inner face is hidden inside the cavity until the door has opened a little
INNER_FACE_MIN_OPENING = 2.0 * DEG
STATIC_SPACING = 0.05
CONE = 45.0 * DEG
N_FEATURES = 8


@dataclass(frozen=True)
class SurfacePoint:
    p: np.ndarray
    normal: np.ndarray
    movable: bool
    s: float = math.nan
    side: int = 1  # +1 outer face, -1 inner face

    @property
    def normal_angle(self) -> float:
        return math.atan2(self.normal[1], self.normal[0])


@dataclass(frozen=True)
class InteractionPose:
    """Contact point p on a face with orientation phi about its outward normal.

    phi points from the contact back toward the wrist; the finger approaches
    along phi + pi.
    """

    point: SurfacePoint
    phi: float

    def ee_target(self, finger_radius: float) -> Pose2:
        c = self.point.p + finger_radius * self.point.normal
        return Pose2(c[0], c[1], self.phi + math.pi)


def face_points(obj: ObjectModel, o: float, n: int, side: int) -> list[SurfacePoint]:
    origin, d, nrm = obj.frame(o)
    normal = side * nrm
    s = (np.arange(n) + 0.5) / n
    pts = origin + np.outer(s * obj.door_length, d)
    return [SurfacePoint(pts[i], normal.copy(), True, float(s[i]), side) for i in range(n)]


def inner_face_visible(obj: ObjectModel, o: float) -> bool:
    if obj.joint_type == "prismatic":
        return False
    return o > INNER_FACE_MIN_OPENING


def sample_surface(obj: ObjectModel, o: float, n: int, with_static: bool = True) -> list[SurfacePoint]:
    """n evenly spaced points per visible face of the panel plus static points."""
    if n < 2:
        raise ValueError("need at least two points per face")
    out = face_points(obj, o, n, +1)
    if inner_face_visible(obj, o):
        out += face_points(obj, o, n, -1)
    if with_static:
        for x0, z0, x1, z1 in obj.static_geometry:
            seg = np.array([x1 - x0, z1 - z0])
            length = float(np.hypot(*seg))
            if length == 0:
                continue
            normal = np.array([-seg[1], seg[0]]) / length
            m = max(2, int(length / STATIC_SPACING))
            for t in (np.arange(m) + 0.5) / m:
                out.append(SurfacePoint(np.array([x0, z0]) + t * seg, normal, False))
    return out


def point_features(pt: SurfacePoint, obj: ObjectModel, o: float, o_star: float) -> np.ndarray:
    """(s, side, normal angle, o, o*, o* - o, L, joint flag)."""
    if not pt.movable:
        raise ValueError("features are defined on movable points only")
    return np.array(
        [
            pt.s,
            float(pt.side),
            pt.normal_angle,
            o,
            o_star,
            o_star - o,
            obj.door_length,
            0.0 if obj.joint_type == "revolute" else 1.0,
        ]
    )


def random_movable_point(obj: ObjectModel, o: float, rng: np.random.Generator) -> SurfacePoint:
    """Uniform position along the panel on a uniformly chosen visible face."""
    sides = [1, -1] if inner_face_visible(obj, o) else [1]
    side = sides[int(rng.integers(len(sides)))]
    s = float(rng.random())
    origin, d, nrm = obj.frame(o)
    return SurfacePoint(origin + s * obj.door_length * d, side * nrm, True, s, side)


def relative_phi(pt: SurfacePoint, phi: float) -> float:
    return wrap_angle(phi - pt.normal_angle)
