"""Shared estimator interface: fitting, A / Q / alpha queries and pose inference."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Protocol, Sequence

import numpy as np

from ..scene import ObjectModel, wrap_angle
from .kernel import KernelEstimator
from .mlp import MLPConfig, MLPEstimator, train_mlp
from .surface import InteractionPose, SurfacePoint, point_features

ESTIMATOR_SCHEMA = "articulate.estimator/1"
N_ORIENTATIONS = 100
N_MC = 100


class Estimator(Protocol):
    backend: str

    def affordance(self, F, rel) -> np.ndarray: ...
    def propose(self, f, rng: np.random.Generator, n: int) -> np.ndarray: ...
    def actionability(self, F, rng: np.random.Generator, n_mc: int = N_MC) -> np.ndarray: ...
    def to_dict(self) -> dict: ...


@dataclass(frozen=True)
class EstimatorConfig:
    backend: Literal["kernel", "mlp"] = "mlp"
    bandwidth_scale: float = 0.5
    mlp: MLPConfig = field(default_factory=MLPConfig)


def training_arrays(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(features, orientation relative to the normal, labels) from samples."""
    F = np.array([s.features for s in samples], dtype=float).reshape(-1, 8)
    rel = np.array([wrap_angle(s.phi - s.features[2]) for s in samples], dtype=float)
    J = np.array([s.J for s in samples], dtype=float)
    return F, rel, J


def fit(cfg: EstimatorConfig, samples: Sequence, rng: np.random.Generator) -> Estimator:
    if len(samples) == 0:
        raise ValueError("cannot fit on an empty dataset")
    F, rel, J = training_arrays(samples)
    if cfg.backend == "kernel":
        return KernelEstimator.fit(F, rel, J, rng, cfg.bandwidth_scale)
    if cfg.backend == "mlp":
        return train_mlp(F, rel, J, rng, cfg.mlp)
    raise ValueError(f"unknown backend {cfg.backend!r}")


def affordance_A(est: Estimator, features, phi) -> np.ndarray:
    """A for world orientations phi at points described by features."""
    F = np.atleast_2d(np.asarray(features, dtype=float))
    rel = np.angle(np.exp(1j * (np.asarray(phi, dtype=float) - F[:, 2])))
    return est.affordance(F, rel)


def propose_Q(est: Estimator, features, rng: np.random.Generator, n: int) -> np.ndarray:
    """n world-frame orientation proposals at one point."""
    if n < 1:
        raise ValueError("need at least one proposal")
    f = np.asarray(features, dtype=float)
    rel = est.propose(f, rng, n)
    return np.angle(np.exp(1j * (rel + f[2])))


def actionability_alpha(est: Estimator, features, rng: np.random.Generator,
                        n_mc: int = N_MC) -> np.ndarray:
    return np.clip(est.actionability(features, rng, n_mc), 0.0, 1.0)


@dataclass
class PoseInference:
    pose: InteractionPose
    alpha_map: list[tuple[float, int, float]]  # (s, side, alpha) per movable point
    affordance: float


def infer_pose(
    est: Estimator,
    surface: Sequence[SurfacePoint],
    obj: ObjectModel,
    o: float,
    o_star: float,
    rng: np.random.Generator,
    n_orientations: int = N_ORIENTATIONS,
    n_mc: int = N_MC,
    candidates: Sequence[SurfacePoint] | None = None,
) -> PoseInference:
    """Most actionable movable point, then the best of the orientation proposals.

    Ties in alpha go to the lowest arc length s (outer face first).
    """
    movable = [p for p in surface if p.movable] if candidates is None else list(candidates)
    if not movable:
        raise ValueError("no movable surface points")
    F = np.array([point_features(p, obj, o, o_star) for p in movable])
    alpha = actionability_alpha(est, F, rng, n_mc)
    best = max(alpha)
    i = min((k for k in range(len(movable)) if alpha[k] == best),
            key=lambda k: (movable[k].s, -movable[k].side))
    phis = propose_Q(est, F[i], rng, n_orientations)
    scores = affordance_A(est, np.repeat(F[i][None], len(phis), axis=0), phis)
    j = int(np.argmax(scores))
    amap = [(p.s, p.side, float(a)) for p, a in zip(movable, alpha)]
    return PoseInference(InteractionPose(movable[i], float(phis[j])), amap, float(scores[j]))


def ranked_points(est: Estimator, movable: Sequence[SurfacePoint], obj: ObjectModel, o: float,
                  o_star: float, rng: np.random.Generator, n_mc: int = N_MC):
    """Movable points in decreasing alpha order, with their feature rows."""
    F = np.array([point_features(p, obj, o, o_star) for p in movable])
    alpha = actionability_alpha(est, F, rng, n_mc)
    order = sorted(range(len(movable)), key=lambda k: (-alpha[k], movable[k].s, -movable[k].side))
    return [(movable[k], F[k], float(alpha[k])) for k in order]


def save_estimator(est: Estimator, path: str | Path, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {"schema": ESTIMATOR_SCHEMA, "meta": meta or {}, "model": est.to_dict()}
    path.write_text(json.dumps(record))


def load_estimator(path: str | Path) -> Estimator:
    record = json.loads(Path(path).read_text())
    if record.get("schema") != ESTIMATOR_SCHEMA:
        raise ValueError(f"{path} is not an estimator file")
    model = record["model"]
    if model["backend"] == "kernel":
        return KernelEstimator.from_dict(model)
    return MLPEstimator.from_dict(model)


def config_dict(cfg: EstimatorConfig) -> dict:
    return asdict(cfg)
