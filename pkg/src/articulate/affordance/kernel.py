"""Nadaraya-Watson affordance estimator with a Gaussian product kernel."""
from __future__ import annotations

import numpy as np

from ..scene import DEG
from .surface import CONE

JITTER = 10.0 * DEG
MIN_WEIGHT = 1e-6
# fallback widths when a feature has no spread in the data
DEFAULT_WIDTH = np.array([0.1, 1.0, 0.2, 0.2, 0.2, 0.2, 0.05, 1.0])
DEFAULT_ANGLE_WIDTH = 15.0 * DEG


def wrapped_diff(a, b):
    return np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b))))


def median_widths(X: np.ndarray, rel: np.ndarray, rng: np.random.Generator,
                  max_pairs: int = 20000) -> tuple[np.ndarray, float]:
    """Per-dimension median absolute pairwise difference."""
    n = len(X)
    if n < 2:
        return DEFAULT_WIDTH.copy(), DEFAULT_ANGLE_WIDTH
    i = rng.integers(0, n, max_pairs)
    j = rng.integers(0, n, max_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    h = np.median(np.abs(X[i] - X[j]), axis=0)
    h = np.where(h > 1e-9, h, DEFAULT_WIDTH[: X.shape[1]])
    ha = float(np.median(np.abs(wrapped_diff(rel[i], rel[j]))))
    return h, ha if ha > 1e-9 else DEFAULT_ANGLE_WIDTH


class KernelEstimator:
    """Closed-form affordance, proposal and actionability estimates.

    Training rows are stored in a canonical (sorted) order so results do not
    depend on how the dataset was ordered.
    """

    backend = "kernel"

    def __init__(self, X, rel, J, widths, angle_width):
        X = np.asarray(X, dtype=float)
        rel = np.asarray(rel, dtype=float)
        J = np.asarray(J, dtype=float)
        keys = [J, rel] + [X[:, d] for d in range(X.shape[1] - 1, -1, -1)]
        order = np.lexsort(keys)
        self.X = X[order]
        self.rel = rel[order]
        self.J = J[order]
        self.widths = np.asarray(widths, dtype=float)
        self.angle_width = float(angle_width)

    @classmethod
    def fit(cls, X, rel, J, rng: np.random.Generator, scale: float = 0.5) -> "KernelEstimator":
        X = np.asarray(X, dtype=float)
        if len(X) == 0:
            raise ValueError("cannot fit on an empty dataset")
        est = cls(X, rel, J, np.ones(X.shape[1]), 1.0)
        h, ha = median_widths(est.X, est.rel, rng)
        est.widths = scale * h
        est.angle_width = scale * ha
        return est

    def feature_kernel(self, F: np.ndarray) -> np.ndarray:
        """(Q, N) Gaussian weights on the feature part only."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        d = (F[:, None, :] - self.X[None, :, :]) / self.widths
        return np.exp(-0.5 * np.sum(d * d, axis=2))

    def affordance(self, F, rel) -> np.ndarray:
        """Laplace-smoothed kernel estimate of P(J = 1 | features, orientation)."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        rel = np.broadcast_to(np.asarray(rel, dtype=float), (len(F),))
        K = self.feature_kernel(F)
        da = wrapped_diff(rel[:, None], self.rel[None, :]) / self.angle_width
        K *= np.exp(-0.5 * da * da)
        return (K @ self.J + 1.0) / (K.sum(axis=1) + 2.0)

    def propose(self, f, rng: np.random.Generator, n: int) -> np.ndarray:
        """n orientations relative to the surface normal."""
        w = self.feature_kernel(f)[0] * self.J
        if w.max(initial=0.0) <= MIN_WEIGHT:
            return rng.uniform(-CONE, CONE, n)
        idx = rng.choice(len(w), size=n, p=w / w.sum())
        out = self.rel[idx] + rng.normal(0.0, JITTER, n)
        return np.clip(out, -np.pi / 2, np.pi / 2)

    def actionability(self, F, rng: np.random.Generator, n_mc: int = 100) -> np.ndarray:
        F = np.atleast_2d(np.asarray(F, dtype=float))
        out = np.empty(len(F))
        for i, f in enumerate(F):
            rel = self.propose(f, rng, n_mc)
            out[i] = self.affordance(np.repeat(f[None], n_mc, axis=0), rel).mean()
        return out

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "X": self.X.tolist(),
            "rel": self.rel.tolist(),
            "J": self.J.tolist(),
            "widths": self.widths.tolist(),
            "angle_width": self.angle_width,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelEstimator":
        return cls(np.array(d["X"]).reshape(-1, len(d["widths"])), d["rel"], d["J"],
                   d["widths"], d["angle_width"])
