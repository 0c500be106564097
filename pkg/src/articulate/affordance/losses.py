"""Training losses for the affordance heads."""
from __future__ import annotations

import numpy as np

_EPS = 1e-12


def loss_bce(pred, label):
    """Binary cross-entropy, elementwise; pred is clipped away from {0, 1}."""
    p = np.clip(np.asarray(pred, dtype=float), _EPS, 1.0 - _EPS)
    y = np.asarray(label, dtype=float)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def bce_with_logits(logit, label):
    """Numerically stable BCE from logits and its derivative w.r.t. the logit."""
    z = np.asarray(logit, dtype=float)
    y = np.asarray(label, dtype=float)
    loss = np.logaddexp(0.0, z) - y * z
    grad = 1.0 / (1.0 + np.exp(-z)) - y
    return loss, grad


def loss_cosine(pred_unit, gt_angle):
    """1 - cos(angle between pred and the unit vector at gt_angle); in [0, 2]."""
    u = np.asarray(pred_unit, dtype=float)
    g = np.stack([np.cos(gt_angle), np.sin(gt_angle)], axis=-1)
    return 1.0 - np.sum(u * g, axis=-1)


def loss_l1(pred, target):
    return np.abs(np.asarray(pred, dtype=float) - np.asarray(target, dtype=float))
