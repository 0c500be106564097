"""Three-head MLP estimator trained with hand-written reverse-mode gradients.

A shared tanh trunk encodes the point features. The A head additionally sees
the orientation (cos, sin) relative to the surface normal, the Q head sees a
noise vector z and emits an unnormalised 2-vector, and the alpha head reads
the trunk alone.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .losses import bce_with_logits

MLP_SCHEMA = "articulate.mlp/1"


@dataclass(frozen=True)
class MLPConfig:
    hidden: int = 64
    z_dim: int = 10
    lr: float = 1e-4
    batch_size: int = 10
    max_epochs: int = 300
    val_fraction: float = 0.1
    plateau_patience: int = 5
    plateau_factor: float = 0.2
    plateau_threshold: float = 0.02
    min_lr: float = 1e-6
    stop_patience: int = 12
    stop_threshold: float = 0.05
    alpha_proposals: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


def layer_shapes(n_in: int, hidden: int, z_dim: int) -> list[tuple[str, int, int]]:
    return [
        ("t1", n_in, hidden),
        ("t2", hidden, hidden),
        ("a1", hidden + 2, hidden),
        ("a2", hidden, 1),
        ("q1", hidden + z_dim, hidden),
        ("q2", hidden, 2),
        ("s1", hidden, hidden),
        ("s2", hidden, 1),
    ]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class MLPNet:
    """Parameters live in one flat vector; per-layer W and b are views into it."""

    def __init__(self, n_in: int = 8, hidden: int = 64, z_dim: int = 10,
                 theta: np.ndarray | None = None, rng: np.random.Generator | None = None):
        self.n_in, self.hidden, self.z_dim = n_in, hidden, z_dim
        self.shapes = layer_shapes(n_in, hidden, z_dim)
        size = sum(i * o + o for _, i, o in self.shapes)
        if theta is None:
            rng = rng or np.random.default_rng(0)
            theta = np.empty(size)
            self.theta = theta
            self._bind()
            for name, i, o in self.shapes:
                W, b = self.layers[name]
                limit = math.sqrt(6.0 / (i + o))
                W[...] = rng.uniform(-limit, limit, (i, o))
                b[...] = 0.0
        else:
            if theta.shape != (size,):
                raise ValueError("parameter vector has the wrong size")
            self.theta = np.array(theta, dtype=float)
            self._bind()

    def _bind(self) -> None:
        self.layers = {}
        k = 0
        for name, i, o in self.shapes:
            W = self.theta[k : k + i * o].reshape(i, o)
            k += i * o
            b = self.theta[k : k + o]
            k += o
            self.layers[name] = (W, b)

    def slices(self) -> dict[str, slice]:
        out, k = {}, 0
        for name, i, o in self.shapes:
            out[name + ".W"] = slice(k, k + i * o)
            k += i * o
            out[name + ".b"] = slice(k, k + o)
            k += o
        return out

    # ---- forward pieces -------------------------------------------------

    def trunk(self, X):
        W1, b1 = self.layers["t1"]
        W2, b2 = self.layers["t2"]
        h1 = np.tanh(X @ W1 + b1)
        h2 = np.tanh(h1 @ W2 + b2)
        return h2, (X, h1, h2)

    def head_a(self, T, cs):
        W1, b1 = self.layers["a1"]
        W2, b2 = self.layers["a2"]
        x = np.concatenate([T, cs], axis=1)
        h = np.tanh(x @ W1 + b1)
        return (h @ W2 + b2)[:, 0], (x, h)

    def head_q(self, T, Z):
        W1, b1 = self.layers["q1"]
        W2, b2 = self.layers["q2"]
        x = np.concatenate([T, Z], axis=1)
        h = np.tanh(x @ W1 + b1)
        return h @ W2 + b2, (x, h)

    def head_s(self, T):
        W1, b1 = self.layers["s1"]
        W2, b2 = self.layers["s2"]
        h = np.tanh(T @ W1 + b1)
        return (h @ W2 + b2)[:, 0], (T, h)

    # ---- convenience -----------------------------------------------------

    def affordance(self, X, rel):
        T, _ = self.trunk(X)
        cs = np.stack([np.cos(rel), np.sin(rel)], axis=1)
        return _sigmoid(self.head_a(T, cs)[0])

    def orientation(self, X, Z):
        T, _ = self.trunk(X)
        v, _ = self.head_q(T, Z)
        return np.arctan2(v[:, 1], v[:, 0])

    def actionability(self, X):
        T, _ = self.trunk(X)
        return _sigmoid(self.head_s(T)[0])

    def alpha_target(self, X, rng: np.random.Generator, n: int) -> np.ndarray:
        """Mean predicted affordance over n orientation proposals per row."""
        B = len(X)
        T, _ = self.trunk(X)
        Tr = np.repeat(T, n, axis=0)
        v, _ = self.head_q(Tr, rng.standard_normal((B * n, self.z_dim)))
        rel = np.arctan2(v[:, 1], v[:, 0])
        cs = np.stack([np.cos(rel), np.sin(rel)], axis=1)
        return _sigmoid(self.head_a(Tr, cs)[0]).reshape(B, n).mean(axis=1)

    # ---- loss and gradient ----------------------------------------------

    def loss_and_grad(self, X, rel, J, Z, alpha_target, terms=("A", "Q", "S")):
        """Sum of the selected mean losses and its gradient w.r.t. theta.

        A: BCE of the affordance head on every row. Q: cosine loss of the
        proposal head on rows with J = 1. S: L1 between the alpha head and
        the (fixed) alpha_target.
        """
        B = len(X)
        grad = np.zeros_like(self.theta)
        gl = self._grad_views(grad)
        T, tc = self.trunk(X)
        dT = np.zeros_like(T)
        total = 0.0

        if "A" in terms:
            cs = np.stack([np.cos(rel), np.sin(rel)], axis=1)
            logit, (x, h) = self.head_a(T, cs)
            loss, dz = bce_with_logits(logit, J)
            total += loss.mean()
            dz = dz[:, None] / B
            dT += self._dense_back("a1", "a2", x, h, dz, gl)[:, : self.hidden]

        if "Q" in terms:
            mask = np.asarray(J) > 0.5
            nS = int(mask.sum())
            if nS:
                v, (x, h) = self.head_q(T, Z)
                norm = np.linalg.norm(v, axis=1, keepdims=True)
                u = v / norm
                g = np.stack([np.cos(rel), np.sin(rel)], axis=1)
                cos = np.sum(u * g, axis=1)
                total += float(np.sum((1.0 - cos)[mask]) / nS)
                du = -g * (mask[:, None] / nS)
                dv = (du - np.sum(du * u, axis=1, keepdims=True) * u) / norm
                dT += self._dense_back("q1", "q2", x, h, dv, gl)[:, : self.hidden]

        if "S" in terms:
            logit, (x, h) = self.head_s(T)
            a = _sigmoid(logit)
            diff = a - alpha_target
            total += float(np.mean(np.abs(diff)))
            dz = (np.sign(diff) * a * (1.0 - a) / B)[:, None]
            dT += self._dense_back("s1", "s2", x, h, dz, gl)

        X0, h1, h2 = tc
        d2 = dT * (1.0 - h2 * h2)
        gl["t2"][0][...] += h1.T @ d2
        gl["t2"][1][...] += d2.sum(axis=0)
        d1 = (d2 @ self.layers["t2"][0].T) * (1.0 - h1 * h1)
        gl["t1"][0][...] += X0.T @ d1
        gl["t1"][1][...] += d1.sum(axis=0)
        return float(total), grad

    def _grad_views(self, grad):
        out, k = {}, 0
        for name, i, o in self.shapes:
            W = grad[k : k + i * o].reshape(i, o)
            k += i * o
            out[name] = (W, grad[k : k + o])
            k += o
        return out

    def _dense_back(self, n1, n2, x, h, dout, gl):
        """Backprop through tanh(x W1 + b1) W2 + b2; returns d loss / d x."""
        W1 = self.layers[n1][0]
        W2 = self.layers[n2][0]
        gl[n2][0][...] += h.T @ dout
        gl[n2][1][...] += dout.sum(axis=0)
        dh = (dout @ W2.T) * (1.0 - h * h)
        gl[n1][0][...] += x.T @ dh
        gl[n1][1][...] += dh.sum(axis=0)
        return dh @ W1.T


class Adam:
    def __init__(self, size: int, cfg: MLPConfig):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.cfg = cfg
        self.lr = cfg.lr

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad * grad
        mh = self.m / (1 - c.beta1**self.t)
        vh = self.v / (1 - c.beta2**self.t)
        theta -= self.lr * mh / (np.sqrt(vh) + c.adam_eps)


class MLPEstimator:
    backend = "mlp"

    def __init__(self, net: MLPNet, mu: np.ndarray, sd: np.ndarray, cfg: MLPConfig = MLPConfig()):
        self.net = net
        self.mu = np.asarray(mu, dtype=float)
        self.sd = np.asarray(sd, dtype=float)
        self.cfg = cfg
        self.history: list[dict] = []

    def _norm(self, F):
        return (np.atleast_2d(np.asarray(F, dtype=float)) - self.mu) / self.sd

    def affordance(self, F, rel) -> np.ndarray:
        X = self._norm(F)
        rel = np.broadcast_to(np.asarray(rel, dtype=float), (len(X),))
        return self.net.affordance(X, rel)

    def propose(self, f, rng: np.random.Generator, n: int) -> np.ndarray:
        X = np.repeat(self._norm(f), n, axis=0)
        rel = self.net.orientation(X, rng.standard_normal((n, self.net.z_dim)))
        return np.clip(rel, -np.pi / 2, np.pi / 2)

    def actionability(self, F, rng: np.random.Generator | None = None, n_mc: int = 100) -> np.ndarray:
        return self.net.actionability(self._norm(F))

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "schema": MLP_SCHEMA,
            "arch": {"n_in": self.net.n_in, "hidden": self.net.hidden, "z_dim": self.net.z_dim},
            "config": asdict(self.cfg),
            "mu": self.mu.tolist(),
            "sd": self.sd.tolist(),
            "theta": self.net.theta.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLPEstimator":
        if d.get("schema") != MLP_SCHEMA:
            raise ValueError("not an MLP parameter record")
        a = d["arch"]
        net = MLPNet(a["n_in"], a["hidden"], a["z_dim"], theta=np.array(d["theta"]))
        return cls(net, d["mu"], d["sd"], MLPConfig(**d["config"]))


def train_mlp(F, rel, J, rng: np.random.Generator, cfg: MLPConfig = MLPConfig()) -> MLPEstimator:
    """Joint training of the three heads with plateau LR decay and early stopping."""
    F = np.asarray(F, dtype=float)
    rel = np.asarray(rel, dtype=float)
    J = np.asarray(J, dtype=float)
    n = len(F)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if not (J > 0.5).any():
        raise ValueError("no successful samples; the proposal head cannot be trained, "
                         "collect more episodes")
    mu = F.mean(axis=0)
    sd = F.std(axis=0)
    sd = np.where(sd > 1e-8, sd, 1.0)
    net = MLPNet(F.shape[1], cfg.hidden, cfg.z_dim, rng=rng)
    est = MLPEstimator(net, mu, sd, cfg)
    X = (F - mu) / sd

    perm = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n)) if n >= 10 else 0
    val, tr = perm[:n_val], perm[n_val:]
    Zval = rng.standard_normal((n_val, cfg.z_dim))
    aval_rng_seed = int(rng.integers(2**63))

    def val_loss() -> float:
        if n_val == 0:
            return math.nan
        t = net.alpha_target(X[val], np.random.default_rng(aval_rng_seed), cfg.alpha_proposals)
        return net.loss_and_grad(X[val], rel[val], J[val], Zval, t)[0]

    opt = Adam(net.theta.size, cfg)
    best_plateau = best_stop = best_val = math.inf
    bad_plateau = bad_stop = 0
    best_theta = net.theta.copy()
    for epoch in range(cfg.max_epochs):
        order = tr[rng.permutation(len(tr))]
        train_loss = 0.0
        for k in range(0, len(order), cfg.batch_size):
            b = order[k : k + cfg.batch_size]
            t = net.alpha_target(X[b], rng, cfg.alpha_proposals)
            Z = rng.standard_normal((len(b), cfg.z_dim))
            loss, grad = net.loss_and_grad(X[b], rel[b], J[b], Z, t)
            opt.step(net.theta, grad)
            train_loss += loss * len(b)
        train_loss /= max(len(tr), 1)
        vl = val_loss() if n_val else train_loss
        est.history.append({"epoch": epoch, "train": train_loss, "val": vl, "lr": opt.lr})
        if vl < best_plateau * (1 - cfg.plateau_threshold):
            best_plateau, bad_plateau = vl, 0
        else:
            bad_plateau += 1
            if bad_plateau > cfg.plateau_patience:
                opt.lr = max(cfg.min_lr, opt.lr * cfg.plateau_factor)
                bad_plateau = 0
        if vl < best_val:
            best_val = vl
            best_theta = net.theta.copy()
        if vl < best_stop * (1 - cfg.stop_threshold):
            best_stop, bad_stop = vl, 0
        else:
            bad_stop += 1
            if bad_stop > cfg.stop_patience:
                break
    net.theta[...] = best_theta
    return est
