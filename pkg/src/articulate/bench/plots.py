"""Plot tables (CSV) and matplotlib figures from persisted results."""
from __future__ import annotations

import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..affordance.estimator import actionability_alpha, load_estimator  # noqa: E402
from ..affordance.surface import point_features, sample_surface  # noqa: E402
from ..datagen import Dataset  # noqa: E402
from ..scene import DEG, ObjectModel  # noqa: E402
from .pipeline import Workspace  # noqa: E402
from .store import read_summary, write_table  # noqa: E402

log = logging.getLogger(__name__)

S_BINS = 10
# (o, o*) pairs for the actionability maps, in degrees
MAP_STATES = {"open": [(0.0, 90.0), (30.0, 90.0)], "close": [(90.0, 0.0), (45.0, 0.0)]}


def success_by_s(ds: Dataset, bins: int = S_BINS) -> list[tuple[int, float, float, int, float]]:
    """(side, bin low, bin high, n, success rate) over the arc-length coordinate."""
    counts = {}
    for x in ds.samples:
        key = (int(x.features[1]), min(int(x.s * bins), bins - 1))
        n, k = counts.get(key, (0, 0))
        counts[key] = (n + 1, k + x.J)
    rows = []
    for side in (1, -1):
        for b in range(bins):
            n, k = counts.get((side, b), (0, 0))
            rows.append((side, b / bins, (b + 1) / bins, n, k / n if n else math.nan))
    return rows


def alpha_map(est, obj: ObjectModel, o: float, o_star: float, n: int, seed: int = 0):
    surface = sample_surface(obj, o, n, with_static=False)
    F = np.array([point_features(p, obj, o, o_star) for p in surface])
    alpha = actionability_alpha(est, F, np.random.default_rng(seed))
    return [(p.side, p.s, float(a)) for p, a in zip(surface, alpha)]


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_success_by_s(ws: Workspace, seed: int) -> list[Path]:
    out = []
    for task in ("open", "close"):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        rows_all = []
        for mode in ("full", "disembodied"):
            path = ws.dataset(task, mode, seed)
            if not path.exists():
                continue
            rows = success_by_s(Dataset.load(path))
            rows_all += [(mode, *r) for r in rows]
            for side, style in ((1, "-"), (-1, "--")):
                pts = [(0.5 * (lo + hi), r) for sd, lo, hi, n, r in rows if sd == side and n > 0]
                if pts:
                    x, y = zip(*pts)
                    ax.plot(x, y, style, marker="o", label=f"{mode}, {'outer' if side > 0 else 'inner'}")
        if not rows_all:
            plt.close(fig)
            continue
        table = ws.plots() / f"success_by_s-{task}-seed{seed}.csv"
        write_table(table, ["mode", "side", "s_lo", "s_hi", "n", "success_rate"], rows_all)
        ax.set_xlabel("arc length s")
        ax.set_ylabel("success rate")
        ax.set_ylim(0, 1)
        ax.set_title(f"{task}: random-agent success along the panel")
        ax.legend(fontsize=7)
        out += [table, _save(fig, ws.plots() / f"success_by_s-{task}-seed{seed}.png")]
    return out


def plot_alpha_maps(ws: Workspace, seed: int, n: int = 20) -> list[Path]:
    out = []
    obj = ObjectModel.oven(door_length=0.5, hinge_height=0.85)
    for task, states in MAP_STATES.items():
        rows = []
        fig, axes = plt.subplots(1, len(states), figsize=(4.5 * len(states), 3.2), squeeze=False)
        for mode in ("full", "disembodied"):
            path = ws.model(task, mode, seed)
            if not path.exists():
                continue
            est = load_estimator(path)
            for ax, (o, o_star) in zip(axes[0], states):
                amap = alpha_map(est, obj, o * DEG, o_star * DEG, n, seed)
                rows += [(mode, o, o_star, side, s, a) for side, s, a in amap]
                for side, style in ((1, "-"), (-1, "--")):
                    pts = [(s, a) for sd, s, a in amap if sd == side]
                    if pts:
                        x, y = zip(*pts)
                        ax.plot(x, y, style, label=f"{mode}, {'outer' if side > 0 else 'inner'}")
                ax.set_title(f"{task}: o={o:.0f} deg, o*={o_star:.0f} deg", fontsize=9)
                ax.set_xlabel("arc length s")
                ax.set_ylim(0, 1)
        if not rows:
            plt.close(fig)
            continue
        axes[0][0].set_ylabel("actionability")
        axes[0][0].legend(fontsize=7)
        table = ws.plots() / f"alpha_map-{task}-seed{seed}.csv"
        write_table(table, ["mode", "o_deg", "o_star_deg", "side", "s", "alpha"], rows)
        out += [table, _save(fig, ws.plots() / f"alpha_map-{task}-seed{seed}.png")]
    return out


def plot_eval_samples(ws: Workspace, seed: int) -> list[Path]:
    path = ws.sample_summary(seed)
    if not path.exists():
        return []
    res = read_summary(path)["results"]
    rows = [(task, v, b["n"], b["sample_success_rate"], b["sample_reach_rate"])
            for task, blocks in res.items() for v, b in blocks.items()]
    table = ws.plots() / f"eval_samples-seed{seed}.csv"
    write_table(table, ["task", "variant", "n", "sample_success_rate", "sample_reach_rate"], rows)
    fig, axes = plt.subplots(1, len(res), figsize=(5.5 * len(res), 3.5), squeeze=False)
    for ax, (task, blocks) in zip(axes[0], res.items()):
        names = list(blocks)
        x = np.arange(len(names))
        ax.bar(x - 0.2, [blocks[v]["sample_success_rate"] for v in names], 0.4, label="success")
        ax.bar(x + 0.2, [blocks[v]["sample_reach_rate"] for v in names], 0.4, label="reach")
        ax.set_xticks(x, [v.replace("+", "+\n") for v in names], fontsize=7)
        ax.set_ylim(0, 1)
        ax.set_title(f"{task} (n={blocks[names[0]]['n']})")
        ax.legend(fontsize=7)
    return [table, _save(fig, ws.plots() / f"eval_samples-seed{seed}.png")]


def plot_eval_tasks(ws: Workspace, seed: int) -> list[Path]:
    path = ws.task_summary(seed)
    if not path.exists():
        return []
    res = read_summary(path)["results"]
    rows = [(task, v, b["n"], b["task_success_rate"], b["task_success_rate_relative"],
             b["mean_interactions"]) for task, blocks in res.items() for v, b in blocks.items()]
    table = ws.plots() / f"eval_tasks-seed{seed}.csv"
    write_table(table, ["task", "variant", "n", "task_success_rate",
                        "task_success_rate_relative", "mean_interactions"], rows)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    labels = [f"{t}\n{v}" for t, v, *_ in rows]
    ax.bar(np.arange(len(rows)), [r[3] for r in rows])
    ax.set_xticks(np.arange(len(rows)), labels, fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("task success rate")
    return [table, _save(fig, ws.plots() / f"eval_tasks-seed{seed}.png")]


def plot_sensitivity(ws: Workspace) -> list[Path]:
    path = ws.sensitivity_summary()
    if not path.exists():
        return []
    summ = read_summary(path)
    per = summ["per_seed"]
    rows = [(int(s), b["n"], b["sample_success_rate"], b["dataset_digest"]) for s, b in per.items()]
    table = ws.plots() / "sensitivity.csv"
    write_table(table, ["seed", "n", "sample_success_rate", "dataset_digest"], rows)
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar([str(r[0]) for r in rows], [r[2] for r in rows])
    ax.axhline(summ["agent_aware"]["mean"], color="k", lw=1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("seed")
    ax.set_ylabel("agent-aware sample success")
    return [table, _save(fig, ws.plots() / "sensitivity.png")]


def render_all(ws: Workspace, seed: int) -> list[Path]:
    out = []
    for fn in (plot_success_by_s, plot_alpha_maps, plot_eval_samples, plot_eval_tasks):
        out += fn(ws, seed)
    out += plot_sensitivity(ws)
    return out
