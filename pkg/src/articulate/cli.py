"""Command-line entry point: ``articulate <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .config import Config, load_config

log = logging.getLogger("articulate")

DEFAULTS = {"config": None, "seed": 0, "out": "results", "jobs": 1}
EXIT_ERROR = 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default results)")
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="articulate", parents=[common],
                                     description="Agent-aware affordance experiments on planar articulated objects.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", parents=[common], help="random-agent interaction data")
    p.add_argument("--task", choices=["open", "close"], action="append")
    p.add_argument("--mode", choices=["full", "disembodied"], action="append")
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("train", parents=[common], help="fit estimators on collected data")
    p.add_argument("--task", choices=["open", "close"], action="append")
    p.add_argument("--mode", choices=["full", "disembodied"], action="append")
    p.add_argument("--backend", choices=["kernel", "mlp"])

    p = sub.add_parser("eval-samples", parents=[common], help="per-sample success and reach rates")
    p.add_argument("--task", choices=["open", "close"], action="append")
    p.add_argument("--variant", action="append")
    p.add_argument("--trials", type=int)

    p = sub.add_parser("eval-tasks", parents=[common], help="closed-loop vs fixed-pose tasks")
    p.add_argument("--task", choices=["open", "close"], action="append")
    p.add_argument("--trials", type=int)

    p = sub.add_parser("sensitivity", parents=[common], help="agent-aware spread over seeds")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--trials", type=int)
    p.add_argument("--episodes", type=int)

    sub.add_parser("plot-data", parents=[common], help="tables and figures from results")

    p = sub.add_parser("demo", parents=[common], help="one verbose episode trace")
    p.add_argument("--task", choices=["open", "close"], default="close")
    p.add_argument("--fixed-pose", action="store_true", help="disable pose updates")
    p.add_argument("--index", type=int, default=0, help="scenario index")
    return parser


def _pick(value, default):
    return default if value is None else value


def _config(args) -> Config:
    cfg = load_config(args.config)
    cmd = args.command
    if cmd == "collect":
        c = cfg.collect
        cfg = replace(cfg, collect=replace(
            c, tasks=tuple(args.task or c.tasks), modes=tuple(args.mode or c.modes),
            episodes=_pick(args.episodes, c.episodes)))
    elif cmd == "train" and args.backend:
        cfg = replace(cfg, train=replace(cfg.train, backend=args.backend))
    elif cmd == "eval-samples":
        e = cfg.eval_samples
        cfg = replace(cfg, eval_samples=replace(
            e, tasks=tuple(args.task or e.tasks), variants=tuple(args.variant or e.variants),
            trials=_pick(args.trials, e.trials)))
    elif cmd == "eval-tasks":
        e = cfg.eval_tasks
        cfg = replace(cfg, eval_tasks=replace(e, tasks=tuple(args.task or e.tasks),
                                              trials=_pick(args.trials, e.trials)))
    elif cmd == "sensitivity":
        s = cfg.sensitivity
        cfg = replace(cfg, sensitivity=replace(
            s, seeds=tuple(args.seeds or s.seeds), trials=_pick(args.trials, s.trials),
            episodes=_pick(args.episodes, s.episodes)))
    return cfg


def _row(*cells) -> str:
    return "\t".join(f"{c:.4f}" if isinstance(c, float) else str(c) for c in cells)


def cmd_collect(ws, cfg: Config, seed: int, jobs: int) -> None:
    from .bench.pipeline import ensure_dataset

    print(_row("task", "mode", "n", "success_rate", "reach_rate", "digest"))
    for task in cfg.collect.tasks:
        for mode in cfg.collect.modes:
            ds = ensure_dataset(ws, task, mode, seed, cfg.collect.episodes, jobs)
            print(_row(task, mode, len(ds), ds.success_rate(), ds.reach_rate(), ds.digest()[:12]))


def cmd_train(ws, cfg: Config, seed: int, jobs: int, tasks, modes) -> None:
    from .bench.pipeline import ensure_model

    print(_row("task", "mode", "backend", "path"))
    for task in tasks or cfg.collect.tasks:
        for mode in modes or cfg.collect.modes:
            est = ensure_model(ws, cfg, task, mode, seed, jobs)
            print(_row(task, mode, est.backend, ws.model(task, mode, seed)))


def cmd_eval_samples(ws, cfg: Config, seed: int, jobs: int) -> None:
    from .bench.pipeline import run_eval_samples
    from .bench.plots import plot_eval_samples

    summary = run_eval_samples(ws, cfg, seed, jobs)
    print(_row("task", "variant", "n", "sample_success_rate", "sample_reach_rate"))
    for task, blocks in summary["results"].items():
        for v, b in blocks.items():
            print(_row(task, v, b["n"], b["sample_success_rate"], b["sample_reach_rate"]))
    for path in plot_eval_samples(ws, seed):
        log.info("wrote %s", path)


def cmd_eval_tasks(ws, cfg: Config, seed: int, jobs: int) -> None:
    from .bench.pipeline import run_eval_tasks
    from .bench.plots import plot_eval_tasks

    summary = run_eval_tasks(ws, cfg, seed, jobs)
    print(_row("task", "variant", "n", "task_success_rate", "relative_15pct", "mean_interactions"))
    for task, blocks in summary["results"].items():
        for v, b in blocks.items():
            print(_row(task, v, b["n"], b["task_success_rate"], b["task_success_rate_relative"],
                       b["mean_interactions"]))
    for path in plot_eval_tasks(ws, seed):
        log.info("wrote %s", path)


def cmd_sensitivity(ws, cfg: Config, jobs: int) -> None:
    from .bench.pipeline import run_sensitivity
    from .bench.plots import plot_sensitivity

    summary = run_sensitivity(ws, cfg, jobs)
    print(_row("seed", "n", "sample_success_rate"))
    for seed, b in summary["per_seed"].items():
        print(_row(seed, b["n"], b["sample_success_rate"]))
    agg = summary["agent_aware"]
    print(_row("spread", agg["spread"], "mean", agg["mean"], "std", agg["std"]))
    plot_sensitivity(ws)


def cmd_plot_data(ws, seed: int) -> None:
    from .bench.plots import render_all

    paths = render_all(ws, seed)
    if not paths:
        raise FileNotFoundError(f"no results under {ws.root}")
    for p in paths:
        print(p)


def cmd_demo(ws, cfg: Config, seed: int, task: str, fixed: bool, index: int) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .affordance.estimator import infer_pose, load_estimator
    from .affordance.surface import sample_surface
    from .datagen import EVAL_TASKS, episode_rng, sample_interaction_pose
    from .episode import run_scheduled_episode
    from .scene import ScenarioBounds, fixed_task_scenario
    from .scheduler import SchedulerConfig
    from .simulator import TrajectoryWriter, read_trajectory

    rng = episode_rng(seed, index, 3)
    sc = fixed_task_scenario(rng, ScenarioBounds(), task)
    obj, goal = sc.object, sc.task
    model = ws.model(task, "full", seed)
    est = load_estimator(model) if model.exists() else None
    print(_row("# scenario", f"door_length={obj.door_length:.3f}", f"hinge_z={obj.anchor[1]:.3f}",
               f"o0={math.degrees(goal.o_0):.1f}", f"o*={math.degrees(goal.o_star):.1f}",
               f"poses={'estimator' if est else 'random'}"))
    print(_row("t", "event", "o_deg", "s", "side", "phi_deg"))

    def propose(state, g):
        if est is None:
            pose = sample_interaction_pose(obj, state.o, g)
        else:
            surface = sample_surface(obj, state.o, cfg.surface_points, with_static=False)
            pose = infer_pose(est, surface, obj, state.o, goal.o_star, g).pose
        print(_row(round(state.t, 3), "pose", round(math.degrees(state.o), 2), round(pose.point.s, 3),
                   pose.point.side, round(math.degrees(pose.phi), 1)))
        return pose

    sched = SchedulerConfig(reach_timeout=EVAL_TASKS.reach_budget,
                            interact_timeout=EVAL_TASKS.interact_budget, closed_loop=not fixed)
    traj = ws.root / "demo" / f"{task}-{'fixed' if fixed else 'closed'}-seed{seed}-{index}.jsonl"
    traj.parent.mkdir(parents=True, exist_ok=True)
    with open(traj, "w") as fh:
        res = run_scheduled_episode(sc, propose, sched, rng, "full", writer=TrajectoryWriter(fh))
    for ev in res.events:
        print(_row(ev["t"], ev["event"], "", "", "", ""))
    print(_row("# result", f"success={res.task_success}", f"o_end={math.degrees(res.o_end):.2f}",
               f"interactions={res.n_interactions}", f"elapsed={res.elapsed:.2f}", res.reason))
    recs = read_trajectory(traj)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot([r["t"] for r in recs], [math.degrees(r["o"]) for r in recs], label="o")
    ax.axhline(math.degrees(goal.o_star), color="k", ls="--", lw=1, label="o*")
    for ev in res.events:
        if ev["event"] == "request_pose":
            ax.axvline(ev["t"], color="r", lw=0.6)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("door angle [deg]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    png = traj.with_suffix(".png")
    fig.savefig(png, dpi=120)
    plt.close(fig)
    print(_row("# files", traj, png))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for k, v in DEFAULTS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s",
                        stream=sys.stderr)
    from .bench.pipeline import Workspace
    from .bench.store import ResultsMismatch
    from .scene import ScenarioError
    from .simulator import SimulationError

    try:
        if args.seed < 0:
            raise ValueError("seed must be non-negative")
        if args.jobs < 1:
            raise ValueError("jobs must be at least 1")
        cfg = _config(args)
        ws = Workspace(Path(args.out))
        if args.command == "collect":
            cmd_collect(ws, cfg, args.seed, args.jobs)
        elif args.command == "train":
            cmd_train(ws, cfg, args.seed, args.jobs, args.task, args.mode)
        elif args.command == "eval-samples":
            cmd_eval_samples(ws, cfg, args.seed, args.jobs)
        elif args.command == "eval-tasks":
            cmd_eval_tasks(ws, cfg, args.seed, args.jobs)
        elif args.command == "sensitivity":
            cmd_sensitivity(ws, cfg, args.jobs)
        elif args.command == "plot-data":
            cmd_plot_data(ws, args.seed)
        elif args.command == "demo":
            cmd_demo(ws, cfg, args.seed, args.task, args.fixed_pose, args.index)
    except (ValueError, FileNotFoundError, ResultsMismatch, ScenarioError, SimulationError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
