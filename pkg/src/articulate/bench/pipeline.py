"""Collect / train / evaluate orchestration over an output directory."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from ..affordance.estimator import Estimator, fit, load_estimator, save_estimator
from ..config import Config
from ..datagen import Dataset, EpisodeTiming, balance_dataset, collect_dataset, summarize
from .experiments import (
    VARIANT_DATA,
    SampleTrialSpec,
    TaskTrialSpec,
    eval_samples,
    eval_tasks,
    spread,
)
from .metrics import (
    TrialResult,
    mean_interactions,
    sample_reach_rate,
    sample_success_rate,
    task_success_rate,
)
from .store import read_summary, run_resumable, write_summary

log = logging.getLogger(__name__)

# rng stream for estimator fitting, separate from episodes
FIT_STREAM = 7


class Workspace:
    """File layout of one output directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def dataset(self, task: str, mode: str, seed: int) -> Path:
        return self.root / "datasets" / f"{task}-{mode}-seed{seed}.jsonl"

    def collect_summary(self, task: str, mode: str, seed: int) -> Path:
        return self.root / "datasets" / f"{task}-{mode}-seed{seed}.summary.json"

    def model(self, task: str, mode: str, seed: int) -> Path:
        return self.root / "models" / f"{task}-{mode}-seed{seed}.json"

    def sample_trials(self, task: str, variant: str, seed: int) -> Path:
        return self.root / "eval_samples" / f"{task}-{variant}-seed{seed}.jsonl"

    def sample_summary(self, seed: int) -> Path:
        return self.root / "eval_samples" / f"summary-seed{seed}.json"

    def task_trials(self, task: str, variant: str, seed: int) -> Path:
        return self.root / "eval_tasks" / f"{task}-{variant}-seed{seed}.jsonl"

    def task_summary(self, seed: int) -> Path:
        return self.root / "eval_tasks" / f"summary-seed{seed}.json"

    def sensitivity_summary(self) -> Path:
        return self.root / "sensitivity" / "summary.json"

    def plots(self) -> Path:
        return self.root / "plots"


def ensure_dataset(ws: Workspace, task: str, mode: str, seed: int, episodes: int,
                   jobs: int = 1) -> Dataset:
    path = ws.dataset(task, mode, seed)
    if path.exists():
        ds = Dataset.load(path)
        if len(ds) >= episodes and all(s.index == i for i, s in enumerate(ds.samples[:episodes])):
            ds = Dataset(ds.samples[:episodes], dict(ds.meta, n_episodes=episodes))
            _write_collect_summary(ws, task, mode, seed, ds)
            return ds
    ds = collect_dataset(episodes, task, mode, seed=seed, jobs=jobs, path=path)
    _write_collect_summary(ws, task, mode, seed, ds)
    return ds


def _write_collect_summary(ws, task, mode, seed, ds) -> None:
    body = {k: v for k, v in summarize(ds).items() if k != "schema"}
    write_summary(ws.collect_summary(task, mode, seed), "collect", body)


def ensure_model(ws: Workspace, cfg: Config, task: str, mode: str, seed: int,
                 jobs: int = 1) -> Estimator:
    """Fit (or reload) the estimator for one (task, mode, seed) dataset."""
    ds = ensure_dataset(ws, task, mode, seed, cfg.collect.episodes, jobs)
    meta = {"dataset": ds.digest(), "n": len(ds), "config": asdict(cfg.train)}
    meta = json.loads(json.dumps(meta))
    path = ws.model(task, mode, seed)
    if path.exists():
        stored = json.loads(path.read_text()).get("meta")
        if stored == meta:
            return load_estimator(path)
    rng = np.random.default_rng([seed, FIT_STREAM])
    est = fit(cfg.train, balance_dataset(ds, rng).samples, rng)
    save_estimator(est, path, meta)
    return est


def sample_block(results: list[TrialResult]) -> dict:
    return {
        "n": len(results),
        "successes": sum(r.success for r in results),
        "reached": sum(r.reached for r in results),
        "sample_success_rate": sample_success_rate(results),
        "sample_reach_rate": sample_reach_rate(results),
        "blowups": sum(r.blowup for r in results),
    }


def task_block(results: list[TrialResult]) -> dict:
    return {
        "n": len(results),
        "successes": sum(r.success for r in results),
        "task_success_rate": task_success_rate(results),
        "task_success_rate_relative": task_success_rate(results, "relative"),
        "mean_interactions": mean_interactions(results),
        "multi_interaction_fraction": sum(r.n_interactions > 1 for r in results) / len(results),
        "blowups": sum(r.blowup for r in results),
    }


def sample_results(ws: Workspace, cfg: Config, task: str, variant: str, seed: int,
                   jobs: int = 1) -> list[TrialResult]:
    """Trials of one (task, variant, seed) cell, resuming from disk."""
    mode = VARIANT_DATA[variant]
    est = ensure_model(ws, cfg, task, mode, seed, jobs) if mode is not None else None
    spec = SampleTrialSpec(task, variant, seed, est, surface_points=cfg.surface_points)
    meta = {"task": task, "variant": variant, "seed": seed,
            "model": _model_digest(ws, task, mode, seed), "surface_points": cfg.surface_points,
            "stop_while_reaching": spec.settings.stop_while_reaching}
    return run_resumable(ws.sample_trials(task, variant, seed), meta, cfg.eval_samples.trials,
                         lambda idx: eval_samples(spec, idx, jobs))


def run_eval_samples(ws: Workspace, cfg: Config, seed: int, jobs: int = 1) -> dict:
    body: dict = {"seed": seed, "trials": cfg.eval_samples.trials, "results": {}}
    for task in cfg.eval_samples.tasks:
        for variant in cfg.eval_samples.variants:
            block = sample_block(sample_results(ws, cfg, task, variant, seed, jobs))
            body["results"].setdefault(task, {})[variant] = block
            log.info("%s %s: %s", task, variant, block)
    return write_summary(ws.sample_summary(seed), "eval_samples", body)


def run_eval_tasks(ws: Workspace, cfg: Config, seed: int, jobs: int = 1) -> dict:
    n = cfg.eval_tasks.trials
    timing = EpisodeTiming(cfg.eval_tasks.reach_budget, cfg.eval_tasks.interact_budget)
    body: dict = {"seed": seed, "trials": n, "results": {}}
    for task in cfg.eval_tasks.tasks:
        est = ensure_model(ws, cfg, task, "full", seed, jobs)
        for closed in (True, False):
            spec = TaskTrialSpec(task, closed, seed, est, timing=timing,
                                 surface_points=cfg.surface_points)
            meta = {"task": task, "variant": spec.variant, "seed": seed,
                    "model": _model_digest(ws, task, "full", seed),
                    "surface_points": cfg.surface_points,
                    "budgets": [timing.reach_budget, timing.interact_budget]}
            results = run_resumable(ws.task_trials(task, spec.variant, seed), meta, n,
                                    lambda idx, spec=spec: eval_tasks(spec, idx, jobs))
            body["results"].setdefault(task, {})[spec.variant] = task_block(results)
            log.info("%s %s: %s", task, spec.variant, body["results"][task][spec.variant])
    return write_summary(ws.task_summary(seed), "eval_tasks", body)


def run_sensitivity(ws: Workspace, cfg: Config, jobs: int = 1) -> dict:
    sc = cfg.sensitivity
    local = replace(cfg, collect=replace(cfg.collect, episodes=sc.episodes),
                    eval_samples=replace(cfg.eval_samples, trials=sc.trials))
    per_seed = {}
    for seed in sc.seeds:
        block = sample_block(sample_results(ws, local, sc.task, "agent_aware", seed, jobs))
        ds = Dataset.load(ws.dataset(sc.task, "full", seed))
        per_seed[str(seed)] = block | {"dataset_digest": ds.digest()}
    rates = [v["sample_success_rate"] for v in per_seed.values()]
    body = {"task": sc.task, "seeds": list(sc.seeds), "trials": sc.trials,
            "per_seed": per_seed, "agent_aware": spread(rates)}
    return write_summary(ws.sensitivity_summary(), "sensitivity", body)


def _model_digest(ws: Workspace, task: str, mode: str | None, seed: int) -> str | None:
    if mode is None:
        return None
    return hashlib.sha256(ws.model(task, mode, seed).read_bytes()).hexdigest()


__all__ = ["Workspace", "ensure_dataset", "ensure_model", "run_eval_samples", "run_eval_tasks",
           "run_sensitivity", "read_summary"]
