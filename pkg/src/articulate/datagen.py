"""Self-supervised interaction data collection with the random agent."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .affordance.reward import reward_J
from .affordance.surface import CONE, InteractionPose, point_features, random_movable_point
from .controller import ControllerConfig
from .episode import AgentMode, EpisodeResult, run_scheduled_episode
from .scene import Scenario, ScenarioBounds, TaskKind, sample_scenario
from .scheduler import SchedulerConfig
from .simulator import SimParams

log = logging.getLogger(__name__)

DATASET_SCHEMA = "articulate.dataset/1"


@dataclass(frozen=True)
class EpisodeTiming:
    reach_budget: float
    interact_budget: float

    def __post_init__(self) -> None:
        if self.reach_budget <= 0 or self.interact_budget <= 0:
            raise ValueError("episode budgets must be positive")


COLLECT = EpisodeTiming(30.0, 5.0)
EVAL_SAMPLES = EpisodeTiming(40.0, 30.0)
EVAL_TASKS = EpisodeTiming(40.0, 300.0)

# sim seconds without pose-error improvement before a fixed-pose reach is abandoned
REACH_STALL_WINDOW = 5.0


@dataclass(frozen=True)
class EpisodeSettings:
    """Everything besides the scenario and pose that shapes an episode."""

    controller: ControllerConfig = field(default_factory=ControllerConfig)
    sim: SimParams = field(default_factory=SimParams)
    reach_stall_window: float = REACH_STALL_WINDOW
    stop_on_progress: bool = True
    stop_while_reaching: bool = True


@dataclass
class InteractionSample:
    features: np.ndarray
    p: np.ndarray
    normal: np.ndarray
    phi: float
    o_0: float
    o_star: float
    o_end: float
    J: int
    reached: bool
    agent_mode: str
    seed: int
    index: int
    flagged: bool = False

    def to_record(self) -> dict:
        d = asdict(self)
        for k in ("features", "p", "normal"):
            d[k] = [float(v) for v in d[k]]
        return d

    @classmethod
    def from_record(cls, d: dict) -> "InteractionSample":
        d = dict(d)
        for k in ("features", "p", "normal"):
            d[k] = np.asarray(d[k], dtype=float)
        return cls(**d)

    @property
    def s(self) -> float:
        return float(self.features[0])


@dataclass
class Dataset:
    samples: list[InteractionSample]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.J for s in self.samples], dtype=int)

    def success_rate(self) -> float:
        return float(self.labels.mean()) if self.samples else float("nan")

    def reach_rate(self) -> float:
        return float(np.mean([s.reached for s in self.samples])) if self.samples else float("nan")

    def digest(self) -> str:
        h = hashlib.sha256()
        for s in self.samples:
            h.update(json.dumps(s.to_record(), sort_keys=True).encode())
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(json.dumps({"schema": DATASET_SCHEMA, **self.meta}) + "\n")
            for s in self.samples:
                fh.write(json.dumps(s.to_record()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        header, records = _read_jsonl(path)
        return cls([InteractionSample.from_record(r) for r in records], header)


def _read_jsonl(path: str | Path) -> tuple[dict, list[dict]]:
    with open(path) as fh:
        lines = [json.loads(x) for x in fh if x.strip()]
    if not lines or lines[0].get("schema") != DATASET_SCHEMA:
        raise ValueError(f"{path}: not a dataset file ({DATASET_SCHEMA})")
    header = {k: v for k, v in lines[0].items() if k != "schema"}
    return header, lines[1:]


def sample_interaction_pose(obj, o: float, rng: np.random.Generator) -> InteractionPose:
    """Uniform point on a visible face, orientation within the normal cone."""
    pt = random_movable_point(obj, o, rng)
    return InteractionPose(pt, pt.normal_angle + float(rng.uniform(-CONE, CONE)))


def sample_scheduler(timing: EpisodeTiming, settings: EpisodeSettings) -> SchedulerConfig:
    return SchedulerConfig(
        reach_timeout=timing.reach_budget,
        interact_timeout=timing.interact_budget,
        closed_loop=False,
        stop_on_progress=settings.stop_on_progress,
        stop_while_reaching=settings.stop_while_reaching,
        reach_stall_window=settings.reach_stall_window,
    )


def run_episode(
    scenario: Scenario,
    pose: InteractionPose,
    timing: EpisodeTiming,
    agent_mode: AgentMode,
    rng: np.random.Generator,
    settings: EpisodeSettings = EpisodeSettings(),
) -> tuple[int, EpisodeResult]:
    """Fixed-pose episode: reach, then interact; returns (J, result)."""
    res = run_scheduled_episode(
        scenario,
        lambda state, g: pose,
        sample_scheduler(timing, settings),
        rng,
        agent_mode,
        settings.controller,
        settings.sim,
    )
    task = scenario.task
    J = 0 if res.blowup else reward_J(task.o_0, res.o_end, task.o_star, task.theta)
    return J, res


@dataclass(frozen=True)
class CollectJob:
    seed: int
    task_kind: TaskKind
    agent_mode: AgentMode
    bounds: ScenarioBounds = ScenarioBounds()
    timing: EpisodeTiming = COLLECT
    settings: EpisodeSettings = EpisodeSettings()


def episode_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, stream, index])


def collect_one(job: CollectJob, index: int) -> InteractionSample:
    rng = episode_rng(job.seed, index)
    sc = sample_scenario(rng, job.bounds, job.task_kind)
    pose = sample_interaction_pose(sc.object, sc.task.o_0, rng)
    J, res = run_episode(sc, pose, job.timing, job.agent_mode, rng, job.settings)
    return InteractionSample(
        features=point_features(pose.point, sc.object, sc.task.o_0, sc.task.o_star),
        p=pose.point.p.copy(),
        normal=pose.point.normal.copy(),
        phi=float(pose.phi),
        o_0=sc.task.o_0,
        o_star=sc.task.o_star,
        o_end=res.o_end,
        J=J,
        reached=res.reached,
        agent_mode=job.agent_mode,
        seed=job.seed,
        index=index,
        flagged=res.blowup,
    )


def _collect_star(args) -> dict:
    job, index = args
    return collect_one(job, index).to_record()


def parallel_map(fn, items: Iterable, jobs: int) -> Iterator:
    """Ordered map, in-process for jobs <= 1."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        yield from map(fn, items)
        return
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        yield from ex.map(fn, items, chunksize=1)


def collect_dataset(
    n_episodes: int,
    task_kind: TaskKind,
    agent_mode: AgentMode,
    bounds: ScenarioBounds = ScenarioBounds(),
    seed: int = 0,
    jobs: int = 1,
    settings: EpisodeSettings = EpisodeSettings(),
    path: str | Path | None = None,
) -> Dataset:
    """Run n independent random-pose episodes.

    With ``path`` the records are streamed to disk and an interrupted
    collection resumes from the episodes already present.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    job = CollectJob(seed, task_kind, agent_mode, bounds, COLLECT, settings)
    meta = {"task": task_kind, "agent_mode": agent_mode, "seed": seed, "n_episodes": n_episodes}
    done: list[dict] = []
    fh = None
    if path is not None:
        path = Path(path)
        if path.exists():
            header, done = _read_jsonl(path)
            if any(header.get(k) != v for k, v in meta.items() if k != "n_episodes"):
                raise ValueError(f"{path} was collected with different settings")
            done = [r for r in done if r["index"] < n_episodes]
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(path, "w")
        fh.write(json.dumps({"schema": DATASET_SCHEMA, **meta}) + "\n")
        for r in done:
            fh.write(json.dumps(r) + "\n")
        fh.flush()
    have = {r["index"] for r in done}
    todo = [(job, i) for i in range(n_episodes) if i not in have]
    records = {r["index"]: r for r in done}
    t0 = time.time()
    try:
        for k, rec in enumerate(parallel_map(_collect_star, todo, jobs)):
            records[rec["index"]] = rec
            if fh is not None:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
            if (k + 1) % 100 == 0:
                log.info("collected %d/%d episodes (%.0fs)", k + 1, len(todo), time.time() - t0)
    finally:
        if fh is not None:
            fh.close()
    ds = Dataset([InteractionSample.from_record(records[i]) for i in range(n_episodes)], meta)
    if path is not None:
        ds.save(path)  # canonical index order
    return ds


def summarize(ds: Dataset) -> dict:
    labels = ds.labels
    return {
        "schema": "articulate.collect_summary/1",
        "n": len(ds),
        "successes": int(labels.sum()),
        "success_rate": ds.success_rate(),
        "reach_rate": ds.reach_rate(),
        "flagged": int(sum(s.flagged for s in ds.samples)),
        "digest": ds.digest(),
        **{k: v for k, v in ds.meta.items()},
    }


def balance_dataset(ds: Dataset, rng: np.random.Generator) -> Dataset:
    """Downsample the majority label to equal counts, preserving order."""
    labels = ds.labels
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("balancing needs at least one sample of each label")
    k = min(len(pos), len(neg))
    keep = np.concatenate([
        np.sort(rng.choice(pos, k, replace=False)) if len(pos) > k else pos,
        np.sort(rng.choice(neg, k, replace=False)) if len(neg) > k else neg,
    ])
    keep.sort()
    return Dataset([ds.samples[i] for i in keep], dict(ds.meta, balanced=True))
