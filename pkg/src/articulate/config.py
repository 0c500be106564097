"""Experiment configuration, loadable from YAML."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

import yaml

from .affordance.estimator import EstimatorConfig
from .affordance.mlp import MLPConfig
from .bench.experiments import SURFACE_POINTS, VARIANTS
from .datagen import EVAL_TASKS

CONFIG_SCHEMA = "articulate.config/1"


@dataclass(frozen=True)
class CollectConfig:
    episodes: int = 2000
    tasks: tuple[str, ...] = ("open", "close")
    modes: tuple[str, ...] = ("full", "disembodied")


@dataclass(frozen=True)
class SamplesConfig:
    trials: int = 500
    tasks: tuple[str, ...] = ("open", "close")
    variants: tuple[str, ...] = VARIANTS


@dataclass(frozen=True)
class TasksConfig:
    trials: int = 200
    tasks: tuple[str, ...] = ("close",)
    reach_budget: float = EVAL_TASKS.reach_budget
    interact_budget: float = EVAL_TASKS.interact_budget


@dataclass(frozen=True)
class SensitivityConfig:
    seeds: tuple[int, ...] = (0, 1, 2)
    task: str = "close"
    episodes: int = 2000
    trials: int = 500


@dataclass(frozen=True)
class Config:
    collect: CollectConfig = field(default_factory=CollectConfig)
    train: EstimatorConfig = field(default_factory=EstimatorConfig)
    eval_samples: SamplesConfig = field(default_factory=SamplesConfig)
    eval_tasks: TasksConfig = field(default_factory=TasksConfig)
    sensitivity: SensitivityConfig = field(default_factory=SensitivityConfig)
    surface_points: int = SURFACE_POINTS

    def __post_init__(self) -> None:
        for t in (*self.collect.tasks, *self.eval_samples.tasks, *self.eval_tasks.tasks,
                  self.sensitivity.task):
            if t not in ("open", "close"):
                raise ValueError(f"unknown task {t!r}")
        for v in self.eval_samples.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        if len(self.sensitivity.seeds) < 3:
            raise ValueError("the sensitivity study needs at least three seeds")
        if min(self.collect.episodes, self.eval_samples.trials, self.eval_tasks.trials,
               self.sensitivity.episodes, self.sensitivity.trials) < 1:
            raise ValueError("episode and trial counts must be positive")
        if min(self.eval_tasks.reach_budget, self.eval_tasks.interact_budget) <= 0:
            raise ValueError("task budgets must be positive")

    def to_dict(self) -> dict:
        return {"schema": CONFIG_SCHEMA, **asdict(self)}


def _build(cls, data: dict | None):
    """Instantiate a (nested) frozen dataclass from a partial mapping."""
    obj = cls()
    if not data:
        return obj
    known = {f.name: f for f in fields(cls)}
    updates: dict[str, Any] = {}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown config key {cls.__name__}.{key}")
        current = getattr(obj, key)
        if is_dataclass(current):
            updates[key] = _build(type(current), value)
        elif isinstance(current, tuple):
            updates[key] = tuple(value)
        else:
            updates[key] = value
    return replace(obj, **updates)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    data = yaml.safe_load(Path(path).read_text()) or {}
    schema = data.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ValueError(f"unsupported config schema {schema!r}")
    return _build(Config, data)


__all__ = ["Config", "CollectConfig", "SamplesConfig", "TasksConfig", "SensitivityConfig",
           "EstimatorConfig", "MLPConfig", "load_config"]
