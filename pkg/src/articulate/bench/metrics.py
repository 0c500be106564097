"""Trial records and the evaluation ratios."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Iterable, Literal, Sequence

TaskCriterion = Literal["gap", "relative"]
RELATIVE_TOLERANCE = 0.15


@dataclass(frozen=True)
class TrialResult:
    scenario_id: int
    task: str
    variant: str
    success: bool
    reached: bool
    n_interactions: int
    n_motions: int
    elapsed: float
    seed: int
    o_0: float = 0.0
    o_star: float = 0.0
    o_end: float = 0.0
    theta: float = 0.0
    blowup: bool = False
    reason: str = ""
    s: float = float("nan")
    side: int = 1
    phi: float = float("nan")
    rejections: int = 0

    def __post_init__(self) -> None:
        if self.n_motions > self.n_interactions:
            raise ValueError("n_motions cannot exceed n_interactions")

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, d: dict) -> "TrialResult":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _ratio(flags: Iterable[bool]) -> float:
    flags = list(flags)
    if not flags:
        raise ValueError("rate of an empty result set is undefined")
    return sum(bool(f) for f in flags) / len(flags)


def sample_success_rate(results: Sequence[TrialResult]) -> float:
    return _ratio(r.success for r in results)


def sample_reach_rate(results: Sequence[TrialResult]) -> float:
    return _ratio(r.reached for r in results)


def task_success_rate(results: Sequence[TrialResult], criterion: TaskCriterion = "gap") -> float:
    """Share of tasks ending within theta of the target.

    ``relative`` instead accepts a residual of up to 15% of the commanded
    motion.
    """
    if criterion == "gap":
        return _ratio(r.success for r in results)
    if criterion == "relative":
        return _ratio(
            not r.blowup and abs(r.o_end - r.o_star) <= RELATIVE_TOLERANCE * abs(r.o_star - r.o_0)
            for r in results
        )
    raise ValueError(f"unknown criterion {criterion!r}")


def mean_interactions(results: Sequence[TrialResult]) -> float:
    if not results:
        raise ValueError("empty result set")
    return sum(r.n_interactions for r in results) / len(results)
