"""Resumable line-delimited trial files and deterministic summaries."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .metrics import TrialResult

TRIALS_SCHEMA = "articulate.trials/1"
SUMMARY_SCHEMA = "articulate.summary/1"


class ResultsMismatch(ValueError):
    """An existing results file was produced with different settings."""


def read_trials(path: str | Path) -> tuple[dict, list[TrialResult]]:
    with open(path) as fh:
        lines = [json.loads(x) for x in fh if x.strip()]
    if not lines or lines[0].get("schema") != TRIALS_SCHEMA:
        raise ValueError(f"{path}: not a trials file ({TRIALS_SCHEMA})")
    meta = lines[0].get("meta", {})
    return meta, [TrialResult.from_record(r) for r in lines[1:]]


def run_resumable(
    path: str | Path,
    meta: dict,
    n_trials: int,
    run: Callable[[Sequence[int]], Iterable[TrialResult]],
) -> list[TrialResult]:
    """Run only the trial indices missing from ``path``; returns all trials in index order."""
    path = Path(path)
    meta = json.loads(json.dumps(meta))
    done: dict[int, TrialResult] = {}
    if path.exists():
        old_meta, old = read_trials(path)
        if old_meta != meta:
            raise ResultsMismatch(f"{path} was produced with different settings")
        done = {r.scenario_id: r for r in old if r.scenario_id < n_trials}
    path.parent.mkdir(parents=True, exist_ok=True)
    todo = [i for i in range(n_trials) if i not in done]
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": TRIALS_SCHEMA, "meta": meta}, sort_keys=True) + "\n")
        for i in sorted(done):
            fh.write(json.dumps(done[i].to_record(), sort_keys=True) + "\n")
        fh.flush()
        for r in run(todo):
            done[r.scenario_id] = r
            fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")
            fh.flush()
    results = [done[i] for i in range(n_trials)]
    with open(path, "w") as fh:  # canonical order
        fh.write(json.dumps({"schema": TRIALS_SCHEMA, "meta": meta}, sort_keys=True) + "\n")
        for r in results:
            fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")
    return results


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def write_summary(path: str | Path, kind: str, body: dict) -> dict:
    """Write a summary with sorted keys and no wall-clock content."""
    record = {"schema": SUMMARY_SCHEMA, "kind": kind, **_clean(body)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
    return record


def read_summary(path: str | Path) -> dict:
    record = json.loads(Path(path).read_text())
    if record.get("schema") != SUMMARY_SCHEMA:
        raise ValueError(f"{path}: not a summary file ({SUMMARY_SCHEMA})")
    return record


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Comma-separated table with a leading schema comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# schema: articulate.table/1\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)
