"""Training reports: per-iteration records and the speedup table."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .runtime import speedup

#: field names of one machine-readable iteration record
RECORD_FIELDS = ("iteration", "seconds", "objective", "rmse")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    seconds: float
    objective: float
    rmse: float | None = None


@dataclass
class TrainReport:
    algorithm: str
    workers: int
    precision: str
    rows: list[IterationRecord] = field(default_factory=list)
    wall_seconds: float = 0.0
    stages: dict = field(default_factory=dict)

    def add(self, rec: IterationRecord):
        if rec.iteration != len(self.rows) + 1:
            raise ValueError(f"iteration {rec.iteration} out of order")
        if rec.seconds < 0:
            raise ValueError("iteration time must be non-negative")
        self.rows.append(rec)

    def finish(self, wall_seconds: float, stages: dict | None = None):
        self.wall_seconds = wall_seconds
        self.stages = dict(stages or {})

    @property
    def train_seconds(self) -> float:
        """Sum of epoch times (evaluation excluded)."""
        return sum(r.seconds for r in self.rows)

    @property
    def objectives(self) -> list[float]:
        return [r.objective for r in self.rows]

    @property
    def final_objective(self) -> float:
        return self.rows[-1].objective

    @property
    def final_rmse(self) -> float | None:
        return self.rows[-1].rmse if self.rows else None

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "workers": self.workers,
            "precision": self.precision,
            "iterations": len(self.rows),
            "train_seconds": self.train_seconds,
            "wall_seconds": self.wall_seconds,
            "final_objective": self.final_objective if self.rows else None,
            "final_rmse": self.final_rmse,
            "stages": self.stages,
        }

    def write_jsonl(self, path):
        """One JSON object per line with keys ``iteration, seconds, objective, rmse``."""
        with open(path, "w") as f:
            for r in self.rows:
                f.write(json.dumps({k: getattr(r, k) for k in RECORD_FIELDS}) + "\n")

    def table(self) -> str:
        lines = [f"{self.algorithm} | workers={self.workers} | precision={self.precision}",
                 "Iteration | Time | Objective | RMSE"]
        for r in self.rows:
            err = "-" if r.rmse is None else f"{r.rmse:.6f}"
            lines.append(f"{r.iteration} | {r.seconds:.3f}s | {r.objective:.6g} | {err}")
        err = "-" if self.final_rmse is None else f"{self.final_rmse:.6f}"
        lines.append(f"total {self.train_seconds:.3f}s | final RMSE {err}")
        return "\n".join(lines)


def read_jsonl(path) -> list[IterationRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(IterationRecord(**{k: d[k] for k in RECORD_FIELDS}))
    return out


@dataclass(frozen=True)
class SpeedupRow:
    workers: int
    seconds: float
    speedup: float | None
    rmse: float | None

    def format(self) -> str:
        label = f"{self.workers} thread" + ("" if self.workers == 1 else "s")
        sp = "" if self.speedup is None else f"{self.speedup:.1f}"
        err = "-" if self.rmse is None else f"{self.rmse:.4f}"
        return f"{label} | {self.seconds:.3f}s | {sp} | {err}"


def speedup_rows(reports: list[TrainReport]) -> list[SpeedupRow]:
    """Table rows against the single-worker report, which must be present."""
    base = next((r for r in reports if r.workers == 1), None)
    if base is None:
        raise ValueError("speedup table needs a workers=1 baseline")
    rows = []
    for r in reports:
        sp = None if r is base else speedup(base, r)
        rows.append(SpeedupRow(r.workers, r.train_seconds, sp, r.final_rmse))
    return rows


def speedup_table(rows: list[SpeedupRow], title: str = "") -> str:
    lines = [title] if title else []
    lines.append("Test | Execution time | Speedup | RMSE")
    lines.extend(r.format() for r in rows)
    return "\n".join(lines)


def rows_to_dicts(rows: list[SpeedupRow]) -> list[dict]:
    return [asdict(r) for r in rows]
