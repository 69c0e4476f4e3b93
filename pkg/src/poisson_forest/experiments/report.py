"""Experiment configuration, verdicts and report serialization."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

from ..point_process import Boundary, ValidationError

CSV_HEADER = ("experiment", "cell", "statistic", "value", "stderr", "n", "verdict")


class Outcome(str, enum.Enum):
    PASSED = "passed"
    FAILED = "failed"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ExperimentConfig:
    """Common parameters plus experiment-specific ``knobs``.

    ``space`` and ``duration`` set the default window; each experiment
    documents the knobs it reads and their defaults.
    """

    d: int = 2
    rate: float = 1.0
    space: float | None = None
    duration: float | None = None
    boundary: Boundary = Boundary.PERIODIC
    replicas: int | None = None
    seed: int = 0
    knobs: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 2:
            raise ValidationError(f"d must be an integer >= 2, got {self.d!r}")
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValidationError(f"rate must be positive, got {self.rate!r}")
        if self.replicas is not None and (not isinstance(self.replicas, int) or self.replicas < 1):
            raise ValidationError(f"replicas must be a positive integer, got {self.replicas!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed!r}")
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        for key, value in self.knobs.items():
            if isinstance(value, (list, tuple)) and len(value) == 0:
                raise ValidationError(f"knob {key!r} is an empty grid")

    def knob(self, name: str, default: Any) -> Any:
        return self.knobs.get(name, default)

    def grid(self, name: str, default) -> tuple:
        value = self.knobs.get(name, default)
        if not isinstance(value, (list, tuple)):
            value = (value,)
        return tuple(value)

    def echo(self) -> dict[str, Any]:
        out = {"d": self.d, "rate": self.rate, "space": self.space, "duration": self.duration,
               "boundary": self.boundary.value, "replicas": self.replicas, "seed": self.seed}
        out.update({k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.knobs.items())})
        return out


@dataclass(frozen=True)
class Cell:
    name: str
    statistic: str
    value: float
    stderr: float = math.nan
    n: int = 0


@dataclass(frozen=True)
class Verdict:
    """One tested invariant with the evidence behind it."""

    name: str
    invariant: str
    statistic: str
    value: float
    threshold: float
    outcome: Outcome
    n: int
    p_value: float | None = None
    level: float | None = None
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.outcome is Outcome.PASSED


@dataclass
class ExperimentReport:
    name: str
    params: dict[str, Any]
    cells: list[Cell] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    runtime: float = 0.0

    def add_cell(self, name: str, statistic: str, value: float, stderr: float = math.nan,
                 n: int = 0) -> None:
        self.cells.append(Cell(name, statistic, float(value), float(stderr), int(n)))

    def add_verdict(self, verdict: Verdict) -> None:
        self.verdicts.append(verdict)

    @property
    def outcome(self) -> Outcome:
        outcomes = {v.outcome for v in self.verdicts}
        if Outcome.FAILED in outcomes:
            return Outcome.FAILED
        if Outcome.INCONCLUSIVE in outcomes:
            return Outcome.INCONCLUSIVE
        return Outcome.PASSED

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def cell(self, name: str, statistic: str) -> Cell:
        for c in self.cells:
            if c.name == name and c.statistic == statistic:
                return c
        raise KeyError((name, statistic))

    # runtime is left out of both serializations so that reruns compare equal

    def records(self) -> list[dict[str, Any]]:
        out = [{"type": "params", "experiment": self.name, **self.params}]
        for c in self.cells:
            out.append({"type": "cell", "experiment": self.name, "cell": c.name,
                        "statistic": c.statistic, "value": _num(c.value),
                        "stderr": _num(c.stderr), "n": c.n})
        for v in self.verdicts:
            out.append({"type": "verdict", "experiment": self.name, "verdict": v.name,
                        "invariant": v.invariant, "statistic": v.statistic,
                        "value": _num(v.value), "threshold": _num(v.threshold),
                        "p_value": _num(v.p_value), "level": v.level, "n": v.n,
                        "outcome": v.outcome.value, "note": v.note})
        out.append({"type": "summary", "experiment": self.name, "outcome": self.outcome.value})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in self.cells:
            w.writerow([self.name, c.name, c.statistic, _fmt(c.value), _fmt(c.stderr), c.n, ""])
        for v in self.verdicts:
            stat = f"{v.statistic} {v.invariant}"
            w.writerow([self.name, v.name, stat, _fmt(v.value), "", v.n, v.outcome.value])
        return buf.getvalue()

    def summary_lines(self) -> list[str]:
        lines = []
        for v in self.verdicts:
            extra = f" p={v.p_value:.4g}" if v.p_value is not None else ""
            lines.append(f"{v.outcome.value:12s} {v.name}: {v.statistic}={v.value:.6g} "
                         f"({v.invariant}, n={v.n}){extra}")
        return lines


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else str(v)


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))
