"""Successor/predecessor maps on a Poisson forest and the succession line.

Sisters are ordered by their displacement from the mother (first space
coordinate, then the next ones, then id); the eldest comes first. In a
finite window the searches can need structure that lies outside it; they
then report ``UNRESOLVED`` instead of guessing a vertex.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .forest import Forest, branch_rows
from .point_process import ValidationError


class Status(enum.Enum):
    FOUND = "found"
    UNRESOLVED = "unresolved_at_boundary"
    DOMAIN_ERROR = "domain_error"


@dataclass(frozen=True)
class Resolution:
    status: Status
    vertex: int | None = None
    steps: int = 0

    @property
    def found(self) -> bool:
        return self.status is Status.FOUND


def _row_or_error(s: int, forest: Forest) -> int | None:
    try:
        return forest.row(s)
    except ValidationError:
        return None


def successor_row(row: int, forest: Forest) -> tuple[int, int]:
    """Row of the successor (-1 if unresolved) and the number of tree moves."""
    flagged = forest.boundary_rows
    mother = forest.mother_row
    if flagged[row]:
        return -1, 0
    if forest.n_children(row):
        return int(forest.child_items[forest.child_start[row]]), 1
    budget = len(mother)
    v, steps = row, 0
    while steps <= budget:
        m = int(mother[v])
        if m < 0 or flagged[m]:
            return -1, steps
        rank = int(forest.rank_row[v])
        steps += 1
        if rank < forest.n_children(m):
            # eldest of the younger sisters
            return int(forest.child_items[forest.child_start[m] + rank]), steps
        v = m
    return -1, steps


def predecessor_row(row: int, forest: Forest) -> tuple[int, int]:
    flagged = forest.boundary_rows
    m = int(forest.mother_row[row])
    if m < 0 or flagged[m]:
        return -1, 0
    rank = int(forest.rank_row[row])
    if rank == 1:
        return m, 1
    # youngest elder sister, then youngest daughters down to a leaf
    v = int(forest.child_items[forest.child_start[m] + rank - 2])
    steps, budget = 1, len(flagged)
    while steps <= budget:
        if flagged[v]:
            return -1, steps
        nc = forest.n_children(v)
        if nc == 0:
            return v, steps
        v = int(forest.child_items[forest.child_start[v] + nc - 1])
        steps += 1
    return -1, steps


def _resolve(step, s: int, forest: Forest) -> Resolution:
    row = _row_or_error(s, forest)
    if row is None:
        return Resolution(Status.DOMAIN_ERROR)
    out, steps = step(row, forest)
    if out < 0:
        return Resolution(Status.UNRESOLVED, None, steps)
    return Resolution(Status.FOUND, forest.id_of(out), steps)


def successor(s: int, forest: Forest) -> Resolution:
    return _resolve(successor_row, s, forest)


def predecessor(s: int, forest: Forest) -> Resolution:
    return _resolve(predecessor_row, s, forest)


@dataclass(frozen=True)
class SuccessionLabels:
    anchor: int
    labels: dict = field(default_factory=dict)
    complete: bool = True

    @property
    def lo(self) -> int:
        return min(self.labels)

    @property
    def hi(self) -> int:
        return max(self.labels)

    def __getitem__(self, n: int) -> int:
        return self.labels[n]


def enumerate_line(anchor: int, forest: Forest, back: int, forward: int) -> SuccessionLabels:
    """Label X_n for n in [-back, forward] starting from ``anchor`` (X_0).

    A direction stops early at the first unresolved step; ``complete`` is
    then false.
    """
    if back < 0 or forward < 0:
        raise ValidationError("back and forward must be non-negative")
    row = _row_or_error(anchor, forest)
    if row is None:
        raise ValidationError(f"unknown anchor {anchor}")
    labels = {0: row}
    seen = {row}
    complete = True
    for sign, count, step in ((1, forward, successor_row), (-1, back, predecessor_row)):
        v = row
        for n in range(1, count + 1):
            v, _ = step(v, forest)
            if v < 0:
                complete = False
                break
            assert v not in seen, "succession line revisited a vertex"
            seen.add(v)
            labels[sign * n] = v
    return SuccessionLabels(int(anchor), {n: forest.id_of(v) for n, v in sorted(labels.items())},
                            complete)


def preorder_oracle(root: int, forest: Forest) -> list[int]:
    """Depth-first preorder of the branch of ``root``, sisters eldest first."""
    row = _row_or_error(root, forest)
    if row is None:
        raise ValidationError(f"unknown id {root}")
    rows, _ = branch_rows(row, forest)
    if forest.boundary_rows[rows].any():
        raise ValidationError(f"branch of {root} is truncated by the window")
    out = []
    # explicit stack so deep branches do not hit the recursion limit
    stack = [row]
    while stack:
        v = stack.pop()
        out.append(forest.id_of(v))
        stack.extend(int(c) for c in reversed(forest.children_rows(v)))
    return out


@dataclass(frozen=True)
class ShiftedView:
    """The configuration recentred at one of its points (no copy).

    Coordinates are expressed relative to ``centre``; space wraps on the
    torus. Tree structure is translation invariant, so ids carry over.
    """

    forest: Forest
    centre: int

    def coords(self, s: int) -> tuple[np.ndarray, float]:
        sample = self.forest.sample
        a, c = sample.position(s), sample.position(self.centre)
        dx = sample.window.displacement(sample.x[c], sample.x[a])
        return dx, float(sample.r[a] - sample.r[c])

    def successor(self, s: int) -> Resolution:
        return successor(s, self.forest)

    def predecessor(self, s: int) -> Resolution:
        return predecessor(s, self.forest)


def point_map(view: ShiftedView, n: int) -> int | None:
    """Id of X_n for the configuration seen from ``view.centre``."""
    s = view.centre
    step = view.successor if n >= 0 else view.predecessor
    for _ in range(abs(n)):
        res = step(s)
        if not res.found:
            return None
        s = res.vertex
    return s


def check_pointshift_identity(anchor: int, forest: Forest, n: int) -> bool:
    """Check that X_{-n} of the configuration shifted to X_n is the old anchor,
    i.e. the shifted position of the result equals minus the position of X_n.

    Raises ``ValidationError`` when the chain leaves the window.
    """
    base = ShiftedView(forest, anchor)
    xn = point_map(base, n)
    if xn is None:
        raise ValidationError(f"X_{n} from {anchor} is not resolved in the window")
    shifted = ShiftedView(forest, xn)
    back = point_map(shifted, -n)
    if back is None:
        raise ValidationError(f"X_{-n} after the shift is not resolved in the window")
    dx_back, dr_back = shifted.coords(back)
    dx_n, dr_n = base.coords(xn)
    # exact: both sides are the same id difference when the identity holds
    return back == anchor and np.array_equal(dx_back, -dx_n) and dr_back == -dr_n


def format_succession(labels: SuccessionLabels, forest: Forest,
                      extra_header: Iterable[str] = ()) -> str:
    sample = forest.sample
    lines = [sample.header(),
             f"# succession anchor={labels.anchor} complete={int(labels.complete)} "
             f"lo={labels.lo} hi={labels.hi}"]
    lines.extend(f"# {h}" for h in extra_header)
    for n, pid in labels.labels.items():
        p = sample.point(pid)
        coords = " ".join(repr(v) for v in p.x)
        lines.append(f"{n} {pid} {coords} {p.r!r}")
    return "\n".join(lines) + "\n"
