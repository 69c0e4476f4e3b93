"""Coalescing random walks driven by the forest.

The walk born at a point sits still until the ray from it meets an obstacle,
then jumps to that obstacle's centre and continues from there; walks that
reach the same point coalesce. Positions are identified by the sample point
(the *carrier*) whose location they occupy, so coalescence is decided on ids,
never on floating-point equality. Walkers started away from sample points
are labelled ``-(j + 1)`` until their first jump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

from . import _kernels
from .forest import Forest, build_forest
from .point_process import PointSample, ValidationError, Window


@dataclass(frozen=True, eq=False)
class Trajectory:
    birth_x: np.ndarray
    birth_r: float
    jump_times: np.ndarray
    positions: np.ndarray
    horizon: float
    rows: np.ndarray | None = None

    def at(self, t: float) -> np.ndarray:
        if t < self.birth_r or t > self.horizon:
            raise ValidationError(f"t={t} outside [{self.birth_r}, {self.horizon}]")
        n = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.birth_x if n == 0 else self.positions[n - 1]

    def displacements(self, window: Window) -> np.ndarray:
        prev = np.vstack([self.birth_x[None, :], self.positions[:-1]]) if len(self.positions) \
            else np.empty((0, len(self.birth_x)))
        return window.displacement(prev, self.positions)


def trajectory(s: int, forest: Forest, t_max: float) -> Trajectory:
    """Jump times and landing positions of the walk born at ``s`` up to ``t_max``."""
    sample = forest.sample
    row = forest.row(s)
    if t_max > sample.window.time_hi:
        raise ValidationError("t_max beyond the window")
    birth_r = float(sample.r[row])
    if t_max < birth_r:
        raise ValidationError("t_max before the birth time")
    rows = []
    v = int(forest.mother_row[row])
    while v >= 0 and sample.r[v] <= t_max:
        rows.append(v)
        v = int(forest.mother_row[v])
    rows = np.asarray(rows, dtype=np.int64)
    return Trajectory(sample.x[row].copy(), birth_r, sample.r[rows].copy(),
                      sample.x[rows].copy(), float(min(t_max, sample.window.time_hi)), rows)


@dataclass(frozen=True, eq=False)
class SliceConfig:
    """Occupied positions at time ``t``.

    ``carriers[i]`` labels the walker at ``occupied[i]``; ``lineage`` maps a
    carrier to the founders (ids, or negative labels of initial walkers)
    whose walks have merged into it.
    """

    t: float
    occupied: np.ndarray
    carriers: tuple[int, ...]
    lineage: dict

    @property
    def walker_count(self) -> int:
        return len(self.carriers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SliceConfig):
            return NotImplemented
        return (self.t == other.t and self.carriers == other.carriers
                and self.lineage == other.lineage
                and np.array_equal(self.occupied, other.occupied))

    __hash__ = None

    def positions(self) -> set[tuple[float, ...]]:
        return {tuple(float(v) for v in p) for p in self.occupied}

    def restrict(self, lo: Sequence[float], hi: Sequence[float]) -> "SliceConfig":
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        keep = [i for i, p in enumerate(self.occupied) if np.all(p >= lo) and np.all(p <= hi)]
        return SliceConfig(self.t, self.occupied[keep], tuple(self.carriers[i] for i in keep),
                           {self.carriers[i]: self.lineage[self.carriers[i]] for i in keep})


def _slice_from_labels(t: float, founders: list[int], carriers: list[int],
                       position_of) -> SliceConfig:
    groups: dict[int, set] = {}
    for f, c in zip(founders, carriers):
        groups.setdefault(c, set()).add(f)
    keys = sorted(groups)
    occ = np.array([position_of(c) for c in keys], dtype=float)
    return SliceConfig(float(t), occ, tuple(keys), {c: frozenset(groups[c]) for c in keys})


def _check_time(forest: Forest, t: float) -> None:
    w = forest.sample.window
    if not w.time_lo <= t <= w.time_hi:
        raise ValidationError(f"t={t} outside the window time range")


def eta_slice(forest: Forest, t: float) -> SliceConfig:
    """Positions at time ``t`` of all walks born at or before ``t``."""
    _check_time(forest, t)
    sample = forest.sample
    if len(sample) == 0:
        return SliceConfig(float(t), np.empty((0, sample.window.k)), (), {})
    carrier = _kernels.carriers_at(forest.mother_row, sample.r, float(t))
    born = np.flatnonzero(carrier >= 0)
    ids = sample.ids
    return _slice_from_labels(
        t, [int(ids[i]) for i in born], [int(ids[carrier[i]]) for i in born],
        lambda c: sample.x[sample.position(c)],
    )


def eta_from_initial(eta0: Iterable[Sequence[float]] | np.ndarray, t_start: float,
                     forest: Forest, t: float) -> SliceConfig:
    """Evolve walkers placed at ``eta0`` at time ``t_start`` together with every
    walk born in ``[t_start, t]``."""
    _check_time(forest, t_start)
    _check_time(forest, t)
    if t < t_start:
        raise ValidationError("t must not precede t_start")
    sample = forest.sample
    k = sample.window.k
    eta0 = np.asarray(list(eta0) if not isinstance(eta0, np.ndarray) else eta0, dtype=float)
    if eta0.size:
        # drop repeated starts but keep input order, so walker j is labelled -(j + 1)
        eta0 = eta0.reshape(-1, k)
        _, first = np.unique(eta0, axis=0, return_index=True)
        eta0 = eta0[np.sort(first)]
    else:
        eta0 = np.empty((0, k))
    ids = sample.ids
    founders, carriers = [], []
    if len(sample):
        carrier = _kernels.carriers_at(forest.mother_row, sample.r, float(t))
        born = np.flatnonzero((sample.r >= t_start) & (carrier >= 0))
        founders = [int(ids[i]) for i in born]
        carriers = [int(ids[carrier[i]]) for i in born]
        hits = forest.index.first_hits(eta0, np.full(len(eta0), float(t_start))) \
            if len(eta0) else np.empty(0, np.int64)
    else:
        hits = np.full(len(eta0), -1, np.int64)
    for j, h in enumerate(hits):
        founders.append(-(j + 1))
        if h >= 0 and sample.r[h] <= t:
            carriers.append(int(ids[carrier[h]]))
        else:
            carriers.append(-(j + 1))

    def position_of(c):
        return eta0[-c - 1] if c < 0 else sample.x[sample.position(c)]

    return _slice_from_labels(t, founders, carriers, position_of)


@dataclass(frozen=True)
class DependenceSet:
    ids: frozenset
    emptied: bool
    stop_time: float


def _box_in_ball(lo, hi, centre, window: Window) -> bool:
    # a box lies in a ball iff its farthest corner does
    mid = 0.5 * (lo + hi)
    c = mid + window.displacement(mid, centre)
    far = np.maximum(np.abs(lo - c), np.abs(hi - c))
    return float(far @ far) <= 1.0


def _box_meets_ball(lo, hi, centre, window: Window) -> bool:
    mid = 0.5 * (lo + hi)
    c = mid + window.displacement(mid, centre)
    near = np.clip(c, lo, hi) - c
    return float(near @ near) <= 1.0


def _point_in_boxes(x, boxes, window: Window) -> bool:
    for lo, hi in boxes:
        mid = 0.5 * (lo + hi)
        p = mid + window.displacement(mid, x)
        if np.all(p >= lo) and np.all(p <= hi):
            return True
    return False


def dependence_set(region: tuple[Sequence[float], Sequence[float]], t: float,
                   sample: PointSample, forest: Forest | None = None,
                   min_edge: float = 1.0 / 64) -> DependenceSet:
    """Points on which the configuration at time ``t`` inside ``region`` depends.

    The region is swept backwards in time; each point met inside the
    uncovered part joins the set and removes its unit ball from it. Uncovered
    parts are tracked as boxes refined down to ``min_edge``; a box is only
    dropped once it lies inside the union of the balls removed so far, so the
    result can be a superset of the minimal set but never misses a point.
    The set is finally closed under ancestors born no later than ``t``.
    """
    window = sample.window
    lo = np.asarray(region[0], dtype=float).reshape(window.k)
    hi = np.asarray(region[1], dtype=float).reshape(window.k)
    if np.any(hi < lo) or np.any(lo < window.space_lo) or np.any(hi > window.space_hi):
        raise ValidationError("region must be a box inside the window")
    if len(sample) == 0:
        return DependenceSet(frozenset(), False, window.time_lo)
    if forest is None:
        forest = build_forest(sample)
    boxes = [(lo, hi)]
    cand = np.flatnonzero(sample.r <= t)[::-1]
    picked: list[int] = []
    stop = window.time_lo
    for row in cand:
        x = sample.x[row]
        if not _point_in_boxes(x, boxes, window):
            continue
        picked.append(int(row))
        boxes = _subtract_ball(boxes, sample.x[picked], window, min_edge)
        if not boxes:
            stop = float(sample.r[row])
            break
    closed = set()
    for row in picked:
        v = row
        while v >= 0 and sample.r[v] <= t and v not in closed:
            closed.add(v)
            v = int(forest.mother_row[v])
    ids = sample.ids
    return DependenceSet(frozenset(int(ids[v]) for v in closed), not boxes, stop)


def _split(lo, hi):
    mid = 0.5 * (lo + hi)
    k = len(lo)
    for corner in range(1 << k):
        bits = np.array([(corner >> a) & 1 for a in range(k)], dtype=bool)
        yield np.where(bits, mid, lo), np.where(bits, hi, mid)


def _covered(lo, hi, centres, window: Window, depth: int) -> bool:
    # conservative: true only if every sub-box sits inside a single ball
    near = [c for c in centres if _box_meets_ball(lo, hi, c, window)]
    if not near:
        return False
    if any(_box_in_ball(lo, hi, c, window) for c in near):
        return True
    if depth == 0:
        return False
    return all(_covered(a, b, near, window, depth - 1) for a, b in _split(lo, hi))


def _subtract_ball(boxes, centres, window: Window, min_edge: float, depth: int = 6):
    """Remove the ball around ``centres[-1]``; boxes at the finest level are
    checked against the union of all balls in ``centres``."""
    centre = centres[-1]
    out = []
    work = list(boxes)
    while work:
        lo, hi = work.pop()
        if not _box_meets_ball(lo, hi, centre, window):
            out.append((lo, hi))
        elif _box_in_ball(lo, hi, centre, window):
            continue
        elif np.max(hi - lo) <= min_edge:
            if not _covered(lo, hi, centres, window, depth):
                out.append((lo, hi))
        else:
            work.extend(_split(lo, hi))
    return out


def _strict_ancestors(row: int, forest: Forest) -> list[int]:
    out = []
    v = int(forest.mother_row[row])
    while v >= 0:
        out.append(v)
        v = int(forest.mother_row[v])
    return out


def meeting_time(s1: int, s2: int, forest: Forest, mode: str = "joint_jump") -> float | None:
    """First time the two walks share a position.

    ``joint_jump`` counts a meeting when both walks jump onto the same point
    (their closest common strict ancestor). ``position`` also counts a walk
    landing on the birth point of the other one.
    """
    a, b = forest.row(s1), forest.row(s2)
    r = forest.sample.r
    if a == b:
        return float(r[a])
    if mode == "joint_jump":
        ca, cb = _strict_ancestors(a, forest), _strict_ancestors(b, forest)
    elif mode == "position":
        ca, cb = [a] + _strict_ancestors(a, forest), [b] + _strict_ancestors(b, forest)
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    seen = set(ca)
    for v in cb:
        if v in seen:
            return float(r[v])
    return None


@dataclass(frozen=True)
class SurvivingSet:
    r: float
    config: SliceConfig


def backward_surviving(forest: Forest, r: float, t: float) -> SurvivingSet:
    """Walkers at time ``t`` whose lineage holds a founder born at or before ``r``."""
    if r >= t:
        raise ValidationError("need r < t")
    _check_time(forest, r)
    full = eta_slice(forest, t)
    sample = forest.sample
    keep = []
    for i, c in enumerate(full.carriers):
        if any(sample.r[sample.position(f)] <= r for f in full.lineage[c]):
            keep.append(i)
    cfg = SliceConfig(full.t, full.occupied[keep], tuple(full.carriers[i] for i in keep),
                      {full.carriers[i]: full.lineage[full.carriers[i]] for i in keep})
    return SurvivingSet(float(r), cfg)


def probe_trajectory(x: Sequence[float], t_start: float, forest: Forest) -> Trajectory:
    """Walk of a walker placed at ``x`` at ``t_start`` (not a sample point),
    followed until its ancestor chain leaves the window."""
    sample = forest.sample
    x = np.asarray(x, dtype=float).reshape(sample.window.k)
    h = int(forest.index.first_hits(x[None, :], np.array([float(t_start)]))[0])
    rows = []
    while h >= 0:
        rows.append(h)
        h = int(forest.mother_row[h])
    rows = np.asarray(rows, dtype=np.int64)
    return Trajectory(x, float(t_start), sample.r[rows].copy(), sample.x[rows].copy(),
                      sample.window.time_hi, rows)


def format_trajectory(s: int, traj: Trajectory) -> str:
    lines = [f"{s}"]
    for tau, p in zip(traj.jump_times, traj.positions):
        lines.append(" ".join([repr(float(tau))] + [repr(float(v)) for v in p]))
    return "\n".join(lines) + "\n"


def format_slice(cfg: SliceConfig) -> str:
    lines = [repr(cfg.t)]
    for p, c in zip(cfg.occupied, cfg.carriers):
        founders = " ".join(str(f) for f in sorted(cfg.lineage[c]))
        lines.append(" ".join(repr(float(v)) for v in p) + " " + founders)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# paired walkers with the point process revealed inside the obstacle discs


def unit_ball_volume(k: int) -> float:
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


@numba.njit(cache=True)
def _ball_point(k, out):
    while True:
        s = 0.0
        for a in range(k):
            out[a] = 2.0 * np.random.random() - 1.0
            s += out[a] * out[a]
        if s <= 1.0:
            return


@numba.njit(cache=True)
def _pair_runs(k, separation, rate, vol, horizon, seeds):
    n = seeds.shape[0]
    out = np.full(n, np.inf)
    x = np.zeros(k)
    y = np.zeros(k)
    u = np.zeros(k)
    p = np.zeros(k)
    for i in range(n):
        np.random.seed(seeds[i])
        x[:] = 0.0
        y[:] = 0.0
        y[0] = separation
        t = 0.0
        while True:
            # two unit discs, each revealed at rate*vol; the second disc
            # ignores points already owned by the first
            t += np.random.exponential(1.0 / (2.0 * rate * vol))
            if t > horizon:
                break
            _ball_point(k, u)
            own_x = np.random.random() < 0.5
            dx2 = 0.0
            dy2 = 0.0
            for a in range(k):
                p[a] = (x[a] if own_x else y[a]) + u[a]
                dx2 += (p[a] - x[a]) ** 2
                dy2 += (p[a] - y[a]) ** 2
            in_x = dx2 <= 1.0
            in_y = dy2 <= 1.0
            if not own_x and in_x:
                continue
            if in_x and in_y:
                out[i] = t
                break
            if in_x:
                x[:] = p
            if in_y:
                y[:] = p
    return out


def pair_meeting_times(d: int, separation: float, rate: float, horizon: float,
                       seeds: np.ndarray) -> np.ndarray:
    """Meeting times (inf if none by ``horizon``) of two walkers started at
    distance ``separation`` at time 0, one run per seed.

    Each run reveals the point process only inside the two current obstacle
    discs; by the independence of Poisson points in disjoint regions this has
    the law of the walks on a full sample in infinite space.
    """
    if d < 2:
        raise ValidationError("d must be at least 2")
    k = d - 1
    return _pair_runs(k, float(separation), float(rate), unit_ball_volume(k), float(horizon),
                      np.asarray(seeds, dtype=np.int64))
