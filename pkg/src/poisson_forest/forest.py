"""The Poisson tree/forest: every point is linked to its *mother*, the first
point whose unit obstacle disc is hit by the upward time ray from it.

Rows of a :class:`~poisson_forest.point_process.PointSample` are in total
time order, so a mother always sits at a larger row than her daughters.
Public functions speak point ids; the ``*_row`` helpers speak rows.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .point_process import Point, PointSample, ValidationError, Window

OBSTACLE_RADIUS = 1.0


@dataclass(frozen=True, eq=False)
class GridIndex:
    """Space-only bucket grid; each bucket lists rows in time order.

    Cells have edge ``L_i / floor(L_i)`` (at least one obstacle radius), so
    a unit ball around any x meets at most 3 cells per axis.
    """

    window: Window
    sample: PointSample
    cell_size: float
    ncell: np.ndarray
    edge: np.ndarray
    cell_start: np.ndarray
    cell_items: np.ndarray

    @property
    def buckets(self) -> dict[tuple[int, ...], list[int]]:
        out = {}
        for f in np.flatnonzero(np.diff(self.cell_start)):
            rows = self.cell_items[self.cell_start[f]:self.cell_start[f + 1]]
            key = tuple(int(v) for v in np.unravel_index(f, tuple(self.ncell)))
            out[key] = [int(self.sample.ids[r]) for r in rows]
        return out

    def first_hits(self, qx: np.ndarray, qr: np.ndarray) -> np.ndarray:
        """Rows of the first obstacle hit from each probe, -1 when unresolved."""
        qx = np.ascontiguousarray(np.asarray(qx, dtype=float).reshape(-1, self.window.k))
        qr = np.ascontiguousarray(np.asarray(qr, dtype=float).reshape(-1))
        if len(qr) == 0:
            return np.empty(0, np.int64)
        return _kernels.first_hits(
            qx, qr, self.sample.x, self.sample.r, self.cell_start, self.cell_items,
            self.window.space_lo, self.edge, self.ncell, self.window.extent,
            self.window.periodic,
        )


def build_index(sample: PointSample, cell_size: float = OBSTACLE_RADIUS) -> GridIndex:
    if cell_size < OBSTACLE_RADIUS:
        raise ValidationError("cell size must be at least the obstacle radius")
    window = sample.window
    ext = window.extent
    ncell = np.maximum(1, np.floor(ext / cell_size)).astype(np.int64)
    edge = ext / ncell
    total = int(np.prod(ncell))
    if len(sample):
        flat = _kernels.cell_of(np.ascontiguousarray(sample.x), window.space_lo, edge, ncell)
    else:
        flat = np.empty(0, np.int64)
    # stable sort keeps time order inside each bucket
    items = np.argsort(flat, kind="stable").astype(np.int64)
    start = np.zeros(total + 1, np.int64)
    np.cumsum(np.bincount(flat, minlength=total), out=start[1:])
    return GridIndex(window, sample, float(cell_size), ncell, edge, start, items)


def _probe(s, index: GridIndex) -> tuple[np.ndarray, float]:
    if isinstance(s, Point):
        x, r = np.asarray(s.x, dtype=float), float(s.r)
    elif isinstance(s, (int, np.integer)):
        p = index.sample.point(int(s))
        x, r = np.asarray(p.x, dtype=float), p.r
    else:
        x, r = np.asarray(s[0], dtype=float).reshape(-1), float(s[1])
    if not index.window.contains(x, r):
        raise ValidationError(f"probe ({x.tolist()}, {r}) lies outside the window")
    return x, r


def mother(s, index: GridIndex) -> tuple[Point, float] | None:
    """First obstacle hit from ``s`` (a Point, an id, or an ``(x, r)`` probe).

    Returns ``(mother_point, tau)`` or ``None`` if the ray leaves the window.
    """
    x, r = _probe(s, index)
    row = int(index.first_hits(x[None, :], np.array([r]))[0])
    if row < 0:
        return None
    sample = index.sample
    return sample.point(int(sample.ids[row])), float(sample.r[row])


def mother_rows_linear_scan(sample: PointSample) -> np.ndarray:
    """Reference mother map by scanning the time-sorted rows above each point.

    Independent of the grid; O(n * gap) with numpy chunks.
    """
    n = len(sample)
    out = np.full(n, -1, np.int64)
    x, r, window = sample.x, sample.r, sample.window
    ext = window.extent
    chunk = 256
    for i in range(n):
        j = i + 1
        while j < n:
            hi = min(n, j + chunk)
            dx = x[j:hi] - x[i]
            if window.periodic:
                dx = dx - ext * np.round(dx / ext)
            ok = (np.einsum("ij,ij->i", dx, dx) <= 1.0) & (r[j:hi] > r[i])
            hit = np.flatnonzero(ok)
            if len(hit):
                out[i] = j + hit[0]
                break
            j = hi
    return out


@dataclass(frozen=True)
class Branch:
    root: int
    members: frozenset
    generations: dict
    truncated: bool

    def generation(self, n: int) -> set[int]:
        return {s for s, g in self.generations.items() if g == n}


@dataclass(frozen=True)
class ComponentSummary:
    count: int
    sizes: tuple[int, ...]
    largest_fraction: float


@dataclass(frozen=True, eq=False)
class Forest:
    """Mother links, sister-ordered daughter lists and component labels.

    ``boundary_rows`` marks rows whose daughter lists may be incomplete: within
    one obstacle radius of an open space face, or below ``time_lo + time_guard``.
    """

    sample: PointSample
    index: GridIndex
    mother_row: np.ndarray
    child_start: np.ndarray
    child_items: np.ndarray
    rank_row: np.ndarray
    root_row: np.ndarray
    boundary_rows: np.ndarray
    time_guard: float = 0.0
    _mother_ids: dict = field(default=None, repr=False)

    # -- row helpers -------------------------------------------------------
    def row(self, point_id: int) -> int:
        return self.sample.position(point_id)

    def id_of(self, row: int) -> int:
        return int(self.sample.ids[row])

    def children_rows(self, row: int) -> np.ndarray:
        return self.child_items[self.child_start[row]:self.child_start[row + 1]]

    def n_children(self, row: int) -> int:
        return int(self.child_start[row + 1] - self.child_start[row])

    # -- id-level views ----------------------------------------------------
    def __len__(self) -> int:
        return len(self.sample)

    @property
    def mother(self) -> dict[int, int | None]:
        if self._mother_ids is None:
            ids = self.sample.ids
            m = {int(ids[i]): (None if mr < 0 else int(ids[mr]))
                 for i, mr in enumerate(self.mother_row)}
            object.__setattr__(self, "_mother_ids", m)
        return self._mother_ids

    def children(self, point_id: int) -> list[int]:
        return [self.id_of(c) for c in self.children_rows(self.row(point_id))]

    @property
    def roots(self) -> list[int]:
        return [self.id_of(i) for i in np.flatnonzero(self.mother_row < 0)]

    @property
    def tau(self) -> np.ndarray:
        """Time of the first obstacle hit per row (inf when unresolved)."""
        out = np.full(len(self.sample), np.inf)
        ok = self.mother_row >= 0
        out[ok] = self.sample.r[self.mother_row[ok]]
        return out

    @property
    def unresolved_fraction(self) -> float:
        n = len(self.sample)
        return float(np.count_nonzero(self.mother_row < 0)) / n if n else 0.0

    def component_id(self, point_id: int) -> int:
        """Id of the root of the tree holding ``point_id``."""
        return self.id_of(self.root_row[self.row(point_id)])


def boundary_mask(sample: PointSample, time_guard: float = 0.0) -> np.ndarray:
    window = sample.window
    mask = sample.r < window.time_lo + time_guard
    if not window.periodic and len(sample):
        lo, hi = window.space_lo, window.space_hi
        near = np.any((sample.x - lo <= OBSTACLE_RADIUS) | (hi - sample.x <= OBSTACLE_RADIUS), axis=1)
        mask = mask | near
    return mask


def forest_from_mothers(sample: PointSample, mother_row: np.ndarray,
                        index: GridIndex | None = None, time_guard: float = 0.0) -> Forest:
    """Assemble a Forest from an already computed mother map."""
    if index is None:
        index = build_index(sample)
    n = len(sample)
    mother_row = np.asarray(mother_row, dtype=np.int64)
    kids = np.flatnonzero(mother_row >= 0)
    moms = mother_row[kids]
    # sister order: displacement from the mother, lexicographic over
    # coordinates, then id
    rel = sample.window.displacement(sample.x[moms], sample.x[kids]) if len(kids) else \
        np.empty((0, sample.window.k))
    keys = [sample.ids[kids]] + [rel[:, a] for a in range(rel.shape[1] - 1, -1, -1)] + [moms]
    order = np.lexsort(keys) if len(kids) else np.empty(0, np.int64)
    child_items = kids[order].astype(np.int64)
    child_start = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(moms, minlength=n), out=child_start[1:])
    rank_row = np.zeros(n, np.int64)
    if len(child_items):
        sorted_moms = mother_row[child_items]
        rank_row[child_items] = np.arange(len(child_items)) - child_start[sorted_moms] + 1
    root_row = _kernels.root_rows(mother_row) if n else np.empty(0, np.int64)
    bmask = boundary_mask(sample, time_guard)
    for arr in (mother_row, child_start, child_items, rank_row, root_row, bmask):
        arr.setflags(write=False)
    return Forest(sample, index, mother_row, child_start, child_items, rank_row,
                  root_row, bmask, float(time_guard))


def build_forest(sample: PointSample, time_guard: float = 0.0) -> Forest:
    index = build_index(sample)
    if len(sample):
        mother_row = index.first_hits(sample.x, sample.r)
    else:
        mother_row = np.empty(0, np.int64)
    return forest_from_mothers(sample, mother_row, index, time_guard)


def ancestor_row(row: int, n: int, forest: Forest) -> int:
    for _ in range(n):
        if row < 0:
            break
        row = int(forest.mother_row[row])
    return row


def ancestor(s: int, n: int, forest: Forest) -> int | None:
    """The n-th ancestor of ``s`` (``s`` itself for n = 0), ``None`` once an
    unresolved root is crossed."""
    if n < 0:
        raise ValidationError("n must be non-negative")
    row = ancestor_row(forest.row(s), n, forest)
    return None if row < 0 else forest.id_of(row)


def ancestor_times(s: int, forest: Forest) -> list[float]:
    """Times of the resolved ancestors of ``s`` starting with ``s`` itself."""
    row = forest.row(s)
    out = []
    while row >= 0:
        out.append(float(forest.sample.r[row]))
        row = int(forest.mother_row[row])
    return out


def branch_rows(row: int, forest: Forest) -> tuple[list[int], list[int]]:
    rows, gens = [row], [0]
    queue = deque([(row, 0)])
    while queue:
        v, g = queue.popleft()
        for c in forest.children_rows(v):
            rows.append(int(c))
            gens.append(g + 1)
            queue.append((int(c), g + 1))
    return rows, gens


def branch(s: int, forest: Forest) -> Branch:
    """All descendants of ``s`` (with ``s`` at generation 0)."""
    rows, gens = branch_rows(forest.row(s), forest)
    ids = forest.sample.ids
    truncated = bool(forest.boundary_rows[rows].any())
    return Branch(int(s), frozenset(int(ids[r]) for r in rows),
                  {int(ids[r]): g for r, g in zip(rows, gens)}, truncated)


def sister_rank(s: int, forest: Forest) -> int:
    row = forest.row(s)
    if forest.mother_row[row] < 0:
        raise ValidationError(f"point {s} has no mother")
    return int(forest.rank_row[row])


def components(forest: Forest, rows: Sequence[int] | np.ndarray | None = None) -> ComponentSummary:
    """Connected components (common-ancestor classes), optionally counted
    only over the given rows."""
    labels = forest.root_row if rows is None else forest.root_row[np.asarray(rows, dtype=np.int64)]
    if len(labels) == 0:
        return ComponentSummary(0, (), 0.0)
    _, counts = np.unique(labels, return_counts=True)
    sizes = tuple(int(c) for c in sorted(counts, reverse=True))
    return ComponentSummary(len(sizes), sizes, sizes[0] / len(labels))


def edges(forest: Forest) -> Iterable[tuple[int, int]]:
    ids = forest.sample.ids
    for i in np.flatnonzero(forest.mother_row >= 0):
        yield int(ids[i]), int(ids[forest.mother_row[i]])


def format_forest(forest: Forest, extra_header: Iterable[str] = ()) -> str:
    sample = forest.sample
    lines = [
        sample.header(),
        f"# forest roots={int(np.count_nonzero(forest.mother_row < 0))} "
        f"unresolved_fraction={forest.unresolved_fraction!r}",
    ]
    lines.extend(f"# {h}" for h in extra_header)
    ids = sample.ids
    for i in range(len(sample)):
        m = forest.mother_row[i]
        mid = "-" if m < 0 else str(int(ids[m]))
        lines.append(f"{int(ids[i])} {mid} {int(forest.rank_row[i])} {int(ids[forest.root_row[i]])}")
    return "\n".join(lines) + "\n"


def parse_forest_links(text: str) -> dict[int, tuple[int | None, int, int]]:
    """Read forest rows back as ``id -> (mother id or None, rank, component id)``."""
    from .point_process import PointFileError, parse_header

    lines = text.split("\n")
    parse_header(lines[0], 1)
    out = {}
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 4:
            raise PointFileError("expected 4 fields in forest row", lineno)
        try:
            pid = int(parts[0])
            mid = None if parts[1] == "-" else int(parts[1])
            out[pid] = (mid, int(parts[2]), int(parts[3]))
        except ValueError:
            raise PointFileError("non-integer field in forest row", lineno) from None
    return out
