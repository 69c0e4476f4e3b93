"""Homogeneous Poisson point configurations in rectangular space-time windows.

A point is ``(x, r)`` with ``x`` in R^(d-1) (space) and ``r`` in R (time).
Space boxes are centred on the origin, ``[-L_i/2, L_i/2)`` per axis, so the
Palm origin always lies in space; time is the closed interval
``[time_lo, time_hi]``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

FORMAT_TAG = "poisson-forest v1"


class ValidationError(ValueError):
    """Raised when an argument violates a documented precondition."""


class PointFileError(ValueError):
    """Raised when a point file does not parse; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    OPEN = "open"


@dataclass(frozen=True)
class Point:
    id: int
    x: tuple[float, ...]
    r: float


@dataclass(frozen=True)
class Window:
    d: int
    space_extent: tuple[float, ...]
    time_lo: float
    time_hi: float
    space_boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "space_extent", tuple(float(v) for v in self.space_extent))
        object.__setattr__(self, "space_boundary", Boundary(self.space_boundary))
        object.__setattr__(self, "time_lo", float(self.time_lo))
        object.__setattr__(self, "time_hi", float(self.time_hi))
        if int(self.d) != self.d or self.d < 2:
            raise ValidationError(f"dimension must be an integer >= 2, got {self.d}")
        if len(self.space_extent) != self.d - 1:
            raise ValidationError(
                f"d={self.d} needs {self.d - 1} space extents, got {len(self.space_extent)}"
            )
        if not all(math.isfinite(v) and v > 0 for v in self.space_extent):
            raise ValidationError(f"space extents must be positive, got {self.space_extent}")
        if not (math.isfinite(self.time_lo) and math.isfinite(self.time_hi)):
            raise ValidationError("time bounds must be finite")
        if not self.time_lo < self.time_hi:
            raise ValidationError(f"need time_lo < time_hi, got [{self.time_lo}, {self.time_hi}]")

    @classmethod
    def cube(cls, d: int, side: float, time_lo: float, time_hi: float,
             boundary: Boundary | str = Boundary.PERIODIC) -> "Window":
        return cls(d, (side,) * (d - 1), time_lo, time_hi, Boundary(boundary))

    @property
    def k(self) -> int:
        """Number of space coordinates."""
        return self.d - 1

    @property
    def periodic(self) -> bool:
        return self.space_boundary is Boundary.PERIODIC

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.space_extent, dtype=float)

    @property
    def space_lo(self) -> np.ndarray:
        return -0.5 * self.extent

    @property
    def space_hi(self) -> np.ndarray:
        return 0.5 * self.extent

    @property
    def space_volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def volume(self) -> float:
        return self.space_volume * (self.time_hi - self.time_lo)

    def contains(self, x: Sequence[float] | np.ndarray, r: float) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.k,):
            return False
        return bool(
            np.all(x >= self.space_lo) and np.all(x <= self.space_hi)
            and self.time_lo <= r <= self.time_hi
        )

    def contains_origin(self) -> bool:
        return self.time_lo <= 0.0 <= self.time_hi

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Space displacement ``b - a`` (minimum image on the torus)."""
        delta = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.periodic:
            ext = self.extent
            delta = delta - ext * np.round(delta / ext)
        return delta

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Map space coordinates back into the box (identity for open windows)."""
        x = np.asarray(x, dtype=float)
        if not self.periodic:
            return x
        ext = self.extent
        lo = -0.5 * ext
        return lo + np.mod(x - lo, ext)

    def header_fields(self) -> str:
        ext = ",".join(repr(v) for v in self.space_extent)
        return (
            f"d={self.d} window={ext}x[{self.time_lo!r},{self.time_hi!r}] "
            f"boundary={self.space_boundary.value}"
        )


def _lex_order(x: np.ndarray, r: np.ndarray) -> np.ndarray:
    # np.lexsort: last key is primary
    keys = [x[:, j] for j in range(x.shape[1] - 1, -1, -1)] + [r]
    return np.lexsort(keys)


@dataclass(frozen=True, eq=False)
class PointSample:
    """An immutable finite realisation.

    Rows are kept in the total order (r, x_1, ..., x_{d-1}); ``ids`` travel
    with the rows. The Palm origin, when present, has id 0.
    """

    window: Window
    rate: float
    ids: np.ndarray
    x: np.ndarray
    r: np.ndarray
    seed: int = 0
    is_palm: bool = False
    _pos: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValidationError(f"rate must be positive, got {self.rate}")
        k = self.window.k
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        x = np.asarray(self.x, dtype=float).reshape(-1, k)
        r = np.asarray(self.r, dtype=float).reshape(-1)
        if not (len(ids) == len(x) == len(r)):
            raise ValidationError("ids, x and r must have equal length")
        if len(ids):
            if ids.min() < 0:
                raise ValidationError("ids must be non-negative")
            if len(np.unique(ids)) != len(ids):
                raise ValidationError("duplicate point ids")
            lo, hi = self.window.space_lo, self.window.space_hi
            inside = (
                np.all(x >= lo, axis=1) & np.all(x <= hi, axis=1)
                & (r >= self.window.time_lo) & (r <= self.window.time_hi)
            )
            if not inside.all():
                bad = int(ids[np.argmin(inside)])
                raise ValidationError(f"point {bad} lies outside the window")
            order = _lex_order(x, r)
            ids, x, r = ids[order], x[order], r[order]
            if len(r) > 1:
                same = (np.diff(r) == 0) & np.all(np.diff(x, axis=0) == 0, axis=1)
                if same.any():
                    raise ValidationError("two points share the same coordinates")
        if self.is_palm:
            at_origin = (ids == 0) & (r == 0.0) & np.all(x == 0.0, axis=1)
            if not at_origin.any():
                raise ValidationError("Palm sample lacks the origin point with id 0")
        for arr in (ids, x, r):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "seed", int(self.seed))

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointSample):
            return NotImplemented
        return (
            self.window == other.window and self.rate == other.rate
            and self.seed == other.seed and self.is_palm == other.is_palm
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.x, other.x) and np.array_equal(self.r, other.r)
        )

    __hash__ = None

    @property
    def d(self) -> int:
        return self.window.d

    @property
    def points(self) -> tuple[Point, ...]:
        return tuple(
            Point(int(i), tuple(float(v) for v in xi), float(ri))
            for i, xi, ri in zip(self.ids, self.x, self.r)
        )

    def position(self, point_id: int) -> int:
        """Row index of ``point_id``; raises ``ValidationError`` if unknown."""
        if self._pos is None:
            object.__setattr__(self, "_pos", {int(i): k for k, i in enumerate(self.ids)})
        try:
            return self._pos[int(point_id)]
        except (KeyError, TypeError, ValueError):
            raise ValidationError(f"unknown point id {point_id!r}") from None

    def point(self, point_id: int) -> Point:
        k = self.position(point_id)
        return Point(int(self.ids[k]), tuple(float(v) for v in self.x[k]), float(self.r[k]))

    def header(self) -> str:
        return (
            f"# {FORMAT_TAG} d={self.d} rate={self.rate!r} "
            + self.window.header_fields().split(" ", 1)[1]
            + f" palm={int(self.is_palm)} seed={self.seed}"
        )

    def restrict(self, keep: np.ndarray) -> "PointSample":
        """Sub-sample on the rows where ``keep`` is true (same window and rate)."""
        keep = np.asarray(keep)
        return PointSample(self.window, self.rate, self.ids[keep], self.x[keep],
                           self.r[keep], self.seed, self.is_palm and bool(
                               np.any(self.ids[keep] == 0)))


def replica_rng(seed: int, replica: int = 0, stream: tuple[int, ...] = ()) -> np.random.Generator:
    """Independent stream for ``(seed, replica, *stream)``; identical on every run."""
    if seed < 0 or replica < 0 or any(s < 0 for s in stream):
        raise ValidationError("seed, replica and stream keys must be non-negative")
    key = (replica, *stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def sample_poisson(rate: float, window: Window, seed: int, replica: int = 0,
                   rng: np.random.Generator | None = None) -> PointSample:
    """Sample a homogeneous Poisson process of intensity ``rate`` in ``window``.

    Ids are 1..n in increasing time order (0 stays free for a Palm origin).
    """
    if not (isinstance(rate, (int, float)) and math.isfinite(rate) and rate > 0):
        raise ValidationError(f"rate must be positive, got {rate!r}")
    if not isinstance(window, Window):
        raise ValidationError("window must be a Window")
    if rng is None:
        rng = replica_rng(seed, replica)
    n = int(rng.poisson(rate * window.volume))
    x = rng.uniform(window.space_lo, window.space_hi, size=(n, window.k))
    r = rng.uniform(window.time_lo, window.time_hi, size=n)
    order = _lex_order(x, r)
    return PointSample(window, rate, np.arange(1, n + 1), x[order], r[order], seed, False)


def palm_version(sample: PointSample) -> PointSample:
    """Return ``S ∪ {0}``: the origin inserted with id 0, other points untouched."""
    window = sample.window
    if not window.contains_origin():
        raise ValidationError("the window does not contain the space-time origin")
    if sample.is_palm:
        raise ValidationError("sample already contains the Palm origin")
    if len(sample) and np.any(sample.ids == 0):
        raise ValidationError("id 0 is reserved for the Palm origin")
    ids = np.concatenate([[0], sample.ids])
    x = np.vstack([np.zeros((1, window.k)), sample.x])
    r = np.concatenate([[0.0], sample.r])
    return PointSample(window, sample.rate, ids, x, r, sample.seed, True)


# ---------------------------------------------------------------------------
# text format

_HEADER_RE = re.compile(
    r"^#\s*poisson-forest v1\s+d=(?P<d>\S+)\s+rate=(?P<rate>\S+)\s+"
    r"window=(?P<ext>[^x\s]+)x\[(?P<t0>[^,\]]+),(?P<t1>[^\]]+)\]\s+"
    r"boundary=(?P<boundary>periodic|open)\s+palm=(?P<palm>[01])\s+seed=(?P<seed>\S+)\s*$"
)


def format_points(sample: PointSample, extra_header: Iterable[str] = ()) -> str:
    lines = [sample.header()]
    lines.extend(f"# {h}" for h in extra_header)
    for i, xi, ri in zip(sample.ids, sample.x, sample.r):
        coords = " ".join(repr(float(v)) for v in xi)
        lines.append(f"{int(i)} {coords} {float(ri)!r}")
    return "\n".join(lines) + "\n"


def save_points(sample: PointSample, destination: str | Path | IO[str],
                extra_header: Iterable[str] = ()) -> None:
    text = format_points(sample, extra_header)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text, encoding="utf-8", newline="\n")


def parse_header(line: str, lineno: int = 1) -> tuple[Window, float, bool, int]:
    m = _HEADER_RE.match(line.rstrip("\n"))
    if m is None:
        raise PointFileError("malformed header", lineno)
    try:
        d = int(m["d"])
        ext = tuple(float(v) for v in m["ext"].split(","))
        window = Window(d, ext, float(m["t0"]), float(m["t1"]), Boundary(m["boundary"]))
        rate = float(m["rate"])
        seed = int(m["seed"])
    except (ValueError, ValidationError) as exc:
        raise PointFileError(f"bad header value: {exc}", lineno) from None
    return window, rate, m["palm"] == "1", seed


def parse_points(text: str) -> PointSample:
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise PointFileError("missing header", 1)
    window, rate, palm, seed = parse_header(lines[0], 1)
    ncol = window.k + 2
    ids, xs, rs, seen = [], [], [], set()
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != ncol:
            raise PointFileError(
                f"expected {ncol} fields for d={window.d}, got {len(parts)}", lineno)
        try:
            pid = int(parts[0])
            vals = [float(v) for v in parts[1:]]
        except ValueError:
            raise PointFileError("non-numeric field", lineno) from None
        if pid < 0:
            raise PointFileError("negative id", lineno)
        if pid in seen:
            raise PointFileError(f"duplicate id {pid}", lineno)
        if not window.contains(vals[:-1], vals[-1]):
            raise PointFileError(f"point {pid} outside the window", lineno)
        seen.add(pid)
        ids.append(pid)
        xs.append(vals[:-1])
        rs.append(vals[-1])
    try:
        return PointSample(window, rate, np.asarray(ids, dtype=np.int64),
                           np.asarray(xs, dtype=float).reshape(-1, window.k),
                           np.asarray(rs, dtype=float), seed, palm)
    except ValidationError as exc:
        raise PointFileError(str(exc)) from None


def load_points(source: str | Path | IO[str]) -> PointSample:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    return parse_points(text)
