import numpy as np
import pytest

from poisson_forest.forest import build_forest
from poisson_forest.point_process import Boundary, PointSample, Window, sample_poisson

# hand-checked configurations in d = 2 (one space axis), open boundary
F1_POINTS = {1: (0.0, 0.0), 2: (0.5, 1.0), 3: (1.2, 2.0), 4: (3.0, 0.5)}  # a, b, c, e
F2_POINTS = {1: (0.0, 3.0), 2: (-0.5, 2.5), 3: (0.7, 2.0)}  # m, p, q
FIXTURE_WINDOW = Window(2, (10.0,), -1.0, 5.0, Boundary.OPEN)


def make_sample(points, window=FIXTURE_WINDOW, rate=1.0):
    ids = np.array(list(points), dtype=np.int64)
    x = np.array([[p[0]] for p in points.values()])
    r = np.array([p[1] for p in points.values()])
    return PointSample(window, rate, ids, x, r)


@pytest.fixture
def f1():
    return build_forest(make_sample(F1_POINTS))


@pytest.fixture
def f2():
    return build_forest(make_sample(F2_POINTS))


def random_forest(d, side, t0, t1, seed, boundary=Boundary.PERIODIC, guard=0.0, replica=0):
    window = Window.cube(d, side, t0, t1, boundary)
    return build_forest(sample_poisson(1.0, window, seed, replica), time_guard=guard)


_acceptance_lines = []


@pytest.fixture
def acceptance_line():
    return _acceptance_lines.append


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
