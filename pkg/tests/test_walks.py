import math

import numpy as np
import pytest
from scipy import stats

from poisson_forest.forest import build_forest
from poisson_forest.point_process import Boundary, PointSample, ValidationError, Window, sample_poisson
from poisson_forest.walks import (
    backward_surviving, dependence_set, eta_from_initial, eta_slice, format_slice, format_trajectory,
    meeting_time, pair_meeting_times, probe_trajectory, trajectory, unit_ball_volume,
)

from conftest import make_sample, random_forest


def test_f1_trajectories(f1):
    tr = trajectory(1, f1, 2.5)
    assert tr.jump_times.tolist() == [1.0, 2.0]
    assert tr.positions[:, 0].tolist() == [0.5, 1.2]
    assert tr.horizon == 2.5
    assert tr.at(0.5).tolist() == [0.0]
    assert tr.at(1.0).tolist() == [0.5]
    assert tr.at(2.5).tolist() == [1.2]
    still = trajectory(4, f1, 2.5)
    assert len(still.jump_times) == 0 and still.horizon == 2.5
    at_birth = trajectory(1, f1, 0.0)
    assert len(at_birth.jump_times) == 0 and at_birth.horizon == 0.0
    with pytest.raises(ValidationError):
        trajectory(1, f1, 9.0)
    with pytest.raises(ValidationError):
        trajectory(99, f1, 1.0)
    assert format_trajectory(1, tr) == "1\n1.0 0.5\n2.0 1.2\n"


def test_f1_slice(f1):
    cfg = eta_slice(f1, 2.0)
    assert cfg.positions() == {(1.2,), (3.0,)}
    assert cfg.lineage == {3: frozenset({1, 2, 3}), 4: frozenset({4})}
    assert cfg.walker_count == 2
    assert eta_slice(f1, -0.5).walker_count == 0
    with pytest.raises(ValidationError):
        eta_slice(f1, 6.0)
    assert format_slice(cfg).splitlines() == ["2.0", "1.2 1 2 3", "3.0 4"]


def test_f1_meeting_and_survival(f1):
    assert meeting_time(1, 2, f1) == 2.0
    assert meeting_time(1, 2, f1, mode="position") == 1.0
    assert meeting_time(1, 4, f1) is None
    assert meeting_time(2, 2, f1) == 1.0
    surv = backward_surviving(f1, 0.25, 2.0)
    assert surv.config.positions() == {(1.2,)}
    with pytest.raises(ValidationError):
        backward_surviving(f1, 2.0, 2.0)


def test_backward_surviving_is_monotone():
    f = random_forest(2, 10.0, 0.0, 20.0, seed=2)
    prev = set()
    for r in np.linspace(0.5, 14.5, 8):
        cur = backward_surviving(f, r, 15.0).config.positions()
        assert prev <= cur
        prev = cur


def test_eta_from_initial_reduces_to_slice(f1):
    assert eta_from_initial([], -1.0, f1, 2.0) == eta_slice(f1, 2.0)
    f = random_forest(3, 5.0, 0.0, 10.0, seed=6)
    assert eta_from_initial(np.empty((0, 2)), 0.0, f, 7.5).positions() == eta_slice(f, 7.5).positions()


def test_isolated_initial_walker_stays(f1):
    cfg = eta_from_initial([[-4.5]], 0.0, f1, 4.0)
    assert (-4.5,) in cfg.positions()
    with pytest.raises(ValidationError):
        eta_from_initial([[-4.5]], 2.0, f1, 1.0)


def test_initial_walkers_join_lineages(f1):
    cfg = eta_from_initial([[0.1], [-4.0]], -0.5, f1, 2.0)
    assert cfg.carriers == (-2, 3, 4)
    assert cfg.lineage[3] == frozenset({-1, 1, 2, 3})


def test_count_bounded_by_births():
    f = random_forest(2, 10.0, 0.0, 10.0, seed=1)
    for t in (1.0, 5.0, 9.0):
        assert eta_slice(f, t).walker_count <= int(np.count_nonzero(f.sample.r <= t))


def test_dependence_set_f1():
    s = make_sample({1: (0.0, 0.0), 2: (0.5, 1.0), 3: (1.2, 2.0), 4: (3.0, 0.5)})
    dep = dependence_set(([-0.5], [0.5]), 2.0, s)
    assert dep.ids == {2, 3} and dep.emptied and dep.stop_time == 1.0
    empty = PointSample(s.window, 1.0, [], np.empty((0, 1)), [])
    dep = dependence_set(([-0.5], [0.5]), 2.0, empty)
    assert dep.ids == frozenset() and not dep.emptied


@pytest.mark.parametrize("d, side, rep", [(2, 12.0, 0), (2, 12.0, 1), (3, 6.0, 0), (3, 6.0, 1)])
def test_dependence_set_reproduces_region(d, side, rep):
    w = Window.cube(d, side, 0.0, 40.0, Boundary.PERIODIC)
    s = sample_poisson(1.0, w, seed=17, replica=rep)
    f = build_forest(s)
    lo, hi = [-1.0] * (d - 1), [1.0] * (d - 1)
    t = 35.0
    dep = dependence_set((lo, hi), t, s, f)
    if d == 2:
        # with two space axes tiny slivers between arcs can stay uncovered
        assert dep.emptied and dep.stop_time > 0.0
    sub = s.restrict(np.isin(s.ids, list(dep.ids)))
    want = eta_slice(f, t).restrict(lo, hi).positions()
    got = eta_slice(build_forest(sub), t).restrict(lo, hi).positions()
    assert got == want
    assert len(dep.ids) < len(s)


def test_dependence_set_without_emptying_still_reproduces():
    w = Window.cube(3, 6.0, 0.0, 3.0, Boundary.PERIODIC)
    s = sample_poisson(1.0, w, seed=2)
    f = build_forest(s)
    lo, hi = [-2.0, -2.0], [2.0, 2.0]
    dep = dependence_set((lo, hi), 2.5, s, f)
    sub = s.restrict(np.isin(s.ids, list(dep.ids)))
    assert eta_slice(build_forest(sub), 2.5).restrict(lo, hi).positions() == \
        eta_slice(f, 2.5).restrict(lo, hi).positions()


def test_jumps_are_bounded():
    f = random_forest(3, 8.0, 0.0, 200.0, seed=4)
    tr = probe_trajectory([0.0, 0.0], 0.0, f)
    steps = tr.displacements(f.sample.window)
    assert len(steps) > 100
    assert np.all(np.sqrt((steps ** 2).sum(axis=1)) <= 1.0)
    assert np.all(np.diff(tr.jump_times) > 0)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_pair_engine_is_deterministic():
    seeds = np.arange(50)
    a = pair_meeting_times(4, 3.0, 1.0, 50.0, seeds)
    b = pair_meeting_times(4, 3.0, 1.0, 50.0, seeds)
    assert np.array_equal(a, b)
    assert np.array_equal(pair_meeting_times(4, 3.0, 1.0, 50.0, seeds[10:20]), a[10:20])


def _full_window_meeting(d, separation, horizon, seed, replica):
    w = Window.cube(d, 30.0, 0.0, horizon, Boundary.PERIODIC)
    f = build_forest(sample_poisson(1.0, w, seed, replica))
    start = np.zeros(d - 1)
    other = start.copy()
    other[0] = separation
    a = probe_trajectory(start, 0.0, f).rows.tolist()
    b = set(probe_trajectory(other, 0.0, f).rows.tolist())
    for row in a:
        if row in b:
            return float(f.sample.r[row])
    return math.inf


def test_pair_engine_matches_full_window():
    # the disc-revealing engine against walkers on complete samples
    d, sep, horizon, n = 2, 2.5, 6.0, 3000
    engine = pair_meeting_times(d, sep, 1.0, horizon, np.arange(n))
    full = np.array([_full_window_meeting(d, sep, horizon, 99, i) for i in range(n)])
    pe, pf = np.isfinite(engine).mean(), np.isfinite(full).mean()
    se = math.sqrt(pe * (1 - pe) / n + pf * (1 - pf) / n)
    assert abs(pe - pf) < 4 * se
    assert stats.ks_2samp(engine[np.isfinite(engine)], full[np.isfinite(full)]).pvalue > 0.001


def test_pair_engine_validation():
    with pytest.raises(ValidationError):
        pair_meeting_times(1, 3.0, 1.0, 10.0, np.arange(3))
