"""Acceptance checks, one test per criterion.

Each test records a single ``criterion N: PASS|FAIL ...`` line which the
terminal summary prints in order. The Monte-Carlo criteria run the
experiments at full size, so this module takes several minutes.
"""
import time

import numpy as np
import pytest

from poisson_forest.cli import main
from poisson_forest.experiments import ExperimentConfig, Outcome, run_experiment
from poisson_forest.forest import branch_rows, build_forest, components, mother_rows_linear_scan, sister_rank
from poisson_forest.point_process import Boundary, Window, palm_version, sample_poisson
from poisson_forest.succession import (
    ShiftedView, check_pointshift_identity, enumerate_line, point_map, predecessor, predecessor_row,
    preorder_oracle, successor, successor_row,
)
from poisson_forest.walks import eta_slice, meeting_time, trajectory

SEED = 2026


@pytest.fixture
def record(acceptance_line):
    def _record(n, ok, detail):
        acceptance_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return _record


def _verdicts_pass(report, names=None):
    picked = [v for v in report.verdicts if names is None or v.name in names]
    return all(v.outcome is Outcome.PASSED for v in picked), picked


def test_criterion_01_grid_matches_linear_scan(record):
    start = time.perf_counter()
    cases = [(d, b) for d in (2, 3, 4) for b in Boundary]
    checked, mismatched, biggest = 0, 0, 0
    for i in range(50):
        d, boundary = cases[i % len(cases)]
        side = {2: 400.0, 3: 20.0, 4: 7.0}[d]
        s = sample_poisson(1.0, Window.cube(d, side, 0.0, 20.0, boundary), SEED, replica=i)
        biggest = max(biggest, len(s))
        grid = build_forest(s).mother_row
        mismatched += int(np.count_nonzero(grid != mother_rows_linear_scan(s)))
        checked += len(s)
    elapsed = time.perf_counter() - start
    ok = mismatched == 0 and biggest <= 10_000 and elapsed < 60
    record(1, ok, f"mother map: {mismatched} mismatches over {checked} points in 50 samples "
                  f"(largest {biggest}), {elapsed:.1f}s")


def test_criterion_02_fixtures(record, f1, f2):
    checks = {
        "F1 mothers": f1.mother == {1: 2, 2: 3, 3: None, 4: None},
        "F1 tau": dict(zip(f1.sample.ids.tolist(), f1.tau.tolist())) == {1: 1.0, 2: 2.0, 3: np.inf,
                                                                        4: np.inf},
        "F1 components": components(f1).sizes == (3, 1),
        "F1 rank": sister_rank(1, f1) == 1,
        "F1 successor of 1 unresolved": successor(1, f1).vertex is None,
        "F1 predecessors": [predecessor(1, f1).vertex, predecessor(2, f1).vertex] == [2, 3],
        "F1 trajectory of 1": trajectory(1, f1, 2.5).jump_times.tolist() == [1.0, 2.0]
        and trajectory(1, f1, 2.5).positions[:, 0].tolist() == [0.5, 1.2],
        "F1 trajectory of 4": len(trajectory(4, f1, 2.5).jump_times) == 0,
        "F1 slice at 2": eta_slice(f1, 2.0).positions() == {(1.2,), (3.0,)},
        "F1 meeting time": meeting_time(1, 2, f1) == 2.0,
        "F2 mothers": f2.mother == {1: None, 2: 1, 3: 1},
        "F2 ranks": (sister_rank(2, f2), sister_rank(3, f2)) == (1, 2),
        "F2 successors": [successor(1, f2).vertex, successor(2, f2).vertex] == [2, 3],
        "F2 predecessors": [predecessor(3, f2).vertex, predecessor(2, f2).vertex] == [2, 1],
        "F2 line": enumerate_line(1, f2, 0, 2).labels == {0: 1, 1: 2, 2: 3},
    }
    bad = [k for k, v in checks.items() if not v]
    record(2, not bad, f"fixtures: {len(checks) - len(bad)}/{len(checks)} derived values exact"
                       + (f"; wrong: {', '.join(bad)}" if bad else ""))


def test_criterion_03_succession_oracle(record):
    rng = np.random.default_rng(SEED)
    branches, wrong, inverse_checked, inverse_wrong = 0, 0, 0, 0
    for d, side in ((2, 30.0), (3, 6.0)):
        rep = 0
        taken = 0
        while taken < 100:
            s = sample_poisson(1.0, Window.cube(d, side, 0.0, 40.0), SEED, replica=rep)
            forest = build_forest(s, time_guard=3.0)
            rep += 1
            for row in rng.permutation(len(forest))[:60]:
                members, _ = branch_rows(int(row), forest)
                if forest.boundary_rows[members].any() or taken == 100:
                    continue
                root = forest.id_of(int(row))
                order = preorder_oracle(root, forest)
                line = enumerate_line(root, forest, 0, len(order) - 1)
                wrong += [line[n] for n in range(len(order))] != order
                taken += 1
            for row in range(len(forest)):
                nxt, _ = successor_row(row, forest)
                if nxt >= 0:
                    inverse_checked += 1
                    inverse_wrong += predecessor_row(nxt, forest)[0] != row
        branches += taken
    ok = wrong == 0 and inverse_wrong == 0 and branches == 200
    record(3, ok, f"succession: {branches - wrong}/{branches} branches match preorder, "
                  f"predecessor(successor(v)) = v on {inverse_checked - inverse_wrong}/{inverse_checked}")


def test_criterion_04_pointshift_identity(record):
    checked, failed = 0, 0
    for rep in range(100):
        s = palm_version(sample_poisson(1.0, Window.cube(2, 20.0, -20.0, 20.0), SEED, replica=rep))
        forest = build_forest(s, time_guard=5.0)
        view = ShiftedView(forest, 0)
        for n in range(-20, 21):
            if point_map(view, n) is None:
                continue
            checked += 1
            failed += not check_pointshift_identity(0, forest, n)
    record(4, failed == 0 and checked > 0,
           f"point-shift identity: {checked - failed}/{checked} resolved (anchor, n) pairs")


def test_criterion_05_connectivity_low_dimensions(record):
    parts, ok = [], True
    for d in (2, 3):
        rep = run_experiment("connectivity", ExperimentConfig(d=d, seed=SEED))
        good, verdicts = _verdicts_pass(rep)
        ok &= good
        fr = [c.value for c in rep.cells if c.statistic == "largest_fraction"]
        parts.append(f"d={d} L={rep.params['space']:g} fraction "
                     + "/".join(f"{v:.3f}" for v in fr) + f" ({rep.runtime:.0f}s)")
    record(5, ok, "connectivity: " + "; ".join(parts))


def test_criterion_06_forest_regime(record):
    rep = run_experiment("connectivity", ExperimentConfig(d=4, seed=SEED))
    ok, _ = _verdicts_pass(rep, {"count_at_max_T", "count_bounded_away_from_one"})
    counts = [c.value for c in rep.cells if c.statistic == "component_count"]
    record(6, ok, f"d=4 component counts over T={rep.params['t_grid']}: "
                  + "/".join(f"{v:.1f}" for v in counts) + f" ({rep.runtime:.0f}s)")


def test_criterion_07_marginal_dynamics(record):
    parts, ok = [], True
    for d in (2, 3):
        rep = run_experiment("marginal-dynamics", ExperimentConfig(d=d, seed=SEED))
        good, verdicts = _verdicts_pass(rep)
        ok &= good
        wait = rep.verdict("wait_exponential")
        jump_p = min(v.p_value for v in verdicts if v.name.startswith("jump_uniform"))
        parts.append(f"d={d} events={wait.n} wait p={wait.p_value:.3f} min jump p={jump_p:.3f}")
    record(7, ok, "marginal dynamics: " + "; ".join(parts))


def test_criterion_08_ergodicity(record):
    rep = run_experiment("ergodicity", ExperimentConfig(d=2, seed=SEED))
    ok, verdicts = _verdicts_pass(rep)
    curve = [c.value for c in rep.cells if c.name.startswith("base") and c.statistic == "p_differ"]
    detail = ", ".join(f"{v.name}={v.value:.4g}" for v in verdicts if v.name in ("log_slope", "log_fit"))
    record(8, ok, "ergodicity: p(t) at t=0,1,2,4,8 = " + "/".join(f"{v:.3f}" for v in curve)
                  + (f"; {detail}" if detail else ""))


def test_criterion_09_meeting_bound(record):
    rep = run_experiment("meeting-bound", ExperimentConfig(d=4, seed=SEED))
    ok, _ = _verdicts_pass(rep, {"bound_D5", "bound_D10"})
    parts = [f"D={D:g} freq={rep.cell(f'D={D:g}', 'meeting_frequency').value:.4f} "
             f"upper={rep.cell(f'D={D:g}', 'ci99_upper').value:.4f} "
             f"bound={rep.cell(f'D={D:g}', 'bound').value:.4f}"
             for D in rep.params["separations"]]
    record(9, ok, "meeting bound: " + "; ".join(parts))


def test_criterion_10_palm_invariance(record):
    rep = run_experiment("palm-invariance", ExperimentConfig(d=2, seed=SEED))
    ks = [v for v in rep.verdicts if v.p_value is not None]
    excluded = max(c.value for c in rep.cells if c.statistic == "excluded_fraction")
    ok = len(ks) > 0 and all(v.outcome is Outcome.PASSED for v in ks) and excluded < 0.2
    record(10, ok, f"palm invariance: {sum(v.passed for v in ks)}/{len(ks)} KS tests pass, "
                   f"min p={min(v.p_value for v in ks):.3f}, max exclusion={excluded:.3f}")


def test_criterion_11_cli_determinism(record, tmp_path, monkeypatch):
    # identical flags means identical relative paths, so each replay runs in its own directory
    def run(tag, workers):
        out = tmp_path / tag
        out.mkdir()
        monkeypatch.chdir(out)
        pts, forest = "pts.txt", "forest.txt"
        steps = [
            ["sample", "--d", "2", "--rate", "1", "--space", "15", "--time", "0:30", "-o", pts],
            ["forest", "-i", pts, "--time-guard", "3", "-o", forest],
            ["succession", "-i", pts, "--anchor", "5", "--back", "3", "--forward", "3",
             "-o", "line.txt"],
            ["walk", "-i", pts, "--id", "1", "-o", "walk.txt"],
            ["walk", "-i", pts, "--slice", "20", "-o", "slice.txt"],
            ["experiment", "palm-invariance", "--replicas", "100", "-o", "palm.csv"],
            ["experiment", "ergodicity", "--replicas", "40", "--format", "jsonl",
             "-o", "ergo.jsonl"],
        ]
        codes = [main(step + ["--seed", str(SEED), "--workers", str(workers)]) for step in steps]
        return codes, {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    codes_a, a = run("a", 1)
    codes_b, b = run("b", 2)
    codes_c, c = run("c", 1)
    same = a == b == c
    ok = same and codes_a == codes_b == codes_c and set(codes_a) <= {0, 3}
    record(11, ok, f"determinism: {len(a)} output files identical across reruns and --workers 1/2"
                   if same else f"determinism: outputs differ in {sorted(k for k in a if a[k] != b.get(k))}")
