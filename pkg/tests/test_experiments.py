import csv
import io
import json
import math

import pytest

from poisson_forest.experiments import (
    EXPERIMENTS, ExperimentConfig, Outcome, run_experiment,
)
from poisson_forest.experiments.protocols import run_replicas
from poisson_forest.experiments.report import CSV_HEADER, ExperimentReport, Verdict
from poisson_forest.point_process import Boundary, ValidationError

# small settings so each experiment finishes in seconds
SMALL = {
    "connectivity": ExperimentConfig(d=2, space=8.0, replicas=4, knobs={"t_grid": (20.0, 40.0)}),
    "branch-sizes": ExperimentConfig(d=2, duration=30.0, replicas=3,
                                     knobs={"l_grid": (8.0, 16.0), "vertices": 30}),
    "palm-invariance": ExperimentConfig(d=2, space=10.0, duration=30.0, replicas=40,
                                        knobs={"time_guard": 5.0}),
    "ergodicity": ExperimentConfig(d=2, space=10.0, replicas=20, knobs={"t_grid": (1.0, 2.0)}),
    "meeting-bound": ExperimentConfig(d=4, replicas=200, knobs={"horizon": 50.0}),
    "younger-coalescence": ExperimentConfig(d=2, space=8.0, replicas=3,
                                            knobs={"t_grid": (40.0, 80.0), "walks": 20}),
    "marginal-dynamics": ExperimentConfig(d=2, space=6.0, duration=50.0, knobs={"min_events": 300}),
}


def test_every_experiment_has_a_small_config():
    assert set(SMALL) == set(EXPERIMENTS)


@pytest.mark.parametrize("name", sorted(SMALL))
def test_reports_are_deterministic_across_workers(name):
    a = run_experiment(name, SMALL[name], workers=1)
    b = run_experiment(name, SMALL[name], workers=2)
    assert a.to_csv() == b.to_csv()
    assert a.to_jsonl() == b.to_jsonl()
    assert a.verdicts, name
    assert a.outcome in set(Outcome)


def test_csv_and_jsonl_layout():
    rep = run_experiment("connectivity", SMALL["connectivity"])
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == CSV_HEADER
    assert all(len(r) == len(CSV_HEADER) for r in rows)
    records = [json.loads(line) for line in rep.to_jsonl().splitlines()]
    assert {r["type"] for r in records} == {"params", "cell", "verdict", "summary"}
    assert "runtime" not in rep.to_jsonl()


def test_single_point_grid_is_inconclusive():
    cfg = ExperimentConfig(d=2, space=8.0, replicas=3, knobs={"t_grid": (30.0,)})
    rep = run_experiment("connectivity", cfg)
    assert rep.verdict("fraction_trend").outcome is Outcome.INCONCLUSIVE


def test_palm_shift_by_zero_is_identical():
    cfg = ExperimentConfig(d=2, space=10.0, duration=30.0, replicas=20,
                           knobs={"n_grid": (0,), "time_guard": 5.0})
    rep = run_experiment("palm-invariance", cfg)
    for v in rep.verdicts:
        if v.name.startswith("origin_vs_n0"):
            assert v.value == 0.0 and v.outcome is Outcome.PASSED


def test_failing_threshold_fails():
    cfg = ExperimentConfig(d=2, space=8.0, replicas=3,
                           knobs={"t_grid": (20.0, 40.0), "threshold": 1.01})
    rep = run_experiment("connectivity", cfg)
    assert rep.verdict("fraction_at_max_T").outcome is Outcome.FAILED
    assert rep.outcome is Outcome.FAILED


def test_ergodicity_starts_apart_and_meets():
    rep = run_experiment("ergodicity", SMALL["ergodicity"])
    assert rep.cell("base rate=1 t=0", "p_differ").value == 1.0


def test_outcome_aggregation():
    rep = ExperimentReport("x", {})
    assert rep.outcome is Outcome.PASSED
    rep.add_verdict(Verdict("a", "", "s", 1.0, 0.0, Outcome.INCONCLUSIVE, 1))
    assert rep.outcome is Outcome.INCONCLUSIVE
    rep.add_verdict(Verdict("b", "", "s", 1.0, 0.0, Outcome.FAILED, 1))
    assert rep.outcome is Outcome.FAILED
    with pytest.raises(KeyError):
        rep.verdict("missing")


@pytest.mark.parametrize("kwargs", [
    {"d": 1}, {"rate": 0.0}, {"rate": math.nan}, {"replicas": 0}, {"seed": -1},
    {"knobs": {"t_grid": ()}},
])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        ExperimentConfig(**kwargs)


@pytest.mark.parametrize("name, cfg", [
    ("connectivity", ExperimentConfig(d=2, boundary=Boundary.OPEN)),
    ("connectivity", ExperimentConfig(d=7)),
    ("meeting-bound", ExperimentConfig(d=3)),
    ("meeting-bound", ExperimentConfig(d=4, knobs={"separations": (1.5,)})),
    ("palm-invariance", ExperimentConfig(d=4)),
    ("palm-invariance", ExperimentConfig(d=2, knobs={"n_grid": (-1,)})),
    ("ergodicity", ExperimentConfig(d=2, knobs={"t_grid": (0.0, 1.0)})),
    ("younger-coalescence", ExperimentConfig(d=4)),
    ("no-such-thing", ExperimentConfig()),
])
def test_invalid_runs_are_rejected(name, cfg):
    with pytest.raises(ValidationError):
        run_experiment(name, cfg)


def _square(x):
    return x * x


def test_run_replicas_keeps_order():
    assert run_replicas(_square, range(10), workers=1) == [x * x for x in range(10)]
    assert run_replicas(_square, range(10), workers=3) == [x * x for x in range(10)]
