"""Monte-Carlo experiments and the statistics behind their verdicts."""

from .protocols import (EXPERIMENTS, exp_branch_sizes, exp_connectivity, exp_ergodicity,
                        exp_marginal_dynamics, exp_meeting_bound, exp_palm_invariance,
                        exp_younger_coalescence, run_experiment, run_replicas)
from .report import CSV_HEADER, Cell, ExperimentConfig, ExperimentReport, Outcome, Verdict
from .stats import ks_test, two_sample_ks

__all__ = [
    "EXPERIMENTS", "CSV_HEADER", "Cell", "ExperimentConfig", "ExperimentReport", "Outcome", "Verdict",
    "exp_branch_sizes", "exp_connectivity", "exp_ergodicity", "exp_marginal_dynamics",
    "exp_meeting_bound", "exp_palm_invariance", "exp_younger_coalescence", "ks_test",
    "run_experiment", "run_replicas", "two_sample_ks",
]
