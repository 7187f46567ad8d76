"""Run-time distributions of a CDCL solver over randomly extended SAT instances."""
from importlib import resources

from .cnf import Clause, Formula, parse_dimacs, read_dimacs, write_dimacs
from .extension import ClausePool, ExtensionSpec, materialize, record_learned_clauses, sample_extension
from .harness import Campaign, CensoringPolicy, RunRecord, paired_baseline, run_campaign
from .solver import DeletionPolicy, Solver, SolverConfig, solve
from .survival import (KaplanMeier, censored_paired_test, classify_effect_table, dip_statistic,
                       km_histogram)
from .weibull import WeibullFitter, WeibullMixture, WeibullParams, fit_weibull, select_components

__version__ = "0.1.0"


def demo_instance_path():
    """Path of the bundled demo instance (random 3-SAT, 120 variables)."""
    return resources.files(__name__) / "data" / "demo.cnf"
