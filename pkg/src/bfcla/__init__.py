"""Certified maximum likelihood for the two-sample Gaussian mean problem with
unequal covariances, the W / LR / LM / Bartlett tests, and Monte Carlo studies."""

__version__ = "0.1.0"

from .errors import (BfclaError, BracketFailure, ConfigError, ConvergenceFailure,
                     DegenerateSample, InputError, IterationBudgetExceeded, NonFinite,
                     NotPositiveDefinite, ParseError, RaggedRows)
from .stats_core import SampleSummary, bfp_objective, mahalanobis, summarize, wald_mean_mu0
from .emep import prepare_context, solve_emep
from .solvers import BfpSolution, compute_bounds, run_cla, run_da
from .mltests import TestReport, run_tests
from .montecarlo import (StudyConfig, StudyResult, discrepancy_study, power_study, size_study,
                         timing_study)

__all__ = [
    "BfclaError", "BracketFailure", "ConfigError", "ConvergenceFailure", "DegenerateSample",
    "InputError", "IterationBudgetExceeded", "NonFinite", "NotPositiveDefinite", "ParseError",
    "RaggedRows", "SampleSummary", "bfp_objective", "mahalanobis", "summarize",
    "wald_mean_mu0", "prepare_context", "solve_emep", "BfpSolution", "compute_bounds",
    "run_cla", "run_da", "TestReport", "run_tests", "StudyConfig", "StudyResult",
    "discrepancy_study", "power_study", "size_study", "timing_study",
]
