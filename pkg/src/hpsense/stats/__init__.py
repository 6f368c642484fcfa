"""Toy experiments, likelihood fits and exclusion limits."""

from .data import (ExpectedProbabilities, FrequencyGrid, ToyDataset, asimov_counts,
                   expected_probabilities, generate_toy, sample_counts)
from .fitting import (FitError, FitResult, LineSearchSpace, combined_llr, fit_background,
                      fit_signal, fit_signal_joint, llr_pvalue, llr_test, sinc2_template)
from .limits import (BracketingError, ExclusionResult, ScanSetup, combined_responses,
                     null_statistics,
                     exclusion_scan,
                     multiqubit_scaling, shots_per_year, speedup_factor)
from .rng import stream

__all__ = [
    "BracketingError", "ExclusionResult", "ExpectedProbabilities", "FitError", "FitResult",
    "FrequencyGrid", "LineSearchSpace", "ScanSetup", "ToyDataset", "asimov_counts",
    "combined_llr", "combined_responses", "exclusion_scan", "expected_probabilities", "fit_background", "fit_signal",
    "fit_signal_joint", "generate_toy", "llr_pvalue", "llr_test", "multiqubit_scaling", "null_statistics",
    "sample_counts", "shots_per_year", "sinc2_template", "speedup_factor", "stream",
]
