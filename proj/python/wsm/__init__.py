"""Windowed SummaryMixing: mixing blocks, CTC fine-tuning and scaling checks."""

from ._core import (
    ConfigError,
    DimensionError,
    EmptySequenceError,
    Error,
    FitError,
    InfeasibleTargetError,
    ctc_loss,
    fit_loglog_slope,
    gradcheck_suite,
    greedy_decode,
    oracle_suite,
    peak_activation_memory,
    run_cli,
    run_scaling_bench,
    windowed_mean,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "EmptySequenceError",
    "Error",
    "FitError",
    "InfeasibleTargetError",
    "ctc_loss",
    "fit_loglog_slope",
    "gradcheck_suite",
    "greedy_decode",
    "oracle_suite",
    "peak_activation_memory",
    "run_cli",
    "run_scaling_bench",
    "windowed_mean",
]
