"""Instrumental-variable treatment effect estimation with machine-learning
instruments, cross-fitting, kernel-smoothed heterogeneous effects, and
weak-instrument-robust confidence sets."""

from .aggregate import AggregatedEstimate, QCurveFamily, aggregate_point, aggregate_q, aggregated_robust_set
from .crossfit import ResidualSet, compute_residuals, iv_strength, paired_residuals
from .data import ColumnRoles, FoldPartition, Sample, load_csv, make_folds
from .het import (
    HetCurve,
    HetEstimate,
    NotEstimableError,
    default_grid,
    estimate_curve,
    estimate_het,
    het_coefficients,
    robust_set_het,
    standard_ci_het,
)
from .hom import (
    ConfidenceSet,
    HomEstimate,
    IrrelevantInstrumentError,
    QCoefficients,
    estimate_hom,
    q_stat,
    robust_set_hom,
    standard_ci,
)
from .kernelband import (
    BandwidthRule,
    Kernel,
    KernelReport,
    bandwidth,
    check_kernel,
    gaussian_quantile,
    kernel_eval,
)
from .learners import FittedModel, LearnerSpec, fit, predict, tune
from .simulate import DgpSpec, ExperimentReport, ExperimentRow, beta_truth, generate, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AggregatedEstimate", "QCurveFamily", "aggregate_point", "aggregate_q",
    "aggregated_robust_set", "ResidualSet", "compute_residuals", "iv_strength",
    "paired_residuals", "ColumnRoles", "FoldPartition", "Sample", "load_csv",
    "make_folds", "HetCurve", "HetEstimate", "NotEstimableError", "default_grid",
    "estimate_curve", "estimate_het", "het_coefficients", "robust_set_het",
    "standard_ci_het", "ConfidenceSet", "HomEstimate", "IrrelevantInstrumentError",
    "QCoefficients", "estimate_hom", "q_stat", "robust_set_hom", "standard_ci",
    "BandwidthRule", "Kernel", "KernelReport", "bandwidth", "check_kernel",
    "gaussian_quantile", "kernel_eval", "FittedModel", "LearnerSpec", "fit",
    "predict", "tune", "DgpSpec", "ExperimentReport", "ExperimentRow",
    "beta_truth", "generate", "run_experiment",
]
