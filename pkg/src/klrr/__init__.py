"""Kernel low-rank recovery: outlier-robust recovery of data that is low-rank in a kernel feature space."""
from . import _backend
from .column_solver import apg_minimize_column, column_objective, solve_column
from .config import SolverConfig
from .data import (CorruptionSpec, ImageSet, corrupt, knn_graph, load_idx, load_pgm_dir,
                   normalize_columns, synth_circle)
from .errors import (DomainError, FormatError, InvalidArgumentError, KLRRError, NotPSDError,
                     NumericalError, StepSizeError)
from .kernel import KernelSpec, gram, kernel_eval
from .metrics import MetricsReport, mse, psnr, snr
from .recovery import RecoveryResult, objective, recover, recover_with_graph, stationarity
from .spectral import FactorSpectrum, solve_gamma_cubic, update_factor

__version__ = "0.1.0"
BACKEND = _backend.name

__all__ = [
    "BACKEND", "CorruptionSpec", "DomainError", "FactorSpectrum", "FormatError", "ImageSet",
    "InvalidArgumentError", "KLRRError", "KernelSpec", "MetricsReport", "NotPSDError",
    "NumericalError", "RecoveryResult", "SolverConfig", "StepSizeError", "apg_minimize_column",
    "column_objective", "corrupt", "gram", "kernel_eval", "knn_graph", "load_idx", "load_pgm_dir",
    "mse", "normalize_columns", "objective", "psnr", "recover", "recover_with_graph", "snr",
    "solve_column", "solve_gamma_cubic", "stationarity", "synth_circle", "update_factor",
]
