"""Incremental test-set selection and GP-weighted predictivity estimation."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import TesselError
from .measures import PointSet, candidate_set, iso_transform, maximin_lhs, sobol_sequence
from .kernels import KernelSpec, condition, gram, kbar, kbar_prime
from .discrepancy import Potential, mmd_squared
from .selection import select_n
from .weighting import (
    WeightedTestSet,
    delta_bar_sq,
    error_interpolant,
    optimal_weights,
    q2_report,
)
from .surrogate import fit, loo_q2, predict

__all__ = [
    "BACKEND", "TesselError", "PointSet", "candidate_set", "iso_transform", "maximin_lhs",
    "sobol_sequence", "KernelSpec", "condition", "gram", "kbar", "kbar_prime", "Potential",
    "mmd_squared", "select_n", "WeightedTestSet", "delta_bar_sq", "error_interpolant",
    "optimal_weights", "q2_report", "fit", "loo_q2", "predict",
]
