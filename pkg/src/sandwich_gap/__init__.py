"""Spectral gap and weak Poincaré comparisons for sandwich-structured Markov
kernels, with finite verifiers and hit-and-run samplers."""

from .measure_kernel import (
    FiniteKernel,
    FiniteMeasure,
    asym_variance_exact,
    asym_variance_series,
    dirichlet_form,
    left_gap,
    operator_norm_L0,
    right_gap,
)
from .sandwich import SandwichSystem, VerificationReport, check_axioms, verify_all

__version__ = "0.1.0"

__all__ = [
    "FiniteKernel",
    "FiniteMeasure",
    "SandwichSystem",
    "VerificationReport",
    "asym_variance_exact",
    "asym_variance_series",
    "check_axioms",
    "dirichlet_form",
    "left_gap",
    "operator_norm_L0",
    "right_gap",
    "verify_all",
]
