"""Skew-orthogonal polynomials, banded operators and beta = 1, 4 correlation kernels."""

from __future__ import annotations

__version__ = "0.1.0"

from .polybasis import DEFAULT_PRECISION, Polynomial, working_precision
from .skewproduct import Potential, PotentialError, QuadratureError, skew_product
from .sopfamily import PrecisionLossError, SopFamily, apply_gauge, build_sop, partition_function
from .operators import build_P, build_Q, build_R, check_identities, dual
from .kernels import KernelSet, kernel_D, kernel_I, kernel_S_direct, kernel_S_gcd, level_density, r2

__all__ = [
    "DEFAULT_PRECISION", "Polynomial", "working_precision",
    "Potential", "PotentialError", "QuadratureError", "skew_product",
    "PrecisionLossError", "SopFamily", "apply_gauge", "build_sop", "partition_function",
    "build_P", "build_Q", "build_R", "check_identities", "dual",
    "KernelSet", "kernel_D", "kernel_I", "kernel_S_direct", "kernel_S_gcd", "level_density", "r2",
]
