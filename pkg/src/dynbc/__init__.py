"""Solver and verification toolkit for a half-space elliptic problem driven by a
nonlinear dynamic boundary condition, built on its boundary-integral reformulation."""

from dynbc.params import (
    ProblemParams,
    ExponentSet,
    AdmissibilityReport,
    derive_exponents,
    check_admissible,
    find_admissible,
    scan_admissible,
)

__version__ = "0.1.0"
