"""Krylov solvers, Gram-Schmidt variants and the ILU(0) preconditioner."""
from .base import (
    BreakdownError,
    EigenResult,
    KrylovConfig,
    Preconditioner,
    SolverKind,
    SolverResult,
    true_residual_eigen,
    true_residual_linear,
    workspace_model,
)
from .eigen import arnoldi_process, arnoldi_restarted, lanczos_restarted
from .ilu import IluFactors, ZeroPivotError, ilu0_apply, ilu0_factorize
from .linear import bicgstab, gmres_m
from .ortho import BCGS, CGS, DGKS, MGS, OrthoKind, OrthoVariant, orthogonalize

__all__ = [
    "BCGS", "CGS", "DGKS", "MGS", "OrthoKind", "OrthoVariant", "orthogonalize",
    "IluFactors", "ZeroPivotError", "ilu0_apply", "ilu0_factorize",
    "KrylovConfig", "Preconditioner", "SolverKind", "SolverResult", "EigenResult",
    "BreakdownError", "workspace_model", "true_residual_linear", "true_residual_eigen",
    "gmres_m", "bicgstab", "lanczos_restarted", "arnoldi_restarted", "arnoldi_process",
]
