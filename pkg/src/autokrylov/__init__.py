"""Auto-tuned sparse Krylov solvers."""
from .autotune import RestartController, select_spmv_sym, select_spmv_unsym
from .kernels import Kernel, KernelChoice, SpmvOperator, WorkerPool, spmv_ref
from .krylov import (
    KrylovConfig,
    arnoldi_restarted,
    bicgstab,
    gmres_m,
    lanczos_restarted,
)
from .policy import Policy, PolicyConfig, eigensolve_meta, linear_solve_meta, parse_policy_file
from .sparse import CsrMatrix, SymCsrMatrix, load_matrix_market, write_matrix_market

__all__ = [
    "CsrMatrix", "SymCsrMatrix", "load_matrix_market", "write_matrix_market",
    "Kernel", "KernelChoice", "SpmvOperator", "WorkerPool", "spmv_ref",
    "RestartController", "select_spmv_sym", "select_spmv_unsym",
    "KrylovConfig", "gmres_m", "bicgstab", "lanczos_restarted", "arnoldi_restarted",
    "Policy", "PolicyConfig", "parse_policy_file", "linear_solve_meta", "eigensolve_meta",
]
__version__ = "0.1.0"
