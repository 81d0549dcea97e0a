from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from ..autotune import RestartController
from ..kernels import SpmvOperator, spmv_ref
from ..sparse import SymCsrMatrix, expand_symmetric
from .ortho import MGS, OrthoVariant


class Preconditioner(enum.Enum):
    NONE = "none"
    ILU0 = "ilu0"


class SolverKind(enum.Enum):
    GMRES = "gmres"
    BICGSTAB = "bicgstab"
    LANCZOS = "lanczos"
    ARNOLDI = "arnoldi"

    @property
    def is_eigen(self) -> bool:
        return self in (SolverKind.LANCZOS, SolverKind.ARNOLDI)

    @property
    def restarted(self) -> bool:
        return self is not SolverKind.BICGSTAB


class BreakdownError(ArithmeticError):
    """The Krylov process broke down before enough information was found."""


def workspace_model(solver: SolverKind, n: int, m: int) -> int:
    """Bytes of solver workspace for dimension ``n`` and restart length ``m``.

    GMRES and Arnoldi keep ``m+2`` basis vectors and a dense ``(m+2)^2``
    Hessenberg block; Lanczos keeps the same basis but only a tridiagonal;
    BiCGStab keeps nine vectors regardless of ``m``.
    """
    if solver is SolverKind.BICGSTAB:
        return 8 * 9 * n
    if solver is SolverKind.LANCZOS:
        return 8 * (n * (m + 2) + 2 * (m + 2))
    return 8 * (n * (m + 2) + (m + 2) ** 2)


@dataclass
class KrylovConfig:
    """Knobs shared by every solver.

    ``restart_at`` enables restart-length adaptation; when given, its current
    ``msize`` replaces ``restart_m`` and its cap replaces ``m_max``.
    """

    restart_m: int = 30
    m_max: int | None = None
    tol: float = 1e-8
    max_iters: int = 10_000
    max_time: float = 1000.0
    ortho: OrthoVariant = MGS
    spmv: SpmvOperator | None = None
    restart_at: RestartController | None = None
    precond: Preconditioner = Preconditioner.NONE
    x0: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.restart_at is not None:
            self.restart_m = self.restart_at.msize
            self.m_max = self.restart_at.msize_max
        elif self.m_max is None:
            self.m_max = self.restart_m
        if not 1 <= self.restart_m <= self.m_max:
            raise ValueError(f"need 1 <= restart_m ({self.restart_m}) <= m_max ({self.m_max})")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if isinstance(self.precond, str):
            self.precond = Preconditioner(self.precond.lower())
        if isinstance(self.ortho, str):
            self.ortho = OrthoVariant.parse(self.ortho)

    def initial_m(self) -> int:
        return self.restart_at.msize if self.restart_at else self.restart_m

    def operator(self, matrix) -> SpmvOperator:
        if self.spmv is None:
            return SpmvOperator.default(matrix)
        if self.spmv.n != matrix.n:
            raise ValueError("SpMV operator is bound to a matrix of a different order")
        return self.spmv


@dataclass
class SolverResult:
    x: np.ndarray
    converged: bool
    iterations: int
    restarts: list[tuple[int, int]]
    recurrence_residual: float
    true_residual: float
    fault_convergence: bool
    elapsed: float
    workspace_bytes: int
    residual_history: list[float] = field(default_factory=list)
    msize_trajectory: list[int] = field(default_factory=list)
    breakdown: str | None = None
    timed_out: bool = False


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, unit 2-norm
    residuals: np.ndarray
    converged: bool
    iterations: int
    restarts: list[tuple[int, int]]
    elapsed: float
    workspace_bytes: int
    fault_convergence: bool
    residual_history: list[float] = field(default_factory=list)
    msize_trajectory: list[int] = field(default_factory=list)
    timed_out: bool = False

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0


class Deadline:
    def __init__(self, seconds: float):
        self.start = time.perf_counter()
        self.limit = self.start + seconds

    def expired(self) -> bool:
        return time.perf_counter() >= self.limit

    def elapsed(self) -> float:
        return time.perf_counter() - self.start


def _full(matrix):
    return expand_symmetric(matrix) if isinstance(matrix, SymCsrMatrix) else matrix


def true_residual_linear(matrix, x, b) -> float:
    """``||b - A x||_2 / ||b||_2`` through the sequential reference kernel."""
    b = np.asarray(b, dtype=np.float64)
    r = b - spmv_ref(_full(matrix), x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return float(np.linalg.norm(r))
    return float(np.linalg.norm(r) / bnorm)


def true_residual_eigen(matrix, lam, v) -> float:
    """``||A v - lam v||_2`` through the sequential reference kernel; ``v`` may be complex."""
    A = _full(matrix)
    v = np.asarray(v)
    if np.iscomplexobj(v) or np.iscomplexobj(lam):
        av = spmv_ref(A, v.real) + 1j * spmv_ref(A, v.imag)
    else:
        av = spmv_ref(A, v)
    return float(np.linalg.norm(av - lam * v))
