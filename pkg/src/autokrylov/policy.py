"""Numerical computation policies and the meta-solvers that follow them.

A policy file holds ``KEYWORD = VALUE`` lines::

    # lines starting with '#' are comments
    POLICY = ACCURACY
    RESIDUAL = 1e-10
    MAXMEMORY = 64M
    MAXTIME = 30

The meta-solvers turn a :class:`PolicyConfig` into concrete choices (SpMV
kernel, restart length and its cap, Gram-Schmidt variant, preconditioner),
run the solver and, under the ACCURACY policy, repeat the solve with DGKS and
a ten times tighter inner tolerance while the recomputed true residual misses
the requirement.
"""
from __future__ import annotations

import enum
import logging
import os
import re
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .autotune import (
    DEFAULT_JL,
    RestartController,
    TuningReport,
    select_spmv_sym,
    select_spmv_unsym,
)
from .kernels import KernelChoice, SpmvOperator, WorkerPool
from .krylov import (
    BCGS,
    DGKS,
    MGS,
    EigenResult,
    KrylovConfig,
    OrthoVariant,
    Preconditioner,
    SolverKind,
    SolverResult,
    ZeroPivotError,
    arnoldi_restarted,
    bicgstab,
    gmres_m,
    ilu0_factorize,
    lanczos_restarted,
    workspace_model,
)
from .sparse import CsrMatrix, SymCsrMatrix, expand_symmetric

log = logging.getLogger(__name__)

__all__ = [
    "Policy",
    "PolicyConfig",
    "PolicyError",
    "WorkspaceError",
    "WorkspacePlan",
    "MetaOutcome",
    "PassRecord",
    "parse_policy_file",
    "parse_policy_text",
    "policy_file_for_group",
    "select_reorthogonalizer",
    "plan_workspace",
    "linear_solve_meta",
    "eigensolve_meta",
]

DEFAULT_RESIDUAL = 1e-8
DEFAULT_MAXTIME = 1000.0
DEFAULT_MAXMEMORY = 256 * 2**20
STABLE_RESTART = 30
TIGHTEN = 0.1
MAX_OUTER_PASSES = 8
GROUP_FILE_PREFIX = "POLICY_INPUT"


class PolicyError(ValueError):
    """Malformed policy file or invalid keyword value."""


class WorkspaceError(ValueError):
    """The memory budget cannot hold the smallest admissible workspace."""


class Policy(enum.Enum):
    TIME = "TIME"
    ACCURACY = "ACCURACY"
    MEMORY = "MEMORY"
    STABLE = "STABLE"


@dataclass(frozen=True)
class PolicyConfig:
    """Parsed policy; ``None`` fields mean "use the default"."""

    policy: Policy = Policy.TIME
    cpu: int | None = None
    residual: float = DEFAULT_RESIDUAL
    maxmemory: int | None = None
    maxtime: float = DEFAULT_MAXTIME
    preconditioner: Preconditioner | None = None
    solver: SolverKind | None = None

    def __post_init__(self):
        if not isinstance(self.policy, Policy):
            object.__setattr__(self, "policy", _parse_value("POLICY", str(self.policy)))
        if self.cpu is not None and self.cpu < 1:
            raise PolicyError("CPU must be a positive integer")
        if not self.residual > 0:
            raise PolicyError("RESIDUAL must be positive")
        if self.maxmemory is not None and self.maxmemory < 1:
            raise PolicyError("MAXMEMORY must be positive")
        if not self.maxtime > 0:
            raise PolicyError("MAXTIME must be positive")

    @property
    def workers(self) -> int:
        return self.cpu or os.cpu_count() or 1

    @property
    def memory_budget(self) -> int:
        return DEFAULT_MAXMEMORY if self.maxmemory is None else self.maxmemory

    def with_overrides(self, text: str) -> "PolicyConfig":
        """Apply ``KEY=VALUE`` pairs separated by commas or newlines."""
        lines = [s for s in re.split(r"[,\n]", text) if s.strip()]
        return _apply(self, lines, source="<override>")

    def to_text(self) -> str:
        """Policy-file text that parses back to an equal config."""
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, enum.Enum):
                value = value.name
            elif isinstance(value, float):
                value = repr(value)
            out.append(f"{f.name.upper()} = {value}")
        return "\n".join(out) + "\n"

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            value = getattr(self, f.name)
            d[f.name] = value.name if isinstance(value, enum.Enum) else value
        return d


_CHOICES = {
    "POLICY": {p.name: p for p in Policy},
    "PRECONDITIONER": {p.name: p for p in Preconditioner},
    "SOLVER": {s.name: s for s in SolverKind},
}
_UNITS = {"": 1, "K": 2**10, "M": 2**20, "G": 2**30}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _CHOICES:
        legal = _CHOICES[key]
        try:
            return legal[raw.upper()]
        except KeyError:
            raise PolicyError(
                f"invalid {key} value {raw!r}; expected one of {', '.join(legal)}") from None
    try:
        if key == "CPU":
            value = int(raw)
            if value < 1:
                raise ValueError
            return value
        if key == "MAXMEMORY":
            m = re.fullmatch(r"(\d+(?:\.\d*)?(?:[eE]\d+)?)\s*([KMG]?)(?:I?B)?", raw.upper())
            if m is None:
                raise ValueError
            value = int(float(m.group(1)) * _UNITS[m.group(2)])
            if value < 1:
                raise ValueError
            return value
        value = float(raw)
        if not (value > 0 and np.isfinite(value)):
            raise ValueError
        return value
    except ValueError:
        raise PolicyError(f"invalid {key} value {raw!r}; expected a positive number") from None


_FIELDS = {"POLICY": "policy", "CPU": "cpu", "RESIDUAL": "residual", "MAXMEMORY": "maxmemory",
           "MAXTIME": "maxtime", "PRECONDITIONER": "preconditioner", "SOLVER": "solver"}


def _apply(cfg: PolicyConfig, lines, source: str) -> PolicyConfig:
    updates = {}
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise PolicyError(f"{source}:{lineno}: expected KEYWORD = VALUE, got {text!r}")
        key, raw = (s.strip() for s in text.split("=", 1))
        key = key.upper()
        if key not in _FIELDS:
            log.warning("%s:%d: unknown policy keyword %r ignored", source, lineno, key)
            continue
        updates[_FIELDS[key]] = _parse_value(key, raw)
    return replace(cfg, **updates)


def parse_policy_text(text: str, source: str = "<text>") -> PolicyConfig:
    return _apply(PolicyConfig(), text.splitlines(), source)


def parse_policy_file(path) -> PolicyConfig:
    """Read a policy file; a missing file yields the defaults (TIME policy).

    Raises
    ------
    PolicyError
        A line without ``=`` or an invalid value for a known keyword.
    OSError
        The file exists but cannot be read.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except FileNotFoundError:
        log.info("no policy file at %s, using defaults", path)
        return PolicyConfig()
    except UnicodeDecodeError as exc:
        raise PolicyError(f"{path}: policy files are ASCII") from exc
    return parse_policy_text(text, str(path))


def policy_file_for_group(directory, group_id: int) -> Path:
    """Per-worker-group policy file ``<directory>/POLICY_INPUT.<group_id>``."""
    return Path(directory) / f"{GROUP_FILE_PREFIX}.{int(group_id)}"


def select_reorthogonalizer(residual_requirement: float, fault_seen: bool) -> OrthoVariant:
    """DGKS after a fault, MGS for requirements at or below 1e-10, BCGS(4) otherwise."""
    if not residual_requirement > 0:
        raise ValueError("residual requirement must be positive")
    if fault_seen:
        return DGKS
    if residual_requirement <= 1e-10:
        return MGS
    return BCGS


class WorkspacePlan(NamedTuple):
    restart_m_initial: int
    m_max: int
    workspace_bytes_cap: int


def _floor(solver: SolverKind, n: int, k: int) -> int:
    if solver.is_eigen:
        return min(k + 2, n)
    return min(2, n)


def plan_workspace(policy: PolicyConfig, n: int, matrix_bytes: int, solver: SolverKind,
                   k: int = 1) -> WorkspacePlan:
    """Restart lengths for ``policy`` under its memory budget.

    ``m_max`` is the largest restart length whose workspace fits into
    ``maxmemory - matrix_bytes`` (never more than ``n``).  TIME and ACCURACY
    start at ``m_max``, MEMORY at the solver floor (2 for GMRES, ``k+2`` for
    eigensolvers) and STABLE at 30.  BiCGStab has no restart length; its
    plan is ``(0, 0, bytes)``.
    """
    budget = policy.memory_budget - matrix_bytes
    if solver is SolverKind.BICGSTAB:
        need = workspace_model(solver, n, 0)
        if need > budget:
            raise WorkspaceError(f"BiCGStab needs {need} bytes, budget leaves {budget}")
        return WorkspacePlan(0, 0, need)
    floor = _floor(solver, n, k)
    if workspace_model(solver, n, floor) > budget:
        raise WorkspaceError(
            f"budget of {budget} bytes after the matrix cannot hold restart length {floor}")
    lo, hi = floor, n
    while lo < hi:  # largest m in [floor, n] that fits
        mid = (lo + hi + 1) // 2
        if workspace_model(solver, n, mid) <= budget:
            lo = mid
        else:
            hi = mid - 1
    m_max = lo
    if policy.policy is Policy.MEMORY:
        m0 = floor
    elif policy.policy is Policy.STABLE:
        m0 = min(max(STABLE_RESTART, floor), m_max)
    else:
        m0 = m_max
    return WorkspacePlan(m0, m_max, workspace_model(solver, n, m_max))


@dataclass
class PassRecord:
    tol: float
    ortho: str
    iterations: int
    true_residual: float
    fault_convergence: bool


@dataclass
class MetaOutcome:
    result: SolverResult | EigenResult
    policy_satisfied: bool
    outer_passes: int
    tuning: TuningReport
    ortho_used: OrthoVariant
    msize_trajectory: list[int]
    solver: SolverKind
    policy: PolicyConfig
    plan: WorkspacePlan
    preconditioner: Preconditioner = Preconditioner.NONE
    workers: int = 1
    passes: list[PassRecord] = field(default_factory=list)
    spmv_calls: int = 0
    spmv_seconds: float = 0.0
    spmv_flops_per_call: int = 0

    @property
    def fault_convergence(self) -> bool:
        return self.result.fault_convergence

    @property
    def converged(self) -> bool:
        return self.result.converged

    @property
    def total_iterations(self) -> int:
        return sum(p.iterations for p in self.passes)

    @property
    def spmv_gflops(self) -> float:
        if self.spmv_seconds <= 0:
            return 0.0
        return self.spmv_flops_per_call * self.spmv_calls / self.spmv_seconds / 1e9


def _operator(matrix, policy: PolicyConfig, pool: WorkerPool, kernel: KernelChoice | None,
              seed: int, measure=None, jl_candidates=DEFAULT_JL) -> tuple[SpmvOperator, TuningReport]:
    if kernel is not None:
        op = SpmvOperator(matrix, kernel, pool)
        return op, TuningReport(selected=kernel, selected_workers=pool.size, mode="forced")
    if policy.policy is Policy.STABLE:
        op = SpmvOperator.default(matrix, pool)
        return op, TuningReport(selected=op.choice, selected_workers=pool.size, mode="disabled")
    if isinstance(matrix, SymCsrMatrix):
        return select_spmv_sym(matrix, pool, measure=measure, seed=seed)
    return select_spmv_unsym(matrix, pool, jl_candidates, measure=measure, seed=seed)


def _controller(policy: PolicyConfig, solver: SolverKind, plan: WorkspacePlan):
    if policy.policy is Policy.STABLE or not solver.restarted:
        return None
    return RestartController(plan.restart_m_initial, plan.m_max, increment=5)


def _run_passes(policy, solve, residual_of, ortho, x0=None):
    """The outer loop: one pass, or repeated passes under ACCURACY."""
    deadline = time.perf_counter() + policy.maxtime
    tol = policy.residual
    passes = []
    while True:
        remaining = deadline - time.perf_counter()
        result = solve(tol, ortho, x0, max(remaining, 1e-3))
        res = residual_of(result)
        passes.append(PassRecord(tol, ortho.name, result.iterations, res, result.fault_convergence))
        satisfied = bool(np.isfinite(res) and res <= policy.residual)
        if policy.policy is not Policy.ACCURACY or satisfied:
            break
        if not result.converged:
            # out of iterations or time, or broken down: tightening cannot help
            break
        if len(passes) >= MAX_OUTER_PASSES or time.perf_counter() >= deadline:
            log.warning("accuracy policy gave up after %d passes", len(passes))
            break
        ortho = select_reorthogonalizer(policy.residual, fault_seen=True)
        tol *= TIGHTEN
        x0 = result
        log.info("true residual %.3e misses %.3e; pass %d with %s, inner tol %.1e",
                 res, policy.residual, len(passes) + 1, ortho.name, tol)
    return result, passes, ortho, satisfied


def _pool(policy, pool):
    return pool if pool is not None else WorkerPool(policy.workers)


def linear_solve_meta(matrix, b, policy: PolicyConfig | None = None, *,
                      pool: WorkerPool | None = None, kernel: KernelChoice | None = None,
                      measure=None, jl_candidates=DEFAULT_JL, seed: int = 0) -> MetaOutcome:
    """Solve ``A x = b`` under ``policy``.

    Parameters
    ----------
    matrix : CsrMatrix or SymCsrMatrix
        Symmetric storage is expanded; the linear solvers use general kernels.
    b : array_like
        Right-hand side, nonzero.
    policy : PolicyConfig
        Defaults to the TIME policy.
    pool : WorkerPool, optional
        Worker pool; a pool of ``policy.workers`` threads otherwise.
    kernel : KernelChoice, optional
        Force this SpMV kernel and skip the timing search.
    measure : callable, optional
        Timing hook passed to the kernel search (see ``select_spmv_unsym``).
    jl_candidates : sequence of int
        Lane counts tried for U3.

    Returns
    -------
    MetaOutcome
    """
    policy = policy or PolicyConfig()
    if isinstance(matrix, SymCsrMatrix):
        matrix = expand_symmetric(matrix)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (matrix.n,):
        raise ValueError(f"b has shape {b.shape}, expected ({matrix.n},)")
    if not np.linalg.norm(b) > 0:
        raise ValueError("b must be nonzero")
    solver = policy.solver or SolverKind.GMRES
    if solver.is_eigen:
        raise PolicyError(f"SOLVER = {solver.name} is an eigensolver")
    if kernel is not None and kernel.kernel.symmetric:
        raise PolicyError(f"kernel {kernel.label} needs symmetric storage")

    precond = policy.preconditioner or Preconditioner.ILU0
    extra = 0
    if precond is Preconditioner.ILU0:
        try:
            extra = ilu0_factorize(matrix).nbytes
        except ZeroPivotError as exc:
            log.warning("ILU(0) unavailable (%s); solving without a preconditioner", exc)
            precond = Preconditioner.NONE
    plan = plan_workspace(policy, matrix.n, matrix.nbytes + extra, solver)
    own = pool is None
    pool = _pool(policy, pool)
    try:
        op, tuning = _operator(matrix, policy, pool, kernel, seed, measure, jl_candidates)
        ctl = _controller(policy, solver, plan)
        ortho = MGS if policy.policy is Policy.STABLE else select_reorthogonalizer(
            policy.residual, fault_seen=False)
        run = gmres_m if solver is SolverKind.GMRES else bicgstab

        def solve(tol, ortho, prev, max_time):
            cfg = KrylovConfig(
                restart_m=max(plan.restart_m_initial, 1), m_max=max(plan.m_max, 1), tol=tol,
                max_time=max_time, ortho=ortho, spmv=op, restart_at=ctl, precond=precond,
                x0=None if prev is None else prev.x, seed=seed)
            return run(matrix, b, cfg)

        result, passes, ortho, ok = _run_passes(policy, solve, lambda r: r.true_residual, ortho)
    finally:
        if own:
            pool.close()
    return MetaOutcome(
        result=result, policy_satisfied=ok, outer_passes=len(passes), tuning=tuning,
        ortho_used=ortho, msize_trajectory=list(ctl.trajectory) if ctl else [plan.restart_m_initial],
        solver=solver, policy=policy, plan=plan, preconditioner=precond, workers=pool.size,
        passes=passes, spmv_calls=op.calls, spmv_seconds=op.kernel_seconds,
        spmv_flops_per_call=op.flops_per_call,
    )


def _eigen_dispatch(matrix, solver: SolverKind | None):
    if isinstance(matrix, CsrMatrix) and solver is not SolverKind.ARNOLDI:
        if matrix.is_numerically_symmetric():
            matrix = matrix.upper()
    symmetric = isinstance(matrix, SymCsrMatrix)
    if solver is None:
        solver = SolverKind.LANCZOS if symmetric else SolverKind.ARNOLDI
    if not solver.is_eigen:
        raise PolicyError(f"SOLVER = {solver.name} is a linear solver")
    if solver is SolverKind.LANCZOS and not symmetric:
        raise PolicyError("Lanczos needs a symmetric matrix")
    if solver is SolverKind.ARNOLDI and symmetric:
        matrix = expand_symmetric(matrix)
    return matrix, solver


def eigensolve_meta(matrix, k: int, policy: PolicyConfig | None = None, *,
                    pool: WorkerPool | None = None, kernel: KernelChoice | None = None,
                    measure=None, jl_candidates=DEFAULT_JL, seed: int = 0) -> MetaOutcome:
    """``k`` largest-magnitude eigenpairs under ``policy``.

    Symmetric input (``SymCsrMatrix``, or a numerically symmetric
    ``CsrMatrix``) goes to Lanczos, anything else to Arnoldi, unless the
    policy names a solver.  The requirement bounds the largest absolute
    residual ``||A v - lam v||``.  Accuracy passes after the first start
    from the sum of the previous eigenvectors.
    """
    policy = policy or PolicyConfig()
    if k < 1:
        raise ValueError("k must be >= 1")
    matrix, solver = _eigen_dispatch(matrix, policy.solver)
    if kernel is not None and kernel.kernel.symmetric != isinstance(matrix, SymCsrMatrix):
        raise PolicyError(f"kernel {kernel.label} does not fit {solver.name}")
    plan = plan_workspace(policy, matrix.n, matrix.nbytes, solver, k=k)
    own = pool is None
    pool = _pool(policy, pool)
    try:
        op, tuning = _operator(matrix, policy, pool, kernel, seed, measure, jl_candidates)
        ctl = _controller(policy, solver, plan)
        ortho = MGS if policy.policy is Policy.STABLE else select_reorthogonalizer(
            policy.residual, fault_seen=False)
        run = lanczos_restarted if solver is SolverKind.LANCZOS else arnoldi_restarted

        def solve(tol, ortho, prev, max_time):
            x0 = None
            if prev is not None:
                x0 = np.real(prev.eigenvectors).sum(axis=1)
            cfg = KrylovConfig(
                restart_m=plan.restart_m_initial, m_max=plan.m_max, tol=tol, max_time=max_time,
                ortho=ortho, spmv=op, restart_at=ctl, x0=x0, seed=seed)
            return run(matrix, k, cfg)

        result, passes, ortho, ok = _run_passes(policy, solve, lambda r: r.max_residual, ortho)
    finally:
        if own:
            pool.close()
    return MetaOutcome(
        result=result, policy_satisfied=ok, outer_passes=len(passes), tuning=tuning,
        ortho_used=ortho, msize_trajectory=list(ctl.trajectory) if ctl else [plan.restart_m_initial],
        solver=solver, policy=policy, plan=plan, workers=pool.size, passes=passes,
        spmv_calls=op.calls, spmv_seconds=op.kernel_seconds,
        spmv_flops_per_call=op.flops_per_call,
    )
