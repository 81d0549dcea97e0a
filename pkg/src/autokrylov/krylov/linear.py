"""Restarted GMRES(m) and right-preconditioned BiCGStab."""
from __future__ import annotations

import logging

import numpy as np

from ..sparse import CsrMatrix
from .base import (
    Deadline,
    KrylovConfig,
    Preconditioner,
    SolverKind,
    SolverResult,
    true_residual_linear,
    workspace_model,
)
from .ilu import ilu0_apply, ilu0_factorize
from .ortho import orthogonalize

log = logging.getLogger(__name__)

BREAKDOWN_RTOL = 1e-14


def _preconditioner(matrix, cfg: KrylovConfig):
    if cfg.precond is Preconditioner.ILU0:
        factors = ilu0_factorize(matrix)
        return lambda v: ilu0_apply(factors, v)
    return lambda v: v


def _start(matrix, b, cfg):
    if not isinstance(matrix, CsrMatrix):
        raise TypeError("linear solvers take a CsrMatrix")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (matrix.n,):
        raise ValueError(f"b has shape {b.shape}, expected ({matrix.n},)")
    x = np.zeros(matrix.n) if cfg.x0 is None else np.array(cfg.x0, dtype=np.float64)
    return b, x


def _givens(a: float, b: float) -> tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def gmres_m(matrix: CsrMatrix, b, cfg: KrylovConfig | None = None) -> SolverResult:
    """Restarted GMRES with right preconditioning.

    The Arnoldi basis is built with ``cfg.ortho``; the least-squares problem
    is reduced by Givens rotations, whose running residual is the convergence
    test.  With ``cfg.restart_at`` set, the recurrence residual at each restart
    is fed to the controller and the next cycle uses its restart length.
    """
    cfg = cfg or KrylovConfig()
    deadline = Deadline(cfg.max_time)
    b, x = _start(matrix, b, cfg)
    n = matrix.n
    op = cfg.operator(matrix)
    prec = _preconditioner(matrix, cfg)
    ctl = cfg.restart_at
    m = cfg.initial_m()
    peak_m = m

    bnorm = np.linalg.norm(b)
    history: list[float] = []
    restarts: list[tuple[int, int]] = []
    iters = 0
    converged = False
    breakdown = None
    rel = 0.0
    if bnorm == 0.0:
        x[:] = 0.0
        converged = True

    while not converged:
        r = b - op(x)
        beta = np.linalg.norm(r)
        rel = beta / bnorm
        if rel < cfg.tol:
            converged = True
            break
        if iters >= cfg.max_iters or deadline.expired():
            break
        mc = min(m, n)
        peak_m = max(peak_m, m)
        V = np.empty((mc + 1, n))
        H = np.zeros((mc + 1, mc))
        cs = np.zeros(mc)
        sn = np.zeros(mc)
        g = np.zeros(mc + 1)
        g[0] = beta
        V[0] = r / beta
        steps = 0
        lucky = False
        for j in range(mc):
            w = op(prec(V[j]))
            q, h, lucky = orthogonalize(cfg.ortho, V[:j + 1].T, w)
            col = H[:j + 2, j]
            col[:] = h
            for i in range(j):
                t = cs[i] * col[i] + sn[i] * col[i + 1]
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1]
                col[i] = t
            cs[j], sn[j] = _givens(col[j], col[j + 1])
            col[j] = cs[j] * col[j] + sn[j] * col[j + 1]
            col[j + 1] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            steps = j + 1
            iters += 1
            rel = abs(g[j + 1]) / bnorm
            history.append(rel)
            if lucky:
                break
            V[j + 1] = q
            if rel < cfg.tol or iters >= cfg.max_iters or deadline.expired():
                break
        R = H[:steps, :steps]
        if np.any(np.diag(R) == 0.0):
            breakdown = "singular Hessenberg"
            log.warning("GMRES: singular projected matrix after %d iterations", iters)
            break
        y = _back_substitute(R, g[:steps])
        x += prec(V[:steps].T @ y)
        if rel < cfg.tol:
            converged = True
            break
        if iters >= cfg.max_iters or deadline.expired():
            break
        restarts.append((iters, m))
        if ctl is not None:
            m = ctl.sample(rel)

    true_res = true_residual_linear(matrix, x, b) if bnorm > 0 else 0.0
    return SolverResult(
        x=x,
        converged=converged,
        iterations=iters,
        restarts=restarts,
        recurrence_residual=float(rel),
        true_residual=true_res,
        fault_convergence=bool(converged and true_res > cfg.tol),
        elapsed=deadline.elapsed(),
        workspace_bytes=workspace_model(SolverKind.GMRES, n, peak_m),
        residual_history=history,
        msize_trajectory=list(ctl.trajectory) if ctl else [m],
        breakdown=breakdown,
        timed_out=not converged and deadline.expired(),
    )


def _back_substitute(R, g):
    k = len(g)
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y


def bicgstab(matrix: CsrMatrix, b, cfg: KrylovConfig | None = None) -> SolverResult:
    """Van der Vorst BiCGStab with right preconditioning.

    One iteration is one pass of the recurrence (two SpMVs).  A vanishing
    ``rho`` or ``omega`` ends the run with ``breakdown`` set.
    """
    cfg = cfg or KrylovConfig()
    deadline = Deadline(cfg.max_time)
    b, x = _start(matrix, b, cfg)
    n = matrix.n
    op = cfg.operator(matrix)
    prec = _preconditioner(matrix, cfg)

    bnorm = np.linalg.norm(b)
    history: list[float] = []
    iters = 0
    converged = False
    breakdown = None
    rel = 0.0
    if bnorm == 0.0:
        x[:] = 0.0
        converged = True
    else:
        r = b - op(x)
        rel = np.linalg.norm(r) / bnorm
        converged = rel < cfg.tol
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        while not converged and iters < cfg.max_iters and not deadline.expired():
            rho_new = r_hat @ r
            if abs(rho_new) < BREAKDOWN_RTOL * bnorm * np.linalg.norm(r_hat):
                breakdown = "rho"
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            p_hat = prec(p)
            v = op(p_hat)
            denom = r_hat @ v
            if denom == 0.0:
                breakdown = "rho"
                break
            alpha = rho / denom
            s = r - alpha * v
            iters += 1
            rel = np.linalg.norm(s) / bnorm
            if rel < cfg.tol:
                x += alpha * p_hat
                history.append(rel)
                converged = True
                break
            s_hat = prec(s)
            t = op(s_hat)
            tt = t @ t
            omega = (t @ s) / tt if tt > 0.0 else 0.0
            x += alpha * p_hat + omega * s_hat
            r = s - omega * t
            rel = np.linalg.norm(r) / bnorm
            history.append(rel)
            if rel < cfg.tol:
                converged = True
                break
            if abs(omega) < BREAKDOWN_RTOL:
                breakdown = "omega"
                break

    true_res = true_residual_linear(matrix, x, b) if bnorm > 0 else 0.0
    return SolverResult(
        x=x,
        converged=converged,
        iterations=iters,
        restarts=[],
        recurrence_residual=float(rel),
        true_residual=true_res,
        fault_convergence=bool(converged and true_res > cfg.tol),
        elapsed=deadline.elapsed(),
        workspace_bytes=workspace_model(SolverKind.BICGSTAB, n, 0),
        residual_history=history,
        msize_trajectory=[],
        breakdown=breakdown,
        timed_out=not converged and breakdown is None and deadline.expired(),
    )
