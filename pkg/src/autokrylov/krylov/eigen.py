"""Explicitly restarted Lanczos and Arnoldi with locking.

Each restart builds an ``m``-step Krylov basis kept orthogonal, with the
configured Gram-Schmidt variant, to the previous steps and to every locked
vector.  The ``k`` largest-magnitude Ritz pairs of the projected matrix
(tridiagonal for Lanczos, Hessenberg for Arnoldi) are tested with the cheap
residual estimate ``|h_{m+1,m} * s_m|``; converged pairs are locked and the
next cycle starts from the unconverged leading Ritz vectors plus the last
Arnoldi vector, so no information about the wanted pairs is thrown away.
The final pairs come from a Rayleigh-Ritz step on the locked basis, and
their residuals are recomputed directly.
"""
from __future__ import annotations

import logging

import numpy as np

from ..sparse import CsrMatrix, SymCsrMatrix
from .base import (
    BreakdownError,
    Deadline,
    EigenResult,
    KrylovConfig,
    SolverKind,
    true_residual_eigen,
    workspace_model,
)
from .ortho import DGKS, OrthoVariant, orthogonalize

log = logging.getLogger(__name__)


def arnoldi_process(op, v0, m: int, ortho: OrthoVariant, locked: np.ndarray | None = None,
                    deadline: Deadline | None = None):
    """Run up to ``m`` Arnoldi steps from ``v0``.

    Returns ``(V, H, steps, breakdown)`` with ``V`` of shape ``(steps+1, n)``
    (the last row is only meaningful without breakdown) and ``H`` of shape
    ``(steps+1, steps)`` such that ``A V[:steps].T = V.T H`` up to rounding.
    Columns of ``locked`` are projected out of every new vector.
    """
    n = len(v0)
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    V[0] = v0 / np.linalg.norm(v0)
    steps, breakdown = _extend(op, V, H, 0, m, ortho, locked, deadline)
    return V[:steps + 1], H[:steps + 1, :steps], steps, breakdown


def _extend(op, V, H, first, m, ortho, locked, deadline):
    # continue an Arnoldi factorization whose first `first` columns are set
    n = V.shape[1]
    locked = np.zeros((n, 0)) if locked is None else locked
    p = locked.shape[1]
    steps = first
    breakdown = False
    for j in range(first, m):
        w = op(V[j])
        basis = np.concatenate([locked, V[:j + 1].T], axis=1) if p else V[:j + 1].T
        q, h, breakdown = orthogonalize(ortho, basis, w)
        H[:j + 1, j] = h[p:p + j + 1]
        H[j + 1, j] = h[-1]
        steps = j + 1
        if breakdown:
            break
        V[j + 1] = q
        if deadline is not None and deadline.expired():
            break
    return steps, breakdown


def _ritz(H, steps, symmetric):
    Hm = H[:steps, :steps]
    if symmetric:
        # the projected matrix is the tridiagonal (plus the arrow row left by a
        # thick restart) found on and below the diagonal; entries above it
        # are reorthogonalization coefficients
        L = np.tril(Hm)
        return np.linalg.eigh(L + np.tril(Hm, -1).T)
    return np.linalg.eig(Hm)


def _order(vals, count=None):
    # largest magnitude first; ties resolved by larger real part, then
    # positive imaginary part first so conjugate pairs stay adjacent
    idx = np.lexsort((np.arange(len(vals)), -np.imag(vals), -np.real(vals), -np.abs(vals)))
    return idx if count is None else idx[:count]


def _groups(vals, S, order):
    """Real bases of the Ritz subspaces in ``order``, one per eigenvalue or conjugate pair."""
    out = []
    seen = set()
    for i in order:
        if i in seen:
            continue
        seen.add(int(i))
        lam = vals[i]
        if np.iscomplexobj(vals) and lam.imag != 0.0:
            dist = np.abs(vals - np.conj(lam))
            dist[i] = np.inf
            partner = np.argmin(dist)
            seen.add(int(partner))
            out.append((i, np.column_stack([S[:, i].real, S[:, i].imag])))
        else:
            out.append((i, np.real(S[:, i])[:, None]))
    return out


def _random_start(rng, n, basis, ortho):
    for _ in range(10):
        q, _, bad = orthogonalize(ortho, basis, rng.standard_normal(n))
        if not bad:
            return q
    return None


GHOST_RATIO = 0.5


def _lock(locked, u, ortho):
    # a Ritz vector mostly inside the locked span is a ghost copy of an
    # eigenpair already found, produced by lost orthogonality; drop it
    q, h, bad = orthogonalize(DGKS if ortho is None else ortho, locked, u)
    if bad or h[-1] < GHOST_RATIO * np.linalg.norm(u):
        return locked
    return np.concatenate([locked, q[:, None]], axis=1)


def _restarted(matrix, k: int, cfg: KrylovConfig, symmetric: bool) -> EigenResult:
    solver = SolverKind.LANCZOS if symmetric else SolverKind.ARNOLDI
    n = matrix.n
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"cannot compute {k} eigenpairs of an order-{n} matrix")
    if cfg.initial_m() < min(k + 2, n):
        raise ValueError(f"restart length must be at least k+2={k + 2}")
    deadline = Deadline(cfg.max_time)
    op = cfg.operator(matrix)
    ctl = cfg.restart_at
    rng = np.random.default_rng(cfg.seed)
    m = cfg.initial_m()
    peak_m = m

    locked = np.zeros((n, 0))
    V = np.zeros((1, n))
    H = np.zeros((1, 0))
    start = None
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0, dtype=np.float64)
        if x0.shape != (n,):
            raise ValueError(f"start vector has shape {x0.shape}, expected ({n},)")
        if np.linalg.norm(x0) > 0:
            start = x0 / np.linalg.norm(x0)
    V[0] = _random_start(rng, n, locked, cfg.ortho) if start is None else start
    kept = 0  # columns of V carried over from the previous cycle
    history: list[float] = []
    restarts: list[tuple[int, int]] = []
    iters = 0
    pending = np.zeros((n, 0))  # best unconverged Ritz vectors, used if we stop early

    while locked.shape[1] < k:
        p = locked.shape[1]
        need = k - p
        mc = min(m, n - p)
        peak_m = max(peak_m, m)
        Vc = np.zeros((mc + 1, n))
        Hc = np.zeros((mc + 1, mc))
        Vc[:kept + 1] = V[:kept + 1]
        Hc[:kept + 1, :kept] = H[:kept + 1, :kept]
        steps, breakdown = _extend(op, Vc, Hc, kept, mc, cfg.ortho, locked, deadline)
        iters += steps - kept
        vals, S = _ritz(Hc, steps, symmetric)
        beta = 0.0 if breakdown else Hc[steps, steps - 1]
        order = _order(vals)
        est = np.abs(beta * S[steps - 1])
        history.append(float(est[order[:need]].max()))

        # converged wanted pairs, in order, go to the locked set
        conv, keep = [], []
        count = 0
        for i, Y in _groups(vals, S, order):
            if count < need and est[i] < cfg.tol:
                conv.append(Y)
            elif count < need or count + Y.shape[1] <= max(need, mc // 2):
                keep.append(Y)
            else:
                break
            count += Y.shape[1]
        ncols = sum(Y.shape[1] for Y in conv)
        basis = Vc[:steps].T
        if conv or keep:
            Q, _ = np.linalg.qr(np.concatenate(conv + keep, axis=1))
        else:
            Q = np.zeros((steps, 0))
        for u in (basis @ Q[:, :ncols]).T:
            locked = _lock(locked, u, cfg.ortho)
        Qk = Q[:, ncols:]
        # keep strictly fewer columns than the next cycle can hold
        m_next = m
        if locked.shape[1] < k and not (iters >= cfg.max_iters or deadline.expired()):
            restarts.append((iters, m))
            if ctl is not None and history[-1] > 0:
                m_next = ctl.sample(history[-1])
        room = min(m_next, n - locked.shape[1]) - 1
        if Qk.shape[1] > room:
            Qk = Qk[:, :max(room, 0)]
        pending = basis @ Qk[:, :need]
        if locked.shape[1] >= k or iters >= cfg.max_iters or deadline.expired():
            break
        if room < 0:
            raise BreakdownError(f"Krylov space exhausted with {locked.shape[1]} of {k} eigenpairs")

        kept = Qk.shape[1]
        V = np.zeros((kept + 1, n))
        H = np.zeros((kept + 1, kept))
        V[:kept] = (basis @ Qk).T
        H[:kept, :kept] = Qk.T @ Hc[:steps, :steps] @ Qk
        if breakdown or beta == 0.0:
            start = _random_start(rng, n, np.concatenate([locked, V[:kept].T], axis=1), cfg.ortho)
            if start is None:
                raise BreakdownError(f"Krylov space exhausted with {locked.shape[1]} of {k} eigenpairs")
            V[kept] = start
        else:
            V[kept] = Vc[steps]
            H[kept, :kept] = beta * Qk[steps - 1]
        V, H = _reorthonormalize(V, H, locked)
        m = m_next

    converged = locked.shape[1] >= k
    basis = locked
    if not converged:
        for u in pending.T:
            if basis.shape[1] >= k:
                break
            basis = _lock(basis, u, cfg.ortho)
    vals, vecs = _rayleigh_ritz(op, basis, symmetric)
    keep = _order(vals, k)
    vals, vecs = vals[keep], vecs[:, keep]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    residuals = np.array([true_residual_eigen(matrix, lam, vecs[:, j])
                          for j, lam in enumerate(vals)])
    if np.iscomplexobj(vals) and not np.any(vals.imag):
        vals, vecs = vals.real, vecs.real
    return EigenResult(
        eigenvalues=vals,
        eigenvectors=vecs,
        residuals=residuals,
        converged=converged,
        iterations=iters,
        restarts=restarts,
        elapsed=deadline.elapsed(),
        workspace_bytes=workspace_model(solver, n, peak_m),
        fault_convergence=bool(converged and residuals.max(initial=0.0) > cfg.tol),
        residual_history=history,
        msize_trajectory=list(ctl.trajectory) if ctl else [m],
        timed_out=not converged and deadline.expired(),
    )


def _reorthonormalize(V, H, locked):
    """Restore orthonormality of a carried-over factorization.

    Rounding in the Gram-Schmidt passes compounds when Ritz vectors are
    carried from cycle to cycle, so the kept rows of ``V`` are made
    orthogonal to ``locked`` and to each other by a Householder QR, with
    ``H`` transformed so that ``A V[:-1].T = V.T H`` still holds.
    """
    W = V.T
    for _ in range(2):
        W = W - locked @ (locked.T @ W)
    W, R = np.linalg.qr(W)
    kept = H.shape[1]
    if kept:
        H = np.linalg.solve(R[:kept, :kept].T, (R @ H).T).T
    return W.T, H


def _rayleigh_ritz(op, basis, symmetric):
    AB = np.column_stack([op(basis[:, j]) for j in range(basis.shape[1])])
    G = basis.T @ AB
    if symmetric:
        vals, Z = np.linalg.eigh((G + G.T) / 2)
    else:
        vals, Z = np.linalg.eig(G)
    return vals, basis @ Z


def lanczos_restarted(matrix: SymCsrMatrix, k: int, cfg: KrylovConfig | None = None) -> EigenResult:
    """``k`` largest-magnitude eigenpairs of a symmetric matrix.

    ``cfg.tol`` bounds the absolute residual ``||A v - lam v||`` of every pair;
    ``cfg.x0``, when given, is the first Krylov vector (otherwise a random
    vector drawn from ``cfg.seed``).
    """
    if not isinstance(matrix, SymCsrMatrix):
        raise TypeError("lanczos_restarted takes a SymCsrMatrix")
    return _restarted(matrix, k, cfg or KrylovConfig(), symmetric=True)


def arnoldi_restarted(matrix: CsrMatrix, k: int, cfg: KrylovConfig | None = None) -> EigenResult:
    """``k`` largest-magnitude eigenpairs of a general matrix.

    Complex Ritz values come out as conjugate pairs with complex unit
    eigenvectors; a converged pair is locked as the two real vectors spanning
    its invariant subspace.
    """
    if not isinstance(matrix, (CsrMatrix, SymCsrMatrix)):
        raise TypeError("arnoldi_restarted takes a CsrMatrix")
    return _restarted(matrix, k, cfg or KrylovConfig(), symmetric=False)
