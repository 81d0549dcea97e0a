"""Desk-scale test matrices standing in for a sparse matrix collection."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .sparse import CsrMatrix, SymCsrMatrix, from_coo

KINDS = ("poisson2d", "laplacian1d", "diag", "skewed_rows", "convdiff2d", "banded", "stiff_diag")


def laplacian1d(n: int) -> SymCsrMatrix:
    """tridiag(-1, 2, -1) in upper storage."""
    if n < 2:
        raise ValueError("laplacian1d needs n >= 2")
    i = np.arange(n)
    rows = np.concatenate([i, i[:-1]])
    cols = np.concatenate([i, i[:-1] + 1])
    vals = np.concatenate([np.full(n, 2.0), np.full(n - 1, -1.0)])
    return SymCsrMatrix._from_coo(n, rows, cols, vals)


def poisson2d(grid: int) -> SymCsrMatrix:
    """5-point Laplacian on a ``grid x grid`` interior mesh, upper storage."""
    if grid < 2:
        raise ValueError("poisson2d needs grid >= 2")
    n = grid * grid
    idx = np.arange(n)
    ix = idx % grid
    rows = [idx]
    cols = [idx]
    vals = [np.full(n, 4.0)]
    east = idx[ix < grid - 1]
    rows.append(east)
    cols.append(east + 1)
    vals.append(np.full(len(east), -1.0))
    north = idx[idx + grid < n]
    rows.append(north)
    cols.append(north + grid)
    vals.append(np.full(len(north), -1.0))
    return SymCsrMatrix._from_coo(n, np.concatenate(rows), np.concatenate(cols),
                                  np.concatenate(vals))


def convdiff2d(grid: int, peclet: float = 0.5) -> CsrMatrix:
    """Unsymmetric upwind convection-diffusion on a ``grid x grid`` mesh."""
    if grid < 2:
        raise ValueError("convdiff2d needs grid >= 2")
    n = grid * grid
    idx = np.arange(n)
    ix, iy = idx % grid, idx // grid
    rows, cols, vals = [idx], [idx], [np.full(n, 4.0 + peclet)]
    for mask, off, v in (
        (ix > 0, -1, -1.0 - peclet),
        (ix < grid - 1, 1, -1.0),
        (iy > 0, -grid, -1.0),
        (iy < grid - 1, grid, -1.0),
    ):
        r = idx[mask]
        rows.append(r)
        cols.append(r + off)
        vals.append(np.full(len(r), v))
    return from_coo(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def diag(values) -> CsrMatrix:
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    return CsrMatrix(n, np.arange(n + 1), np.arange(n), values)


def banded(n: int, bandwidth: int = 3) -> SymCsrMatrix:
    """Symmetric diagonally dominant band matrix, upper storage."""
    if n < 2 or bandwidth < 0:
        raise ValueError("banded needs n >= 2 and bandwidth >= 0")
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, 2.0 * bandwidth + 1.0)]
    for d in range(1, bandwidth + 1):
        r = np.arange(n - d)
        rows.append(r)
        cols.append(r + d)
        vals.append(np.full(n - d, -1.0))
    return SymCsrMatrix._from_coo(n, np.concatenate(rows), np.concatenate(cols),
                                  np.concatenate(vals))


def skewed_rows(n: int, seed: int = 0, extra: float = 0.25) -> CsrMatrix:
    """Diagonally dominant matrix whose dense first row holds about 45% of all nonzeros.

    Row 0 is full; every other row holds its diagonal plus, with probability
    ``extra``, one random off-diagonal entry.  A square matrix cannot put
    more than ``n`` entries in one row, so sparse remaining rows are what make
    the single row dominate the total.
    """
    if n < 4:
        raise ValueError("skewed_rows needs n >= 4")
    if not 0.0 <= extra <= 1.0:
        raise ValueError("extra must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    others = np.arange(1, n)
    picked = others[rng.random(n - 1) < extra]
    off = rng.integers(0, n - 1, len(picked))
    off[off >= picked] += 1
    rows = np.concatenate([np.zeros(n, dtype=np.int64), others, picked])
    cols = np.concatenate([np.arange(n), others, off])
    vals = rng.uniform(-1.0, 0.0, len(rows))
    A = from_coo(n, rows, cols, vals)
    # make the diagonal dominate each row
    is_diag = A.col_idx == A.row_of
    absoff = np.bincount(A.row_of[~is_diag], np.abs(A.values[~is_diag]), minlength=n)
    values = A.values.copy()
    values[is_diag] = absoff[A.row_of[is_diag]] + 1.0
    return CsrMatrix(n, A.row_ptr, A.col_idx, values)


def stiff_diag(n: int = 64, tiny: float = 2.0**-40) -> CsrMatrix:
    """Diagonal with half its entries 1 and half ``tiny``.

    Unpreconditioned GMRES with ``b = ones`` breaks down exactly after two
    steps with a zero recurrence residual, while the computed solution
    carries a true residual near ``1e-5``: a reproducible fault convergence.
    """
    if n < 2:
        raise ValueError("stiff_diag needs n >= 2")
    return diag(np.where(np.arange(n) < n // 2, 1.0, tiny))


class SuiteProblem(NamedTuple):
    name: str
    matrix: CsrMatrix
    b: np.ndarray
    settings: str  # policy keywords applied on top of the policy under test


def policy_suite(seed: int = 0) -> list[SuiteProblem]:
    """Ten small linear problems for comparing policies.

    Mixes symmetric and unsymmetric, well and badly conditioned, regular
    and skewed matrices, plus one fault-convergence case.  Every problem
    uses ``b = ones``.
    """
    rng = np.random.default_rng(seed)
    dominant = from_coo(
        150, rng.integers(0, 150, 1500), rng.integers(0, 150, 1500), rng.standard_normal(1500))
    dominant = from_coo(
        150, np.concatenate([dominant.row_of, np.arange(150)]),
        np.concatenate([dominant.col_idx, np.arange(150)]),
        np.concatenate([dominant.values, np.full(150, 12.0)]))
    problems = [
        ("poisson16", poisson2d(16), ""),
        ("poisson24", poisson2d(24), ""),
        ("laplacian200", laplacian1d(200), ""),
        ("banded400", banded(400, 4), ""),
        ("convdiff16", convdiff2d(16), ""),
        ("convdiff20_pe2", convdiff2d(20, peclet=2.0), ""),
        ("skewed300", skewed_rows(300, seed=seed), ""),
        ("diag200", diag(np.linspace(1.0, 100.0, 200)), "PRECONDITIONER = NONE"),
        ("random150", dominant, "PRECONDITIONER = NONE"),
        ("stiff_diag64", stiff_diag(64), "PRECONDITIONER = NONE"),
    ]
    return [SuiteProblem(name, m, np.ones(m.n), settings) for name, m, settings in problems]
