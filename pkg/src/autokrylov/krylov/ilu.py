"""ILU(0): incomplete LU restricted to the sparsity pattern of A."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..sparse import CsrMatrix

_jit = numba.njit(nogil=True, cache=True)


class ZeroPivotError(ArithmeticError):
    def __init__(self, row: int, reason: str = "zero pivot"):
        super().__init__(f"{reason} at row {row}")
        self.row = row


@dataclass(frozen=True, eq=False)
class IluFactors:
    """L (unit lower, implicit diagonal) and U packed on A's pattern."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    diag_ptr: np.ndarray

    @property
    def nbytes(self) -> int:
        return self.values.nbytes + self.diag_ptr.nbytes


@_jit
def _find_diag(row_ptr, col_idx, diag_ptr):
    n = len(row_ptr) - 1
    for i in range(n):
        diag_ptr[i] = -1
        for k in range(row_ptr[i], row_ptr[i + 1]):
            if col_idx[k] == i:
                diag_ptr[i] = k
                break
        if diag_ptr[i] < 0:
            return i
    return -1


@_jit
def _factor(row_ptr, col_idx, lu, diag_ptr):
    n = len(row_ptr) - 1
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        r0 = row_ptr[i]
        r1 = row_ptr[i + 1]
        for kk in range(r0, r1):
            pos[col_idx[kk]] = kk
        for kk in range(r0, diag_ptr[i]):
            k = col_idx[kk]
            lu[kk] /= lu[diag_ptr[k]]
            lik = lu[kk]
            for jj in range(diag_ptr[k] + 1, row_ptr[k + 1]):
                p = pos[col_idx[jj]]
                if p >= 0:
                    lu[p] -= lik * lu[jj]
        for kk in range(r0, r1):
            pos[col_idx[kk]] = -1
        if lu[diag_ptr[i]] == 0.0:
            return i
    return -1


@_jit
def _solve(row_ptr, col_idx, lu, diag_ptr, r, z):
    n = len(row_ptr) - 1
    for i in range(n):
        acc = r[i]
        for k in range(row_ptr[i], diag_ptr[i]):
            acc -= lu[k] * z[col_idx[k]]
        z[i] = acc
    for i in range(n - 1, -1, -1):
        acc = z[i]
        for k in range(diag_ptr[i] + 1, row_ptr[i + 1]):
            acc -= lu[k] * z[col_idx[k]]
        z[i] = acc / lu[diag_ptr[i]]


def ilu0_factorize(matrix: CsrMatrix) -> IluFactors:
    """Row-wise (IKJ) ILU(0) with no fill outside the pattern of ``matrix``.

    Raises
    ------
    ZeroPivotError
        A diagonal entry is absent from the pattern or becomes zero.
    """
    diag_ptr = np.empty(matrix.n, dtype=np.int64)
    missing = _find_diag(matrix.row_ptr, matrix.col_idx, diag_ptr)
    if missing >= 0:
        raise ZeroPivotError(int(missing), "structurally zero diagonal")
    lu = matrix.values.copy()
    bad = _factor(matrix.row_ptr, matrix.col_idx, lu, diag_ptr)
    if bad >= 0:
        raise ZeroPivotError(int(bad))
    lu.flags.writeable = False
    diag_ptr.flags.writeable = False
    return IluFactors(matrix.n, matrix.row_ptr, matrix.col_idx, lu, diag_ptr)


def ilu0_apply(factors: IluFactors, r) -> np.ndarray:
    """Solve ``L U z = r`` by forward then backward substitution."""
    r = np.ascontiguousarray(r, dtype=np.float64)
    if r.shape != (factors.n,):
        raise ValueError(f"vector of shape {r.shape} does not match factors of order {factors.n}")
    z = np.empty_like(r)
    _solve(factors.row_ptr, factors.col_idx, factors.values, factors.diag_ptr, r, z)
    return z
