"""Gram-Schmidt orthogonalization of one vector against an orthonormal basis."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

BREAKDOWN_RTOL = 1e-14


class OrthoKind(enum.Enum):
    CGS = "cgs"
    MGS = "mgs"
    DGKS = "dgks"
    BCGS = "bcgs"


@dataclass(frozen=True)
class OrthoVariant:
    kind: OrthoKind = OrthoKind.MGS
    block_len: int = 4

    def __post_init__(self):
        if self.block_len < 1:
            raise ValueError("block_len must be >= 1")

    @property
    def name(self) -> str:
        return self.kind.name

    @classmethod
    def parse(cls, text: str) -> "OrthoVariant":
        return cls(OrthoKind(text.lower()))


CGS = OrthoVariant(OrthoKind.CGS)
MGS = OrthoVariant(OrthoKind.MGS)
DGKS = OrthoVariant(OrthoKind.DGKS)
BCGS = OrthoVariant(OrthoKind.BCGS, 4)


def _classical(Q, w, h):
    c = Q.T @ w
    w -= Q @ c
    h += c


def orthogonalize(variant: OrthoVariant, Q: np.ndarray, v: np.ndarray):
    """Orthogonalize ``v`` against the columns of ``Q`` and normalize.

    Parameters
    ----------
    variant : OrthoVariant
        CGS (one classical pass), MGS (sequential projections), DGKS (two
        classical passes) or BCGS (classical inside blocks of ``block_len``
        columns, modified across blocks).
    Q : ndarray, shape (n, k)
        Orthonormal columns; ``k`` may be zero.
    v : ndarray, shape (n,)

    Returns
    -------
    q_new : ndarray or None
        Unit vector, or None on breakdown.
    h : ndarray, shape (k+1,)
        Projection coefficients followed by the norm of the remainder.
    breakdown : bool
        True when the remainder norm is at most ``1e-14 * ||v||``.
    """
    v = np.asarray(v, dtype=np.float64)
    n, k = Q.shape
    if v.shape != (n,):
        raise ValueError(f"vector of shape {v.shape} does not match basis with {n} rows")
    w = v.copy()
    h = np.zeros(k + 1)
    coef = h[:k]
    if k:
        kind = variant.kind
        if kind is OrthoKind.CGS:
            _classical(Q, w, coef)
        elif kind is OrthoKind.DGKS:
            _classical(Q, w, coef)
            _classical(Q, w, coef)
        elif kind is OrthoKind.MGS:
            for j in range(k):
                q = Q[:, j]
                c = q @ w
                w -= c * q
                coef[j] = c
        else:
            b = variant.block_len
            for j0 in range(0, k, b):
                _classical(Q[:, j0:j0 + b], w, coef[j0:j0 + b])
    vnorm = np.linalg.norm(v)
    h[k] = np.linalg.norm(w)
    if h[k] <= BREAKDOWN_RTOL * vnorm or h[k] == 0.0:
        return None, h, True
    return w / h[k], h, False


def bcgs_blocks(variant: OrthoVariant, k: int) -> list[range]:
    """Column blocks BCGS projects together for a basis of ``k`` columns."""
    b = variant.block_len
    return [range(j0, min(j0 + b, k)) for j0 in range(0, k, b)]
