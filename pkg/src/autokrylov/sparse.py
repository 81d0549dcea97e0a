"""Compressed-row sparse storage, Matrix Market I/O and SpMV execution plans.

Every array is 0-based internally; Matrix Market's 1-based coordinates are
converted at the file boundary.  All containers are immutable after
construction and may be shared read-only between worker threads.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "CsrMatrix",
    "SymCsrMatrix",
    "MatrixMarketError",
    "load_matrix_market",
    "write_matrix_market",
    "expand_symmetric",
    "from_coo",
    "PartitionScheme",
    "RowPartition",
    "build_row_partition",
    "ReductionRegions",
    "build_reduction_regions",
    "BssPlan",
    "build_bss_plan",
]

INDEX_DTYPE = np.int64


class MatrixMarketError(ValueError):
    """Raised for malformed or unsupported Matrix Market input."""


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class _CompressedRows:
    """Shared CRS container; see :class:`CsrMatrix` and :class:`SymCsrMatrix`."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", _frozen(self.row_ptr, INDEX_DTYPE))
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, INDEX_DTYPE))
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        self._validate()

    def _validate(self):
        n, rp, ci = self.n, self.row_ptr, self.col_idx
        if n < 0 or rp.shape != (n + 1,):
            raise ValueError(f"row_ptr must have length n+1={n + 1}, got {rp.shape}")
        if rp[0] != 0 or rp[-1] != len(ci):
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if len(self.values) != len(ci):
            raise ValueError("values and col_idx lengths differ")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if len(ci) and (ci.min() < 0 or ci.max() >= n):
            raise ValueError("column index out of range")
        # strictly increasing within rows: a non-increase is only allowed at row starts
        if len(ci) > 1:
            bad = np.flatnonzero(np.diff(ci) <= 0) + 1
            if len(bad):
                starts = np.zeros(len(ci), dtype=bool)
                starts[rp[:-1][np.diff(rp) > 0]] = True
                if not np.all(starts[bad]):
                    raise ValueError("column indices must be strictly increasing within rows")

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def nbytes(self) -> int:
        return self.row_ptr.nbytes + self.col_idx.nbytes + self.values.nbytes

    @cached_property
    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    @cached_property
    def row_of(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n, dtype=INDEX_DTYPE), self.row_nnz)

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.row_of, self.col_idx] = self.values
        return a


@dataclass(frozen=True, eq=False)
class CsrMatrix(_CompressedRows):
    """Square matrix in compressed row storage.

    Columns are sorted strictly increasing inside each row; empty rows are
    allowed.  Invariants are checked on construction.
    """

    def transpose(self) -> "CsrMatrix":
        return from_coo(self.n, self.col_idx, self.row_of, self.values)

    def is_numerically_symmetric(self) -> bool:
        t = self.transpose()
        return (np.array_equal(t.row_ptr, self.row_ptr)
                and np.array_equal(t.col_idx, self.col_idx)
                and np.array_equal(t.values, self.values))

    def upper(self) -> "SymCsrMatrix":
        """Diagonal plus strictly-upper part as symmetric storage (no symmetry check)."""
        keep = self.col_idx >= self.row_of
        return SymCsrMatrix._from_coo(self.n, self.row_of[keep], self.col_idx[keep],
                                      self.values[keep])

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return from_coo(a.shape[0], r, c, a[r, c])


@dataclass(frozen=True, eq=False)
class SymCsrMatrix(_CompressedRows):
    """Symmetric matrix storing only the diagonal and strictly-upper triangle.

    Represents ``U + U.T - diag(U)`` where ``U`` is the stored part.
    """

    def _validate(self):
        super()._validate()
        if np.any(self.col_idx < self.row_of):
            raise ValueError("symmetric storage holds only entries with col >= row")

    @cached_property
    def nnz_full(self) -> int:
        """Nonzero count of the expanded matrix."""
        diag = int(np.count_nonzero(self.col_idx == self.row_of))
        return 2 * self.nnz - diag

    def to_dense(self) -> np.ndarray:
        u = super().to_dense()
        return u + u.T - np.diag(np.diag(u))

    @classmethod
    def _from_coo(cls, n, rows, cols, vals) -> "SymCsrMatrix":
        full = from_coo(n, rows, cols, vals)
        return cls(n, full.row_ptr, full.col_idx, full.values)

    @classmethod
    def from_dense(cls, a) -> "SymCsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        if not np.array_equal(a, a.T):
            raise ValueError("matrix is not symmetric")
        return CsrMatrix.from_dense(np.triu(a)).upper()


def from_coo(n, rows, cols, vals, sum_duplicates=True) -> CsrMatrix:
    """Build a CsrMatrix from 0-based coordinates; duplicates are summed."""
    rows = np.asarray(rows, dtype=INDEX_DTYPE)
    cols = np.asarray(cols, dtype=INDEX_DTYPE)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows) and sum_duplicates:
        new = np.ones(len(rows), dtype=bool)
        new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
    counts = np.bincount(rows, minlength=n) if len(rows) else np.zeros(n, dtype=INDEX_DTYPE)
    row_ptr = np.zeros(n + 1, dtype=INDEX_DTYPE)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrMatrix(n, row_ptr, cols, vals)


def expand_symmetric(matrix: SymCsrMatrix) -> CsrMatrix:
    """Full CRS of ``U + U.T - diag(U)`` with exact value copies."""
    rows, cols = matrix.row_of, matrix.col_idx
    off = cols != rows
    return from_coo(
        matrix.n,
        np.concatenate([rows, cols[off]]),
        np.concatenate([cols, rows[off]]),
        np.concatenate([matrix.values, matrix.values[off]]),
        sum_duplicates=False,
    )


# ---------------------------------------------------------------- Matrix Market

def load_matrix_market(path: str | os.PathLike, want_symmetric: bool = False) -> CsrMatrix:
    """Read a real coordinate Matrix Market file.

    Parameters
    ----------
    path : path-like
        ``%%MatrixMarket matrix coordinate real {general|symmetric}`` file.
    want_symmetric : bool
        Return a :class:`SymCsrMatrix` (upper triangle).  A ``general`` file is
        accepted only if it is numerically symmetric.

    Returns
    -------
    CsrMatrix or SymCsrMatrix
        A ``symmetric`` file read with ``want_symmetric=False`` is expanded.
    """
    try:
        with open(path, "r") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise MatrixMarketError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise MatrixMarketError("empty file")
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixMarketError(f"malformed header: {lines[0]!r}")
    obj, fmt, field_, sym = (h.lower() for h in header[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError("only 'matrix coordinate' files are supported")
    if field_ != "real":
        raise MatrixMarketError(f"unsupported field type {field_!r} (only real)")
    if sym not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry {sym!r}")

    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketError("missing size line")
    try:
        nrows, ncols, nnz = (int(t) for t in body[0].split())
    except ValueError:
        raise MatrixMarketError(f"malformed size line: {body[0]!r}") from None
    if nrows != ncols:
        raise MatrixMarketError("only square matrices are supported")
    entries = body[1:]
    if len(entries) != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {len(entries)}")
    if nnz:
        try:
            data = np.array([ln.split() for ln in entries], dtype=np.float64)
        except ValueError:
            raise MatrixMarketError("malformed entry line") from None
        if data.ndim != 2 or data.shape[1] != 3:
            raise MatrixMarketError("entries must be 'row col value' triples")
        i = data[:, 0].astype(INDEX_DTYPE) - 1
        j = data[:, 1].astype(INDEX_DTYPE) - 1
        v = data[:, 2]
        if np.any(data[:, :2] != np.floor(data[:, :2])):
            raise MatrixMarketError("non-integer index")
    else:
        i = j = np.zeros(0, dtype=INDEX_DTYPE)
        v = np.zeros(0)
    bad = (i < 0) | (i >= nrows) | (j < 0) | (j >= ncols)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise MatrixMarketError(f"entry ({i[k] + 1},{j[k] + 1}) out of range for {nrows}x{ncols}")

    if sym == "symmetric":
        # the standard lists the lower triangle; tolerate writers that emit the upper one
        upper = SymCsrMatrix._from_coo(nrows, np.minimum(i, j), np.maximum(i, j), v)
        return upper if want_symmetric else expand_symmetric(upper)
    full = from_coo(nrows, i, j, v)
    if want_symmetric:
        if not full.is_numerically_symmetric():
            raise MatrixMarketError("general matrix is not symmetric")
        return full.upper()
    return full


def write_matrix_market(path: str | os.PathLike, matrix: CsrMatrix, comment: str | None = None):
    """Write ``matrix`` so that :func:`load_matrix_market` reproduces it bitwise."""
    symmetric = isinstance(matrix, SymCsrMatrix)
    if symmetric:
        # stored upper (i<=j) becomes MM lower (row>=col)
        rows, cols = matrix.col_idx, matrix.row_of
        order = np.lexsort((rows, cols))
        rows, cols = rows[order], cols[order]
        vals = matrix.values[order]
    else:
        rows, cols, vals = matrix.row_of, matrix.col_idx, matrix.values
    with open(path, "w") as f:
        f.write(f"%%MatrixMarket matrix coordinate real {'symmetric' if symmetric else 'general'}\n")
        if comment:
            for line in comment.splitlines():
                f.write(f"% {line}\n")
        f.write(f"{matrix.n} {matrix.n} {len(vals)}\n")
        for r, c, x in zip(rows + 1, cols + 1, vals):
            f.write(f"{r} {c} {float(x)!r}\n")


# --------------------------------------------------------------- execution plans

class PartitionScheme(enum.Enum):
    ROW_BASED = "row"
    NNZ_BALANCED = "nnz"


@dataclass(frozen=True, eq=False)
class RowPartition:
    num_workers: int
    boundaries: np.ndarray
    scheme: PartitionScheme

    def rows(self, p: int) -> range:
        return range(int(self.boundaries[p]), int(self.boundaries[p + 1]))

    def loads(self, row_ptr) -> np.ndarray:
        """Nonzero count per worker."""
        return np.diff(np.asarray(row_ptr)[self.boundaries])


def build_row_partition(row_ptr, num_workers: int,
                        scheme: PartitionScheme = PartitionScheme.NNZ_BALANCED) -> RowPartition:
    """Split rows into ``num_workers`` contiguous ranges.

    ``ROW_BASED`` gives near-equal row counts.  ``NNZ_BALANCED`` places worker
    ``p``'s first row at the smallest ``r`` with ``row_ptr[r] >= p*nnz/P``,
    which bounds every worker load by ``ceil(nnz/P) + max_row_nnz``.
    """
    if num_workers < 1:
        raise ValueError("num_workers must be >= 1")
    row_ptr = np.asarray(row_ptr, dtype=INDEX_DTYPE)
    n = len(row_ptr) - 1
    nnz = int(row_ptr[-1])
    P = num_workers
    p = np.arange(P + 1, dtype=INDEX_DTYPE)
    if scheme is PartitionScheme.ROW_BASED:
        bounds = p * n // P
    else:
        # integer form of row_ptr[r] >= p*nnz/P
        bounds = np.searchsorted(row_ptr * P, p * nnz, side="left").astype(INDEX_DTYPE)
        bounds[-1] = n
    return RowPartition(P, _frozen(bounds, INDEX_DTYPE), scheme)


@dataclass(frozen=True, eq=False)
class ReductionRegions:
    """Per-worker ``[lo, hi)`` windows of the transpose-scatter targets."""

    num_workers: int
    region_lo: np.ndarray
    region_hi: np.ndarray

    @property
    def total_work(self) -> int:
        return int(np.sum(self.region_hi - self.region_lo))


def build_reduction_regions(matrix: SymCsrMatrix, partition: RowPartition) -> ReductionRegions:
    if partition.boundaries[-1] != matrix.n:
        raise ValueError("partition does not match matrix dimension")
    P = partition.num_workers
    lo = np.zeros(P, dtype=INDEX_DTYPE)
    hi = np.zeros(P, dtype=INDEX_DTYPE)
    rp, ci = matrix.row_ptr, matrix.col_idx
    strict = ci > matrix.row_of
    for p in range(P):
        a, b = rp[partition.boundaries[p]], rp[partition.boundaries[p + 1]]
        targets = ci[a:b][strict[a:b]]
        if len(targets):
            lo[p], hi[p] = targets.min(), targets.max() + 1
    return ReductionRegions(P, _frozen(lo, INDEX_DTYPE), _frozen(hi, INDEX_DTYPE))


@dataclass(frozen=True, eq=False)
class BssPlan:
    """Branchless segmented-scan plan.

    The nonzero array is cut into ``jl`` contiguous chunks (one per lane) and
    every chunk is further cut at row boundaries into slices.  Slice ``s``
    covers ``values[slice_start[s]:slice_start[s]+slice_len[s]]`` and its sum
    belongs to row ``carry_map[s]``.  Lane ``l`` owns slices
    ``lane_ptr[l]:lane_ptr[l+1]`` in processing order.
    """

    jl: int
    slice_start: np.ndarray
    slice_len: np.ndarray
    carry_map: np.ndarray
    lane_ptr: np.ndarray
    chunk_bounds: np.ndarray
    seg_end: np.ndarray = field(repr=False)  # 1 where an entry closes its row (U4 flags)

    @property
    def num_slices(self) -> int:
        return len(self.slice_start)

    @property
    def slices(self) -> list[tuple[int, int, int]]:
        return list(zip(self.carry_map.tolist(), self.slice_start.tolist(), self.slice_len.tolist()))


def build_bss_plan(matrix: CsrMatrix, jl: int) -> BssPlan:
    if jl < 1:
        raise ValueError("jl must be >= 1")
    nnz = matrix.nnz
    if nnz == 0:
        raise ValueError("cannot build a segmented-scan plan for an empty matrix")
    jl = min(jl, nnz)
    rp = matrix.row_ptr
    chunk_bounds = np.arange(jl + 1, dtype=INDEX_DTYPE) * nnz // jl
    cuts = np.union1d(chunk_bounds, rp)
    starts = cuts[:-1]
    lens = np.diff(cuts)
    rows = np.searchsorted(rp, starts, side="right") - 1
    lane_ptr = np.searchsorted(starts, chunk_bounds, side="left")
    seg_end = np.zeros(nnz, dtype=np.uint8)
    ends = rp[1:][matrix.row_nnz > 0] - 1
    seg_end[ends] = 1
    return BssPlan(
        jl=jl,
        slice_start=_frozen(starts, INDEX_DTYPE),
        slice_len=_frozen(lens, INDEX_DTYPE),
        carry_map=_frozen(rows, INDEX_DTYPE),
        lane_ptr=_frozen(lane_ptr, INDEX_DTYPE),
        chunk_bounds=_frozen(chunk_bounds, INDEX_DTYPE),
        seg_end=_frozen(seg_end, np.uint8),
    )
