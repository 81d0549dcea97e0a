"""Thread-parallel SpMV kernels over CRS storage.

Seven variants share one contract: ``y = A @ x`` in double precision.

* symmetric (upper storage): S1 row blocks, S2 nnz-balanced blocks, S3 nnz-balanced
  blocks with the scratch reduction restricted to each worker's scatter region;
* unsymmetric: U1 row blocks, U2 nnz-balanced blocks, U3 branchless segmented
  scan, U4 flag-driven segmented scan.

Work is split over a :class:`WorkerPool`; every per-worker routine is a
``numba`` kernel compiled with ``nogil`` so the pool threads run concurrently.
Reduction order is fixed (worker index ascending), so a given
``(matrix, x, variant, P, jl)`` always produces the same bits.
"""
from __future__ import annotations

import enum
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .sparse import (
    BssPlan,
    CsrMatrix,
    PartitionScheme,
    ReductionRegions,
    RowPartition,
    SymCsrMatrix,
    build_bss_plan,
    build_reduction_regions,
    build_row_partition,
)

__all__ = [
    "Kernel",
    "KernelChoice",
    "WorkerPool",
    "spmv_ref",
    "spmv_unsym",
    "spmv_sym",
    "build_plan",
    "SpmvOperator",
    "KernelMismatch",
]

_jit = numba.njit(nogil=True, cache=True)


class KernelMismatch(ValueError):
    """Plan, variant or vector does not fit the matrix."""


class Kernel(enum.Enum):
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"
    U1 = "u1"
    U2 = "u2"
    U3 = "u3"
    U4 = "u4"

    @property
    def symmetric(self) -> bool:
        return self.value.startswith("s")

    @property
    def ordinal(self) -> int:
        return int(self.value[1])

    @property
    def uses_bss(self) -> bool:
        return self in (Kernel.U3, Kernel.U4)


@dataclass(frozen=True)
class KernelChoice:
    """A kernel variant plus its segment-lane count (U3/U4 only)."""

    kernel: Kernel
    jl: int | None = None

    def __post_init__(self):
        if self.kernel.uses_bss and (self.jl is None or self.jl < 1):
            raise ValueError(f"{self.kernel.name} needs jl >= 1")
        if not self.kernel.uses_bss and self.jl is not None:
            raise ValueError(f"{self.kernel.name} takes no jl")

    @property
    def label(self) -> str:
        return self.kernel.value if self.jl is None else f"{self.kernel.value}/jl={self.jl}"

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.kernel.ordinal, self.jl or 0)


class WorkerPool:
    """``size`` logical workers backed by a thread pool, plus per-worker scratch.

    A kernel call holds the pool lock for its whole duration, so scratch
    buffers are never shared between concurrent calls.
    """

    def __init__(self, size: int = 1):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self.size = size
        self._executor = ThreadPoolExecutor(max_workers=size) if size > 1 else None
        self._scratch = np.zeros((size, 0))
        self.lock = threading.Lock()

    def scratch(self, n: int) -> np.ndarray:
        if self._scratch.shape[1] != n:
            self._scratch = np.zeros((self.size, n))
        return self._scratch

    def run(self, fn, count: int | None = None):
        """Call ``fn(p)`` for every worker ``p`` and wait for all of them."""
        count = self.size if count is None else count
        if self._executor is None or count == 1:
            for p in range(count):
                fn(p)
            return
        for fut in [self._executor.submit(fn, p) for p in range(count)]:
            fut.result()

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __repr__(self):
        return f"WorkerPool(size={self.size})"


# ----------------------------------------------------------------- jit kernels

@_jit
def _csr_rows(row_ptr, col_idx, values, x, y, r0, r1):
    for i in range(r0, r1):
        acc = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            acc += values[k] * x[col_idx[k]]
        y[i] = acc


@_jit
def _sym_rows(row_ptr, col_idx, values, x, y, scratch, r0, r1, zlo, zhi):
    for j in range(zlo, zhi):
        scratch[j] = 0.0
    for i in range(r0, r1):
        k0 = row_ptr[i]
        k1 = row_ptr[i + 1]
        acc = 0.0
        if k0 < k1 and col_idx[k0] == i:
            acc = values[k0] * x[i]
            k0 += 1
        xi = x[i]
        for k in range(k0, k1):
            j = col_idx[k]
            acc += values[k] * x[j]
            scratch[j] += values[k] * xi
        y[i] = acc


@_jit
def _reduce_scratch(y, scratch, lo, hi, j0, j1):
    # fixed order: worker index ascending for every target index
    for p in range(scratch.shape[0]):
        a = max(lo[p], j0)
        b = min(hi[p], j1)
        for j in range(a, b):
            y[j] += scratch[p, j]


@_jit
def _bss_lanes(values, col_idx, x, y, slice_start, slice_len, carry_map, lane_ptr,
               carry_first, carry_last, l0, l1):
    for lane in range(l0, l1):
        s0 = lane_ptr[lane]
        s1 = lane_ptr[lane + 1]
        # first slice of the lane may continue a row begun by the previous lane
        acc = 0.0
        for k in range(slice_start[s0], slice_start[s0] + slice_len[s0]):
            acc += values[k] * x[col_idx[k]]
        carry_first[lane] = acc
        # interior slices own their rows outright
        for s in range(s0 + 1, s1 - 1):
            acc = 0.0
            for k in range(slice_start[s], slice_start[s] + slice_len[s]):
                acc += values[k] * x[col_idx[k]]
            y[carry_map[s]] = acc
        # last slice may continue into the next lane
        acc = 0.0
        for k in range(slice_start[s1 - 1], slice_start[s1 - 1] + slice_len[s1 - 1]):
            acc += values[k] * x[col_idx[k]]
        carry_last[lane] = acc


@_jit
def _ss_lanes(values, col_idx, x, y, seg_end, chunk_bounds, carry_map, lane_ptr,
              carry_first, carry_last, l0, l1):
    for lane in range(l0, l1):
        s = lane_ptr[lane]
        last = lane_ptr[lane + 1] - 1
        k_end = chunk_bounds[lane + 1]
        acc = 0.0
        for k in range(chunk_bounds[lane], k_end):
            acc += values[k] * x[col_idx[k]]
            if seg_end[k] == 1 or k == k_end - 1:
                if s == lane_ptr[lane]:
                    carry_first[lane] = acc
                elif s == last:
                    carry_last[lane] = acc
                else:
                    y[carry_map[s]] = acc
                s += 1
                acc = 0.0


@_jit
def _bss_fixup(y, carry_map, lane_ptr, carry_first, carry_last, jl):
    for lane in range(jl):
        s0 = lane_ptr[lane]
        s1 = lane_ptr[lane + 1]
        y[carry_map[s0]] += carry_first[lane]
        if s1 - s0 > 1:
            y[carry_map[s1 - 1]] += carry_last[lane]


# --------------------------------------------------------------------- drivers

def _check_vector(matrix, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (matrix.n,):
        raise KernelMismatch(f"x has shape {x.shape}, expected ({matrix.n},)")
    return x


def spmv_ref(matrix: CsrMatrix, x) -> np.ndarray:
    """Sequential oracle: row sums accumulated left to right."""
    if not isinstance(matrix, CsrMatrix):
        raise TypeError("spmv_ref takes a CsrMatrix; expand symmetric storage first")
    x = _check_vector(matrix, x)
    y = np.empty(matrix.n)
    _csr_rows(matrix.row_ptr, matrix.col_idx, matrix.values, x, y, 0, matrix.n)
    return y


def _blocks(total: int, parts: int) -> np.ndarray:
    return np.arange(parts + 1) * total // parts


def spmv_unsym(choice: KernelChoice, matrix: CsrMatrix, plan, x, pool: WorkerPool,
               out: np.ndarray | None = None) -> np.ndarray:
    """Unsymmetric SpMV with variant U1..U4.

    ``plan`` is a :class:`RowPartition` (U1 row-based, U2 nnz-balanced) or a
    :class:`BssPlan` with matching ``jl`` (U3, U4).
    """
    k = choice.kernel
    if k.symmetric or not isinstance(matrix, CsrMatrix):
        raise KernelMismatch(f"{k.name} is not an unsymmetric kernel for {type(matrix).__name__}")
    x = _check_vector(matrix, x)
    rp, ci, va = matrix.row_ptr, matrix.col_idx, matrix.values
    if k in (Kernel.U1, Kernel.U2):
        want = PartitionScheme.ROW_BASED if k is Kernel.U1 else PartitionScheme.NNZ_BALANCED
        if not isinstance(plan, RowPartition) or plan.scheme is not want:
            raise KernelMismatch(f"{k.name} needs a {want.name} RowPartition")
        if plan.boundaries[-1] != matrix.n or plan.num_workers != pool.size:
            raise KernelMismatch("partition does not match matrix or pool")
        y = np.empty(matrix.n) if out is None else out
        b = plan.boundaries
        with pool.lock:
            pool.run(lambda p: _csr_rows(rp, ci, va, x, y, b[p], b[p + 1]))
        return y

    if not isinstance(plan, BssPlan) or plan.jl != min(choice.jl, matrix.nnz):
        raise KernelMismatch(f"{k.name} needs a BssPlan with jl={choice.jl}")
    if plan.chunk_bounds[-1] != matrix.nnz:
        raise KernelMismatch("segmented-scan plan does not match matrix")
    y = np.zeros(matrix.n) if out is None else out
    if out is not None:
        y[:] = 0.0
    jl = plan.jl
    carry_first = np.empty(jl)
    carry_last = np.empty(jl)
    workers = min(pool.size, jl)
    lanes = _blocks(jl, workers)
    if k is Kernel.U3:
        def work(p):
            _bss_lanes(va, ci, x, y, plan.slice_start, plan.slice_len, plan.carry_map,
                       plan.lane_ptr, carry_first, carry_last, lanes[p], lanes[p + 1])
    else:
        def work(p):
            _ss_lanes(va, ci, x, y, plan.seg_end, plan.chunk_bounds, plan.carry_map,
                      plan.lane_ptr, carry_first, carry_last, lanes[p], lanes[p + 1])
    with pool.lock:
        pool.run(work, workers)
        _bss_fixup(y, plan.carry_map, plan.lane_ptr, carry_first, carry_last, jl)
    return y


def spmv_sym(choice: KernelChoice, matrix: SymCsrMatrix, partition: RowPartition,
             regions: ReductionRegions | None, x, pool: WorkerPool,
             out: np.ndarray | None = None) -> np.ndarray:
    """Symmetric SpMV from upper storage with variant S1..S3.

    Row products go straight to ``y``; transpose products go to the worker's
    private scratch vector, which is then reduced into ``y`` over the full range
    (S1, S2) or over the worker's precomputed region only (S3).
    """
    k = choice.kernel
    if not k.symmetric or not isinstance(matrix, SymCsrMatrix):
        raise KernelMismatch(f"{k.name} is not a symmetric kernel for {type(matrix).__name__}")
    x = _check_vector(matrix, x)
    want = PartitionScheme.ROW_BASED if k is Kernel.S1 else PartitionScheme.NNZ_BALANCED
    if partition.scheme is not want:
        raise KernelMismatch(f"{k.name} needs a {want.name} RowPartition")
    if partition.boundaries[-1] != matrix.n or partition.num_workers != pool.size:
        raise KernelMismatch("partition does not match matrix or pool")
    n, P = matrix.n, pool.size
    if k is Kernel.S3:
        if regions is None:
            raise KernelMismatch("S3 requires reduction regions")
        if regions.num_workers != P:
            raise KernelMismatch("regions do not match pool")
        lo, hi = regions.region_lo, regions.region_hi
    else:
        lo = np.zeros(P, dtype=np.int64)
        hi = np.full(P, n, dtype=np.int64)
    y = np.empty(n) if out is None else out
    b = partition.boundaries
    rp, ci, va = matrix.row_ptr, matrix.col_idx, matrix.values
    idx = _blocks(n, P)
    with pool.lock:
        scratch = pool.scratch(n)
        pool.run(lambda p: _sym_rows(rp, ci, va, x, y, scratch[p], b[p], b[p + 1], lo[p], hi[p]))
        pool.run(lambda q: _reduce_scratch(y, scratch, lo, hi, idx[q], idx[q + 1]))
    return y


def reduction_work(choice: KernelChoice, n: int, num_workers: int,
                   regions: ReductionRegions | None = None) -> int:
    """Scratch entries touched by the cross-worker reduction of a symmetric kernel."""
    if choice.kernel is Kernel.S3:
        return regions.total_work
    return num_workers * n


def build_plan(choice: KernelChoice, matrix, num_workers: int):
    """Execution plan for ``choice``: a partition, a (partition, regions) pair, or a BssPlan."""
    k = choice.kernel
    if k.uses_bss:
        return build_bss_plan(matrix, choice.jl)
    scheme = PartitionScheme.ROW_BASED if k in (Kernel.U1, Kernel.S1) else PartitionScheme.NNZ_BALANCED
    part = build_row_partition(matrix.row_ptr, num_workers, scheme)
    if k.symmetric:
        regions = build_reduction_regions(matrix, part) if k is Kernel.S3 else None
        return (part, regions)
    return part


class SpmvOperator:
    """Callable ``x -> A @ x`` bound to one kernel, plan and pool.

    Counts calls and the wall time spent inside the kernel, which the bench
    report turns into GFLOPS.
    """

    def __init__(self, matrix, choice: KernelChoice, pool: WorkerPool, plan=None):
        if choice.kernel.symmetric != isinstance(matrix, SymCsrMatrix):
            raise KernelMismatch(f"{choice.kernel.name} does not fit {type(matrix).__name__}")
        self.matrix = matrix
        self.choice = choice
        self.pool = pool
        self.plan = build_plan(choice, matrix, pool.size) if plan is None else plan
        self.calls = 0
        self.kernel_seconds = 0.0

    @classmethod
    def default(cls, matrix, pool: WorkerPool | None = None) -> "SpmvOperator":
        pool = pool or WorkerPool(1)
        k = Kernel.S1 if isinstance(matrix, SymCsrMatrix) else Kernel.U1
        return cls(matrix, KernelChoice(k), pool)

    @property
    def n(self) -> int:
        return self.matrix.n

    @property
    def flops_per_call(self) -> int:
        m = self.matrix
        if isinstance(m, SymCsrMatrix):
            return 4 * m.nnz - 2 * m.n
        return 2 * m.nnz

    @property
    def gflops(self) -> float:
        if self.kernel_seconds <= 0.0:
            return 0.0
        return self.flops_per_call * self.calls / self.kernel_seconds / 1e9

    def __call__(self, x, out=None) -> np.ndarray:
        t0 = time.perf_counter()
        if self.choice.kernel.symmetric:
            part, regions = self.plan
            y = spmv_sym(self.choice, self.matrix, part, regions, x, self.pool, out)
        else:
            y = spmv_unsym(self.choice, self.matrix, self.plan, x, self.pool, out)
        self.kernel_seconds += time.perf_counter() - t0
        self.calls += 1
        return y
