"""Run-time auto-tuning.

Two mechanisms live here:

* setup-time empirical SpMV selection: every candidate kernel is checked once
  against :func:`spmv_ref` and then timed, at most four executions each;
* in-loop restart adaptation: residual samples feed a max/min ratio monitor and
  a stagnating window (small ratio) bumps the restart length.
"""
from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    Kernel,
    KernelChoice,
    SpmvOperator,
    WorkerPool,
    spmv_ref,
)
from .sparse import CsrMatrix, SymCsrMatrix, expand_symmetric

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_JL",
    "MAX_EXECUTIONS",
    "CandidateTiming",
    "TuningReport",
    "TuningError",
    "mm_ratio",
    "MMRatioMonitor",
    "judge_stagnation",
    "RestartController",
    "restart_update",
    "select_spmv_unsym",
    "select_spmv_sym",
]

DEFAULT_JL = (8, 16, 32, 64, 128, 256)
WARMUP = 1
TIMED_TRIALS = 3
MAX_EXECUTIONS = WARMUP + TIMED_TRIALS


class TuningError(RuntimeError):
    """No candidate kernel survived the setup cross-check."""


# ------------------------------------------------------------ restart adaptation

def mm_ratio(window: Sequence[float], t: int) -> float:
    """Max over min of the last ``t`` residual samples."""
    if t < 1 or len(window) < t:
        raise ValueError(f"need at least t={t} samples, have {len(window)}")
    last = np.asarray(window[len(window) - t:], dtype=np.float64)
    if np.any(~(last > 0)):
        raise ValueError("residual samples must be positive")
    return float(last.max() / last.min())


@dataclass
class MMRatioMonitor:
    t: int = 5
    theta: float = 10.0
    window: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("window length must be >= 1")
        if self.theta <= 0:
            raise ValueError("theta must be positive")

    @property
    def full(self) -> bool:
        return len(self.window) >= self.t

    def push(self, r: float):
        if not r > 0:
            raise ValueError("residual samples must be positive")
        self.window.append(float(r))
        del self.window[:-self.t]


def judge_stagnation(monitor: MMRatioMonitor) -> int:
    """1 when the window stagnated (ratio below theta), else 0; clears the window."""
    ratio = mm_ratio(monitor.window, monitor.t)
    monitor.window.clear()
    return 1 if ratio < monitor.theta else 0


@dataclass
class RestartController:
    """Restart length that grows by ``increment`` whenever the monitor reports stagnation."""

    msize: int
    msize_max: int
    increment: int = 5
    monitor: MMRatioMonitor = field(default_factory=MMRatioMonitor)
    trajectory: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.msize <= self.msize_max:
            raise ValueError("need 1 <= msize <= msize_max")
        if self.increment < 1:
            raise ValueError("increment must be >= 1")
        self.msize_initial = self.msize
        if not self.trajectory:
            self.trajectory.append(self.msize)

    def sample(self, residual: float) -> int:
        """Feed one residual sample (one per restart); returns the restart length to use next."""
        if residual > 0:
            self.monitor.push(residual)
        if self.monitor.full:
            grow = judge_stagnation(self.monitor)
            before = self.msize
            restart_update(self, grow)
            if self.msize != before:
                log.debug("restart length %d -> %d", before, self.msize)
        self.trajectory.append(self.msize)
        return self.msize


def restart_update(controller: RestartController, grow: int) -> int:
    if grow == 1:
        controller.msize = min(controller.msize + controller.increment, controller.msize_max)
    return controller.msize


# ------------------------------------------------------------- kernel selection

@dataclass
class CandidateTiming:
    choice: KernelChoice
    workers: int
    trial_times: list[float]
    best_time: float
    executions: int
    matched_reference: bool

    def to_dict(self) -> dict:
        return {
            "kernel": self.choice.kernel.value,
            "jl": self.choice.jl,
            "workers": self.workers,
            "trial_times": list(self.trial_times),
            "best_time": self.best_time,
            "executions": self.executions,
            "matched_reference": self.matched_reference,
        }


@dataclass
class TuningReport:
    candidates: list[CandidateTiming] = field(default_factory=list)
    selected: KernelChoice | None = None
    selected_workers: int | None = None
    trials_per_candidate: int = TIMED_TRIALS
    mode: str = "auto"  # "auto", "forced" or "disabled"

    @property
    def total_executions(self) -> int:
        return sum(c.executions for c in self.candidates)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "selected": None if self.selected is None else self.selected.kernel.value,
            "jl": None if self.selected is None else self.selected.jl,
            "workers": self.selected_workers,
            "trials_per_candidate": self.trials_per_candidate,
            "candidates": [c.to_dict() for c in self.candidates],
        }


Measure = Callable[[KernelChoice, Callable[[], object]], float]


def _wall_clock(choice: KernelChoice, run: Callable[[], object]) -> float:
    t0 = time.perf_counter()
    run()
    return time.perf_counter() - t0


def _tolerance(reference_matrix: CsrMatrix, x: np.ndarray) -> float:
    # 1e-13 * ||A||_1 * ||x||_inf * n, the bound the kernels are held to
    col_sums = np.bincount(reference_matrix.col_idx, np.abs(reference_matrix.values),
                           minlength=reference_matrix.n)
    norm1 = col_sums.max() if len(col_sums) else 0.0
    return 1e-13 * norm1 * np.abs(x).max() * max(reference_matrix.n, 1)


def _select(matrix, choices: list[KernelChoice], pool, sweep: bool,
            measure: Measure | None, seed: int):
    if matrix.n == 0 or matrix.nnz == 0:
        raise ValueError("cannot tune SpMV for an empty matrix")
    measure = measure or _wall_clock
    reference = expand_symmetric(matrix) if isinstance(matrix, SymCsrMatrix) else matrix
    x = np.random.default_rng(seed).uniform(-1.0, 1.0, matrix.n)
    y_ref = spmv_ref(reference, x)
    tol = _tolerance(reference, x)

    report = TuningReport()
    best = None
    given = pool if isinstance(pool, WorkerPool) else None
    owned = []
    for size in _pool_sizes(given.size if given else pool, sweep):
        if given is not None and size == given.size:
            pool = given
        else:
            pool = WorkerPool(size)
            owned.append(pool)
        for choice in choices:
            op = SpmvOperator(matrix, choice, pool)
            executions = 0

            def run():
                nonlocal executions
                executions += 1
                return op(x)

            # warm-up doubles as the correctness cross-check
            ok = bool(np.max(np.abs(run() - y_ref)) <= tol)
            times = [measure(choice, run) for _ in range(TIMED_TRIALS)] if ok else []
            cand = CandidateTiming(choice, size, times, min(times) if times else float("inf"),
                                   executions, ok)
            report.candidates.append(cand)
            if not ok:
                log.warning("kernel %s disqualified: output differs from reference", choice.label)
                continue
            key = (cand.best_time, choice.sort_key, size)
            if best is None or key < best[0]:
                best = (key, op)
    for pool in owned:
        if best is None or best[1].pool is not pool:
            pool.close()
    if best is None:
        raise TuningError("every SpMV candidate disagreed with the reference kernel")
    op = best[1]
    op.calls, op.kernel_seconds = 0, 0.0
    report.selected = op.choice
    report.selected_workers = op.pool.size
    return op, report


def select_spmv_unsym(matrix: CsrMatrix, pool: WorkerPool | int = 1,
                      jl_candidates: Sequence[int] = DEFAULT_JL, *,
                      measure: Measure | None = None, thread_sweep: bool = False,
                      seed: int = 0):
    """Pick the fastest of U1, U2 and U3 (one per admissible ``jl``).

    Each candidate runs once as warm-up and reference cross-check, then
    ``TIMED_TRIALS`` timed runs; the best time is the minimum.  U3 is tried
    only for ``jl`` with ``nnz >= 4*jl``.

    Parameters
    ----------
    pool : WorkerPool or int
        Pool to run on, or a worker count for a fresh pool.
    measure : callable, optional
        ``measure(choice, run) -> seconds``; must call ``run()`` once.  Defaults
        to wall-clock timing.
    thread_sweep : bool
        Also sweep worker counts 1, 2, 4, ... up to the pool size.

    Returns
    -------
    (SpmvOperator, TuningReport)
        The operator carries the selected variant, its plan and its pool.
    """
    if not isinstance(matrix, CsrMatrix):
        raise TypeError("select_spmv_unsym needs a CsrMatrix")
    choices = [KernelChoice(Kernel.U1), KernelChoice(Kernel.U2)]
    choices += [KernelChoice(Kernel.U3, jl) for jl in sorted(set(jl_candidates))
                if matrix.nnz >= 4 * jl]
    return _select(matrix, choices, pool, thread_sweep, measure, seed)


def select_spmv_sym(matrix: SymCsrMatrix, pool: WorkerPool | int = 1, *,
                    measure: Measure | None = None, thread_sweep: bool = False,
                    seed: int = 0):
    """Symmetric counterpart of :func:`select_spmv_unsym` over S1, S2, S3."""
    if not isinstance(matrix, SymCsrMatrix):
        raise TypeError("select_spmv_sym needs a SymCsrMatrix")
    choices = [KernelChoice(k) for k in (Kernel.S1, Kernel.S2, Kernel.S3)]
    return _select(matrix, choices, pool, thread_sweep, measure, seed)


def _pool_sizes(pool_size: int, sweep: bool) -> list[int]:
    if pool_size < 1:
        raise ValueError("pool size must be >= 1")
    if not sweep:
        return [pool_size]
    sizes = [1]
    while sizes[-1] * 2 <= pool_size:
        sizes.append(sizes[-1] * 2)
    if sizes[-1] != pool_size:
        sizes.append(pool_size)
    return sizes
