"""Time every SpMV variant on generated matrices and print GFLOPS per kernel.

    python scripts/kernel_sweep.py --threads 4 --n 50000
"""
import argparse
import time

import numpy as np

from autokrylov.generators import banded, skewed_rows
from autokrylov.kernels import Kernel, KernelChoice, SpmvOperator, WorkerPool, reduction_work
from autokrylov.sparse import PartitionScheme, build_row_partition


def best_time(op, x, trials):
    op(x)
    times = []
    for _ in range(trials):
        t = time.perf_counter()
        op(x)
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    x = np.random.default_rng(args.seed).standard_normal(args.n)
    unsym = skewed_rows(args.n, seed=args.seed)
    sym = banded(args.n, 3)
    choices = [(unsym, KernelChoice(Kernel.U1)), (unsym, KernelChoice(Kernel.U2))]
    choices += [(unsym, KernelChoice(k, jl)) for k in (Kernel.U3, Kernel.U4)
                for jl in (8, 16, 32, 64, 128, 256)]
    choices += [(sym, KernelChoice(k)) for k in (Kernel.S1, Kernel.S2, Kernel.S3)]

    print(f"n={args.n} workers={args.threads} skewed nnz={unsym.nnz} banded stored nnz={sym.nnz}")
    with WorkerPool(args.threads) as pool:
        for scheme in PartitionScheme:
            loads = build_row_partition(unsym.row_ptr, args.threads, scheme).loads(unsym.row_ptr)
            print(f"  {scheme.name:13s} worker loads max/mean = {loads.max() / loads.mean():.2f}")
        print(f"{'kernel':12s} {'ms':>9s} {'GFLOPS':>8s} {'reduction':>10s}")
        for matrix, choice in choices:
            op = SpmvOperator(matrix, choice, pool)
            t = best_time(op, x, args.trials)
            extra = ""
            if choice.kernel.symmetric:
                regions = op.plan[1]
                extra = str(reduction_work(choice, matrix.n, pool.size, regions))
            print(f"{choice.label:12s} {t * 1e3:9.3f} {op.flops_per_call / t / 1e9:8.3f} {extra:>10s}")


if __name__ == "__main__":
    main()
