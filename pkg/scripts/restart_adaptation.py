"""Compare fixed-length GMRES restarts with max/min-ratio restart adaptation.

A cyclic permutation matrix makes GMRES(m) stall for every m < n; the
adaptive run lengthens m each time five restart residuals span less than a
decade, until the Krylov space is long enough to converge.

    python scripts/restart_adaptation.py --n 40
"""
import argparse

import numpy as np

from autokrylov.autotune import RestartController, mm_ratio
from autokrylov.krylov import KrylovConfig, gmres_m
from autokrylov.sparse import CsrMatrix


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--m", type=int, default=2, help="initial restart length")
    p.add_argument("--increment", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=20_000)
    args = p.parse_args()

    n = args.n
    A = CsrMatrix(n, np.arange(n + 1), (np.arange(n) + 1) % n, np.ones(n))
    b = np.zeros(n)
    b[0] = 1.0

    fixed = gmres_m(A, b, KrylovConfig(restart_m=args.m, max_iters=min(args.max_iters, 50 * args.m)))
    samples = [fixed.residual_history[it - 1] for it, _ in fixed.restarts]
    ratio = mm_ratio(samples, 5) if len(samples) >= 5 else float("nan")
    print(f"fixed m={args.m}: converged={fixed.converged} iterations={fixed.iterations} "
          f"residual={fixed.true_residual:.3e} max/min over first 5 restarts={ratio:.3f}")

    ctl = RestartController(args.m, n, increment=args.increment)
    adaptive = gmres_m(A, b, KrylovConfig(restart_at=ctl, max_iters=args.max_iters))
    steps = sorted(set(adaptive.msize_trajectory))
    print(f"adaptive: converged={adaptive.converged} iterations={adaptive.iterations} "
          f"residual={adaptive.true_residual:.3e}")
    print("restart lengths visited: " + " ".join(map(str, steps)))


if __name__ == "__main__":
    main()
