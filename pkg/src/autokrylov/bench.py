"""Benchmark command line: load a matrix, run a meta-solver, write a report.

Exit codes: 0 converged with the policy satisfied, 1 usage or input error,
2 not converged, 3 fault convergence left unrepaired.

The right-hand side of a linear solve is the all-ones vector.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import generators
from .kernels import Kernel, KernelChoice, WorkerPool
from .krylov import BreakdownError, SolverKind
from .policy import (
    MetaOutcome,
    PolicyConfig,
    PolicyError,
    WorkspaceError,
    eigensolve_meta,
    linear_solve_meta,
    parse_policy_file,
)
from .sparse import (
    CsrMatrix,
    MatrixMarketError,
    SymCsrMatrix,
    load_matrix_market,
    write_matrix_market,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_FAULT = 3

SCHEMA_PATH = Path(__file__).with_name("report_schema.json")


def report_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="autokrylov-bench",
                description="Run a policy-driven sparse solve and report timings and accuracy.")
    p.add_argument("--matrix", required=True, help="Matrix Market file")
    p.add_argument("--mode", choices=("linear", "eigen"), default="linear")
    p.add_argument("--solver", choices=[s.value for s in SolverKind],
                   help="overrides the SOLVER policy keyword")
    p.add_argument("-k", type=int, default=1, help="eigenpairs wanted (eigen mode)")
    p.add_argument("--policy-file", help="policy file (KEYWORD = VALUE lines)")
    p.add_argument("--policy", help="inline overrides, e.g. 'POLICY=MEMORY,RESIDUAL=1e-10'")
    p.add_argument("--threads", type=int, help="worker count (overrides CPU)")
    p.add_argument("--kernel", choices=["auto"] + [k.value for k in Kernel], default="auto")
    p.add_argument("--jl", type=int, help="lane count for u3/u4, or the only jl tried by auto")
    p.add_argument("--tol", type=float, help="overrides RESIDUAL")
    p.add_argument("--max-time", type=float, help="overrides MAXTIME (seconds)")
    p.add_argument("--report", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="report file (default: standard output)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _policy(args) -> PolicyConfig:
    cfg = parse_policy_file(args.policy_file) if args.policy_file else PolicyConfig()
    if args.policy:
        cfg = cfg.with_overrides(args.policy)
    extra = []
    if args.threads is not None:
        extra.append(f"CPU={args.threads}")
    if args.tol is not None:
        extra.append(f"RESIDUAL={args.tol!r}")
    if args.max_time is not None:
        extra.append(f"MAXTIME={args.max_time!r}")
    if args.solver is not None:
        extra.append(f"SOLVER={args.solver}")
    return cfg.with_overrides(",".join(extra)) if extra else cfg


def _kernel(args) -> KernelChoice | None:
    if args.kernel == "auto":
        return None
    kernel = Kernel(args.kernel)
    if kernel.uses_bss:
        return KernelChoice(kernel, args.jl or 32)
    return KernelChoice(kernel)


def _is_symmetric_file(path) -> bool:
    with open(path) as f:
        header = f.readline().split()
    return len(header) == 5 and header[4].lower() == "symmetric"


@dataclass
class BenchReport:
    """Everything one run measured, in JSON-ready form."""

    matrix: dict
    config: dict
    tuning: dict
    solver: dict
    accuracy: dict
    resources: dict
    spmv_gflops: float
    exit_code: int
    eigen: dict | None = None

    def to_dict(self) -> dict:
        d = {
            "matrix": self.matrix,
            "config": self.config,
            "tuning": self.tuning,
            "solver": self.solver,
            "accuracy": self.accuracy,
            "resources": self.resources,
            "spmv_gflops": self.spmv_gflops,
            "exit_code": self.exit_code,
        }
        if self.eigen is not None:
            d["eigen"] = self.eigen
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        """One row per tuning candidate, then one summary row."""
        cols = ["row", "kernel", "jl", "workers", "best_time", "trial_times", "executions",
                "matched_reference", "selected", "matrix", "n", "nnz", "policy", "solver",
                "iterations", "outer_passes", "true_residual", "fault_convergence",
                "policy_satisfied", "elapsed", "workspace_bytes", "spmv_gflops", "exit_code"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        sel = (self.tuning["selected"], self.tuning["jl"], self.tuning["workers"])
        for c in self.tuning["candidates"]:
            w.writerow({
                "row": "candidate", "kernel": c["kernel"], "jl": c["jl"], "workers": c["workers"],
                "best_time": c["best_time"],
                "trial_times": ";".join(repr(t) for t in c["trial_times"]),
                "executions": c["executions"], "matched_reference": c["matched_reference"],
                "selected": (c["kernel"], c["jl"], c["workers"]) == sel,
            })
        w.writerow({
            "row": "summary", "kernel": self.tuning["selected"], "jl": self.tuning["jl"],
            "workers": self.resources["workers"], "matrix": self.matrix["name"],
            "n": self.matrix["n"], "nnz": self.matrix["nnz"],
            "policy": self.config["policy"]["policy"], "solver": self.solver["name"],
            "iterations": self.solver["iterations"], "outer_passes": self.solver["outer_passes"],
            "true_residual": self.accuracy["true_residual"],
            "fault_convergence": self.accuracy["fault_convergence"],
            "policy_satisfied": self.accuracy["policy_satisfied"],
            "elapsed": self.resources["elapsed"], "workspace_bytes": self.resources["workspace_bytes"],
            "spmv_gflops": self.spmv_gflops, "exit_code": self.exit_code,
        })
        return buf.getvalue()


def exit_code_for(outcome: MetaOutcome) -> int:
    if outcome.policy_satisfied and outcome.converged:
        return EXIT_OK
    if outcome.fault_convergence:
        return EXIT_FAULT
    return EXIT_NOT_CONVERGED


def _floats(values) -> list:
    return [float(v) for v in values]


def build_report(outcome: MetaOutcome, matrix, name: str, args, elapsed: float) -> BenchReport:
    r = outcome.result
    eigen = None
    if outcome.solver.is_eigen:
        vals = np.asarray(r.eigenvalues)
        eigen = {
            "k": len(vals),
            "eigenvalues_real": _floats(vals.real),
            "eigenvalues_imag": _floats(vals.imag) if np.iscomplexobj(vals) else [0.0] * len(vals),
            "residuals": _floats(r.residuals),
        }
        recurrence = r.residual_history[-1] if r.residual_history else 0.0
        true_res = r.max_residual
        unit = "restart"
    else:
        recurrence = r.recurrence_residual
        true_res = r.true_residual
        unit = "iteration"
    code = exit_code_for(outcome)
    symmetric = isinstance(matrix, SymCsrMatrix) or (
        isinstance(matrix, CsrMatrix) and matrix.is_numerically_symmetric())
    return BenchReport(
        matrix={"name": name, "n": matrix.n,
                "nnz": matrix.nnz_full if isinstance(matrix, SymCsrMatrix) else matrix.nnz,
                "nnz_stored": matrix.nnz, "symmetric": bool(symmetric)},
        config={"mode": args.mode, "k": args.k if args.mode == "eigen" else None,
                "kernel": args.kernel, "jl": args.jl, "seed": args.seed,
                "policy": outcome.policy.to_dict()},
        tuning=outcome.tuning.to_dict(),
        solver={
            "name": outcome.solver.value,
            "iterations": r.iterations,
            "total_iterations": outcome.total_iterations,
            "restarts": [list(x) for x in r.restarts],
            "outer_passes": outcome.outer_passes,
            "passes": [{"tol": p.tol, "ortho": p.ortho, "iterations": p.iterations,
                        "true_residual": p.true_residual, "fault_convergence": p.fault_convergence}
                       for p in outcome.passes],
            "ortho": outcome.ortho_used.name,
            "preconditioner": outcome.preconditioner.name,
            "msize_trajectory": list(outcome.msize_trajectory),
            "residual_history": _floats(r.residual_history),
            "history_unit": unit,
            "converged": bool(r.converged),
            "timed_out": bool(r.timed_out),
        },
        accuracy={
            "recurrence_residual": float(recurrence),
            "true_residual": float(true_res),
            "fault_convergence": bool(r.fault_convergence),
            "policy_satisfied": bool(outcome.policy_satisfied),
            "requirement": outcome.policy.residual,
        },
        resources={
            "elapsed": elapsed,
            "workspace_bytes": int(r.workspace_bytes),
            "workspace_cap": int(outcome.plan.workspace_bytes_cap),
            "restart_m_initial": outcome.plan.restart_m_initial,
            "m_max": outcome.plan.m_max,
            "workers": outcome.workers,
        },
        spmv_gflops=outcome.spmv_gflops,
        exit_code=code,
        eigen=eigen,
    )


def _fail(message: str) -> int:
    print(f"autokrylov-bench: error: {message}", file=sys.stderr)
    return EXIT_USAGE


def run_bench(argv=None) -> int:
    """Run one benchmark; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.k < 1:
        return _fail("-k must be >= 1")
    if args.jl is not None and args.jl < 1:
        return _fail("--jl must be >= 1")
    if args.threads is not None and args.threads < 1:
        return _fail("--threads must be >= 1")

    try:
        policy = _policy(args)
        kernel = _kernel(args)
        path = Path(args.matrix)
        want_sym = args.mode == "eigen" and _is_symmetric_file(path)
        matrix = load_matrix_market(path, want_symmetric=want_sym)
    except (PolicyError, MatrixMarketError, OSError, ValueError) as exc:
        return _fail(str(exc))

    jl = (args.jl,) if args.jl is not None else None
    extra = {} if jl is None else {"jl_candidates": jl}
    t0 = time.perf_counter()
    try:
        with WorkerPool(policy.workers) as pool:
            if args.mode == "linear":
                outcome = linear_solve_meta(matrix, np.ones(matrix.n), policy, pool=pool,
                                            kernel=kernel, seed=args.seed, **extra)
            else:
                outcome = eigensolve_meta(matrix, args.k, policy, pool=pool, kernel=kernel,
                                          seed=args.seed, **extra)
    except (PolicyError, WorkspaceError, ValueError, TypeError) as exc:
        return _fail(str(exc))
    except BreakdownError as exc:
        print(f"autokrylov-bench: solver breakdown: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    elapsed = time.perf_counter() - t0

    report = build_report(outcome, matrix, path.stem, args, elapsed)
    text = report.to_json() if args.report == "json" else report.to_csv()
    if args.out:
        try:
            Path(args.out).write_text(text if text.endswith("\n") else text + "\n")
        except OSError as exc:
            return _fail(str(exc))
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    if report.exit_code == EXIT_FAULT:
        print("autokrylov-bench: fault convergence: true residual "
              f"{report.accuracy['true_residual']:.3e} misses {policy.residual:.1e}", file=sys.stderr)
    elif report.exit_code == EXIT_NOT_CONVERGED:
        print("autokrylov-bench: not converged", file=sys.stderr)
    return report.exit_code


def main():
    sys.exit(run_bench())


# ----------------------------------------------------------- matrix generation

def generate_test_matrix(kind: str, path, *, n: int | None = None, grid: int | None = None,
                         seed: int = 0, cond: float | None = None):
    """Write a generated matrix to ``path`` in Matrix Market form and return it.

    Parameters
    ----------
    kind : str
        ``poisson2d`` (``grid``), ``laplacian1d`` (``n``), ``diag`` (``n``,
        entries log-spaced from 1 down to ``1/cond``, or 1..n without
        ``cond``), ``skewed_rows`` (``n``, ``seed``), ``banded`` (``n``),
        ``stiff_diag`` (``n``) or ``convdiff2d`` (``grid``).
    """
    if kind == "poisson2d":
        A = generators.poisson2d(_need(grid, "grid"))
    elif kind == "convdiff2d":
        A = generators.convdiff2d(_need(grid, "grid"))
    elif kind == "laplacian1d":
        A = generators.laplacian1d(_need(n, "n"))
    elif kind == "banded":
        A = generators.banded(_need(n, "n"))
    elif kind == "diag":
        size = _need(n, "n")
        if size < 1:
            raise ValueError("diag needs n >= 1")
        if cond is None:
            values = np.arange(1.0, size + 1)
        else:
            if not cond >= 1:
                raise ValueError("cond must be >= 1")
            values = np.logspace(0.0, -np.log10(cond), size)
        A = generators.diag(values)
    elif kind == "skewed_rows":
        A = generators.skewed_rows(_need(n, "n"), seed=seed)
    elif kind == "stiff_diag":
        A = generators.stiff_diag(_need(n, "n"))
    else:
        raise ValueError(f"unknown matrix kind {kind!r}; expected one of {', '.join(generators.KINDS)}")
    write_matrix_market(path, A, comment=f"generated: {kind}")
    return A


def _need(value, name):
    if value is None:
        raise ValueError(f"parameter {name} is required")
    return int(value)


def genmatrix_main(argv=None) -> int:
    p = _Parser(prog="autokrylov-genmatrix", description="Write a generated test matrix.")
    p.add_argument("kind", choices=generators.KINDS)
    p.add_argument("out")
    p.add_argument("--n", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--cond", type=float)
    p.add_argument("--seed", type=int, default=0)
    try:
        args = p.parse_args(argv)
        generate_test_matrix(args.kind, args.out, n=args.n, grid=args.grid, seed=args.seed,
                             cond=args.cond)
    except UsageError as exc:
        p.print_usage(sys.stderr)
        print(f"autokrylov-genmatrix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"autokrylov-genmatrix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    main()
