"""Run the ten-problem suite under every policy and tabulate the outcome.

Prints, per problem and policy, whether the residual requirement was met,
the outer passes, iterations and workspace, followed by satisfied counts.

    python scripts/policy_comparison.py --maxmemory 8M
"""
import argparse

from autokrylov.generators import policy_suite
from autokrylov.policy import Policy, PolicyConfig, linear_solve_meta


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--maxmemory", default="8M")
    p.add_argument("--residual", default="1e-8")
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()

    base = PolicyConfig(cpu=args.threads).with_overrides(
        f"MAXMEMORY={args.maxmemory},RESIDUAL={args.residual}")
    satisfied = {pol: 0 for pol in Policy}
    print(f"{'problem':16s} {'policy':9s} {'ok':>3s} {'passes':>6s} {'iters':>6s} "
          f"{'true res':>9s} {'workspace':>10s} {'ortho':>5s} kernel")
    for prob in policy_suite():
        for pol in Policy:
            cfg = base.with_overrides(f"POLICY={pol.name}\n{prob.settings}")
            out = linear_solve_meta(prob.matrix, prob.b, cfg)
            satisfied[pol] += out.policy_satisfied
            sel = out.tuning.selected
            print(f"{prob.name:16s} {pol.name:9s} {'yes' if out.policy_satisfied else 'no':>3s} "
                  f"{out.outer_passes:6d} {out.total_iterations:6d} {out.result.true_residual:9.2e} "
                  f"{out.result.workspace_bytes:10d} {out.ortho_used.name:>5s} {sel.label if sel else '-'}")
    print("satisfied: " + ", ".join(f"{pol.name}={n}" for pol, n in satisfied.items()))


if __name__ == "__main__":
    main()
