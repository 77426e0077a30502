"""Run all three optimizers on one instance and tabulate the outcomes.

Example:
    python scripts/compare_methods.py --problem CANT-2-2-2-3
    python scripts/compare_methods.py --problem BRIDGE-2-2-2-3 --pbm-tol 1e-6
"""

from __future__ import annotations

import argparse

from vtsopt.doc import DocConfig, solve_doc
from vtsopt.ip import IpConfig, solve_ip
from vtsopt.mesh import build_problem
from vtsopt.pbm import PbmConfig, solve_pbm


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--problem", default="CANT-2-2-2-3")
    parser.add_argument("--pbm-tol", type=float, default=1e-6)
    parser.add_argument("--ip-tol", type=float, default=1e-5)
    parser.add_argument("--doc-tol", type=float, default=1e-5)
    args = parser.parse_args()

    problem = build_problem(args.problem)
    print(f"{args.problem}: m = {problem.m} elements, n = {problem.n} dofs, "
          f"volume budget {problem.volume:g}")

    runs = [
        ("pbm", solve_pbm(problem, PbmConfig(tol=args.pbm_tol, rho_lower=0.0))),
        ("ip", solve_ip(problem, IpConfig(tol=args.ip_tol))),
        ("doc", solve_doc(problem, DocConfig(tol=args.doc_tol))),
    ]

    header = (f"{'method':6} {'tol':>8} {'conv':>5} {'iters':>6} {'minres':>7} "
              f"{'objective':>16} {'vol err':>9} {'gap':>10} {'wall s':>7}")
    print(header)
    print("-" * len(header))
    for name, rep in runs:
        vol_err = abs(rep.volume - problem.volume) / problem.volume
        print(f"{name:6} {rep.tol:>8.0e} {'yes' if rep.converged else 'NO':>5} "
              f"{rep.outer_iterations:>6} {rep.totals().get('minres', 0):>7} "
              f"{rep.objective:>16.8e} {vol_err:>9.1e} {rep.gap_scaled:>10.2e} "
              f"{rep.wall_clock:>7.1f}")
        if rep.notes:
            print(f"       notes: {rep.notes}")

    objectives = [rep.objective for _, rep in runs]
    spread = (max(objectives) - min(objectives)) / max(abs(v) for v in objectives)
    print(f"relative objective spread across methods: {spread:.2e}")


if __name__ == "__main__":
    main()
