"""Iteration-count blow-up of the fixed-point method as the tolerance tightens.

The optimality-criteria update converges linearly at best, so each decade of
step tolerance multiplies the iteration count; the multiplier and
interior-point methods pay per-iteration linear algebra instead and their
counts barely move. Run this to reproduce the pattern:

    python scripts/doc_tolerance_sweep.py --problem CANT-2-2-2-3
"""

from __future__ import annotations

import argparse

from vtsopt.doc import DocConfig, solve_doc
from vtsopt.mesh import build_problem


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--problem", default="CANT-2-2-2-3")
    parser.add_argument(
        "--tols", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4, 1e-5]
    )
    args = parser.parse_args()

    problem = build_problem(args.problem)
    print(f"{args.problem}: m = {problem.m}, n = {problem.n}")
    header = (f"{'tol':>8} {'conv':>5} {'iters':>7} {'growth':>7} "
              f"{'objective':>16} {'wall s':>7}")
    print(header)
    print("-" * len(header))

    prev_iters = None
    for tol in args.tols:
        rep = solve_doc(problem, DocConfig(tol=tol))
        iters = rep.outer_iterations
        growth = f"{iters / prev_iters:.1f}x" if prev_iters else "-"
        print(f"{tol:>8.0e} {'yes' if rep.converged else 'NO':>5} {iters:>7} "
              f"{growth:>7} {rep.objective:>16.8e} {rep.wall_clock:>7.1f}")
        if rep.notes:
            print(f"         notes: {rep.notes}")
        prev_iters = iters


if __name__ == "__main__":
    main()
