"""Mesh-independence of the V-cycle preconditioned MINRES iteration count.

Solves K(e) u = f (uniform unit densities) across refinement levels of one
base shape and reports the MINRES iterations at a fixed relative tolerance.
With geometric coarsening and Galerkin coarse operators the count should be
flat in the mesh size:

    python scripts/multigrid_scaling.py --base CANT-2-2-2 --levels 2 3 4 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vtsopt.fem import ElementOps
from vtsopt.linalg import MinresConfig, minres_solve
from vtsopt.mesh import build_problem
from vtsopt.multigrid import MgPreconditioner


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--base", default="CANT-2-2-2", help="family and coarse shape")
    parser.add_argument("--levels", type=int, nargs="+", default=[2, 3, 4, 5])
    parser.add_argument("--tol", type=float, default=1e-4)
    args = parser.parse_args()

    header = (f"{'level':>5} {'m':>9} {'n':>9} {'iters':>6} {'relres':>9} "
              f"{'setup s':>8} {'solve s':>8}")
    print(header)
    print("-" * len(header))
    for level in args.levels:
        problem = build_problem(f"{args.base}-{level}")
        ops = ElementOps(problem.fine)
        k_mat = ops.assemble_stiffness(np.ones(problem.m))
        t0 = time.perf_counter()
        chain = MgPreconditioner(k_mat, problem.transfers)
        t1 = time.perf_counter()
        sol = minres_solve(k_mat, problem.f, MinresConfig(tol=args.tol), chain.apply)
        t2 = time.perf_counter()
        print(f"{level:>5} {problem.m:>9} {problem.n:>9} {sol.iterations:>6} "
              f"{sol.relres:>9.2e} {t1 - t0:>8.2f} {t2 - t1:>8.2f}")


if __name__ == "__main__":
    main()
