"""Command-line front end: solve, compare, check.

``solve`` runs one method on one problem and writes four files into the
output directory: ``summary.txt`` (key/value run summary), ``iterations.csv``
(per-iteration log, columns fixed per method), ``density.vtk`` (full field)
and ``density_filtered.vtk`` (densest elements summing to 0.8 V).

``compare`` aligns several runs of the same problem — either executed on
the spot from method:tol specs or loaded from existing output directories —
into one table, marking the objective digits shared by all runs.

``check`` runs a quick self-test battery (element kernel, mesh sizes,
solver cross-checks) and exits nonzero on any failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .doc import DocConfig, solve_doc
from .ip import IpConfig, solve_ip
from .mesh import build_problem, parse_name
from .pbm import PbmConfig, solve_pbm
from .report import SolveReport, read_summary, write_csv, write_summary
from .vtkio import write_density_vtk, write_filtered_vtk

__all__ = ["RunConfig", "run", "main"]

_METHOD_DEFAULT_TOL = {"pbm": 1e-5, "ip": 1e-5, "doc": 1e-2}

# parameter overrides accepted per method (plus shared keys)
_SHARED_PARAMS = {"rho_lower", "mem_budget_gb", "cutoff", "max_iters"}
_METHOD_PARAMS = {
    "pbm": _SHARED_PARAMS | {"beta", "gamma", "branch", "minres_tol_scale"},
    "ip": _SHARED_PARAMS | {"sigma_r", "sigma_s", "minres_tol0", "barrier0"},
    "doc": _SHARED_PARAMS | {"exponent", "minres_tol", "bisect_tol"},
}
_CONFIG_KEYS = {"problem", "method", "tol", "levels", "out", "seed", "params"}

# memory model for the refusal check: the fine matrix dominates at ~81
# nonzeros per row (CSR value + index = 12 bytes), and pattern building,
# the Galerkin chain and solver work vectors roughly triple that
_NNZ_PER_ROW = 81
_BYTES_PER_NNZ = 12
_WORKING_FACTOR = 3.0


@dataclass
class RunConfig:
    """One solver run: problem, method, tolerance and overrides."""

    problem: str
    method: str
    tol: float | None = None
    levels: int | None = None
    out: str | None = None
    seed: int = 0
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        parse_name(self.problem)  # raises on malformed names
        if self.method not in _METHOD_DEFAULT_TOL:
            raise ValueError(f"unknown method {self.method!r}; choose pbm, ip or doc")
        allowed = _METHOD_PARAMS[self.method]
        unknown = set(self.params) - allowed
        if unknown:
            raise ValueError(
                f"unknown parameter(s) {sorted(unknown)} for method {self.method!r}; "
                f"allowed: {sorted(allowed)}"
            )
        if self.tol is None:
            self.tol = _METHOD_DEFAULT_TOL[self.method]

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config key(s) {sorted(unknown)} in {path}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def _estimate_bytes(n: int) -> float:
    return _WORKING_FACTOR * _NNZ_PER_ROW * n * _BYTES_PER_NNZ


def _memory_check(n: int, budget_gb: float | None) -> None:
    need = _estimate_bytes(n)
    if budget_gb is not None:
        have = budget_gb * 2**30
    else:
        try:
            import psutil

            have = psutil.virtual_memory().available
        except ImportError:  # pragma: no cover - psutil is a declared dependency
            return
    if need > have:
        raise SystemExit(
            f"refusing to run: the fine-level system with n = {n} needs an estimated "
            f"{need / 2**30:.1f} GiB ({_NNZ_PER_ROW} nonzeros/row) but only "
            f"{have / 2**30:.1f} GiB are available; drop one refinement level "
            "(8x fewer elements) or raise mem_budget_gb"
        )


def _solver_config(cfg: RunConfig):
    p = dict(cfg.params)
    p.pop("mem_budget_gb", None)
    p.pop("cutoff", None)
    if "max_iters" in p:
        # PBM counts outer iterations; IP and DOC count plain iterations
        cap = int(p.pop("max_iters"))
        p["max_outer" if cfg.method == "pbm" else "max_iters"] = cap
    if cfg.method == "pbm":
        return PbmConfig(tol=cfg.tol, **p)
    if cfg.method == "ip":
        return IpConfig(tol=cfg.tol, **p)
    return DocConfig(tol=cfg.tol, **p)


_SOLVERS = {"pbm": solve_pbm, "ip": solve_ip, "doc": solve_doc}


def run(cfg: RunConfig, write_files: bool = True) -> SolveReport:
    """Build the problem, dispatch the solver, write the output files."""
    problem = build_problem(cfg.problem, levels=cfg.levels)
    _memory_check(problem.n, cfg.params.get("mem_budget_gb"))
    report = _SOLVERS[cfg.method](problem, _solver_config(cfg))

    if write_files:
        out = Path(cfg.out or os.environ.get("VTSOPT_OUT", "runs"))
        out = out / f"{cfg.problem}-{cfg.method}-{cfg.tol:g}"
        out.mkdir(parents=True, exist_ok=True)
        write_summary(report, out / "summary.txt")
        write_csv(report, out / "iterations.csv")
        shape = problem.fine.shape
        edge = problem.fine.edge
        write_density_vtk(out / "density.vtk", shape, edge, report.rho)
        write_filtered_vtk(
            out / "density_filtered.vtk",
            shape,
            edge,
            report.rho,
            problem.volume,
            cutoff=cfg.params.get("cutoff", 0.8),
        )
        print(f"wrote {out}/{{summary.txt, iterations.csv, density.vtk, density_filtered.vtk}}")
    return report


def _cmd_solve(args) -> int:
    cfg = _config_from_args(args)
    report = run(cfg)
    status = "converged" if report.converged else "NOT converged"
    print(
        f"{report.method} on {report.problem}: {status}, objective {report.objective:.7e}, "
        f"scaled gap {report.gap_scaled:.3e}, iterations {report.outer_iterations}, "
        f"wall clock {report.wall_clock:.1f} s"
    )
    if report.notes:
        print(f"notes: {report.notes}")
    return 0 if report.converged else 1


def _shared_prefix_digits(values: list[float]) -> int:
    """Number of leading characters shared by the fixed-point renderings."""
    texts = [f"{v:.10f}" for v in values]
    first = texts[0]
    k = 0
    while k < len(first) and all(t[k] == first[k] for t in texts):
        k += 1
    return k


def _cmd_compare(args) -> int:
    entries: list[tuple[str, str, dict]] = []  # (method, tol text, fields)
    problem = None
    if args.runs:
        for spec in args.runs:
            try:
                method, tol_text = spec.split(":")
            except ValueError:
                raise SystemExit(f"bad run spec {spec!r}; expected method:tol") from None
            cfg = RunConfig(problem=args.problem, method=method, tol=float(tol_text))
            rep = run(cfg, write_files=False)
            entries.append(
                (
                    method,
                    tol_text,
                    {
                        "problem": rep.problem,
                        "iterations": rep.outer_iterations,
                        "minres": rep.totals().get("minres", 0),
                        "objective": rep.objective,
                        "converged": rep.converged,
                    },
                )
            )
            problem = args.problem
    if args.from_dirs:
        for d in args.from_dirs:
            data = read_summary(Path(d) / "summary.txt")
            if problem is None:
                problem = data["problem"]
            elif data["problem"] != problem:
                raise SystemExit(
                    f"cannot compare: {d} solved {data['problem']}, others solved {problem}"
                )
            entries.append(
                (
                    data["method"],
                    data["tol"],
                    {
                        "problem": data["problem"],
                        "iterations": int(data["outer_iterations"]),
                        "minres": int(data.get("total_minres", 0)),
                        "objective": float(data["objective"]),
                        "converged": data["converged"] == "True",
                    },
                )
            )
    if len(entries) < 2:
        raise SystemExit("compare needs at least two runs (specs and/or --from directories)")

    objectives = [e[2]["objective"] for e in entries]
    shared = _shared_prefix_digits(objectives)
    print(f"problem {problem}: objective digits shared by all runs marked with [ ]")
    header = f"{'method':8} {'tol':>8} {'iters':>6} {'minres':>7} {'objective':>22} conv"
    print(header)
    print("-" * len(header))
    for method, tol_text, e in entries:
        txt = f"{e['objective']:.10f}"
        marked = f"[{txt[:shared]}]{txt[shared:]}" if shared else txt
        print(
            f"{method:8} {tol_text:>8} {e['iterations']:>6} {e['minres']:>7} "
            f"{marked:>22} {'yes' if e['converged'] else 'NO'}"
        )
    return 0


def _cmd_check(args) -> int:
    """Fast self-test battery; prints one PASS/FAIL line per check."""
    from scipy.sparse.linalg import spsolve  # local import: only used here

    from .fem import ElementOps, hex_stiffness
    from .linalg import MinresConfig, minres_solve
    from .multigrid import MgPreconditioner
    from .penalty import PenaltyBarrier

    rng = np.random.default_rng(args.seed)
    failures = 0

    def record(name: str, ok: bool, detail: str = "") -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        failures += 0 if ok else 1

    ke = hex_stiffness()
    record(
        "element kernel symmetric with 6 rigid modes",
        np.allclose(ke, ke.T) and np.sum(np.abs(np.linalg.eigvalsh(ke)) < 1e-10) == 6,
    )

    pen = PenaltyBarrier()
    taus = rng.uniform(-3, 0.4, 64)
    h = 1e-6
    fd = (pen.value(taus + h) - pen.value(taus - h)) / (2 * h)
    record(
        "penalty kernel derivative matches finite differences",
        bool(np.max(np.abs(fd - pen.deriv(taus))) < 1e-6),
    )

    problem = build_problem("CANT-1-1-1-2")
    record(
        "mesh sizes for CANT-1-1-1-2 (n=54, m=8)",
        problem.n == 54 and problem.m == 8,
    )

    ops = ElementOps(problem.fine)
    k_mat = ops.assemble_stiffness(np.full(problem.m, 0.35))
    b = problem.f
    x_direct = spsolve(k_mat.tocsc(), b)
    chain = MgPreconditioner(k_mat, problem.transfers)
    sol = minres_solve(k_mat, b, MinresConfig(tol=1e-10), chain.apply)
    record(
        "multigrid MINRES agrees with a direct solve",
        bool(np.linalg.norm(sol.x - x_direct) <= 1e-6 * np.linalg.norm(x_direct)),
    )

    rep = solve_pbm(problem, PbmConfig(tol=1e-5))
    record(
        "multiplier method converges on the toy cantilever",
        rep.converged and abs(rep.gap_scaled) < 1e-5,
        f"gap {rep.gap_scaled:.2e}",
    )

    print(f"{'all checks passed' if failures == 0 else f'{failures} check(s) failed'}")
    return 1 if failures else 0


def _config_from_args(args) -> RunConfig:
    params = {}
    for kv in args.param or []:
        try:
            key, value = kv.split("=", 1)
        except ValueError:
            raise SystemExit(f"bad --param {kv!r}; expected key=value") from None
        params[key] = float(value)
    if args.config:
        return RunConfig.from_file(
            args.config,
            problem=args.problem,
            method=args.method,
            tol=args.tol,
            levels=args.levels,
            out=args.out,
            params=params or None,
        )
    if not args.problem or not args.method:
        raise SystemExit("solve needs --problem and --method (or --config)")
    return RunConfig(
        problem=args.problem,
        method=args.method,
        tol=args.tol,
        levels=args.levels,
        out=args.out,
        params=params,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vtsopt",
        description="Multigrid-accelerated solvers for variable-thickness-sheet "
        "topology optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one method on one problem")
    solve.add_argument("--problem", help="instance name, e.g. CANT-2-2-2-3")
    solve.add_argument("--method", choices=("pbm", "ip", "doc"))
    solve.add_argument("--tol", type=float, help="stopping tolerance (method default if unset)")
    solve.add_argument("--levels", type=int, help="override the mesh-level count")
    solve.add_argument("--out", help="output directory (default runs/, env VTSOPT_OUT)")
    solve.add_argument("--param", action="append", metavar="KEY=VALUE", help="solver override")
    solve.add_argument("--config", help="JSON file with a run configuration")
    solve.set_defaults(func=_cmd_solve)

    compare = sub.add_parser("compare", help="align several runs of one problem")
    compare.add_argument("--problem", help="instance to solve for method:tol specs")
    compare.add_argument("runs", nargs="*", metavar="METHOD:TOL", help="runs to execute")
    compare.add_argument(
        "--from", dest="from_dirs", action="append", metavar="DIR", help="existing run directory"
    )
    compare.set_defaults(func=_cmd_compare)

    check = sub.add_parser("check", help="fast self-test battery")
    check.add_argument("--seed", type=int, default=0)
    check.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
