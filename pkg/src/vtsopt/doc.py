"""Damped optimality-criteria method.

Classic fixed-point scheme: solve the elastic state, rescale each density
by the damped energy ratio ``rho_i * (u^T K_i u)^q / alpha`` clamped to the
box, and bisect the volume multiplier ``alpha`` until the updated design
hits the volume target. The damping exponent ``q <= 1`` (default 0.5)
shortens the full step. Stopping is on the step size
``||rho+ - rho||_inf``; a scaled duality gap is logged alongside purely for
comparability with the multiplier and interior-point methods — the two
measures track each other closely in practice but no relation is asserted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .fem import DensityBounds, ElementOps
from .linalg import FixedTolerance, MinresConfig, minres_solve
from .mesh import Problem
from .model import best_alpha_gap, compliance
from .multigrid import MgPreconditioner
from .report import SolveReport

__all__ = ["DocConfig", "doc_update", "bisect_volume", "solve_doc"]


@dataclass
class DocConfig:
    """Optimality-criteria parameters.

    ``bisect_tol`` defaults to ``0.1 * tol`` when left unset; tightening it
    with the outer tolerance keeps the volume error subordinate to the
    stopping test.
    """

    tol: float = 1e-2
    exponent: float = 0.5  # damping q <= 1 on the energy ratio
    rho_lower: float = 1e-7
    bisect_tol: float | None = None
    alpha_hi: float = 1e4
    minres_tol: float = 1e-4
    minres_floor: float = 1e-9
    minres_cap: int = 1000
    max_iters: int = 20000
    stall_window: int = 50  # iterations without 1% step progress before abort
    stall_factor: float = 0.99
    bisect_cap: int = 500

    def __post_init__(self) -> None:
        if not 0.0 < self.exponent <= 1.0:
            raise ValueError("damping exponent must lie in (0, 1]")
        if self.bisect_tol is not None and self.bisect_tol <= 0.0:
            raise ValueError("bisection tolerance must be positive")

    @property
    def bisect_tol_effective(self) -> float:
        return 0.1 * self.tol if self.bisect_tol is None else self.bisect_tol


def doc_update(
    rho: np.ndarray, z: np.ndarray, alpha: float, exponent: float, bounds: DensityBounds
) -> np.ndarray:
    """Clamped multiplicative update ``rho_i * z_i^q / alpha``.

    ``z`` holds the element strain energies ``u^T K_i u`` (no 1/2 factor;
    any constant is absorbed by the multiplier).
    """
    if alpha <= 0.0:
        raise ValueError("volume multiplier must be positive")
    return np.clip(rho * z**exponent / alpha, bounds.lower, bounds.upper)


def bisect_volume(
    rho: np.ndarray, z: np.ndarray, bounds: DensityBounds, cfg: DocConfig
) -> tuple[float, np.ndarray]:
    """Bisect the volume multiplier until the updated design meets the target.

    Maintains the bracket invariant "total volume too large at the low end,
    small enough at the high end"; the clamped update is monotone
    non-increasing in alpha, so plain bisection applies.
    """
    hi = cfg.alpha_hi
    lo = 0.0
    total_hi = float(doc_update(rho, z, hi, cfg.exponent, bounds).sum())
    if total_hi > bounds.volume:
        raise ValueError(
            "volume bisection bracket invalid: the update exceeds the volume "
            f"target even at alpha = {hi:g}; rescale the load or the volume "
            "fraction so the energies fall inside the bracket"
        )
    tol = cfg.bisect_tol_effective
    alpha = hi
    rho_new = np.empty_like(rho)
    for _ in range(cfg.bisect_cap):
        if (hi - lo) / (hi + lo) <= tol:
            break
        alpha = 0.5 * (hi + lo)
        rho_new = doc_update(rho, z, alpha, cfg.exponent, bounds)
        if float(rho_new.sum()) > bounds.volume:
            lo = alpha
        else:
            hi = alpha
    else:
        raise ValueError("volume bisection failed to close the bracket")
    return alpha, rho_new


def solve_doc(problem: Problem, cfg: DocConfig | None = None) -> SolveReport:
    """Run the optimality-criteria iteration on a problem instance."""
    cfg = cfg or DocConfig()
    t0 = time.perf_counter()
    fine = problem.fine
    ops = ElementOps(fine)
    bounds = DensityBounds.for_problem(problem.m, problem.volume, cfg.rho_lower)
    f = problem.f
    m = problem.m

    rho = np.full(m, problem.volume / m)
    u = np.zeros(problem.n)
    mtol = FixedTolerance(cfg.minres_tol)

    columns = ("iter", "minres", "step_inf", "gap_scaled", "objective")
    rows: list[tuple] = []
    notes: list[str] = []
    converged = False
    gap_scaled = np.nan
    step_inf = np.inf
    best_step = np.inf
    since_best = 0
    prev_objective = np.inf
    ascent_count = 0

    for it in range(1, cfg.max_iters + 1):
        k_mat = ops.assemble_stiffness(rho)
        chain = MgPreconditioner(k_mat, problem.transfers)
        sol = minres_solve(
            k_mat,
            f,
            MinresConfig(tol=mtol.current(), max_iters=cfg.minres_cap, floor=cfg.minres_floor),
            chain.apply,
            x0=u,  # warm start from the previous state solve
        )
        u = sol.x
        _, q = ops.element_products(u)
        z = 2.0 * q

        _, rho_new = bisect_volume(rho, z, bounds, cfg)
        step_inf = float(np.max(np.abs(rho_new - rho)))

        objective = compliance(f, u)
        gap, _ = best_alpha_gap(q, float(f @ u), bounds)
        gap_scaled = gap / objective
        rows.append((it, sol.iterations, step_inf, gap_scaled, objective))

        if objective > prev_objective * (1.0 + 10.0 * cfg.minres_tol):
            ascent_count += 1
        prev_objective = objective

        if step_inf <= cfg.tol:
            rho = rho_new
            converged = True
            break
        rho = rho_new

        if step_inf < cfg.stall_factor * best_step:
            best_step = step_inf
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.stall_window:
                notes.append(
                    f"aborted: step size did not improve by 1% over "
                    f"{cfg.stall_window} iterations (oscillation)"
                )
                break
    else:
        notes.append("iteration cap reached without meeting the step tolerance")

    if ascent_count:
        notes.append(
            f"compliance increased beyond solver tolerance in {ascent_count} iteration(s)"
        )

    certificate = None
    if converged:
        certificate = f"max density step = {step_inf:.6e} <= tol = {cfg.tol:.1e}"
    return SolveReport(
        method="doc",
        problem=problem.name,
        tol=cfg.tol,
        converged=converged,
        columns=columns,
        rows=rows,
        count_columns=("minres",),
        objective=compliance(f, u),
        dual_objective=np.nan,
        gap_scaled=gap_scaled,
        tau_res=step_inf,
        volume=float(rho.sum()),
        rho=rho.copy(),
        wall_clock=time.perf_counter() - t0,
        notes="; ".join(notes),
        certificate=certificate,
        extras={"u": u},
    )
