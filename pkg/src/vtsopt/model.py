"""Objective values, duality gap, and small-instance certification oracles.

The primal program minimizes compliance ``f^T u / 2`` over densities that
sum to the volume budget inside a box, with equilibrium ``K(rho) u = f``.
Its dual has a displacement ``u``, a volume multiplier ``alpha`` and bound
multipliers ``nu_lo, nu_up >= 0`` constrained by
``u^T K_i u / 2 <= alpha - nu_lo_i + nu_up_i``. For any pair ``(u, alpha)``
the closed-form expression

``delta(u, alpha) = -f^T u / 2 + alpha V - sum_i min(lo_i s_i, up_i s_i)``

with ``s_i = alpha - u^T K_i u / 2`` bounds how far the pair is from
optimality, and it is what the optimizers report as their duality gap.

The module also carries a deliberately plain projected-gradient oracle
that solves tiny instances through dense factorizations only; it shares no
code with the iterative solvers and is used to certify that the primal and
dual optimal values coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .fem import DensityBounds, hex_stiffness
from .mesh import MeshLevel, Problem

__all__ = [
    "compliance",
    "dual_objective",
    "duality_gap",
    "best_alpha_gap",
    "dual_from_slack",
    "project_box_simplex",
    "dense_element_matrices",
    "primal_oracle",
    "DualityCertificate",
    "strong_duality_report",
]


def compliance(f: np.ndarray, u: np.ndarray) -> float:
    """Primal objective ``f^T u / 2``."""
    return 0.5 * float(f @ u)


def dual_objective(
    alpha: float,
    fu: float,
    nu_lo: np.ndarray,
    nu_up: np.ndarray,
    bounds: DensityBounds,
) -> float:
    """Dual objective ``alpha V - f^T u - lo^T nu_lo + up^T nu_up``.

    ``fu`` is the full inner product ``f @ u``.
    """
    return (
        alpha * bounds.volume
        - fu
        - float(bounds.lower @ nu_lo)
        + float(bounds.upper @ nu_up)
    )


def duality_gap(alpha: float, q: np.ndarray, fu: float, bounds: DensityBounds) -> float:
    """Closed-form optimality bound at ``(u, alpha)``.

    ``q`` holds the element energies ``u^T K_i u / 2`` and ``fu = f @ u``.
    The value is nonnegative whenever ``u`` is attainable by a feasible
    density (it may go negative for badly infeasible iterates, which the
    interior-point stopping test tolerates in a narrow band).
    """
    slack = alpha - q
    terms = np.minimum(bounds.lower * slack, bounds.upper * slack)
    return -0.5 * fu + alpha * bounds.volume - float(terms.sum())


def best_alpha_gap(q: np.ndarray, fu: float, bounds: DensityBounds) -> tuple[float, float]:
    """Minimize the gap over ``alpha`` for a given displacement.

    The gap is convex piecewise linear in ``alpha`` with kinks at the
    element energies; the subgradient scan over the sorted kinks finds the
    exact minimizer. Returns ``(gap, alpha)``. Useful for methods (like the
    fixed-point update) whose own multiplier is not in gap units.
    """
    order = np.argsort(q)
    ql = q[order]
    lo = bounds.lower[order]
    up = bounds.upper[order]
    # derivative of the gap on the interval just above kink j
    deriv = bounds.volume - (np.cumsum(lo) + (up.sum() - np.cumsum(up)))
    j = int(np.argmax(deriv >= 0.0))
    alpha = float(ql[j])
    return duality_gap(alpha, q, fu, bounds), alpha


def dual_from_slack(alpha: float, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bound multipliers that make ``(u, alpha)`` dual feasible at equality.

    The construction splits the slack ``alpha - q_i`` into its positive part
    (carried by ``nu_lo``) and negative part (carried by ``nu_up``); it is
    exact also in the limit of a zero lower density bound.
    """
    slack = alpha - q
    return np.maximum(slack, 0.0), np.maximum(-slack, 0.0)


def project_box_simplex(y: np.ndarray, bounds: DensityBounds) -> np.ndarray:
    """Euclidean projection onto ``{lo <= rho <= up, sum(rho) = V}``."""
    lo_l = float((y - bounds.upper).min())
    hi_l = float((y - bounds.lower).max())

    def total(lam: float) -> float:
        return float(np.clip(y - lam, bounds.lower, bounds.upper).sum())

    for _ in range(200):
        mid = 0.5 * (lo_l + hi_l)
        if total(mid) > bounds.volume:
            lo_l = mid
        else:
            hi_l = mid
    lam = 0.5 * (lo_l + hi_l)
    out = np.clip(y - lam, bounds.lower, bounds.upper)
    # distribute the residual volume over the strictly interior entries
    free = (out > bounds.lower) & (out < bounds.upper)
    if free.any():
        out[free] += (bounds.volume - out.sum()) / free.sum()
    return np.clip(out, bounds.lower, bounds.upper)


def dense_element_matrices(
    level: MeshLevel, e_mod: float = 1.0, nu: float = 0.3
) -> np.ndarray:
    """Dense per-element stiffness contributions, shape ``(m, n, n)``.

    Deliberately naive scatter used by the certification oracles; only
    sensible for tiny instances.
    """
    if level.m * level.n * level.n > 5e7:
        raise ValueError("dense element matrices requested for a non-tiny instance")
    ke = hex_stiffness(e_mod, nu, level.edge)
    edof = level.dof[level.conn].reshape(level.m, 24)
    out = np.zeros((level.m, level.n, level.n))
    for e in range(level.m):
        d = edof[e]
        keep = d >= 0
        out[e][np.ix_(d[keep], d[keep])] = ke[np.ix_(keep, keep)]
    return out


@dataclass
class OracleResult:
    rho: np.ndarray
    value: float
    iterations: int
    stationarity: float


def primal_oracle(
    level: MeshLevel,
    bounds: DensityBounds,
    tol: float = 1e-11,
    max_iters: int = 50_000,
) -> OracleResult:
    """Projected gradient with exact line search on the primal program.

    Dense direct solves only. The compliance is convex in the density over
    the positive orthant, so the method converges to the global optimum;
    the flatness of the objective near the optimum makes the optimal value
    accurate to roughly the square of the stationarity tolerance.
    """
    kis = dense_element_matrices(level)
    f = level.load

    def solve_disp(rho: np.ndarray) -> np.ndarray:
        k = np.einsum("e,eij->ij", rho, kis)
        return np.linalg.solve(k, f)

    def value(rho: np.ndarray) -> float:
        try:
            return 0.5 * float(f @ solve_disp(rho))
        except np.linalg.LinAlgError:
            return np.inf

    rho = project_box_simplex(np.full(level.m, bounds.volume / level.m), bounds)
    step_norm = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        u = solve_disp(rho)
        grad = -0.5 * np.einsum("eij,i,j->e", kis, u, u)
        scale = (bounds.upper - bounds.lower).max() / max(float(np.abs(grad).max()), 1e-300)
        target = project_box_simplex(rho - scale * grad, bounds)
        d = target - rho
        step_norm = float(np.abs(d).max())
        if step_norm < tol:
            break
        ls = minimize_scalar(
            lambda s: value(rho + s * d),
            bounds=(0.0, 1.0),
            method="bounded",
            options={"xatol": 1e-14, "maxiter": 200},
        )
        s = float(ls.x)
        if value(rho + s * d) >= value(rho):
            break  # no further progress representable
        rho = rho + s * d
    return OracleResult(rho, value(rho), it, step_norm)


@dataclass
class DualityCertificate:
    """Outcome of the primal-vs-dual optimal value comparison."""

    primal_value: float
    dual_value: float
    difference: float
    max_complementarity: float
    rho_primal: np.ndarray
    converged: bool


def strong_duality_report(
    problem: Problem,
    rho_lower: float = 0.0,
    dual_tol: float = 1e-10,
    oracle_tol: float = 1e-11,
) -> DualityCertificate:
    """Certify that the primal and dual optimal values coincide.

    Runs the projected-gradient oracle on the primal and the multiplier
    method on the dual of a tiny instance and compares the optimal values;
    also reports the largest product ``nu_lo_i * nu_up_i`` at the dual
    solution (complementarity of the two bound multipliers).

    The dual program is solved in its minimization orientation, whose
    optimal value is the negative of the primal one (the equivalent
    max-form of the dual attains the primal value directly). The reported
    ``dual_value`` is therefore the negated minimum, the number that
    matches the primal objective.
    """
    from .pbm import PbmConfig, solve_pbm  # local import to avoid a cycle

    bounds = DensityBounds.for_problem(problem.m, problem.volume, rho_lower)
    oracle = primal_oracle(problem.fine, bounds, tol=oracle_tol)
    cfg = PbmConfig(tol=dual_tol, rho_lower=rho_lower, tol_newton_min=1e-6)
    report = solve_pbm(problem, cfg)
    nu_lo = report.extras["nu_lo"]
    nu_up = report.extras["nu_up"]
    dual_value = -report.dual_objective
    return DualityCertificate(
        primal_value=oracle.value,
        dual_value=dual_value,
        difference=abs(oracle.value - dual_value),
        max_complementarity=float((nu_lo * nu_up).max()),
        rho_primal=oracle.rho,
        converged=report.converged,
    )
