"""Bordered sparse matrices, MINRES, and inner-tolerance policies.

The reduced Newton systems of all three optimizers are symmetric positive
definite matrices of the form ``[[A, c], [c^T, d]]`` with a sparse ``n x n``
core ``A``, a dense border column ``c`` and a scalar corner ``d`` (the
border carries the single volume-multiplier unknown). ``BorderedMatrix``
wraps that structure; ``border=None`` degrades it to a plain sparse matrix
so the equilibrium solves of the fixed-point method use the same machinery.

``minres_solve`` is the Lanczos/Givens implementation of the minimal
residual method with an SPD preconditioner. Convergence is declared only
after the true relative residual ``||b - Ax|| / ||b||`` has been checked,
so the documented stopping contract holds independently of the
preconditioner scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np
import scipy.sparse as sp

__all__ = [
    "BorderedMatrix",
    "MinresConfig",
    "MinresResult",
    "MinresError",
    "minres_solve",
    "FixedTolerance",
    "StagnationTolerance",
    "ComplementarityTolerance",
]


@dataclass
class BorderedMatrix:
    """Symmetric sparse matrix with an optional dense border row/column."""

    core: sp.csr_matrix
    border: np.ndarray | None = None
    corner: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        n = self.core.shape[0]
        if self.border is None:
            return (n, n)
        return (n + 1, n + 1)

    @property
    def core_dim(self) -> int:
        return self.core.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.border is None:
            return self.core @ x
        y = np.empty_like(x)
        y[:-1] = self.core @ x[:-1] + self.border * x[-1]
        y[-1] = self.border @ x[:-1] + self.corner * x[-1]
        return y

    def to_dense(self) -> np.ndarray:
        a = self.core.toarray()
        if self.border is None:
            return a
        n = a.shape[0]
        d = np.empty((n + 1, n + 1))
        d[:n, :n] = a
        d[:n, n] = self.border
        d[n, :n] = self.border
        d[n, n] = self.corner
        return d

    def galerkin(self, p: sp.csr_matrix) -> "BorderedMatrix":
        """Coarse-grid operator ``P^T A P``; the border transfers by identity."""
        core = (p.T @ (self.core @ p)).tocsr()
        core = ((core + core.T) * 0.5).tocsr()  # keep exact symmetry
        border = None if self.border is None else p.T @ self.border
        return BorderedMatrix(core, border, self.corner)


@dataclass
class MinresConfig:
    """Stopping control: relative tolerance, iteration cap, tolerance floor."""

    tol: float = 1e-4
    max_iters: int = 0  # 0 -> 3 * system dimension
    floor: float = 1e-9

    def __post_init__(self) -> None:
        if not 0.0 < self.tol < 1.0:
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass
class MinresResult:
    x: np.ndarray
    iterations: int
    relres: float
    converged: bool


class MinresError(RuntimeError):
    """Breakdown, NaN recurrence, or indefinite preconditioner.

    Carries the last numerically sound iterate as ``x``.
    """

    def __init__(self, message: str, x: np.ndarray | None = None):
        super().__init__(message)
        self.x = x


def _as_matvec(a):
    if isinstance(a, BorderedMatrix):
        return a.matvec
    if sp.issparse(a):
        return lambda x: a @ x
    if isinstance(a, np.ndarray):
        return lambda x: a @ x
    return a  # assume callable


def minres_solve(a, b, config: MinresConfig, precond=None, x0=None) -> MinresResult:
    """Preconditioned MINRES for symmetric systems ``A x = b``.

    Parameters
    ----------
    a : BorderedMatrix, sparse matrix, ndarray or callable
        The symmetric operator.
    b : ndarray
        Right-hand side.
    config : MinresConfig
        Tolerance and iteration cap. Convergence means the *true* relative
        residual ``||b - A x|| <= tol * ||b||``.
    precond : callable, optional
        Application of an SPD preconditioner, ``z = M(v)``. Indefiniteness
        (a negative ``<M v, v>``) raises :class:`MinresError`.
    x0 : ndarray, optional
        Warm-start iterate.
    """
    matvec = _as_matvec(a)
    n = b.size
    max_iters = config.max_iters if config.max_iters > 0 else 3 * n
    normb = float(np.linalg.norm(b))
    if normb == 0.0:
        return MinresResult(np.zeros(n), 0, 0.0, True)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r1 = b - matvec(x) if x0 is not None else b.astype(float, copy=True)
    if x0 is not None:
        relres0 = float(np.linalg.norm(r1)) / normb
        # Return outright only when the warm start already sits at the
        # tolerance floor.  A warm start that merely satisfies ``tol`` still
        # enters the iteration: the stopping estimate below measures the
        # reduction of the *initial* residual, so successive warm-started
        # solves keep tightening the iterate instead of freezing it, which
        # outer fixed-point loops rely on when their own tolerance is
        # stricter than ``tol``.
        if relres0 <= config.floor:
            return MinresResult(x, 0, relres0, True)
    y = precond(r1) if precond is not None else r1.copy()
    beta1 = float(r1 @ y)
    if beta1 < 0.0:
        raise MinresError("preconditioner is indefinite: <M r, r> < 0", x)
    if beta1 == 0.0:
        # r is in the null space of M; with an SPD preconditioner this means r = 0
        return MinresResult(x, 0, float(np.linalg.norm(b - matvec(x))) / normb, True)
    beta1 = sqrt(beta1)

    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs = -1.0
    sn = 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1

    iters = 0
    verify_at = config.tol  # estimate level at which to pay for a true-residual check
    relres = np.inf
    x_safe = x.copy()

    while iters < max_iters:
        iters += 1
        s = 1.0 / beta
        v = s * y
        y = matvec(v)
        if iters >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = precond(r2) if precond is not None else r2.copy()
        oldb = beta
        beta = float(r2 @ y)
        if beta < 0.0:
            raise MinresError("preconditioner is indefinite: <M r, r> < 0", x_safe)
        beta = sqrt(beta)

        # Givens rotation updating the tridiagonal QR factorization
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = sqrt(gbar * gbar + beta * beta)
        if not np.isfinite(gamma) or gamma == 0.0:
            raise MinresError("MINRES recurrence broke down", x_safe)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        if not np.isfinite(phibar) or not np.all(np.isfinite(x)):
            raise MinresError("NaN/inf encountered in MINRES recurrences", x_safe)
        x_safe = x

        est = phibar / beta1
        if est <= verify_at:
            relres = float(np.linalg.norm(b - matvec(x))) / normb
            if relres <= config.tol:
                return MinresResult(x, iters, relres, True)
            # The preconditioned-norm estimate ran ahead of the true
            # residual; require a proportionally smaller estimate before
            # paying for the next check.
            verify_at = est * min(0.5, config.tol / relres)

    relres = float(np.linalg.norm(b - matvec(x))) / normb
    return MinresResult(x, iters, relres, relres <= config.tol)


# ---------------------------------------------------------------------------
# Inner-tolerance policies
# ---------------------------------------------------------------------------


@dataclass
class FixedTolerance:
    """Constant inner tolerance (used by the fixed-point method)."""

    tol: float = 1e-4

    def current(self) -> float:
        return self.tol


@dataclass
class StagnationTolerance:
    """Shrinks the tolerance tenfold when the outer residual stagnates.

    The trigger compares consecutive outer (Newton) residuals: if the new
    one fails to drop below 90% of the previous one, the inner solves are
    considered too loose and the tolerance is reduced, never below the
    floor. The comparison window is reset at the start of each Newton run;
    the tolerance value itself persists.
    """

    tol: float
    floor: float = 1e-9
    shrink: float = 0.1
    trigger: float = 0.9
    _prev: float | None = field(default=None, init=False, repr=False)

    def current(self) -> float:
        return self.tol

    def reset(self) -> None:
        self._prev = None

    def observe(self, residual: float) -> None:
        if self._prev is not None and residual > self.trigger * self._prev:
            self.tol = max(self.shrink * self.tol, self.floor)
        self._prev = residual


@dataclass
class ComplementarityTolerance:
    """Ties the tolerance to the largest complementarity product.

    The tolerance is the monotone running minimum of
    ``max(scale * d, floor)`` where ``d`` is the observed maximum
    complementarity pairing; it never increases.
    """

    tol: float = 1e-2
    floor: float = 1e-9
    scale: float = 100.0

    def current(self) -> float:
        return self.tol

    def observe(self, comp_max: float) -> None:
        cand = max(self.scale * comp_max, self.floor)
        if cand < self.tol:
            self.tol = cand
