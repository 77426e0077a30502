"""Geometric multigrid V-cycle used as an SPD preconditioner.

The hierarchy is built by Galerkin coarsening of the fine-level operator
through the trilinear interpolation chain, so the same code serves plain
stiffness matrices and bordered Schur complements (the border unknown is
transferred by identity). Smoothing is symmetric Gauss-Seidel -- two
forward sweeps before and two backward sweeps after the coarse-grid
correction -- restricted to the core unknowns; on the finest level the
border unknown additionally receives a single diagonal relaxation on each
side of the cycle, keeping the overall operator symmetric. The coarsest
system is factored densely by Cholesky, with a tiny trace-scaled shift as
a fallback for semidefinite corner cases.

One application of :meth:`MgPreconditioner.apply` performs exactly one
V-cycle starting from a zero initial guess, which is what MINRES requires
of a (fixed, symmetric, positive definite) preconditioner.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from numba import njit

from .linalg import BorderedMatrix

__all__ = ["MgPreconditioner"]

log = logging.getLogger(__name__)


@njit(cache=True)
def _gs_forward(indptr, indices, data, x, b, sweeps):
    for _ in range(sweeps):
        for i in range(x.size):
            s = b[i]
            diag = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                v = data[jj]
                if j == i:
                    diag = v
                else:
                    s -= v * x[j]
            x[i] = s / diag


@njit(cache=True)
def _gs_backward(indptr, indices, data, x, b, sweeps):
    for _ in range(sweeps):
        for i in range(x.size - 1, -1, -1):
            s = b[i]
            diag = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                v = data[jj]
                if j == i:
                    diag = v
                else:
                    s -= v * x[j]
            x[i] = s / diag


class MgPreconditioner:
    """Symmetric V(2,2) cycle on a Galerkin hierarchy.

    Parameters
    ----------
    fine : BorderedMatrix or sparse matrix
        Finest-level operator (must be symmetric positive definite).
    transfers : sequence of csr_matrix
        Interpolation chain, coarsest pair first: ``transfers[k]`` maps
        level ``k`` to level ``k+1`` and the last entry targets ``fine``.
        An empty chain degenerates the cycle to a dense direct solve.
    sweeps : int
        Gauss-Seidel sweeps on each side of the coarse-grid correction.
    """

    def __init__(self, fine, transfers, sweeps: int = 2, shift_scale: float = 1e-12):
        if sp.issparse(fine):
            fine = BorderedMatrix(fine.tocsr(), None, 0.0)
        self.transfers = list(transfers)
        self.sweeps = sweeps
        self.mats: list[BorderedMatrix] = [fine]
        for p in reversed(self.transfers):
            self.mats.append(self.mats[-1].galerkin(p))
        self.mats.reverse()  # now coarsest first, aligned with transfers
        self.shifted = False
        dense = self.mats[0].to_dense()
        try:
            self.coarse = sla.cho_factor(dense, check_finite=False)
        except np.linalg.LinAlgError:
            shift = shift_scale * np.trace(dense) / dense.shape[0]
            log.warning(
                "coarse matrix is not positive definite; retrying Cholesky "
                "with shift %.3e", shift,
            )
            dense = dense + shift * np.eye(dense.shape[0])
            self.coarse = sla.cho_factor(dense, check_finite=False)
            self.shifted = True

    @property
    def levels(self) -> int:
        return len(self.mats)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """One V-cycle for ``A z = v`` from a zero initial guess."""
        return self._cycle(self.levels - 1, v)

    def _cycle(self, k: int, b: np.ndarray) -> np.ndarray:
        if k == 0:
            return sla.cho_solve(self.coarse, b, check_finite=False)
        a = self.mats[k]
        bordered = a.border is not None
        finest = k == self.levels - 1
        x = np.zeros_like(b)

        if bordered and finest:
            x[-1] = b[-1] / a.corner
        self._smooth(a, x, b, bordered, forward=True)

        r = b - a.matvec(x)
        p = self.transfers[k - 1]
        if bordered:
            rc = np.empty(p.shape[1] + 1)
            rc[:-1] = p.T @ r[:-1]
            rc[-1] = r[-1]
        else:
            rc = p.T @ r
        e = self._cycle(k - 1, rc)
        if bordered:
            x[:-1] += p @ e[:-1]
            x[-1] += e[-1]
        else:
            x += p @ e

        self._smooth(a, x, b, bordered, forward=False)
        if bordered and finest:
            x[-1] += (b[-1] - a.border @ x[:-1] - a.corner * x[-1]) / a.corner
        return x

    def _smooth(self, a: BorderedMatrix, x, b, bordered: bool, forward: bool) -> None:
        core = a.core
        if bordered:
            badj = b[:-1] - a.border * x[-1]
            xc = x[:-1]
        else:
            badj = b
            xc = x
        sweep = _gs_forward if forward else _gs_backward
        sweep(core.indptr, core.indices, core.data, xc, badj, self.sweeps)
