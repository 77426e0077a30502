"""Trilinear hexahedral elements and element-local assembly kernels.

All elements of a level are congruent cubes, so one 24x24 element stiffness
matrix (2x2x2 Gauss quadrature of ``B^T D B`` for isotropic linear
elasticity) serves the whole level and scales linearly with the edge
length. Global matrices are never formed row by row: every operator that
appears in the optimizers is a sum of element contributions

``sum_i  c_i * K_e  +  sum_i  g_i * w_i w_i^T``

scattered through the element dof maps, where ``w_i`` is the element-local
product ``K_i u``. ``ElementOps`` owns the gather/scatter index arrays and a
precomputed assembly pattern so repeated assemblies only pay for a value
fill and a segmented reduction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import BorderedMatrix
from .mesh import MeshLevel

__all__ = ["hex_stiffness", "DensityBounds", "ElementOps"]


def hex_stiffness(e_mod: float = 1.0, nu: float = 0.3, edge: float = 1.0) -> np.ndarray:
    """Element stiffness of a cube with edge ``edge``.

    Isotropic linear elasticity with Young's modulus ``e_mod`` and Poisson
    ratio ``nu``, integrated with 2x2x2 Gauss quadrature (exact for this
    integrand). The result is exactly symmetric and scales linearly with
    the edge length.
    """
    if edge <= 0.0:
        raise ValueError("edge length must be positive")
    if e_mod <= 0.0:
        raise ValueError("Young's modulus must be positive")
    if not 0.0 <= nu < 0.5:
        raise ValueError(
            f"Poisson ratio must lie in [0, 0.5), got {nu} "
            "(the constitutive matrix is singular at 0.5)"
        )
    lam = e_mod * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = e_mod / (2.0 * (1.0 + nu))
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[np.arange(3), np.arange(3)] = lam + 2.0 * mu
    d[np.arange(3, 6), np.arange(3, 6)] = mu

    # reference corners in vtk order, coordinates in {-1, 1}
    corners = np.array(
        [
            (-1, -1, -1),
            (1, -1, -1),
            (1, 1, -1),
            (-1, 1, -1),
            (-1, -1, 1),
            (1, -1, 1),
            (1, 1, 1),
            (-1, 1, 1),
        ],
        dtype=float,
    )
    g = 1.0 / np.sqrt(3.0)
    jac = edge / 2.0
    k = np.zeros((24, 24))
    for gx in (-g, g):
        for gy in (-g, g):
            for gz in (-g, g):
                xi = np.array([gx, gy, gz])
                # dN/dxi for the 8 trilinear shape functions
                dn = np.empty((8, 3))
                for a in range(8):
                    ca = corners[a]
                    dn[a, 0] = 0.125 * ca[0] * (1 + ca[1] * xi[1]) * (1 + ca[2] * xi[2])
                    dn[a, 1] = 0.125 * ca[1] * (1 + ca[0] * xi[0]) * (1 + ca[2] * xi[2])
                    dn[a, 2] = 0.125 * ca[2] * (1 + ca[0] * xi[0]) * (1 + ca[1] * xi[1])
                dn /= jac  # physical derivatives
                b = np.zeros((6, 24))
                for a in range(8):
                    c = 3 * a
                    b[0, c] = dn[a, 0]
                    b[1, c + 1] = dn[a, 1]
                    b[2, c + 2] = dn[a, 2]
                    b[3, c] = dn[a, 1]
                    b[3, c + 1] = dn[a, 0]
                    b[4, c + 1] = dn[a, 2]
                    b[4, c + 2] = dn[a, 1]
                    b[5, c] = dn[a, 2]
                    b[5, c + 2] = dn[a, 0]
                k += jac**3 * (b.T @ d @ b)
    return 0.5 * (k + k.T)


@dataclass(frozen=True)
class DensityBounds:
    """Element density box and total volume budget (in element units)."""

    lower: np.ndarray
    upper: np.ndarray
    volume: float

    def __post_init__(self) -> None:
        if np.any(self.lower < 0.0) or np.any(self.upper <= self.lower):
            raise ValueError("density bounds must satisfy 0 <= lower < upper")
        if not self.lower.sum() <= self.volume <= self.upper.sum():
            raise ValueError("volume budget is outside the density box")

    @classmethod
    def for_problem(cls, m: int, volume: float, rho_lower: float) -> "DensityBounds":
        return cls(np.full(m, rho_lower), np.ones(m), volume)


class _AssemblyPattern:
    """Sorted coo->csr map reused across assemblies with a fixed pattern."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, n: int):
        lex = rows.astype(np.int64) * n + cols
        self.order = np.argsort(lex, kind="stable")
        sl = lex[self.order]
        self.starts = np.flatnonzero(np.r_[True, sl[1:] != sl[:-1]])
        urows = rows[self.order[self.starts]].astype(np.int64)
        self.indices = cols[self.order[self.starts]].astype(np.int32)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(urows, minlength=n), out=self.indptr[1:])
        self.n = n

    def build(self, values: np.ndarray) -> sp.csr_matrix:
        data = np.add.reduceat(values[self.order], self.starts)
        a = sp.csr_matrix(
            (data, self.indices, self.indptr), shape=(self.n, self.n), copy=False
        )
        a.has_sorted_indices = True
        return a


class ElementOps:
    """Gather/scatter kernels and assembly for one mesh level.

    Fixed dofs are routed to a scratch slot past the end of the free-dof
    range: gathers read a zero there and scatters drop what lands on it,
    so element loops never branch on boundary conditions.
    """

    def __init__(self, level: MeshLevel, e_mod: float = 1.0, nu: float = 0.3):
        self.level = level
        self.n = level.n
        self.m = level.m
        self.ke = hex_stiffness(e_mod, nu, level.edge)
        edof = level.dof[level.conn].reshape(self.m, 24)
        self.edof = np.where(edof < 0, self.n, edof).astype(np.int64)
        rows = np.repeat(self.edof, 24, axis=1).ravel()
        cols = np.tile(self.edof, (1, 24)).ravel()
        self._mask = (rows != self.n) & (cols != self.n)
        self._pattern = _AssemblyPattern(
            rows[self._mask], cols[self._mask], self.n
        )

    # -- element-vector plumbing ------------------------------------------

    def gather(self, u: np.ndarray) -> np.ndarray:
        """Element-local copies of a free-dof vector, shape (m, 24)."""
        return np.append(u, 0.0)[self.edof]

    def scatter(self, w: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`gather`: accumulate (m, 24) into a free-dof vector."""
        out = np.bincount(self.edof.ravel(), weights=w.ravel(), minlength=self.n + 1)
        return out[: self.n]

    def element_products(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-element ``K_i u`` (local frame) and energies ``q_i = u^T K_i u / 2``."""
        ue = self.gather(u)
        w = ue @ self.ke
        q = 0.5 * np.einsum("ij,ij->i", w, ue)
        return w, q

    def dot_elements(self, w: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Per-element inner products ``w_i . u|_i`` for a free-dof vector u."""
        return np.einsum("ij,ij->i", w, self.gather(u))

    # -- matrix assembly ----------------------------------------------------

    def assemble(
        self,
        ke_coef: np.ndarray,
        rank1_coef: np.ndarray | None = None,
        w: np.ndarray | None = None,
        border_sign: float | None = None,
    ):
        """Assemble ``sum_i ke_coef_i K_i + sum_i rank1_coef_i v_i v_i^T``.

        With ``border_sign`` set, ``v_i = [w_i; border_sign]`` and the result
        is a :class:`BorderedMatrix`; otherwise ``v_i = w_i`` and a plain CSR
        matrix over the free dofs is returned.
        """
        vals = ke_coef[:, None, None] * self.ke
        if rank1_coef is not None:
            vals = vals + rank1_coef[:, None, None] * (w[:, :, None] * w[:, None, :])
        core = self._pattern.build(vals.reshape(-1)[self._mask])
        if border_sign is None:
            return core
        border = border_sign * self.scatter(rank1_coef[:, None] * w)
        corner = float(rank1_coef.sum())
        return BorderedMatrix(core, border, corner)

    def assemble_stiffness(self, rho: np.ndarray) -> sp.csr_matrix:
        """Global stiffness ``K(rho) = sum_i rho_i K_i`` on the free dofs."""
        if np.any(rho < 0.0):
            warnings.warn(
                "assembling K(rho) with negative densities; the operator may be indefinite",
                RuntimeWarning,
                stacklevel=2,
            )
        return self.assemble(rho)
