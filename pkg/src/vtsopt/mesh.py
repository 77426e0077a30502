"""Nested hexahedral mesh hierarchies on box domains.

The design domain is a coarse grid of unit cubes that is refined uniformly:
each refinement halves the element edge, so level ``k`` (1-based) has edge
length ``2**(1-k)`` and ``mx*my*mz * 8**(k-1)`` elements. Nodes and elements
are numbered lexicographically with x fastest, then y, then z. Dirichlet
degrees of freedom are eliminated from the assembled systems, and every
level carries its own fixed-node set and load vector so that the hierarchy
is self-similar.

Two problem families are built in:

* ``cantilever`` -- the ``x = 0`` face is clamped and a total load of 1.0
  acts in ``-z``, split equally over the node(s) nearest the center of the
  ``x = max`` face.
* ``bridge`` -- the four corner nodes of the bottom face are pinned and a
  total load of 1.0 in ``-z`` is spread uniformly over a centered
  rectangular patch of the top face spanning roughly half the span in each
  direction.

Problems are named ``CANT-mx-my-mz-L`` / ``BRIDGE-mx-my-mz-L``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "CoarseSpec",
    "BoundarySpec",
    "MeshLevel",
    "Problem",
    "build_problem",
    "parse_name",
    "prolong",
    "restrict",
]

_NAME_RE = re.compile(r"^(CANT|BRIDGE)-(\d+)-(\d+)-(\d+)-(\d+)$", re.IGNORECASE)

# Corner offsets of a hexahedron in (dx, dy, dz), standard vtk ordering:
# bottom face counter-clockwise, then top face.
_CORNERS = (
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
)


@dataclass(frozen=True)
class CoarseSpec:
    """Coarse grid extents (in unit cubes) and number of refinement levels."""

    mx: int
    my: int
    mz: int
    levels: int

    def __post_init__(self) -> None:
        for name in ("mx", "my", "mz", "levels"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    def shape_at(self, level: int) -> tuple[int, int, int]:
        """Element counts per axis on 1-based refinement level ``level``."""
        s = 2 ** (level - 1)
        return (self.mx * s, self.my * s, self.mz * s)


@dataclass(frozen=True)
class BoundarySpec:
    """Problem family selecting the fixed-node and loaded-node rules."""

    family: str  # "cantilever" or "bridge"

    def __post_init__(self) -> None:
        if self.family not in ("cantilever", "bridge"):
            raise ValueError(f"unknown problem family {self.family!r}")

    def fixed_mask(self, shape: tuple[int, int, int]) -> np.ndarray:
        """Boolean mask over nodes that are clamped (all three dofs)."""
        ex, ey, ez = shape
        nx, ny, nz = ex + 1, ey + 1, ez + 1
        mask = np.zeros(nx * ny * nz, dtype=bool)
        if self.family == "cantilever":
            # the whole x = 0 face
            ids = np.arange(nx * ny * nz)
            mask[ids % nx == 0] = True
        else:
            # the four corner nodes of the bottom face z = 0
            for ix, iy in ((0, 0), (ex, 0), (0, ey), (ex, ey)):
                mask[ix + nx * iy] = True
        return mask

    def load_nodes(self, shape: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray]:
        """Node ids and per-node weights of the -z surface load (total 1.0)."""
        ex, ey, ez = shape
        nx, ny = ex + 1, ey + 1
        if self.family == "cantilever":
            # node(s) nearest the center of the x = max face
            ys = np.unique([ey // 2, (ey + 1) // 2])
            zs = np.unique([ez // 2, (ez + 1) // 2])
            iy, iz = np.meshgrid(ys, zs, indexing="ij")
            ids = ex + nx * (iy.ravel() + ny * iz.ravel())
            weights = np.full(ids.size, 1.0 / ids.size)
            return ids, weights
        # bridge: centered element patch on the top face, about half the span
        # per axis, widened by one element when needed so it can be centered.
        px = _patch_extent(ex)
        py = _patch_extent(ey)
        sx = (ex - px) // 2
        sy = (ey - py) // 2
        exi, eyi = np.meshgrid(np.arange(sx, sx + px), np.arange(sy, sy + py), indexing="ij")
        exi = exi.ravel()
        eyi = eyi.ravel()
        per_face = 1.0 / (px * py)
        acc: dict[int, float] = {}
        top = nx * ny * ez
        for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
            ids = top + (exi + dx) + nx * (eyi + dy)
            for i in ids:
                acc[int(i)] = acc.get(int(i), 0.0) + 0.25 * per_face
        ids = np.array(sorted(acc), dtype=np.int64)
        weights = np.array([acc[int(i)] for i in ids])
        return ids, weights


def _patch_extent(n: int) -> int:
    p = max(1, round(n / 2))
    if (n - p) % 2 == 1:
        p += 1
    return min(p, n)


@dataclass
class MeshLevel:
    """One refinement level: connectivity, dof numbering and load vector."""

    index: int  # 1-based, 1 = coarsest
    shape: tuple[int, int, int]
    edge: float
    conn: np.ndarray  # (m, 8) node ids, vtk corner order
    fixed: np.ndarray  # (n_nodes,) bool
    dof: np.ndarray  # (n_nodes, 3) free-dof index or -1
    n: int  # number of free dofs
    load: np.ndarray  # (n,) nodal load vector, total resultant (0, 0, -1)

    @property
    def m(self) -> int:
        return self.conn.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.fixed.size

    @property
    def node_shape(self) -> tuple[int, int, int]:
        ex, ey, ez = self.shape
        return (ex + 1, ey + 1, ez + 1)


@dataclass
class Problem:
    """A named instance: mesh hierarchy, transfers, load and volume budget."""

    name: str
    spec: CoarseSpec
    boundary: BoundarySpec
    levels: list[MeshLevel]
    transfers: list[sp.csr_matrix]  # transfers[k] maps levels[k] -> levels[k+1]
    vol_frac: float
    volume: float = field(init=False)

    def __post_init__(self) -> None:
        self.volume = self.vol_frac * self.fine.m

    @property
    def fine(self) -> MeshLevel:
        return self.levels[-1]

    @property
    def m(self) -> int:
        return self.fine.m

    @property
    def n(self) -> int:
        return self.fine.n

    @property
    def f(self) -> np.ndarray:
        return self.fine.load


def parse_name(name: str) -> tuple[CoarseSpec, BoundarySpec]:
    """Parse ``CANT-mx-my-mz-L`` / ``BRIDGE-mx-my-mz-L`` instance names."""
    m = _NAME_RE.match(name.strip())
    if m is None:
        raise ValueError(
            f"malformed problem name {name!r}; expected CANT-mx-my-mz-L or BRIDGE-mx-my-mz-L"
        )
    family = "cantilever" if m.group(1).upper() == "CANT" else "bridge"
    mx, my, mz, levels = (int(m.group(i)) for i in range(2, 6))
    return CoarseSpec(mx, my, mz, levels), BoundarySpec(family)


def build_problem(name: str, *, vol_frac: float = 0.35, levels: int | None = None) -> Problem:
    """Build the full hierarchy for a named instance.

    Parameters
    ----------
    name : str
        Instance name, e.g. ``"CANT-16-2-2-5"``.
    vol_frac : float
        Volume budget as a fraction of the element count (the density sum
        constraint is ``sum(rho) = vol_frac * m``).
    levels : int, optional
        Override the level count embedded in the name.
    """
    spec, boundary = parse_name(name)
    if levels is not None:
        spec = CoarseSpec(spec.mx, spec.my, spec.mz, levels)
        name = _render_name(boundary, spec)
    if not 0.0 < vol_frac < 1.0:
        raise ValueError(f"vol_frac must lie in (0, 1), got {vol_frac}")
    mesh_levels = [_build_level(spec, boundary, k) for k in range(1, spec.levels + 1)]
    transfers = [
        _interpolation(mesh_levels[k], mesh_levels[k + 1]) for k in range(spec.levels - 1)
    ]
    return Problem(name, spec, boundary, mesh_levels, transfers, vol_frac)


def _render_name(boundary: BoundarySpec, spec: CoarseSpec) -> str:
    tag = "CANT" if boundary.family == "cantilever" else "BRIDGE"
    return f"{tag}-{spec.mx}-{spec.my}-{spec.mz}-{spec.levels}"


def _build_level(spec: CoarseSpec, boundary: BoundarySpec, k: int) -> MeshLevel:
    shape = spec.shape_at(k)
    ex, ey, ez = shape
    nx, ny, nz = ex + 1, ey + 1, ez + 1
    m = ex * ey * ez

    e = np.arange(m, dtype=np.int64)
    exi = e % ex
    eyi = (e // ex) % ey
    ezi = e // (ex * ey)
    base = exi + nx * (eyi + ny * ezi)
    off = np.array([dx + nx * (dy + ny * dz) for dx, dy, dz in _CORNERS], dtype=np.int64)
    conn = base[:, None] + off[None, :]

    fixed = boundary.fixed_mask(shape)
    free = ~fixed
    n = int(3 * free.sum())
    if n == 0:
        raise ValueError(f"level {k} of {spec} has no free degrees of freedom")
    dof = np.full((nx * ny * nz, 3), -1, dtype=np.int64)
    dof[free] = np.arange(n, dtype=np.int64).reshape(-1, 3)

    ids, weights = boundary.load_nodes(shape)
    if ids.size == 0:
        raise ValueError(f"level {k} of {spec} has an empty loaded-node set")
    load = np.zeros(n)
    zdofs = dof[ids, 2]
    if np.any(zdofs < 0):
        raise ValueError("a loaded node is fixed; the instance is degenerate")
    np.add.at(load, zdofs, -weights)

    return MeshLevel(
        index=k,
        shape=shape,
        edge=2.0 ** (1 - k),
        conn=conn,
        fixed=fixed,
        dof=dof,
        n=n,
        load=load,
    )


def _interpolation(coarse: MeshLevel, fine: MeshLevel) -> sp.csr_matrix:
    """Trilinear interpolation matrix mapping coarse free dofs to fine ones.

    Each fine node draws from its (up to eight) coarse parents with tensor
    weights in {1, 1/2, 1/4, 1/8}; entries whose endpoint is a fixed dof are
    dropped, which is consistent with homogeneous Dirichlet data. Restriction
    is the transpose.
    """
    fnx, fny, fnz = fine.node_shape
    cnx, cny, _ = coarse.node_shape
    ids = np.arange(fnx * fny * fnz, dtype=np.int64)
    fx = ids % fnx
    fy = (ids // fnx) % fny
    fz = ids // (fnx * fny)
    oddx, oddy, oddz = fx % 2 == 1, fy % 2 == 1, fz % 2 == 1
    wnode = (
        np.where(oddx, 0.5, 1.0) * np.where(oddy, 0.5, 1.0) * np.where(oddz, 0.5, 1.0)
    )

    rows, cols, vals = [], [], []
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                valid = (oddx | (dx == 0)) & (oddy | (dy == 0)) & (oddz | (dz == 0))
                cx = np.where(oddx, (fx - 1) // 2 + dx, fx // 2)
                cy = np.where(oddy, (fy - 1) // 2 + dy, fy // 2)
                cz = np.where(oddz, (fz - 1) // 2 + dz, fz // 2)
                cid = cx + cnx * (cy + cny * cz)
                fsel = ids[valid]
                csel = cid[valid]
                for comp in range(3):
                    r = fine.dof[fsel, comp]
                    c = coarse.dof[csel, comp]
                    keep = (r >= 0) & (c >= 0)
                    rows.append(r[keep])
                    cols.append(c[keep])
                    vals.append(wnode[fsel][keep])
    p = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(fine.n, coarse.n),
    )
    p.sum_duplicates()
    return p


def prolong(p: sp.csr_matrix, v: np.ndarray) -> np.ndarray:
    """Interpolate a coarse free-dof vector to the next finer level."""
    return p @ v


def restrict(p: sp.csr_matrix, v: np.ndarray) -> np.ndarray:
    """Restrict a fine free-dof vector to the next coarser level (transpose)."""
    return p.T @ v
