"""Legacy ASCII VTK export of element density fields.

Densities live on the cells of a regular hexahedral grid, so the files use
the STRUCTURED_POINTS dataset with one CELL_DATA scalar field. Values are
written with shortest round-trip precision: reading a file back yields the
in-memory vector bit-exactly. A second "filtered" file supports the usual
visualization cut: keep only the densest elements whose densities sum up
to a fixed proportion of the volume budget (default 0.8 V), zeroing the
rest.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = [
    "write_density_vtk",
    "read_density_vtk",
    "densest_prefix_mask",
    "write_filtered_vtk",
]


def write_density_vtk(
    path: str | Path,
    shape: tuple[int, int, int],
    edge: float,
    rho: np.ndarray,
    field: str = "rho",
    title: str = "element densities",
) -> None:
    """Write one cell scalar field on a regular grid (legacy ASCII VTK).

    ``shape`` counts elements per axis; cells are listed x-fastest, matching
    the element ordering used everywhere else in the package.
    """
    ex, ey, ez = shape
    m = ex * ey * ez
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (m,):
        raise ValueError(f"expected {m} cell values for shape {shape}, got {rho.shape}")
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {ex + 1} {ey + 1} {ez + 1}",
        "ORIGIN 0.0 0.0 0.0",
        f"SPACING {edge!r} {edge!r} {edge!r}",
        f"CELL_DATA {m}",
        f"SCALARS {field} double",
        "LOOKUP_TABLE default",
    ]
    lines.extend(repr(float(v)) for v in rho)
    Path(path).write_text("\n".join(lines) + "\n")


def read_density_vtk(path: str | Path) -> tuple[tuple[int, int, int], float, np.ndarray]:
    """Read a file written by :func:`write_density_vtk`.

    Returns ``(element shape, spacing, cell values)``.
    """
    text = Path(path).read_text().splitlines()
    shape = None
    spacing = None
    values: list[float] = []
    it = iter(text)
    for line in it:
        token = line.split()
        if not token:
            continue
        if token[0] == "DIMENSIONS":
            nx, ny, nz = (int(t) for t in token[1:4])
            shape = (nx - 1, ny - 1, nz - 1)
        elif token[0] == "SPACING":
            spacing = float(token[1])
        elif token[0] == "LOOKUP_TABLE":
            values = [float(next(it)) for _ in range(shape[0] * shape[1] * shape[2])]
            break
    if shape is None or spacing is None:
        raise ValueError(f"{path}: not a structured-points density file")
    return shape, spacing, np.asarray(values)


def densest_prefix_mask(rho: np.ndarray, target: float) -> np.ndarray:
    """Mask of the densest elements whose densities sum up to ``target``.

    Greedy by descending density: elements are kept while the running sum
    stays at or below the target, so the kept total lands in
    ``(target - max(rho), target]``.
    """
    order = np.argsort(-rho, kind="stable")
    keep_sorted = np.cumsum(rho[order]) <= target
    mask = np.zeros(rho.size, dtype=bool)
    mask[order[keep_sorted]] = True
    return mask


def write_filtered_vtk(
    path: str | Path,
    shape: tuple[int, int, int],
    edge: float,
    rho: np.ndarray,
    volume: float,
    cutoff: float = 0.8,
) -> np.ndarray:
    """Write the visualization cut: densest elements summing to cutoff*V.

    Dropped cells are written as zero so the grid stays intact. Returns the
    keep mask.
    """
    mask = densest_prefix_mask(np.asarray(rho, dtype=float), cutoff * volume)
    filtered = np.where(mask, rho, 0.0)
    write_density_vtk(
        path, shape, edge, filtered, title=f"densest elements up to {cutoff:g} of the volume"
    )
    return mask
