"""Multigrid-accelerated solvers for variable-thickness-sheet topology
optimization: a penalty-barrier multiplier method on the dual program, a
primal-dual interior-point method, and a damped optimality-criteria
iteration, all over one hexahedral finite-element core with
multigrid-preconditioned MINRES as the inner linear solver.
"""

from .doc import DocConfig, solve_doc
from .fem import DensityBounds, ElementOps, hex_stiffness
from .ip import IpConfig, solve_ip
from .linalg import BorderedMatrix, MinresConfig, MinresError, minres_solve
from .mesh import BoundarySpec, CoarseSpec, MeshLevel, Problem, build_problem, parse_name
from .model import best_alpha_gap, compliance, duality_gap, strong_duality_report
from .multigrid import MgPreconditioner
from .pbm import PbmConfig, solve_pbm
from .penalty import PenaltyBarrier
from .report import SolveReport, read_summary, write_csv, write_summary
from .vtkio import read_density_vtk, write_density_vtk, write_filtered_vtk

__version__ = "0.1.0"

__all__ = [
    "BorderedMatrix",
    "BoundarySpec",
    "CoarseSpec",
    "DensityBounds",
    "DocConfig",
    "ElementOps",
    "IpConfig",
    "MeshLevel",
    "MgPreconditioner",
    "MinresConfig",
    "MinresError",
    "PbmConfig",
    "PenaltyBarrier",
    "Problem",
    "SolveReport",
    "best_alpha_gap",
    "build_problem",
    "compliance",
    "duality_gap",
    "hex_stiffness",
    "minres_solve",
    "parse_name",
    "read_density_vtk",
    "read_summary",
    "solve_doc",
    "solve_ip",
    "solve_pbm",
    "strong_duality_report",
    "write_csv",
    "write_density_vtk",
    "write_filtered_vtk",
    "write_summary",
    "__version__",
]
