"""Adaptive mixed finite elements for second-order elliptic problems in 2D.

The lowest-order Raviart-Thomas / piecewise-constant mixed discretization is
solved through its equivalent nonconforming Crouzeix-Raviart form, the flux
is reconstructed elementwise, and the solve/estimate/mark/refine loop drives
local newest-vertex bisection.
"""

from .mesh import (
    MarkSet,
    Mesh,
    bisect,
    initial_mesh,
    build_mesh,
    quadrature,
    triangle_geometry,
    uniform_refine,
)
from .problems import BenchmarkProblem, example1, example2, example3, localize
from .linsolve import SparseMatrix, from_triplets, solve
from .solver import (
    CRSolution,
    ErrorRecord,
    MixedSolution,
    assemble,
    compute_errors,
    postprocess_u,
    reconstruct_flux,
    second_moment,
    solve_cr,
    solve_problem,
    verify_mixed_residual,
)
from .estimator import EstimatorReport, edge_indicator, estimate, volume_indicator, xi_monitor
from .adaptivity import AdaptParams, LevelRecord, adapt_loop, doerfler_min_set, mark

__all__ = [
    "MarkSet",
    "Mesh",
    "bisect",
    "initial_mesh",
    "build_mesh",
    "quadrature",
    "triangle_geometry",
    "uniform_refine",
    "BenchmarkProblem",
    "example1",
    "example2",
    "example3",
    "localize",
    "SparseMatrix",
    "from_triplets",
    "solve",
    "CRSolution",
    "ErrorRecord",
    "MixedSolution",
    "assemble",
    "compute_errors",
    "postprocess_u",
    "reconstruct_flux",
    "second_moment",
    "solve_cr",
    "solve_problem",
    "verify_mixed_residual",
    "EstimatorReport",
    "edge_indicator",
    "estimate",
    "volume_indicator",
    "xi_monitor",
    "AdaptParams",
    "LevelRecord",
    "adapt_loop",
    "doerfler_min_set",
    "mark",
]

__version__ = "0.1.0"
