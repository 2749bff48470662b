"""Marking strategies and the solve/estimate/mark/refine loop.

The separate two-case strategy compares the volume and edge estimators:

* Case A (mu^2 <= kappa eta^2): bulk-mark edges with fraction theta_A,
* Case B (mu^2 >  kappa eta^2): bulk-mark triangles with fraction theta_B.

The collective variant marks triangles carrying mu^2(T) plus the eta^2 of
their edges (edge values split equally between the adjacent triangles); the
uniform baseline marks everything.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .estimator import EstimatorReport, estimate
from .mesh import MarkSet, Mesh, bisect, initial_mesh
from .problems import BenchmarkProblem, ElementCoefficients, localize
from .solver import (
    CRSolution,
    IdentityReport,
    MixedSolution,
    assemble,
    check_identities,
    compute_errors,
    postprocess_u,
    reconstruct_flux,
    solve_cr,
)

__all__ = ["AdaptParams", "LevelRecord", "LevelState", "doerfler_min_set", "mark", "adapt_loop"]

_STRATEGIES = ("separate", "collective", "uniform")


@dataclass(frozen=True)
class AdaptParams:
    """Marking and stopping parameters of the adaptive loop."""

    theta_a: float = 0.5
    theta_b: float = 0.5
    kappa: float = 1.0
    strategy: str = "separate"
    max_ndof: int = 50_000
    max_levels: int = 40
    alpha: float = 1.0  # monitor weights
    beta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.theta_a < 1.0:
            raise ValueError(f"theta_a must lie in (0, 1), got {self.theta_a}")
        if not 0.0 < self.theta_b < 1.0:
            raise ValueError(f"theta_b must lie in (0, 1), got {self.theta_b}")
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.strategy not in _STRATEGIES:
            raise ValueError(f"strategy must be one of {_STRATEGIES}, got {self.strategy!r}")
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValueError("monitor weights alpha, beta must be positive")
        if self.max_ndof < 1 or self.max_levels < 0:
            raise ValueError("invalid stopping parameters")


@dataclass(frozen=True)
class LevelRecord:
    """One row of the convergence history."""

    level: int
    ndof: int
    err_u: Optional[float]
    err_p: Optional[float]
    err_p_energy: Optional[float]
    eta: float
    mu: float
    case: str
    marked: int
    triangles: int
    seconds: float


@dataclass(frozen=True)
class LevelState:
    """Full per-level state handed to observers of the loop."""

    mesh: Mesh
    coeffs: ElementCoefficients
    ucr: CRSolution
    sol: MixedSolution
    report: EstimatorReport
    record: LevelRecord
    identities: Optional[IdentityReport]


def doerfler_min_set(values, theta: float) -> np.ndarray:
    """Minimal bulk set: ids sorted by indicator descending (ties by
    ascending id), shortest prefix whose sum reaches theta * total."""
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    if isinstance(values, dict):
        ids = np.fromiter(values.keys(), dtype=np.int64, count=len(values))
        vals = np.fromiter(values.values(), dtype=float, count=len(values))
    else:
        vals = np.asarray(values, dtype=float)
        ids = np.arange(len(vals))
    if np.any(vals < 0):
        raise ValueError("indicators must be non-negative")
    order = np.lexsort((ids, -vals))
    sorted_vals = vals[order]
    csum = np.cumsum(sorted_vals)
    total = csum[-1] if len(csum) else 0.0
    if total <= 0.0:
        return np.zeros(0, dtype=np.int64)
    k = int(np.searchsorted(csum, theta * total)) + 1
    return ids[order[:k]]


def mark(report: EstimatorReport, params: AdaptParams, mesh: Mesh) -> MarkSet:
    """Select the refinement set according to the configured strategy."""
    if params.strategy == "uniform":
        return MarkSet("triangles", np.arange(mesh.num_triangles), case_label="uniform")

    eta_sq = report.eta_sq_total
    mu_sq = report.mu_sq_total
    if params.strategy == "collective":
        per_tri = report.mu_sq_elements.copy()
        counts = np.where(mesh.is_boundary_edge, 1.0, 2.0)
        share = report.eta_sq_edges / counts
        for side in (0, 1):
            tris = mesh.edge_tris[:, side]
            valid = tris >= 0
            np.add.at(per_tri, tris[valid], share[valid])
        ids = doerfler_min_set(per_tri, params.theta_a)
        return MarkSet("triangles", ids, case_label="collective")

    if mu_sq <= params.kappa * eta_sq:
        ids = doerfler_min_set(report.eta_sq_edges, params.theta_a)
        return MarkSet("edges", ids, case_label="A")
    ids = doerfler_min_set(report.mu_sq_elements, params.theta_b)
    return MarkSet("triangles", ids, case_label="B")


def adapt_loop(
    problem: BenchmarkProblem,
    params: AdaptParams,
    initial_h: Optional[float] = None,
    on_level: Optional[Callable[[LevelState], None]] = None,
    verify: bool = True,
    solver_tol: float = 1e-10,
    solver_method: str = "direct",
    f_degree: int = 5,
    f_subdiv: int = 1,
) -> list[LevelRecord]:
    """Run SOLVE -> ESTIMATE -> MARK -> REFINE until a stop criterion fires.

    With ``verify`` on (default), the representation-formula residuals are
    checked on every level and a failure aborts the run: it signals an
    implementation bug, not a user error.
    """
    mesh = initial_mesh(problem.domain, problem.initial_h if initial_h is None else initial_h)
    records: list[LevelRecord] = []
    for level in range(params.max_levels + 1):
        t0 = time.perf_counter()
        coeffs = localize(problem, mesh, f_degree=f_degree, f_subdiv=f_subdiv)
        system = assemble(mesh, coeffs, problem.dirichlet)
        ucr = solve_cr(system, tol=solver_tol, method=solver_method)
        u = postprocess_u(ucr, mesh, coeffs)
        sol = reconstruct_flux(ucr, u, mesh, coeffs)

        identities = None
        if verify:
            identities = check_identities(mesh, coeffs, ucr, sol, system.dirichlet_values)
            tol = 1e-10 * max(identities.scale, 1e-300)
            if identities.r1 > tol or identities.r2 > tol:
                raise RuntimeError(
                    f"mixed-residual verification failed on level {level}: "
                    f"r1={identities.r1:.3e}, r2={identities.r2:.3e}, "
                    f"allowed {tol:.3e} (implementation bug)"
                )

        report = estimate(
            mesh,
            sol,
            coeffs,
            problem.f_field,
            dirichlet_tangential=problem.dirichlet_tangential,
            f_subdiv=f_subdiv,
        )
        marks = mark(report, params, mesh)

        err_u = err_p = err_pe = None
        if problem.exact_u is not None and problem.exact_p is not None:
            err = compute_errors(sol, mesh, problem)
            err_u, err_p, err_pe = err.err_u, err.err_p, err.err_p_energy

        record = LevelRecord(
            level=level,
            ndof=mesh.ndof,
            err_u=err_u,
            err_p=err_p,
            err_p_energy=err_pe,
            eta=report.eta,
            mu=report.mu,
            case=marks.case_label,
            marked=int(len(marks.ids)),
            triangles=mesh.num_triangles,
            seconds=time.perf_counter() - t0,
        )
        records.append(record)
        if on_level is not None:
            on_level(LevelState(mesh, coeffs, ucr, sol, report, record, identities))

        if mesh.ndof >= params.max_ndof or level >= params.max_levels or len(marks.ids) == 0:
            break
        mesh = bisect(mesh, marks)
    return records
