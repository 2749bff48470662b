"""A posteriori error indicators.

Edge indicator (per edge E):

    eta^2(E) = h_E * int_E | [A^{-1} p_h + u_h b*] . tau_E |^2 ds,

the tangential jump of the flux residual; on boundary edges the jump is the
one-sided trace minus the tangential derivative of the Dirichlet data.

Volume indicator (per triangle T), three parts:

    mu^2(T) = h_T^2 int_T (f - f_T)^2          (data oscillation)
            + h_T^2 |div p_h|^2 |T|            (divergence term)
            + h_T^2 int_T |A^{-1} p_h + u_h b*|^2   (flux-residual term)

The edge integrand is affine along the edge and the flux-residual integrand
is quadratic, so the 2-point Gauss rule and the midpoint triangle rule are
exact; the oscillation uses the degree-5 rule (optionally composite for
sharply peaked loads).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import Mesh, tri_quad_rule
from .problems import ElementCoefficients
from .solver import MixedSolution, _flux_residual_field

__all__ = [
    "EstimatorReport",
    "edge_indicator",
    "volume_indicator",
    "estimate",
    "xi_monitor",
]

_GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)  # 2-point Gauss on [-1, 1]


@dataclass(frozen=True)
class EstimatorReport:
    """Per-entity squared indicators and their totals."""

    eta_sq_edges: np.ndarray  # (ne,)
    mu_sq_parts: np.ndarray  # (nt, 3): oscillation, divergence, flux residual
    eta_sq_total: float
    mu_sq_total: float

    @property
    def mu_sq_elements(self) -> np.ndarray:
        return self.mu_sq_parts.sum(axis=1)

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta_sq_total))

    @property
    def mu(self) -> float:
        return float(np.sqrt(self.mu_sq_total))


def _edge_gauss_points(mesh: Mesh):
    """Two Gauss points per edge: (ne, 2, 2)."""
    mid = mesh.edge_mid[:, None, :]
    offs = 0.5 * mesh.edge_len[:, None, None] * _GAUSS2[None, :, None]
    return mid + offs * mesh.edge_tangent[:, None, :]


def _tangential_trace(mesh: Mesh, sol: MixedSolution, coeffs: ElementCoefficients, tris, pts, tangents):
    """(A^{-1} p_h + u_h b*) . tau at edge points, traced from given triangles."""
    a_inv = coeffs.a_inv[tris]
    const = (
        np.einsum("eij,ej->ei", a_inv, sol.p_const[tris])
        + sol.u[tris][:, None] * coeffs.b_star[tris]
    )
    d = pts - mesh.tri_centroid[tris][:, None, :]
    vec = const[:, None, :] + sol.p_rad[tris][:, None, None] * np.einsum(
        "eij,eqj->eqi", a_inv, d
    )
    return np.einsum("eqd,ed->eq", vec, tangents)


def _eta_sq_all(
    mesh: Mesh,
    sol: MixedSolution,
    coeffs: ElementCoefficients,
    dirichlet_tangential: Optional[Callable] = None,
) -> np.ndarray:
    pts = _edge_gauss_points(mesh)
    t0 = mesh.edge_tris[:, 0]
    trace0 = _tangential_trace(mesh, sol, coeffs, t0, pts, mesh.edge_tangent)

    boundary = mesh.is_boundary_edge
    trace1 = np.zeros_like(trace0)
    inner = ~boundary
    if inner.any():
        t1 = mesh.edge_tris[inner, 1]
        trace1[inner] = _tangential_trace(
            mesh, sol, coeffs, t1, pts[inner], mesh.edge_tangent[inner]
        )
    if boundary.any():
        if dirichlet_tangential is not None:
            bp = pts[boundary].reshape(-1, 2)
            bt = np.repeat(mesh.edge_tangent[boundary], 2, axis=0)
            trace1[boundary] = np.asarray(
                dirichlet_tangential(bp, bt), dtype=float
            ).reshape(-1, 2) * (-1.0)
        # homogeneous data: one-sided trace, nothing to subtract

    jump = trace0 - trace1  # affine along each edge: 2-point Gauss is exact
    line_integral = 0.5 * mesh.edge_len * (jump**2).sum(axis=1)
    return mesh.edge_len * line_integral


def _mu_sq_parts(
    mesh: Mesh,
    sol: MixedSolution,
    coeffs: ElementCoefficients,
    f: Callable,
    f_subdiv: int = 1,
) -> np.ndarray:
    h_sq = mesh.tri_diam**2

    pts, wts = mesh.quad_points(5, f_subdiv)
    f_vals = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    osc = np.einsum("tq,tq->t", wts, (f_vals - coeffs.f[:, None]) ** 2)

    div_term = sol.div() ** 2 * mesh.tri_area

    lam, w = tri_quad_rule(2)
    pts = np.einsum("qk,tkd->tqd", lam, mesh.vertices[mesh.triangles])
    g = _flux_residual_field(mesh, sol, coeffs, pts)
    flux = np.einsum("q,tqd,tqd->t", w, g, g) * mesh.tri_area

    return np.column_stack([h_sq * osc, h_sq * div_term, h_sq * flux])


def edge_indicator(
    mesh: Mesh,
    e: int,
    sol: MixedSolution,
    coeffs: ElementCoefficients,
    dirichlet_tangential: Optional[Callable] = None,
) -> float:
    """Squared edge indicator of a single edge."""
    return float(_eta_sq_all(mesh, sol, coeffs, dirichlet_tangential)[e])


def volume_indicator(
    mesh: Mesh,
    t: int,
    sol: MixedSolution,
    coeffs: ElementCoefficients,
    f: Callable,
    f_subdiv: int = 1,
):
    """Squared volume-indicator parts (oscillation, divergence, flux residual)
    of a single triangle."""
    parts = _mu_sq_parts(mesh, sol, coeffs, f, f_subdiv)[t]
    return float(parts[0]), float(parts[1]), float(parts[2])


def estimate(
    mesh: Mesh,
    sol: MixedSolution,
    coeffs: ElementCoefficients,
    f: Callable,
    dirichlet_tangential: Optional[Callable] = None,
    f_subdiv: int = 1,
) -> EstimatorReport:
    """Full estimator report with totals."""
    eta_sq = _eta_sq_all(mesh, sol, coeffs, dirichlet_tangential)
    mu_parts = _mu_sq_parts(mesh, sol, coeffs, f, f_subdiv)
    return EstimatorReport(
        eta_sq_edges=eta_sq,
        mu_sq_parts=mu_parts,
        eta_sq_total=float(eta_sq.sum()),
        mu_sq_total=float(mu_parts.sum()),
    )


def xi_monitor(eta_sq: float, err_sq: float, mu_sq: float, alpha: float, beta: float) -> float:
    """Weighted contraction monitor eta^2 + alpha e^2 + beta mu^2."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("monitor weights must be positive")
    return float(eta_sq + alpha * err_sq + beta * mu_sq)
