"""Mixed RT0/P0 solver in its equivalent Crouzeix-Raviart form.

One scalar unknown per interior mesh edge (the CR midpoint value) is solved
for; the piecewise-constant scalar and the Raviart-Thomas flux are then
recovered elementwise:

    u_T   = (1 + gamma_T s_T / 4)^(-1) (mean of the three edge values
                                        + s_T f_T / 4),
    p_h(x) = -(A_T grad u^N + u_T b_T) + (f_T - gamma_T u_T)(x - mid(T)) / 2,

where s_T is the area-normalized second moment
s_T = (1/|T|) int_T (x - mid) . A^{-1} (x - mid) dx.  With these definitions
the pair (p_h, u_h) satisfies the discrete mixed equations exactly, which
:func:`verify_mixed_residual` checks at run time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import linsolve
from .mesh import Mesh, tri_quad_rule
from .problems import BenchmarkProblem, ElementCoefficients, localize

__all__ = [
    "CRSolution",
    "MixedSolution",
    "ErrorRecord",
    "AssembledSystem",
    "IdentityReport",
    "second_moment",
    "second_moments",
    "postprocess_factors",
    "assemble",
    "solve_cr",
    "postprocess_u",
    "reconstruct_flux",
    "solve_problem",
    "verify_mixed_residual",
    "check_identities",
    "compute_errors",
]


@dataclass(frozen=True)
class CRSolution:
    """One value per mesh edge: u^N at the edge midpoint.  Boundary entries
    carry the imposed Dirichlet values."""

    edge_values: np.ndarray


@dataclass(frozen=True)
class MixedSolution:
    """Elementwise mixed solution: constant u, flux p(x) = p_const + p_rad (x - mid)."""

    u: np.ndarray  # (nt,)
    p_const: np.ndarray  # (nt, 2)
    p_rad: np.ndarray  # (nt,)

    def flux_at(self, mesh: Mesh, tri_ids, pts) -> np.ndarray:
        """Evaluate p_h at points (..., 2) lying in the given triangles."""
        mid = mesh.tri_centroid[tri_ids]
        return self.p_const[tri_ids] + self.p_rad[tri_ids][..., None] * (pts - mid)

    def div(self) -> np.ndarray:
        return 2.0 * self.p_rad

    def normal_flux(self, mesh: Mesh) -> np.ndarray:
        """p . nu_E at every edge midpoint, traced from the first adjacent
        triangle (the trace from the other side agrees up to roundoff)."""
        t0 = mesh.edge_tris[:, 0]
        return np.einsum(
            "ed,ed->e", self.flux_at(mesh, t0, mesh.edge_mid), mesh.edge_normal
        )

    def normal_flux_jumps(self, mesh: Mesh) -> np.ndarray:
        """|jump of p . nu| at interior edge midpoints (RT0 conformity check)."""
        inner = ~mesh.is_boundary_edge
        e = np.nonzero(inner)[0]
        t0 = mesh.edge_tris[e, 0]
        t1 = mesh.edge_tris[e, 1]
        mid = mesh.edge_mid[e]
        f0 = np.einsum("ed,ed->e", self.flux_at(mesh, t0, mid), mesh.edge_normal[e])
        f1 = np.einsum("ed,ed->e", self.flux_at(mesh, t1, mid), mesh.edge_normal[e])
        return np.abs(f0 - f1)


@dataclass(frozen=True)
class ErrorRecord:
    err_u: float
    err_p: float
    err_p_energy: float
    ndof: int


@dataclass(frozen=True)
class AssembledSystem:
    matrix: linsolve.SparseMatrix
    rhs: np.ndarray
    edge_dof: np.ndarray  # (ne,) interior dof index, -1 on boundary edges
    dirichlet_values: np.ndarray  # (ne,) boundary values, 0 on interior edges


@dataclass(frozen=True)
class IdentityReport:
    """Machine-precision identities of the representation formula."""

    r1: float  # mixed residual, first equation (max over edge basis functions)
    r2: float  # mixed residual, second equation (max over elements)
    conservation: float  # max |div p + gamma u - f| over elements
    flux_jump: float  # max normal-flux jump at interior edge midpoints
    pythagoras: float  # max relative defect of the elementwise norm identity
    grad_bound: float  # ||grad u^N|| - ||A^{-1} p + u b*|| (must be <= 0 + eps)
    scale: float  # ||p_h|| + ||u_h|| + ||f_h||


# ---------------------------------------------------------------------------
# second moments and post-processing factors
# ---------------------------------------------------------------------------


def second_moment(points: np.ndarray, a_inv: np.ndarray) -> float:
    """int_T (x - mid) . A^{-1} (x - mid) dx over the triangle with the given
    corner points; exact (the integrand is quadratic)."""
    points = np.asarray(points, dtype=float)
    mid = points.mean(axis=0)
    d1 = points[1] - points[0]
    d2 = points[2] - points[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    lam, w = tri_quad_rule(2)
    qpts = lam @ points - mid
    return float(area * np.einsum("q,qi,ij,qj->", w, qpts, a_inv, qpts))


def second_moments(mesh: Mesh, a_inv: np.ndarray) -> np.ndarray:
    """Vectorized :func:`second_moment` for every triangle."""
    lam, w = tri_quad_rule(2)
    pts = np.einsum("qk,tkd->tqd", lam, mesh.vertices[mesh.triangles])
    d = pts - mesh.tri_centroid[:, None, :]
    return mesh.tri_area * np.einsum("q,tqi,tij,tqj->t", w, d, a_inv, d)


def postprocess_factors(mesh: Mesh, coeffs: ElementCoefficients):
    """(c, g, s_norm): u_T = c_T * mean(U) + g_T with the area-normalized
    second moment s_norm; raises when 1 + gamma s/4 is numerically singular."""
    s_norm = second_moments(mesh, coeffs.a_inv) / mesh.tri_area
    denom = 1.0 + 0.25 * coeffs.gamma * s_norm
    bad = np.abs(denom) <= 1e-10
    if np.any(bad):
        t = int(np.nonzero(bad)[0][0])
        raise ValueError(
            f"near-singular post-processing factor 1 + gamma S/4 = {denom[t]:.3e} "
            f"on triangle {t}; refine the initial mesh"
        )
    c = 1.0 / denom
    g = 0.25 * c * s_norm * coeffs.f
    return c, g, s_norm


# ---------------------------------------------------------------------------
# assembly and solve
# ---------------------------------------------------------------------------


def assemble(mesh: Mesh, coeffs: ElementCoefficients, dirichlet) -> AssembledSystem:
    """Assemble the modified CR system with eliminated Dirichlet edges.

    ``dirichlet`` is a callable on boundary-edge midpoints or a per-edge
    value array.
    """
    ne = mesh.num_edges
    boundary = mesh.is_boundary_edge
    edge_dof = np.full(ne, -1, dtype=np.int64)
    interior = np.nonzero(~boundary)[0]
    edge_dof[interior] = np.arange(len(interior))

    ud = np.zeros(ne)
    if callable(dirichlet):
        if boundary.any():
            ud[boundary] = np.asarray(dirichlet(mesh.edge_mid[boundary]), dtype=float)
    else:
        vals = np.asarray(dirichlet, dtype=float)
        ud[boundary] = vals[boundary]

    area = mesh.tri_area
    grads = mesh.cr_grads  # (nt, 3, 2)
    c, g, _ = postprocess_factors(mesh, coeffs)

    stiff = np.einsum("tia,tab,tjb->tij", grads, coeffs.a, grads) * area[:, None, None]
    bg = np.einsum("ta,tia->ti", coeffs.b, grads)  # b . grad phi_i
    conv = (c * area / 3.0)[:, None, None] * bg[:, :, None]  # (nt, 3, 1): same for each column
    react = (coeffs.gamma * c * area / 9.0)[:, None, None]
    elem = stiff + conv + react  # (nt, 3, 3)

    rhs_elem = area[:, None] * (
        coeffs.f[:, None] / 3.0 - g[:, None] * (bg + coeffs.gamma[:, None] / 3.0)
    )

    rows = edge_dof[mesh.tri_edges]  # (nt, 3)
    n = len(interior)
    rhs = np.zeros(n)

    row_idx = np.repeat(rows[:, :, None], 3, axis=2)
    col_idx = np.repeat(rows[:, None, :], 3, axis=1)
    keep = (row_idx >= 0) & (col_idx >= 0)
    matrix = linsolve.from_triplets(
        n, row_idx[keep].ravel(), col_idx[keep].ravel(), elem[keep].ravel()
    )

    np.add.at(rhs, rows[rows >= 0], rhs_elem[rows >= 0])
    # eliminate Dirichlet columns into the right-hand side
    lift = (row_idx >= 0) & (col_idx < 0)
    if lift.any():
        tri_ud = ud[mesh.tri_edges]  # (nt, 3)
        col_vals = np.repeat(tri_ud[:, None, :], 3, axis=1)
        np.add.at(rhs, row_idx[lift], -elem[lift] * col_vals[lift])

    return AssembledSystem(matrix=matrix, rhs=rhs, edge_dof=edge_dof, dirichlet_values=ud)


def solve_cr(system: AssembledSystem, tol: float = 1e-10, method: str = "direct") -> CRSolution:
    """Solve the assembled system; boundary values are injected back."""
    x = linsolve.solve(system.matrix, system.rhs, tol=tol, method=method)
    values = system.dirichlet_values.copy()
    inner = system.edge_dof >= 0
    values[inner] = x[system.edge_dof[inner]]
    return CRSolution(edge_values=values)


def postprocess_u(ucr: CRSolution, mesh: Mesh, coeffs: ElementCoefficients) -> np.ndarray:
    """Elementwise scalar recovery from the CR edge values."""
    c, g, _ = postprocess_factors(mesh, coeffs)
    pi0 = ucr.edge_values[mesh.tri_edges].mean(axis=1)
    return c * pi0 + g


def reconstruct_flux(
    ucr: CRSolution, u: np.ndarray, mesh: Mesh, coeffs: ElementCoefficients
) -> MixedSolution:
    """Elementwise RT0 flux from the CR solution and the recovered scalar."""
    grad_un = np.einsum("ti,tid->td", ucr.edge_values[mesh.tri_edges], mesh.cr_grads)
    p_const = -(np.einsum("tij,tj->ti", coeffs.a, grad_un) + u[:, None] * coeffs.b)
    p_rad = 0.5 * (coeffs.f - coeffs.gamma * u)
    return MixedSolution(u=u, p_const=p_const, p_rad=p_rad)


def solve_problem(
    problem: BenchmarkProblem,
    mesh: Mesh,
    f_degree: int = 5,
    f_subdiv: int = 1,
    tol: float = 1e-10,
    method: str = "direct",
):
    """Full pipeline on one mesh: localize, assemble, solve, post-process.

    Returns (coeffs, ucr, sol).
    """
    coeffs = localize(problem, mesh, f_degree=f_degree, f_subdiv=f_subdiv)
    system = assemble(mesh, coeffs, problem.dirichlet)
    ucr = solve_cr(system, tol=tol, method=method)
    u = postprocess_u(ucr, mesh, coeffs)
    sol = reconstruct_flux(ucr, u, mesh, coeffs)
    return coeffs, ucr, sol


# ---------------------------------------------------------------------------
# residual verification and identities
# ---------------------------------------------------------------------------


def _flux_residual_field(mesh: Mesh, sol: MixedSolution, coeffs: ElementCoefficients, pts):
    """A^{-1} p_h + u_h b* at points (nt, nq, 2)."""
    const = (
        np.einsum("tij,tj->ti", coeffs.a_inv, sol.p_const) + sol.u[:, None] * coeffs.b_star
    )
    d = pts - mesh.tri_centroid[:, None, :]
    return const[:, None, :] + sol.p_rad[:, None, None] * np.einsum(
        "tij,tqj->tqi", coeffs.a_inv, d
    )


def solution_scale(mesh: Mesh, sol: MixedSolution, coeffs: ElementCoefficients) -> float:
    """||p_h|| + ||u_h|| + ||f_h|| (L2 norms)."""
    lam, w = tri_quad_rule(2)
    pts = np.einsum("qk,tkd->tqd", lam, mesh.vertices[mesh.triangles])
    p_vals = sol.flux_at(mesh, np.arange(mesh.num_triangles)[:, None], pts)
    p_sq = np.einsum("q,tqd,tqd->t", w, p_vals, p_vals) * mesh.tri_area
    u_sq = sol.u**2 * mesh.tri_area
    f_sq = coeffs.f**2 * mesh.tri_area
    return float(np.sqrt(p_sq.sum()) + np.sqrt(u_sq.sum()) + np.sqrt(f_sq.sum()))


def verify_mixed_residual(
    sol: MixedSolution,
    mesh: Mesh,
    coeffs: ElementCoefficients,
    dirichlet_values: Optional[np.ndarray] = None,
):
    """Residuals of the two discrete mixed equations.

    r1: max over RT0 edge basis functions of the first equation (the
    inhomogeneous Dirichlet pairing is included for boundary edges);
    r2: max over elements of |div p_h + gamma u_h - f_h| |T|.
    Both vanish to roundoff for solutions produced by the pipeline.
    """
    nt = mesh.num_triangles
    lam, w = tri_quad_rule(2)  # exact: all integrands below are quadratic
    pts = np.einsum("qk,tkd->tqd", lam, mesh.vertices[mesh.triangles])

    g = _flux_residual_field(mesh, sol, coeffs, pts)  # (nt, nq, 2)
    # local RT0 basis with unit outward normal flux on local edge i:
    # psi_i(x) = l_i / (2|T|) (x - P_i)
    corners = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    scale_i = mesh.tri_edge_len / (2.0 * mesh.tri_area[:, None])  # (nt, 3)
    diff = pts[:, None, :, :] - corners[:, :, None, :]  # (nt, 3 loc, nq, 2)
    psi = scale_i[:, :, None, None] * diff
    integrals = np.einsum("q,tiqd,tqd->ti", w, psi, g) * mesh.tri_area[:, None]
    contrib = integrals - sol.u[:, None] * mesh.tri_edge_len  # u_T int div psi_i

    r1_per_edge = np.zeros(mesh.num_edges)
    np.add.at(
        r1_per_edge,
        mesh.tri_edges.ravel(),
        (mesh.tri_edge_sign * contrib).ravel(),
    )
    if dirichlet_values is not None:
        b = mesh.is_boundary_edge
        r1_per_edge[b] += mesh.edge_len[b] * dirichlet_values[b]
    r1 = float(np.abs(r1_per_edge).max(initial=0.0))

    r2 = float(
        np.abs((sol.div() + coeffs.gamma * sol.u - coeffs.f) * mesh.tri_area).max(initial=0.0)
    )
    return r1, r2


def check_identities(
    mesh: Mesh,
    coeffs: ElementCoefficients,
    ucr: CRSolution,
    sol: MixedSolution,
    dirichlet_values: Optional[np.ndarray] = None,
) -> IdentityReport:
    """Evaluate every representation-formula identity on one level."""
    r1, r2 = verify_mixed_residual(sol, mesh, coeffs, dirichlet_values)
    conservation = float(
        np.abs(sol.div() + coeffs.gamma * sol.u - coeffs.f).max(initial=0.0)
    )
    flux_jump = float(sol.normal_flux_jumps(mesh).max(initial=0.0))

    lam, w = tri_quad_rule(2)
    pts = np.einsum("qk,tkd->tqd", lam, mesh.vertices[mesh.triangles])
    g = _flux_residual_field(mesh, sol, coeffs, pts)
    lhs = np.einsum("q,tqd,tqd->t", w, g, g) * mesh.tri_area

    grad_un = np.einsum("ti,tid->td", ucr.edge_values[mesh.tri_edges], mesh.cr_grads)
    w_rad = 0.5 * (coeffs.f - coeffs.gamma * sol.u)
    d = pts - mesh.tri_centroid[:, None, :]
    ainv_d = np.einsum("tij,tqj->tqi", coeffs.a_inv, d)
    i2 = np.einsum("q,tqd,tqd->t", w, ainv_d, ainv_d) * mesh.tri_area
    rhs = (grad_un**2).sum(axis=1) * mesh.tri_area + w_rad**2 * i2
    floor = 1e-14 * max(float(lhs.max(initial=0.0)), 1e-300)
    denom = np.maximum(np.maximum(lhs, rhs), floor)
    pythag_per_elem = float((np.abs(lhs - rhs) / denom).max(initial=0.0))

    grad_norm = float(np.sqrt(((grad_un**2).sum(axis=1) * mesh.tri_area).sum()))
    gfield_norm = float(np.sqrt(lhs.sum()))
    return IdentityReport(
        r1=r1,
        r2=r2,
        conservation=conservation,
        flux_jump=flux_jump,
        pythagoras=pythag_per_elem,
        grad_bound=grad_norm - gfield_norm,
        scale=solution_scale(mesh, sol, coeffs),
    )


# ---------------------------------------------------------------------------
# errors against a closed-form exact solution
# ---------------------------------------------------------------------------


def compute_errors(sol: MixedSolution, mesh: Mesh, problem: BenchmarkProblem) -> ErrorRecord:
    """L2 errors of u and p and the A^{-1/2}-weighted flux error, by
    elementwise degree-5 quadrature."""
    if problem.exact_u is None or problem.exact_p is None:
        raise ValueError(f"problem {problem.name} has no exact solution")
    pts, wts = mesh.quad_points(5)
    nt, nq, _ = pts.shape
    flat = pts.reshape(-1, 2)

    u_ex = np.asarray(problem.exact_u(flat), dtype=float).reshape(nt, nq)
    du = u_ex - sol.u[:, None]
    err_u_sq = float(np.einsum("tq,tq->", wts, du**2))

    p_ex = np.asarray(problem.exact_p(flat), dtype=float).reshape(nt, nq, 2)
    dp = p_ex - sol.flux_at(mesh, np.arange(nt)[:, None], pts)
    err_p_sq = float(np.einsum("tq,tqd,tqd->", wts, dp, dp))

    coeffs_ainv = np.linalg.inv(np.asarray(problem.a_field(mesh.tri_centroid), dtype=float))
    energy = np.einsum("tqi,tij,tqj->tq", dp, coeffs_ainv, dp)
    err_pe_sq = float(np.einsum("tq,tq->", wts, energy))

    return ErrorRecord(
        err_u=float(np.sqrt(err_u_sq)),
        err_p=float(np.sqrt(err_p_sq)),
        err_p_energy=float(np.sqrt(err_pe_sq)),
        ndof=mesh.ndof,
    )
