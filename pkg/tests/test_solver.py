import math

import numpy as np
import pytest

from amfem.linsolve import SingularMatrixError
from amfem.mesh import build_mesh, initial_mesh, tri_quad_rule, uniform_refine
from amfem.problems import BenchmarkProblem, ElementCoefficients, example1, example3, localize
from amfem.solver import (
    assemble,
    check_identities,
    compute_errors,
    postprocess_factors,
    postprocess_u,
    reconstruct_flux,
    second_moment,
    second_moments,
    solve_cr,
    solve_problem,
    verify_mixed_residual,
)

UNIT_RIGHT_PTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def constant_problem(
    a=((1, 0), (0, 1)), b=(0.0, 0.0), gamma=0.0, f=None, dirichlet=None, **exact
):
    a = np.asarray(a, dtype=float)
    return BenchmarkProblem(
        name="synthetic",
        domain="unit_square_crisscross",
        a_field=lambda p: np.broadcast_to(a, (len(p), 2, 2)),
        b_field=lambda p: np.broadcast_to(np.asarray(b, dtype=float), (len(p), 2)),
        gamma_field=lambda p: np.full(len(p), float(gamma)),
        f_field=(lambda p: np.zeros(len(p))) if f is None else f,
        dirichlet=(lambda p: np.zeros(len(p))) if dirichlet is None else dirichlet,
        **exact,
    )


# ---------------------------------------------------------------------------
# second moment
# ---------------------------------------------------------------------------


def test_second_moment_unit_right():
    val = second_moment(UNIT_RIGHT_PTS, np.eye(2))
    # oracle: |T| (a^2 + b^2 + c^2) / 36 with sides 1, 1, sqrt(2)
    assert val == pytest.approx(0.5 * (1 + 1 + 2) / 36, rel=1e-14)
    assert val == pytest.approx(1 / 18, rel=1e-14)


def test_second_moment_scaling():
    s = 1.7
    base = second_moment(UNIT_RIGHT_PTS, np.eye(2))
    scaled = second_moment(s * UNIT_RIGHT_PTS, np.eye(2))
    assert scaled == pytest.approx(s**4 * base, rel=1e-13)


def test_second_moment_matrix_scaling():
    base = second_moment(UNIT_RIGHT_PTS, np.eye(2))
    halved = second_moment(UNIT_RIGHT_PTS, 0.5 * np.eye(2))  # A = 2 I
    assert halved == pytest.approx(0.5 * base, rel=1e-14)


def test_second_moments_vectorized():
    mesh = initial_mesh("unit_square_crisscross", 0.5)
    a_inv = np.broadcast_to(np.eye(2), (mesh.num_triangles, 2, 2))
    vals = second_moments(mesh, a_inv)
    for t in (0, 5, 11):
        assert vals[t] == pytest.approx(
            second_moment(mesh.vertices[mesh.triangles[t]], np.eye(2)), rel=1e-13
        )


# ---------------------------------------------------------------------------
# post-processing factors
# ---------------------------------------------------------------------------


def single_triangle_coeffs(mesh, gamma=0.0, f=0.0):
    nt = mesh.num_triangles
    eye = np.broadcast_to(np.eye(2), (nt, 2, 2)).copy()
    return ElementCoefficients(
        a=eye,
        a_inv=eye.copy(),
        b=np.zeros((nt, 2)),
        b_star=np.zeros((nt, 2)),
        gamma=np.full(nt, float(gamma)),
        f=np.full(nt, float(f)),
    )


def test_postprocess_gamma_zero_is_mean():
    mesh = build_mesh(UNIT_RIGHT_PTS, np.array([[0, 1, 2]]))
    coeffs = single_triangle_coeffs(mesh, gamma=0.0, f=0.0)
    from amfem.solver import CRSolution

    ucr = CRSolution(edge_values=np.array([0.3, 0.9, 1.2]))
    u = postprocess_u(ucr, mesh, coeffs)
    order = mesh.tri_edges[0]
    assert u[0] == pytest.approx(ucr.edge_values[order].mean(), rel=1e-15)


def test_postprocess_gamma_zero_f_nonzero():
    mesh = build_mesh(UNIT_RIGHT_PTS, np.array([[0, 1, 2]]))
    coeffs = single_triangle_coeffs(mesh, gamma=0.0, f=2.5)
    _, g, s_norm = postprocess_factors(mesh, coeffs)
    assert s_norm[0] == pytest.approx(1 / 9, rel=1e-13)  # (1/18) / (1/2)
    assert g[0] == pytest.approx(s_norm[0] * 2.5 / 4, rel=1e-13)


def test_postprocess_formula_value():
    # normalized second moment 1/18, gamma = 2, mean 1, f = 0 -> 36/37;
    # realized on the unit right triangle scaled by 1/sqrt(2)
    pts = UNIT_RIGHT_PTS / math.sqrt(2.0)
    mesh = build_mesh(pts, np.array([[0, 1, 2]]))
    coeffs = single_triangle_coeffs(mesh, gamma=2.0, f=0.0)
    c, g, s_norm = postprocess_factors(mesh, coeffs)
    assert s_norm[0] == pytest.approx(1 / 18, rel=1e-13)
    assert c[0] == pytest.approx(36 / 37, rel=1e-13)
    assert g[0] == 0.0


def test_postprocess_near_singular_factor():
    mesh = build_mesh(UNIT_RIGHT_PTS, np.array([[0, 1, 2]]))
    coeffs = single_triangle_coeffs(mesh, gamma=-36.0)  # 1 + gamma/36 = 0
    with pytest.raises(ValueError, match="near-singular"):
        postprocess_factors(mesh, coeffs)


# ---------------------------------------------------------------------------
# assembly and solve
# ---------------------------------------------------------------------------


def test_single_element_all_dirichlet_empty_system():
    mesh = build_mesh(UNIT_RIGHT_PTS, np.array([[0, 1, 2]]))
    prob = constant_problem(gamma=1.0, dirichlet=lambda p: p[:, 0])
    coeffs = localize(prob, mesh)
    system = assemble(mesh, coeffs, prob.dirichlet)
    assert system.matrix.n == 0
    ucr = solve_cr(system)
    assert np.allclose(ucr.edge_values, mesh.edge_mid[:, 0])


def test_zero_data_zero_solution():
    prob = constant_problem(gamma=2.0)
    mesh = initial_mesh("unit_square_crisscross", 0.25)
    coeffs, ucr, sol = solve_problem(prob, mesh)
    assert np.allclose(ucr.edge_values, 0.0)
    assert np.allclose(sol.u, 0.0)
    assert np.allclose(sol.p_const, 0.0)
    assert np.allclose(sol.p_rad, 0.0)
    r1, r2 = verify_mixed_residual(sol, mesh, coeffs)
    assert r1 == 0.0 and r2 == 0.0


def test_affine_exactness():
    # A = I, b = 0, gamma = 0, u = x: CR reproduces affine solutions exactly
    prob = constant_problem(
        dirichlet=lambda p: p[:, 0],
        exact_u=lambda p: p[:, 0],
        exact_p=lambda p: np.tile([-1.0, 0.0], (len(p), 1)),
    )
    mesh = uniform_refine(initial_mesh("unit_square_crisscross", 0.25))
    coeffs, ucr, sol = solve_problem(prob, mesh)
    assert np.allclose(ucr.edge_values, mesh.edge_mid[:, 0], atol=1e-10)
    assert np.allclose(sol.u, mesh.tri_centroid[:, 0], atol=1e-10)
    assert np.allclose(sol.p_const, [-1.0, 0.0], atol=1e-10)
    assert np.allclose(sol.p_rad, 0.0, atol=1e-12)
    err = compute_errors(sol, mesh, prob)
    assert err.err_p <= 1e-10
    assert err.ndof == mesh.ndof


def test_boundary_values_injected_exactly():
    prob = example1()
    mesh = initial_mesh(prob.domain, 0.25)
    coeffs = localize(prob, mesh)
    system = assemble(mesh, coeffs, prob.dirichlet)
    ucr = solve_cr(system)
    b = mesh.is_boundary_edge
    assert np.array_equal(ucr.edge_values[b], prob.dirichlet(mesh.edge_mid[b]))


# ---------------------------------------------------------------------------
# flux reconstruction
# ---------------------------------------------------------------------------


def test_flux_constant_when_f_equals_gamma_u():
    prob = constant_problem(gamma=1.0, f=lambda p: np.zeros(len(p)))
    mesh = initial_mesh("unit_square_crisscross", 0.5)
    coeffs, ucr, sol = solve_problem(prob, mesh)
    assert np.allclose(sol.p_rad, 0.5 * (coeffs.f - coeffs.gamma * sol.u))
    assert np.allclose(sol.div(), coeffs.f - coeffs.gamma * sol.u, atol=1e-15)


def test_machine_precision_identities_on_benchmarks():
    for prob, h in ((example1(), 0.25), (example3(), 0.25)):
        mesh = initial_mesh(prob.domain, h)
        for _ in range(2):
            coeffs, ucr, sol = solve_problem(prob, mesh)
            system = assemble(mesh, coeffs, prob.dirichlet)
            rep = check_identities(mesh, coeffs, ucr, sol, system.dirichlet_values)
            scale = rep.scale
            assert rep.r1 <= 1e-10 * scale
            assert rep.r2 <= 1e-11 * scale
            assert rep.conservation <= 1e-11 * scale
            assert rep.flux_jump <= 1e-11 * scale
            assert rep.pythagoras <= 1e-10
            assert rep.grad_bound <= 1e-12 * scale
            mesh = uniform_refine(mesh)


def test_normal_flux_trace_and_jumps():
    prob = example1()
    mesh = initial_mesh(prob.domain, 0.25)
    coeffs, ucr, sol = solve_problem(prob, mesh)
    fluxes = sol.normal_flux(mesh)
    assert fluxes.shape == (mesh.num_edges,)
    assert np.all(np.isfinite(fluxes))
    # trace from the second adjacent triangle agrees (RT0 conformity)
    inner = ~mesh.is_boundary_edge
    other = np.einsum(
        "ed,ed->e",
        sol.flux_at(mesh, mesh.edge_tris[inner, 1], mesh.edge_mid[inner]),
        mesh.edge_normal[inner],
    )
    assert np.allclose(fluxes[inner], other, atol=1e-12)


def test_r2_jump_under_perturbation():
    prob = example1()
    mesh = initial_mesh(prob.domain, 0.25)
    coeffs, ucr, sol = solve_problem(prob, mesh)
    from amfem.solver import MixedSolution

    u_pert = sol.u.copy()
    u_pert[7] += 1.0
    perturbed = MixedSolution(u=u_pert, p_const=sol.p_const, p_rad=sol.p_rad)
    _, r2 = verify_mixed_residual(perturbed, mesh, coeffs)
    assert r2 == pytest.approx(abs(coeffs.gamma[7]) * mesh.tri_area[7], rel=1e-12)


def test_compute_errors_missing_exact():
    prob = constant_problem()
    mesh = initial_mesh("unit_square_crisscross", 0.5)
    _, _, sol = solve_problem(prob, mesh)
    with pytest.raises(ValueError, match="exact"):
        compute_errors(sol, mesh, prob)


# ---------------------------------------------------------------------------
# independent oracle: directly assembled RT0 x P0 saddle-point system
# ---------------------------------------------------------------------------


def saddle_point_solve(mesh, coeffs, dirichlet_values):
    """Dense mixed system in the RT0 edge basis + P0 basis, assembled from
    scratch (no representation formula)."""
    ne, nt = mesh.num_edges, mesh.num_triangles
    n = ne + nt
    mat = np.zeros((n, n))
    rhs = np.zeros(n)
    lam, w = tri_quad_rule(2)
    for t in range(nt):
        corners = mesh.vertices[mesh.triangles[t]]
        pts = lam @ corners
        area = mesh.tri_area[t]
        ainv = coeffs.a_inv[t]
        psis = []
        for i in range(3):
            sig = mesh.tri_edge_sign[t, i]
            li = mesh.tri_edge_len[t, i]
            psis.append(sig * (li / (2 * area)) * (pts - corners[i]))
        for i in range(3):
            e_i = mesh.tri_edges[t, i]
            for j in range(3):
                e_j = mesh.tri_edges[t, j]
                mat[e_i, e_j] += area * np.einsum("q,qa,ab,qb->", w, psis[i], ainv, psis[j])
            int_psi = area * np.einsum("q,qd->d", w, psis[i])
            div_int = mesh.tri_edge_sign[t, i] * mesh.tri_edge_len[t, i]
            mat[e_i, ne + t] += coeffs.b_star[t] @ int_psi - div_int
            mat[ne + t, e_i] += div_int
        mat[ne + t, ne + t] += coeffs.gamma[t] * area
        rhs[ne + t] = coeffs.f[t] * area
    boundary = np.nonzero(mesh.is_boundary_edge)[0]
    rhs[boundary] = -mesh.edge_len[boundary] * dirichlet_values[boundary]
    out = np.linalg.solve(mat, rhs)
    return out[:ne], out[ne:]


def test_pipeline_matches_saddle_point_oracle():
    prob = constant_problem(
        a=((2.0, 0.3), (0.3, 1.5)),
        b=(1.0, -0.5),
        gamma=2.0,
        f=lambda p: np.sin(math.pi * p[:, 0]) * np.cos(p[:, 1]),
        dirichlet=lambda p: p[:, 0] ** 2 + 0.5 * p[:, 1],
    )
    mesh = initial_mesh("unit_square_crisscross", 0.5)
    coeffs = localize(prob, mesh)
    system = assemble(mesh, coeffs, prob.dirichlet)
    ucr = solve_cr(system)
    u = postprocess_u(ucr, mesh, coeffs)
    sol = reconstruct_flux(ucr, u, mesh, coeffs)

    flux_coef, u_direct = saddle_point_solve(mesh, coeffs, system.dirichlet_values)
    scale = max(np.abs(u_direct).max(), np.abs(flux_coef).max())
    assert np.allclose(sol.u, u_direct, atol=1e-9 * scale)

    # flux at centroids from the directly solved edge coefficients
    for t in range(mesh.num_triangles):
        corners = mesh.vertices[mesh.triangles[t]]
        area = mesh.tri_area[t]
        mid = mesh.tri_centroid[t]
        p_direct = np.zeros(2)
        for i in range(3):
            sig = mesh.tri_edge_sign[t, i]
            li = mesh.tri_edge_len[t, i]
            p_direct += flux_coef[mesh.tri_edges[t, i]] * sig * (li / (2 * area)) * (mid - corners[i])
        assert np.allclose(sol.p_const[t], p_direct, atol=1e-9 * scale)
        assert sol.p_rad[t] == pytest.approx(
            0.5 * sum(
                flux_coef[mesh.tri_edges[t, i]]
                * mesh.tri_edge_sign[t, i]
                * mesh.tri_edge_len[t, i]
                / area
                for i in range(3)
            ),
            abs=1e-9 * scale,
        )


def test_indefinite_system_solves():
    # gamma < 0 makes the CR system indefinite; the direct solver must cope
    prob = example3()
    mesh = initial_mesh(prob.domain, 0.25)
    coeffs, ucr, sol = solve_problem(prob, mesh)
    assert np.all(np.isfinite(ucr.edge_values))
    err = compute_errors(sol, mesh, prob)
    assert 0 < err.err_u < 1.0
