"""Benchmark problem definitions: coefficients, loads, Dirichlet data, and
closed-form exact solutions.

The PDE is  -div(A grad u + u b) + gamma u = f  with Dirichlet boundary
values; the flux variable is p = -(A grad u + u b).  All field callables are
vectorized over (n, 2) point arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import Mesh, integrate_per_triangle

__all__ = [
    "BenchmarkProblem",
    "ElementCoefficients",
    "example1",
    "example2",
    "example3",
    "localize",
    "make_problem",
    "problem_from_config",
]

FieldScalar = Callable[[np.ndarray], np.ndarray]
FieldVector = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BenchmarkProblem:
    """A PDE instance on one of the named domains."""

    name: str
    domain: str
    a_field: Callable[[np.ndarray], np.ndarray]  # (n,) -> (n, 2, 2)
    b_field: FieldVector
    gamma_field: FieldScalar
    f_field: FieldScalar
    dirichlet: FieldScalar
    exact_u: Optional[FieldScalar] = None
    exact_p: Optional[FieldVector] = None
    exact_grad_u: Optional[FieldVector] = None
    initial_h: float = 0.25

    def dirichlet_tangential(self, pts: np.ndarray, tangents: np.ndarray) -> np.ndarray:
        """Tangential derivative of the boundary data at boundary points.

        Uses the exact gradient when available, otherwise a central finite
        difference of the Dirichlet data along the edge direction.
        """
        if self.exact_grad_u is not None:
            return np.einsum("nd,nd->n", self.exact_grad_u(pts), tangents)
        step = 1e-6
        up = self.dirichlet(pts + step * tangents)
        dn = self.dirichlet(pts - step * tangents)
        return (up - dn) / (2.0 * step)


@dataclass(frozen=True)
class ElementCoefficients:
    """Piecewise-constant coefficient data on one mesh level."""

    a: np.ndarray  # (nt, 2, 2)
    a_inv: np.ndarray  # (nt, 2, 2)
    b: np.ndarray  # (nt, 2)
    b_star: np.ndarray  # (nt, 2), A^{-1} b
    gamma: np.ndarray  # (nt,)
    f: np.ndarray  # (nt,), elementwise mean of the load


def _constant_matrix_field(a11, a12, a22):
    mat = np.array([[a11, a12], [a12, a22]], dtype=float)

    def field(pts):
        return np.broadcast_to(mat, (len(pts), 2, 2))

    return field


def _constant_vector_field(b1, b2):
    vec = np.array([b1, b2], dtype=float)

    def field(pts):
        return np.broadcast_to(vec, (len(pts), 2))

    return field


def _constant_scalar_field(c):
    def field(pts):
        return np.full(len(pts), float(c))

    return field


# ---------------------------------------------------------------------------
# polar helpers with domain-specific branch cuts
# ---------------------------------------------------------------------------


def _polar(pts, period):
    """(r, theta) with theta in [0, period); the cut itself maps to theta=0."""
    x = pts[:, 0]
    y = pts[:, 1]
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    theta = np.where(theta < 0.0, theta + 2.0 * math.pi, theta)
    return r, np.minimum(theta, period)


# ---------------------------------------------------------------------------
# Example problems
# ---------------------------------------------------------------------------


def example1(x0=(0.5, 0.5)) -> BenchmarkProblem:
    """Unit square, A = I, b = (1, 1), gamma = 2, sharp Gaussian solution
    u = exp(-100 |x - x0|^2)."""
    x0 = np.asarray(x0, dtype=float)
    b = np.array([1.0, 1.0])
    gamma = 2.0

    def u(pts):
        d = pts - x0
        return np.exp(-100.0 * (d * d).sum(axis=1))

    def grad_u(pts):
        d = pts - x0
        return -200.0 * d * u(pts)[:, None]

    def f(pts):
        d = pts - x0
        r2 = (d * d).sum(axis=1)
        val = u(pts)
        # f = -lap(u) - b . grad(u) + gamma u  (div b = 0)
        lap = val * (40000.0 * r2 - 400.0)
        conv = -200.0 * (d @ b) * val
        return -lap - conv + gamma * val

    def p(pts):
        return -(grad_u(pts) + u(pts)[:, None] * b)

    return BenchmarkProblem(
        name="example1",
        domain="unit_square_crisscross",
        a_field=_constant_matrix_field(1.0, 0.0, 1.0),
        b_field=_constant_vector_field(*b),
        gamma_field=_constant_scalar_field(gamma),
        f_field=f,
        dirichlet=u,
        exact_u=u,
        exact_p=p,
        exact_grad_u=grad_u,
    )


def example2() -> BenchmarkProblem:
    """Crack problem on the slit disk: A = I, b = (x-1, y+1), gamma = 4,
    u(r, theta) = r^(1/2) sin(theta/2) - r^2/2 sin^2(theta), theta in (0, 2pi)."""
    gamma = 4.0

    def b_field(pts):
        return np.column_stack([pts[:, 0] - 1.0, pts[:, 1] + 1.0])

    def u(pts):
        r, theta = _polar(pts, 2.0 * math.pi)
        return np.sqrt(r) * np.sin(0.5 * theta) - 0.5 * pts[:, 1] ** 2

    def grad_u(pts):
        r, theta = _polar(pts, 2.0 * math.pi)
        rs = np.where(r > 0, np.sqrt(r), np.inf)
        gx = -0.5 / rs * np.sin(0.5 * theta)
        gy = 0.5 / rs * np.cos(0.5 * theta) - pts[:, 1]
        return np.column_stack([gx, gy])

    def f(pts):
        # lap u = -1; div b = 2, so f = -lap u - b.grad u + (gamma - 2) u
        g = grad_u(pts)
        return 1.0 - np.einsum("nd,nd->n", b_field(pts), g) + (gamma - 2.0) * u(pts)

    def p(pts):
        return -(grad_u(pts) + u(pts)[:, None] * b_field(pts))

    return BenchmarkProblem(
        name="example2",
        domain="crack",
        a_field=_constant_matrix_field(1.0, 0.0, 1.0),
        b_field=b_field,
        gamma_field=_constant_scalar_field(gamma),
        f_field=f,
        dirichlet=u,
        exact_u=u,
        exact_p=p,
        exact_grad_u=grad_u,
    )


def example3() -> BenchmarkProblem:
    """L-shaped domain, A = I, b = 0, gamma = -8.9, harmonic
    u(r, theta) = r^(2/3) sin(2 theta / 3), theta in (0, 3 pi / 2)."""
    gamma = -8.9

    def u(pts):
        r, theta = _polar(pts, 1.5 * math.pi)
        return np.cbrt(r) ** 2 * np.sin(2.0 * theta / 3.0)

    def grad_u(pts):
        r, theta = _polar(pts, 1.5 * math.pi)
        rc = np.where(r > 0, np.cbrt(r), np.inf)
        scale = 2.0 / (3.0 * rc)
        return scale[:, None] * np.column_stack(
            [-np.sin(theta / 3.0), np.cos(theta / 3.0)]
        )

    def f(pts):
        return gamma * u(pts)  # u harmonic

    def p(pts):
        return -grad_u(pts)

    return BenchmarkProblem(
        name="example3",
        domain="l_shape",
        a_field=_constant_matrix_field(1.0, 0.0, 1.0),
        b_field=_constant_vector_field(0.0, 0.0),
        gamma_field=_constant_scalar_field(gamma),
        f_field=f,
        dirichlet=u,
        exact_u=u,
        exact_p=p,
        exact_grad_u=grad_u,
    )


_EXAMPLES = {"example1": example1, "example2": example2, "example3": example3}

_NAMED_LOADS: dict[str, FieldScalar] = {
    "one": _constant_scalar_field(1.0),
    "zero": _constant_scalar_field(0.0),
    "gaussian": lambda pts: np.exp(
        -100.0 * ((pts - np.array([0.5, 0.5])) ** 2).sum(axis=1)
    ),
    "sinpi": lambda pts: np.sin(math.pi * pts[:, 0]) * np.sin(math.pi * pts[:, 1]),
}


def problem_from_config(path) -> BenchmarkProblem:
    """Custom constant-coefficient problem from a key=value file.

    Recognized keys: domain, h, a11, a12, a22, b1, b2, gamma, f (a named
    built-in load).  Boundary values are homogeneous.
    """
    opts: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line {line!r}")
            key, val = line.split("=", 1)
            opts[key.strip()] = val.strip()
    domain = opts.get("domain", "unit_square_crisscross")
    fname = opts.get("f", "one")
    if fname not in _NAMED_LOADS:
        raise ValueError(f"unknown load {fname!r}; choose from {sorted(_NAMED_LOADS)}")
    a11 = float(opts.get("a11", 1.0))
    a12 = float(opts.get("a12", 0.0))
    a22 = float(opts.get("a22", 1.0))
    if a11 <= 0 or a11 * a22 - a12 * a12 <= 0:
        raise ValueError("matrix A must be symmetric positive definite")
    return BenchmarkProblem(
        name=f"custom:{path}",
        domain=domain,
        a_field=_constant_matrix_field(a11, a12, a22),
        b_field=_constant_vector_field(
            float(opts.get("b1", 0.0)), float(opts.get("b2", 0.0))
        ),
        gamma_field=_constant_scalar_field(float(opts.get("gamma", 0.0))),
        f_field=_NAMED_LOADS[fname],
        dirichlet=_constant_scalar_field(0.0),
        initial_h=float(opts.get("h", 0.25)),
    )


def make_problem(name: str) -> BenchmarkProblem:
    """Look up a named example, or load a custom problem config file."""
    if name in _EXAMPLES:
        return _EXAMPLES[name]()
    import os

    if os.path.exists(name):
        return problem_from_config(name)
    raise ValueError(f"unknown problem {name!r}; choose from {sorted(_EXAMPLES)} or a config path")


# ---------------------------------------------------------------------------
# localization to one mesh level
# ---------------------------------------------------------------------------


def localize(
    problem: BenchmarkProblem, mesh: Mesh, f_degree: int = 5, f_subdiv: int = 1
) -> ElementCoefficients:
    """Element-constant coefficients: A, b, gamma sampled at centroids, f
    projected to its elementwise mean (quadrature of the given degree)."""
    mids = mesh.tri_centroid
    a = np.asarray(problem.a_field(mids), dtype=float)
    b = np.asarray(problem.b_field(mids), dtype=float)
    gamma = np.asarray(problem.gamma_field(mids), dtype=float)

    if not np.allclose(a, np.swapaxes(a, 1, 2), rtol=0, atol=1e-14):
        raise ValueError("coefficient matrix A is not symmetric")
    det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
    if np.any(det <= 0) or np.any(a[:, 0, 0] <= 0):
        bad = int(np.argmin(np.minimum(det, a[:, 0, 0])))
        raise ValueError(f"coefficient matrix A is not positive definite on triangle {bad}")
    a_inv = np.empty_like(a)
    a_inv[:, 0, 0] = a[:, 1, 1] / det
    a_inv[:, 1, 1] = a[:, 0, 0] / det
    a_inv[:, 0, 1] = -a[:, 0, 1] / det
    a_inv[:, 1, 0] = -a[:, 1, 0] / det
    b_star = np.einsum("tij,tj->ti", a_inv, b)

    f_means = integrate_per_triangle(mesh, f_degree, problem.f_field, f_subdiv) / mesh.tri_area
    return ElementCoefficients(a=a, a_inv=a_inv, b=b, b_star=b_star, gamma=gamma, f=f_means)
