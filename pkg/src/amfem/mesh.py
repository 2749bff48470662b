"""Conforming triangle meshes: construction, geometry, quadrature, and
newest-vertex bisection with conformity closure.

Conventions used throughout:

* triangle vertices are stored counterclockwise,
* local edge ``k`` of a triangle is the edge opposite local vertex ``k``
  (edge 0 = (v1, v2), edge 1 = (v2, v0), edge 2 = (v0, v1)),
* each global edge stores an ordered vertex pair (a, b); the tangent points
  from a to b and the normal is the tangent rotated by -90 degrees, so it
  points out of the first adjacent triangle,
* the refinement edge of a triangle is a local edge index.

Meshes are immutable after construction; :func:`bisect` returns a new mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "Mesh",
    "MarkSet",
    "TriangleGeometry",
    "build_mesh",
    "initial_mesh",
    "bisect",
    "triangle_geometry",
    "quadrature",
    "tri_quad_rule",
    "integrate_per_triangle",
    "write_mesh",
    "read_mesh",
    "write_vtk",
]


# ---------------------------------------------------------------------------
# quadrature rules on triangles (barycentric weights sum to 1)
# ---------------------------------------------------------------------------

_SQRT15 = math.sqrt(15.0)

# degree -> (barycentric coordinates (nq, 3), weights (nq,))
_RULES = {
    1: (np.array([[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]), np.array([1.0])),
    # edge-midpoint rule, exact for quadratics
    2: (
        np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
        np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
    ),
    # 7-point symmetric rule, exact for quintics
    5: None,  # filled in below
}


def _build_degree5():
    a1 = (6.0 - _SQRT15) / 21.0
    a2 = (6.0 + _SQRT15) / 21.0
    w1 = (155.0 - _SQRT15) / 1200.0
    w2 = (155.0 + _SQRT15) / 1200.0
    pts = [[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]
    wts = [9.0 / 40.0]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1.0 - 2.0 * a
        pts += [[b, a, a], [a, b, a], [a, a, b]]
        wts += [w, w, w]
    return np.array(pts), np.array(wts)


_RULES[5] = _build_degree5()


def tri_quad_rule(degree: int, subdiv: int = 1):
    """Barycentric points and weights of the requested rule.

    ``subdiv`` > 1 applies the rule on the ``subdiv**2`` congruent
    subtriangles of the uniform refinement, which tightens the constant for
    non-polynomial integrands without changing the polynomial exactness.
    """
    if degree not in _RULES:
        raise ValueError(f"unsupported quadrature degree {degree}; supported: 1, 2, 5")
    lam, w = _RULES[degree]
    if subdiv <= 1:
        return lam, w
    s = int(subdiv)
    corners = []
    for i in range(s):
        for j in range(s - i):
            # grid point (i, j) -> barycentric (1 - (i+j)/s, i/s, j/s)
            c00 = np.array([s - i - j, i, j], dtype=float) / s
            c10 = np.array([s - i - j - 1, i + 1, j], dtype=float) / s
            c01 = np.array([s - i - j - 1, i, j + 1], dtype=float) / s
            corners.append((c00, c10, c01))
            if i + j < s - 1:
                c11 = np.array([s - i - j - 2, i + 1, j + 1], dtype=float) / s
                corners.append((c10, c11, c01))
    pts = []
    wts = []
    for c0, c1, c2 in corners:
        cmat = np.vstack([c0, c1, c2])  # rows: subtriangle corners in barycentric
        pts.append(lam @ cmat)
        wts.append(w / (s * s))
    return np.vstack(pts), np.concatenate(wts)


# ---------------------------------------------------------------------------
# mesh containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkSet:
    """A set of entities selected for refinement."""

    kind: str  # "edges" or "triangles"
    ids: np.ndarray
    case_label: str = ""

    def __post_init__(self):
        if self.kind not in ("edges", "triangles"):
            raise ValueError(f"invalid mark kind {self.kind!r}")
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=np.int64))


class TriangleGeometry(NamedTuple):
    area: float
    centroid: np.ndarray
    diameter: float
    normals: np.ndarray  # (3, 2) outward unit normals of local edges
    tangents: np.ndarray  # (3, 2) unit tangents of local edges


class Mesh:
    """Conforming triangulation with edge adjacency and geometry caches."""

    def __init__(
        self,
        vertices: np.ndarray,
        triangles: np.ndarray,
        refedge: np.ndarray,
        region: np.ndarray,
        generation: np.ndarray,
        parent: np.ndarray,
        level: int,
        domain: str,
        skip_euler: bool,
    ):
        self.vertices = vertices
        self.triangles = triangles
        self.refedge = refedge
        self.region = region
        self.generation = generation
        self.parent = parent
        self.level = level
        self.domain = domain
        self.skip_euler = skip_euler

        self._build_edges()
        self._build_geometry()

    # -- construction helpers ------------------------------------------------

    def _build_edges(self):
        nt = len(self.triangles)
        edge_index: dict[tuple[int, int], int] = {}
        edge_pairs: list[tuple[int, int]] = []
        edge_tris: list[list[int]] = []
        edge_local: list[list[int]] = []
        tri_edges = np.empty((nt, 3), dtype=np.int64)
        tri_edge_sign = np.empty((nt, 3), dtype=np.int64)

        tris = self.triangles
        for t in range(nt):
            v = tris[t]
            for k in range(3):
                a = int(v[(k + 1) % 3])
                b = int(v[(k + 2) % 3])
                key = (a, b) if a < b else (b, a)
                e = edge_index.get(key)
                if e is None:
                    e = len(edge_pairs)
                    edge_index[key] = e
                    edge_pairs.append((a, b))
                    edge_tris.append([t, -1])
                    edge_local.append([k, -1])
                    sign = 1
                else:
                    if edge_tris[e][1] != -1:
                        raise ValueError(f"edge {key} shared by more than two triangles")
                    edge_tris[e][1] = t
                    edge_local[e][1] = k
                    sa, sb = edge_pairs[e]
                    if (a, b) == (sa, sb):
                        raise ValueError(
                            f"inconsistent orientation across edge {key}"
                        )
                    sign = -1
                tri_edges[t, k] = e
                tri_edge_sign[t, k] = sign

        self.edges = np.array(edge_pairs, dtype=np.int64)
        self.edge_tris = np.array(edge_tris, dtype=np.int64)
        self.edge_local = np.array(edge_local, dtype=np.int64)
        self.tri_edges = tri_edges
        self.tri_edge_sign = tri_edge_sign
        self.is_boundary_edge = self.edge_tris[:, 1] == -1
        self.boundary_edges = np.nonzero(self.is_boundary_edge)[0]

    def _build_geometry(self):
        pts = self.vertices[self.triangles]  # (nt, 3, 2)
        d1 = pts[:, 1] - pts[:, 0]
        d2 = pts[:, 2] - pts[:, 0]
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(signed <= 0):
            bad = int(np.argmin(signed))
            raise ValueError(
                f"triangle {bad} has non-positive area {signed[bad]:.3e} "
                "(collinear or mis-oriented vertices)"
            )
        self.tri_area = signed
        self.tri_centroid = pts.mean(axis=1)

        # directed local edge vectors e_k = P_{k+2} - P_{k+1}
        evec = pts[:, [2, 0, 1], :] - pts[:, [1, 2, 0], :]
        elen = np.linalg.norm(evec, axis=2)  # (nt, 3)
        self.tri_edge_len = elen
        self.tri_diam = elen.max(axis=1)
        # CR basis gradients: grad phi_k = (e_k.y, -e_k.x) / |T|
        self.cr_grads = np.stack(
            [evec[:, :, 1], -evec[:, :, 0]], axis=2
        ) / self.tri_area[:, None, None]
        # outward unit normals / unit tangents of local edges (CCW triangles)
        self.tri_edge_normal = np.stack(
            [evec[:, :, 1], -evec[:, :, 0]], axis=2
        ) / elen[:, :, None]
        self.tri_edge_tangent = evec / elen[:, :, None]

        ev = self.vertices[self.edges]  # (ne, 2, 2)
        tau = ev[:, 1] - ev[:, 0]
        self.edge_len = np.linalg.norm(tau, axis=1)
        self.edge_tangent = tau / self.edge_len[:, None]
        self.edge_normal = np.stack(
            [self.edge_tangent[:, 1], -self.edge_tangent[:, 0]], axis=1
        )
        self.edge_mid = 0.5 * (ev[:, 0] + ev[:, 1])

    # -- queries ---------------------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def ndof(self) -> int:
        """Mixed-system degree-of-freedom count: #edges + #triangles."""
        return self.num_edges + self.num_triangles

    def total_area(self) -> float:
        return float(self.tri_area.sum())

    def quad_points(self, degree: int, subdiv: int = 1):
        """Physical quadrature points and weights for every triangle.

        Returns ``(points, weights)`` with shapes (nt, nq, 2) and (nt, nq);
        the weights include the triangle areas.
        """
        lam, w = tri_quad_rule(degree, subdiv)
        pts = np.einsum("qk,tkd->tqd", lam, self.vertices[self.triangles])
        wts = np.multiply.outer(self.tri_area, w)
        return pts, wts

    def check_euler(self):
        """#edges = #vertices + #triangles - 1 on disk-like domains."""
        if self.skip_euler:
            return
        ne, nv, nt = self.num_edges, self.num_vertices, self.num_triangles
        if ne != nv + nt - 1:
            raise ValueError(f"Euler relation violated: E={ne}, V={nv}, T={nt}")


def build_mesh(
    vertices,
    triangles,
    refedge="longest",
    region=None,
    generation=None,
    parent=None,
    level: int = 0,
    domain: str = "",
    skip_euler: bool = False,
) -> Mesh:
    """Assemble a :class:`Mesh`, normalizing orientation to counterclockwise.

    ``refedge`` is either an array of local edge indices or the string
    ``"longest"``: the longest edge per triangle, ties broken by the lowest
    global edge index.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).copy()
    if not np.all(np.isfinite(vertices)):
        raise ValueError("non-finite vertex coordinates")
    nt = len(triangles)

    explicit = not (isinstance(refedge, str) and refedge == "longest")
    if explicit:
        refedge = np.asarray(refedge, dtype=np.int64).copy()
        if refedge.shape != (nt,) or refedge.min(initial=0) < 0 or refedge.max(initial=0) > 2:
            raise ValueError("refinement edge must be a per-triangle local index in {0,1,2}")

    # orient counterclockwise; a flip swaps local vertices 1 and 2, which
    # exchanges local edges 1 and 2
    pts = vertices[triangles]
    d1 = pts[:, 1] - pts[:, 0]
    d2 = pts[:, 2] - pts[:, 0]
    signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    flip = signed < 0
    if np.any(flip):
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        if explicit:
            swap = {1: 2, 2: 1}
            refedge[flip] = np.array([swap.get(int(r), 0) for r in refedge[flip]])

    region = (
        np.zeros(nt, dtype=np.int64) if region is None else np.asarray(region, dtype=np.int64)
    )
    generation = (
        np.zeros(nt, dtype=np.int64)
        if generation is None
        else np.asarray(generation, dtype=np.int64)
    )
    parent = (
        np.full(nt, -1, dtype=np.int64) if parent is None else np.asarray(parent, dtype=np.int64)
    )

    mesh = Mesh(
        vertices,
        triangles,
        refedge if explicit else np.zeros(nt, dtype=np.int64),
        region,
        generation,
        parent,
        level,
        domain,
        skip_euler,
    )
    if not explicit:
        lengths = mesh.tri_edge_len
        gids = mesh.tri_edges
        best = np.zeros(nt, dtype=np.int64)
        for k in (1, 2):
            lk = lengths[:, k]
            lb = lengths[np.arange(nt), best]
            better = (lk > lb) | (
                (lk == lb) & (gids[np.arange(nt), k] < gids[np.arange(nt), best])
            )
            best[better] = k
        mesh.refedge = best
    return mesh


# ---------------------------------------------------------------------------
# initial meshes for the benchmark domains
# ---------------------------------------------------------------------------


def _check_divides(length: float, h: float) -> int:
    n = length / h
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"target_h={h} does not divide side length {length}")
    return int(round(n))


def _crisscross_cells(cells, h, origin):
    """Criss-cross triangulation of unit cells: 4 triangles per cell around
    the cell center."""
    vid: dict[tuple[int, int], int] = {}
    verts: list[tuple[float, float]] = []

    def node(i, j):
        key = (i, j)
        if key not in vid:
            vid[key] = len(verts)
            verts.append((origin[0] + 0.5 * h * i, origin[1] + 0.5 * h * j))
        return vid[key]

    tris = []
    for (ci, cj) in cells:
        sw = node(2 * ci, 2 * cj)
        se = node(2 * ci + 2, 2 * cj)
        ne = node(2 * ci + 2, 2 * cj + 2)
        nw = node(2 * ci, 2 * cj + 2)
        c = node(2 * ci + 1, 2 * cj + 1)
        tris += [(sw, se, c), (se, ne, c), (ne, nw, c), (nw, sw, c)]
    return np.array(verts), np.array(tris)


def _initial_square(h):
    n = _check_divides(1.0, h)
    cells = [(i, j) for j in range(n) for i in range(n)]
    verts, tris = _crisscross_cells(cells, h, (0.0, 0.0))
    return build_mesh(verts, tris, domain="unit_square_crisscross")


def _initial_l_shape(h):
    n = _check_divides(1.0, h)
    cells = []
    for j in range(2 * n):
        for i in range(2 * n):
            xc = -1.0 + (i + 0.5) * h
            yc = -1.0 + (j + 0.5) * h
            if xc > 0.0 and yc < 0.0:
                continue  # removed quadrant [0,1] x [-1,0]
            cells.append((i, j))
    verts, tris = _crisscross_cells(cells, h, (-1.0, -1.0))
    return build_mesh(verts, tris, domain="l_shape")


def _initial_crack(h):
    """Slit disk |x| <= 1 minus the segment [0,1] x {0}.

    Spiderweb triangulation: ring j of m carries 6j vertices; vertices on the
    positive x-axis are duplicated (upper/lower slit face) except the tip.
    The circle is approximated by the chord polygon of the outermost ring.
    """
    m = _check_divides(1.0, h)
    verts: list[tuple[float, float]] = [(0.0, 0.0)]
    rings: list[list[int]] = [[0]]
    for j in range(1, m + 1):
        ids = []
        r = j * h
        for k in range(6 * j + 1):  # k = 0 and k = 6j duplicate the slit vertex
            theta = 2.0 * math.pi * k / (6 * j)
            ids.append(len(verts))
            verts.append((r * math.cos(theta), r * math.sin(theta)))
        rings.append(ids)

    tris = []
    for s in range(6):
        inner = rings[1][s : s + 2]
        tris.append((0, inner[0], inner[1]))
    for j in range(1, m):
        for s in range(6):
            inner = rings[j][s * j : (s + 1) * j + 1]
            outer = rings[j + 1][s * (j + 1) : (s + 1) * (j + 1) + 1]
            for k in range(j + 1):
                tris.append((outer[k], outer[k + 1], inner[k]))
            for k in range(j):
                tris.append((inner[k], outer[k + 1], inner[k + 1]))
    return build_mesh(np.array(verts), np.array(tris), domain="crack", skip_euler=True)


_DOMAINS: dict[str, Callable[[float], Mesh]] = {
    "unit_square_crisscross": _initial_square,
    "l_shape": _initial_l_shape,
    "crack": _initial_crack,
}

_DOMAIN_AREA = {"unit_square_crisscross": 1.0, "l_shape": 3.0}


def initial_mesh(domain: str, target_h: float) -> Mesh:
    """Initial conforming triangulation of a named benchmark domain."""
    if domain not in _DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; choose from {sorted(_DOMAINS)}")
    mesh = _DOMAINS[domain](target_h)
    expected = _DOMAIN_AREA.get(domain)
    if expected is not None:
        if abs(mesh.total_area() - expected) > 1e-12 * expected:
            raise ValueError("initial mesh does not tile the domain")
    mesh.check_euler()
    return mesh


# ---------------------------------------------------------------------------
# newest-vertex bisection with closure
# ---------------------------------------------------------------------------


class _Bisector:
    """Working state for one refinement call."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.verts: list = list(map(tuple, mesh.vertices))
        # triangle record: (v0, v1, v2, local refedge, region, generation, root)
        self.tris: dict[int, tuple] = {}
        self.edge_map: dict[tuple[int, int], set[int]] = {}
        self.midpoint: dict[tuple[int, int], int] = {}
        self.next_id = mesh.num_triangles
        for t in range(mesh.num_triangles):
            v = mesh.triangles[t]
            rec = (
                int(v[0]),
                int(v[1]),
                int(v[2]),
                int(mesh.refedge[t]),
                int(mesh.region[t]),
                int(mesh.generation[t]),
                t,
            )
            self.tris[t] = rec
            for key in self._edge_keys(rec):
                self.edge_map.setdefault(key, set()).add(t)

    @staticmethod
    def _edge_keys(rec):
        v = rec[:3]
        for k in range(3):
            a, b = v[(k + 1) % 3], v[(k + 2) % 3]
            yield (a, b) if a < b else (b, a)

    def _ref_key(self, rec):
        v = rec[:3]
        k = rec[3]
        a, b = v[(k + 1) % 3], v[(k + 2) % 3]
        return (a, b) if a < b else (b, a)

    def _split(self, tid: int):
        """Bisect one triangle through its refinement edge."""
        rec = self.tris.pop(tid)
        for key in self._edge_keys(rec):
            self.edge_map[key].discard(tid)
        v = rec[:3]
        k, reg, gen, root = rec[3], rec[4], rec[5], rec[6]
        opp, a, b = v[k], v[(k + 1) % 3], v[(k + 2) % 3]
        m = self._mid(a, b)
        # children keep CCW orientation; their refinement edges are the
        # parent's two unbisected edges (opposite the new vertex)
        for child in ((opp, a, m, 2, reg, gen + 1, root), (opp, m, b, 1, reg, gen + 1, root)):
            cid = self.next_id
            self.next_id += 1
            self.tris[cid] = child
            for key in self._edge_keys(child):
                self.edge_map.setdefault(key, set()).add(cid)

    def _mid(self, a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        mid = self.midpoint.get(key)
        if mid is None:
            pa, pb = self.verts[a], self.verts[b]
            mid = len(self.verts)
            self.verts.append(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0))
            self.midpoint[key] = mid
        return mid

    def ensure_bisected(self, tid: int):
        """Bisect triangle ``tid`` through its refinement edge, recursively
        refining neighbors first so the result stays conforming."""
        stack = [tid]
        on_stack = {tid}
        while stack:
            t = stack[-1]
            if t not in self.tris:  # already split as a closure side effect
                stack.pop()
                on_stack.discard(t)
                continue
            rec = self.tris[t]
            key = self._ref_key(rec)
            if key in self.midpoint:
                self._split(t)
                stack.pop()
                on_stack.discard(t)
                continue
            others = self.edge_map.get(key, set()) - {t}
            if not others:
                self._split(t)
                stack.pop()
                on_stack.discard(t)
                continue
            n = next(iter(others))
            if self._ref_key(self.tris[n]) == key:
                self._split(t)
                self._split(n)
                stack.pop()
                on_stack.discard(t)
                continue
            if n in on_stack:  # cannot happen for longest-edge initialization
                raise RuntimeError("refinement-edge cycle detected")
            stack.append(n)
            on_stack.add(n)

    def split_edge(self, a: int, b: int):
        """Refine adjacent triangles until the edge (a, b) is bisected."""
        key = (a, b) if a < b else (b, a)
        guard = 0
        while key not in self.midpoint:
            tids = self.edge_map.get(key)
            if not tids:
                raise RuntimeError(f"marked edge {key} lost its adjacency")
            self.ensure_bisected(next(iter(tids)))
            guard += 1
            if guard > 8:
                raise RuntimeError("edge split did not terminate")

    def finish(self) -> Mesh:
        order = sorted(self.tris)
        tris = np.array([self.tris[t][:3] for t in order], dtype=np.int64)
        ref = np.array([self.tris[t][3] for t in order], dtype=np.int64)
        reg = np.array([self.tris[t][4] for t in order], dtype=np.int64)
        gen = np.array([self.tris[t][5] for t in order], dtype=np.int64)
        root = np.array([self.tris[t][6] for t in order], dtype=np.int64)
        return Mesh(
            np.array(self.verts, dtype=float),
            tris,
            ref,
            reg,
            gen,
            root,
            self.mesh.level + 1,
            self.mesh.domain,
            self.mesh.skip_euler,
        )


def bisect(mesh: Mesh, marks: MarkSet) -> Mesh:
    """Newest-vertex bisection of the marked edges or triangles, with
    conformity closure.  Returns a new mesh; the input is untouched."""
    ids = marks.ids
    if ids.size == 0:
        return mesh
    limit = mesh.num_edges if marks.kind == "edges" else mesh.num_triangles
    if ids.min() < 0 or ids.max() >= limit:
        raise ValueError(f"mark ids out of range for {marks.kind}")

    work = _Bisector(mesh)
    if marks.kind == "triangles":
        for t in ids:
            if int(t) in work.tris:
                work.ensure_bisected(int(t))
    else:
        for e in ids:
            a, b = mesh.edges[int(e)]
            work.split_edge(int(a), int(b))
    out = work.finish()
    out.check_euler()
    return out


def uniform_refine(mesh: Mesh) -> Mesh:
    """Bisect every triangle once (plus closure)."""
    return bisect(
        mesh, MarkSet("triangles", np.arange(mesh.num_triangles), case_label="uniform")
    )


# ---------------------------------------------------------------------------
# per-triangle geometry and quadrature operations
# ---------------------------------------------------------------------------


def triangle_geometry(mesh: Mesh, t: int) -> TriangleGeometry:
    """Area, centroid, diameter, and edge frames of one triangle."""
    if not 0 <= t < mesh.num_triangles:
        raise IndexError(f"triangle id {t} out of range")
    return TriangleGeometry(
        float(mesh.tri_area[t]),
        mesh.tri_centroid[t].copy(),
        float(mesh.tri_diam[t]),
        mesh.tri_edge_normal[t].copy(),
        mesh.tri_edge_tangent[t].copy(),
    )


def quadrature(mesh: Mesh, t: int, degree: int, integrand) -> float | np.ndarray:
    """Integrate a scalar or vector field over triangle ``t``.

    Exact for polynomials up to ``degree`` (supported: 1, 2, 5).  The
    integrand receives an (nq, 2) array of points and must return (nq,) or
    (nq, d) values.
    """
    if not 0 <= t < mesh.num_triangles:
        raise IndexError(f"triangle id {t} out of range")
    lam, w = tri_quad_rule(degree)
    pts = lam @ mesh.vertices[mesh.triangles[t]]
    vals = np.asarray(integrand(pts), dtype=float)
    out = np.tensordot(w, vals, axes=(0, 0)) * mesh.tri_area[t]
    return float(out) if out.ndim == 0 else out


def integrate_per_triangle(mesh: Mesh, degree: int, integrand, subdiv: int = 1) -> np.ndarray:
    """Per-triangle integrals of a pointwise field over the whole mesh."""
    pts, wts = mesh.quad_points(degree, subdiv)
    vals = np.asarray(integrand(pts.reshape(-1, 2)), dtype=float)
    vals = vals.reshape(pts.shape[0], pts.shape[1])
    return np.einsum("tq,tq->t", wts, vals)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def write_mesh(mesh: Mesh, path):
    """Plain-text mesh format: header "nt nv ne", vertex lines "x y",
    triangle lines "v0 v1 v2 refedge regiontag"."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.num_triangles} {mesh.num_vertices} {mesh.num_edges}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for t in range(mesh.num_triangles):
            v = mesh.triangles[t]
            fh.write(f"{v[0]} {v[1]} {v[2]} {mesh.refedge[t]} {mesh.region[t]}\n")


def read_mesh(path, domain: str = "", skip_euler: bool = True) -> Mesh:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError("malformed mesh header")
        nt, nv, ne = map(int, header)
        verts = np.array(
            [[float(v) for v in fh.readline().split()] for _ in range(nv)]
        )
        rows = [[int(v) for v in fh.readline().split()] for _ in range(nt)]
    rows = np.asarray(rows, dtype=np.int64)
    mesh = build_mesh(
        verts,
        rows[:, :3],
        refedge=rows[:, 3],
        region=rows[:, 4],
        domain=domain,
        skip_euler=skip_euler,
    )
    if mesh.num_edges != ne:
        raise ValueError(f"edge count mismatch: header {ne}, derived {mesh.num_edges}")
    return mesh


def write_vtk(mesh: Mesh, path, cell_scalars=None, cell_vectors=None):
    """Legacy-VTK ASCII export (UNSTRUCTURED_GRID, cell type 5) with optional
    per-cell scalar and vector data."""
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("triangulation\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.num_vertices} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r} 0.0\n")
        nt = mesh.num_triangles
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for v in mesh.triangles:
            fh.write(f"3 {v[0]} {v[1]} {v[2]}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write("\n".join(["5"] * nt) + "\n")
        if cell_scalars or cell_vectors:
            fh.write(f"CELL_DATA {nt}\n")
            for name, values in (cell_scalars or {}).items():
                fh.write(f"SCALARS {name} double 1\n")
                fh.write("LOOKUP_TABLE default\n")
                for v in values:
                    fh.write(f"{float(v)!r}\n")
            for name, values in (cell_vectors or {}).items():
                fh.write(f"VECTORS {name} double\n")
                for vx, vy in values:
                    fh.write(f"{float(vx)!r} {float(vy)!r} 0.0\n")
