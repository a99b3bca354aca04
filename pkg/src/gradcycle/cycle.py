"""The gradient cycle D0 + D1 + D2 of a PL function of two variables.

Orientation conventions (products use the standard rule
``d(A x B) = dA x B + (-1)^dim(A) A x dB``):

* D2 pairs each CCW face with its constant gradient.
* D1 pairs each interior edge ``u -> v`` (``u < v``) with the fiber segment
  from the right-face gradient to the left-face gradient, coefficient +1.
* D0 pairs each interior vertex with the region bounded by its star
  gradients in counterclockwise order, so a convex function gets fibers of
  positive multiplicity and the algebraic area of a quadratic's fiber is
  ``det H``.

With these signs the boundary chain cancels identically.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import shapely

from .geometry import Region, arrange_and_wind, join_region, signed_area  # noqa: F401
from .triangulation import vertex_star_ccw

PERP_TOL = 1e-8


class CycleConsistencyError(RuntimeError):
    pass


@dataclass
class GradientCycle:
    """Layers of the gradient cycle over a triangulation.

    Attributes
    ----------
    gradients : ndarray (F, 2)
        D2 layer, one constant gradient per face.
    d1_edges : ndarray (K,)
        Interior edges with a nonzero fiber segment.
    d1_start, d1_end : ndarray (K, 2)
        Fiber segment endpoints (right-face and left-face gradients).
    d0_vertices : ndarray (M,)
        Interior vertices.
    d0_polylines : list of ndarray
        Star gradients in CCW order around each interior vertex.
    d0_regions : list of Region
    """

    tri: object
    gradients: np.ndarray
    d1_edges: np.ndarray
    d1_start: np.ndarray
    d1_end: np.ndarray
    d0_vertices: np.ndarray
    d0_polylines: list
    d0_regions: list
    star_faces: list = field(default_factory=list)

    @property
    def d1_lengths(self):
        return np.hypot(*(self.d1_end - self.d1_start).T)

    @property
    def edge_lengths(self):
        e = self.tri.edges[self.d1_edges]
        return np.hypot(*(self.tri.vertices[e[:, 1]] - self.tri.vertices[e[:, 0]]).T)

    @property
    def d0_masses(self):
        return np.array([r.mass for r in self.d0_regions])

    @property
    def mass_d2(self):
        return float(self.tri.face_areas.sum())

    @property
    def mass_d1(self):
        return float(np.sum(self.edge_lengths * self.d1_lengths))

    @property
    def mass_d0(self):
        return float(np.sum(self.d0_masses)) if self.d0_regions else 0.0

    @property
    def masses(self):
        d0, d1, d2 = self.mass_d0, self.mass_d1, self.mass_d2
        return {"d0": d0, "d1": d1, "d2": d2, "total": d0 + d1 + d2}

    @property
    def total_mass(self):
        return self.masses["total"]

    def fiber(self, vertex):
        """``(polyline, region)`` above an interior vertex."""
        k = int(np.searchsorted(self.d0_vertices, vertex))
        if k >= len(self.d0_vertices) or self.d0_vertices[k] != vertex:
            raise KeyError(f"vertex {vertex} carries no D0 fiber")
        return self.d0_polylines[k], self.d0_regions[k]

    def to_dict(self):
        return {
            "masses": self.masses,
            "d2": [{"face": i, "gradient": g.tolist()} for i, g in enumerate(self.gradients)],
            "d1": [{"edge": self.tri.edges[e].tolist(), "start": a.tolist(), "end": b.tolist()}
                   for e, a, b in zip(self.d1_edges, self.d1_start, self.d1_end)],
            "d0": [{"vertex": int(v), "polyline": pl.tolist(), "mass": r.mass,
                    "algebraic_area": r.algebraic_area}
                   for v, pl, r in zip(self.d0_vertices, self.d0_polylines, self.d0_regions)],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _segment_tolerance(tri, gradients, values=None):
    gmax = float(np.abs(gradients).max()) if len(gradients) else 0.0
    tol = 1e-12 * (1.0 + gmax)
    if values is not None and len(values):
        lengths = np.hypot(*(tri.vertices[tri.edges[:, 1]] - tri.vertices[tri.edges[:, 0]]).T)
        tol = max(tol, 1e4 * np.finfo(float).eps * float(np.abs(values).max()) / lengths.min())
    return tol


def build_cycle_from_gradients(tri, gradients, check_perpendicular=True, values=None):
    """Assemble the three layers from per-face gradients.

    ``check_perpendicular=False`` allows discontinuous per-face data (used
    as a negative control for :func:`lagrangian_check`).
    """
    gradients = np.asarray(gradients, dtype=float).reshape(-1, 2)
    s_tol = _segment_tolerance(tri, gradients, values)

    interior = np.flatnonzero(tri.interior_edge_mask)
    left = tri.edge_faces[interior, 0]
    right = tri.edge_faces[interior, 1]
    start, end = gradients[right], gradients[left]
    seg_len = np.hypot(*(end - start).T)
    keep = seg_len > s_tol
    d1_edges, start, end = interior[keep], start[keep], end[keep]

    if check_perpendicular and len(d1_edges):
        defect = _perp_defect(tri, d1_edges, start, end)
        if defect.max() > PERP_TOL:
            j = int(np.argmax(defect))
            raise CycleConsistencyError(
                f"fiber segment over edge {tri.edges[d1_edges[j]].tolist()} is not "
                f"perpendicular to it (|cos| = {defect[j]:.3g})")

    d0_vertices = np.asarray(tri.interior_vertices, dtype=np.int64)
    polylines, regions, stars = [], [], []
    for v in d0_vertices:
        faces, _ = vertex_star_ccw(tri, v)
        pl = gradients[faces]
        polylines.append(pl)
        stars.append(faces)
        span = np.ptp(pl, axis=0).max() if len(pl) else 0.0
        regions.append(Region() if span <= s_tol else arrange_and_wind(pl))

    return GradientCycle(tri, gradients, d1_edges, start, end, d0_vertices,
                         polylines, regions, stars)


def build_cycle(p):
    return build_cycle_from_gradients(p.base, p.gradients, values=p.values)


def _perp_defect(tri, edges, start, end):
    e = tri.edges[edges]
    sig = tri.vertices[e[:, 1]] - tri.vertices[e[:, 0]]
    s = end - start
    cos = (sig * s).sum(1) / (np.hypot(*sig.T) * np.hypot(*s.T))
    return np.abs(cos)


def lagrangian_check(cycle):
    """Maximum Lagrangian defect per layer.

    D2 has base-parallel tangent planes and D0 lies in single fibers, so
    only D1 can fail: the symplectic form on an edge times segment is the
    inner product of their directions.
    """
    d1 = _perp_defect(cycle.tri, cycle.d1_edges, cycle.d1_start, cycle.d1_end)
    d1max = float(d1.max()) if len(d1) else 0.0
    return {"d2": 0.0, "d1": d1max, "d0": 0.0, "max": d1max}


class BoundaryReport(NamedTuple):
    """Uncancelled boundary mass over interior edges and vertices.

    ``region_defect`` is a floating-point consistency figure (winding-cell
    area against the shoelace area of each fiber polyline) and is not part
    of ``residual``.
    """

    edge_residual: float
    vertex_residual: float
    coefficient_residual: int
    region_defect: float

    @property
    def residual(self):
        return max(self.edge_residual, self.vertex_residual)

    @property
    def ok(self):
        return self.coefficient_residual == 0


def boundary_check(cycle):
    """Assemble the boundary chain over the interior skeleton and measure what is left.

    Terms over interior edges are ``edge x point``; coefficients are
    summed per point and the leftover is the mass of the uncancelled
    terms (edge length times total |coefficient|). Terms over interior
    vertices are ``vertex x segment`` and the leftover is the mass of the
    uncancelled segments. Points are compared exactly, so a cancelling
    chain reports a residual of exactly zero.
    D0 boundaries are taken from the generating polylines; the report
    also records how far each region's algebraic area is from the
    polyline's signed area.
    """
    tri, grads = cycle.tri, cycle.gradients
    interior_edge = tri.interior_edge_mask
    interior_vertex = np.zeros(tri.n_vertices, dtype=bool)
    interior_vertex[cycle.d0_vertices] = True

    # edge x point terms: key edge index -> dict point -> coef
    over_edge = defaultdict(lambda: defaultdict(int))
    for f, (a, b, c) in enumerate(tri.faces):
        for u, v in ((a, b), (b, c), (c, a)):
            e = tri.edge_index(u, v)
            if interior_edge[e]:
                over_edge[e][tuple(grads[f])] += 1 if u < v else -1
    # vertex x segment terms: key vertex -> dict canonical segment -> coef
    over_vertex = defaultdict(lambda: defaultdict(int))

    def add_seg(vertex, a, b, coef):
        if not interior_vertex[vertex]:
            return
        ka, kb = tuple(a), tuple(b)
        if ka == kb:
            return
        if ka > kb:
            ka, kb, coef = kb, ka, -coef
        over_vertex[vertex][(ka, kb)] += coef

    for e, a, b in zip(cycle.d1_edges, cycle.d1_start, cycle.d1_end):
        u, v = tri.edges[e]
        # d(sigma x s) = d(sigma) x s - sigma x ds
        add_seg(v, a, b, 1)
        add_seg(u, a, b, -1)
        over_edge[e][tuple(b)] -= 1
        over_edge[e][tuple(a)] += 1
    for v, pl in zip(cycle.d0_vertices, cycle.d0_polylines):
        for a, b in zip(pl, np.roll(pl, -1, axis=0)):
            add_seg(v, a, b, 1)

    coef_res = 0
    edge_res = 0.0
    for e, terms in over_edge.items():
        coef_res += abs(sum(terms.values()))
        left = sum(abs(c) for c in terms.values())
        if left:
            u, v = tri.edges[e]
            edge_res = max(edge_res, left * float(np.hypot(*(tri.vertices[v] - tri.vertices[u]))))
    vert_res = 0.0
    for v, segs in over_vertex.items():
        r = sum(abs(c) * float(np.hypot(kb[0] - ka[0], kb[1] - ka[1]))
                for (ka, kb), c in segs.items() if c)
        vert_res = max(vert_res, r)
    region_defect = 0.0
    for pl, reg in zip(cycle.d0_polylines, cycle.d0_regions):
        region_defect = max(region_defect, abs(reg.algebraic_area - signed_area(pl)))
    return BoundaryReport(edge_res, vert_res, coef_res, region_defect)


def _as_region_geometry(region):
    if region is None or isinstance(region, shapely.Geometry):
        return region
    return shapely.Polygon(np.asarray(region, float))


def mass(cycle, region=None):
    """Mass of the cycle restricted to the part lying over an open region.

    ``region`` is a shapely geometry standing for its interior (``None``
    means the whole support). Returns a dict with per-layer masses.
    """
    region = _as_region_geometry(region)
    tri = cycle.tri
    if region is None:
        return cycle.masses
    if region.is_empty:
        return {"d0": 0.0, "d1": 0.0, "d2": 0.0, "total": 0.0}
    shapely.prepare(region)
    polys = tri.face_polygons()
    inside = shapely.contains_properly(region, polys)
    outside = shapely.disjoint(region, polys)
    partial = ~(inside | outside)
    d2 = float(tri.face_areas[inside].sum())
    if partial.any():
        d2 += float(shapely.area(shapely.intersection(polys[partial], region)).sum())

    d1 = 0.0
    if len(cycle.d1_edges):
        e = tri.edges[cycle.d1_edges]
        lines = shapely.linestrings(np.stack([tri.vertices[e[:, 0]], tri.vertices[e[:, 1]]], 1))
        lin_in = shapely.contains_properly(region, lines)
        lin_out = shapely.disjoint(region, lines)
        lin_part = ~(lin_in | lin_out)
        frac = np.where(lin_in, 1.0, 0.0)
        if lin_part.any():
            full = cycle.edge_lengths[lin_part]
            cut = shapely.length(shapely.intersection(lines[lin_part], region))
            frac[lin_part] = cut / full
        d1 = float(np.sum(frac * cycle.edge_lengths * cycle.d1_lengths))

    d0 = 0.0
    if len(cycle.d0_vertices):
        xy = tri.vertices[cycle.d0_vertices]
        sel = shapely.contains_xy(region, xy[:, 0], xy[:, 1])
        # contains_xy counts boundary points for some geometries; keep the open set
        if sel.any():
            on_edge = shapely.intersects_xy(region.boundary, xy[sel, 0], xy[sel, 1])
            idx = np.flatnonzero(sel)
            sel[idx[on_edge]] = False
        d0 = float(cycle.d0_masses[sel].sum())
    return {"d0": d0, "d1": d1, "d2": d2, "total": d0 + d1 + d2}


def _triangle_rule(level):
    """Barycentric centroids of the 4**level congruent sub-triangles."""
    n = 2 ** level
    pts = []
    for i in range(n):
        for j in range(n - i):
            pts.append(((i + 1 / 3) / n, (j + 1 / 3) / n))
            if i + j < n - 1:
                pts.append(((i + 2 / 3) / n, (j + 2 / 3) / n))
    lam = np.array(pts)
    return np.column_stack([1 - lam.sum(1), lam]), np.full(len(lam), 1.0 / len(lam))


# degree-5 seven-point rule on the reference triangle
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_D5 = np.array([[1 / 3, 1 / 3, 1 / 3],
                [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
                [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]])
_D5W = np.array([0.225, *[0.132394152788506] * 3, *[0.125939180544827] * 3])


def support_identity_check(cycle, p, phi, rtol=1e-6, max_level=6):
    """Both sides of the support identity for a test function ``phi(x, xi)``.

    ``phi`` takes arrays ``x`` (N, 2) and ``xi`` (N, 2). The left side
    integrates ``phi(x, grad_i)`` over each face using the D2 layer
    (refined centroid rule until successive levels agree to ``rtol``).
    The right side evaluates ``phi(x, grad p(x))`` with ``grad p`` found by
    point location in ``p`` on an independent seven-point rule over
    quartered faces.
    """
    tri = cycle.tri
    P = tri.vertices[tri.faces]
    areas = tri.face_areas

    def lhs_at(level):
        bary, w = _triangle_rule(level)
        x = np.matmul(bary, P).reshape(-1, 2)
        xi = np.repeat(cycle.gradients, len(w), axis=0)
        vals = phi(x, xi).reshape(len(P), len(w))
        return float(np.sum(vals @ w * areas))

    prev = lhs_at(0)
    for level in range(1, max_level + 1):
        cur = lhs_at(level)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            break
        prev = cur
    lhs = cur

    bary, w = _subdivided_rule(2)
    x = np.matmul(bary, P).reshape(-1, 2)
    xi = p.gradients[p.locate(x)]
    vals = phi(x, xi).reshape(len(P), -1)
    rhs = float(np.sum(vals @ w * areas))
    return lhs, rhs


def _subdivided_rule(level):
    """Seven-point rule applied on each of 4**level sub-triangles."""
    n = 2 ** level
    tris = []
    for i in range(n):
        for j in range(n - i):
            a = np.array([i, j]) / n
            tris.append([a, a + [1 / n, 0], a + [0, 1 / n]])
            if i + j < n - 1:
                tris.append([a + [1 / n, 0], a + [1 / n, 1 / n], a + [0, 1 / n]])
    pts, wts = [], []
    for t in tris:
        t = np.array(t)
        for b, wq in zip(_D5, _D5W):
            lam = b @ t
            pts.append([1 - lam.sum(), lam[0], lam[1]])
            wts.append(wq / len(tris))
    return np.array(pts), np.array(wts)
