"""Eigen-aligned square meshes and guaranteed-quality mesh completion.

Completion follows Chew's uniform scheme: constrained Delaunay
triangulation of the input system, then repeated insertion of
circumcentres of triangles whose circumradius exceeds ``h``. Inserted
points keep every vertex pair at least ``h`` apart, so on termination all
edges lie in ``[h, 2h]`` and all angles in ``[pi/6, 2pi/3]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import shapely
import triangle
from scipy.spatial import cKDTree
from shapely.geometry import box

from .triangulation import SquareMesh, Triangulation2D, face_angles

log = logging.getLogger(__name__)

REL = 1e-9
ANGLE_MIN = np.pi / 6
ANGLE_MAX = 2 * np.pi / 3


class HypothesisViolation(ValueError):
    """Input system breaks the separation or edge-length hypothesis."""


class MeshGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSquare:
    """The square ``[a/n, (a+1)/n] x [b/n, (b+1)/n]``."""

    a: int
    b: int
    n: int

    @property
    def side(self):
        return 1.0 / self.n

    @property
    def lo(self):
        return np.array([self.a / self.n, self.b / self.n])

    @property
    def centre(self):
        return np.array([(self.a + 0.5) / self.n, (self.b + 0.5) / self.n])

    @property
    def polygon(self):
        x0, y0 = self.lo
        return box(x0, y0, (self.a + 1) / self.n, (self.b + 1) / self.n)


def _clearance(points, square):
    lo = square.lo
    hi = lo + square.side
    return np.minimum.reduce([points[:, 0] - lo[0], hi[0] - points[:, 0],
                              points[:, 1] - lo[1], hi[1] - points[:, 1]])


def _largest_component(cells):
    """Largest edge-connected set of cells; ties go to the lexicographically first."""
    remaining = set(cells)
    best = set()
    for start in sorted(cells):
        if start not in remaining:
            continue
        comp, stack = {start}, [start]
        remaining.discard(start)
        while stack:
            i, j = stack.pop()
            for nb in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                if nb in remaining:
                    remaining.discard(nb)
                    comp.add(nb)
                    stack.append(nb)
        if len(comp) > len(best):
            best = comp
    return frozenset(best)


def aligned_square_mesh(square, j, axis_angle):
    """Largest connected square mesh of size ``side/j`` inside ``square``.

    The lattice is anchored at the square's centre and rotated by
    ``axis_angle``; every kept vertex lies at distance at least the mesh
    size from the complement of the square.
    """
    eps = square.side / j
    empty = SquareMesh(eps, tuple(square.centre), axis_angle, frozenset())
    if j < 2:
        return empty
    r = int(np.ceil(j))
    idx = np.arange(-r, r + 1)
    I, K = np.meshgrid(idx, idx, indexing="ij")
    ij = np.column_stack([I.ravel(), K.ravel()])
    xy = empty.to_world(ij)
    ok = _clearance(xy, square) >= eps * (1 - REL)
    valid = {tuple(v) for v in ij[ok].tolist()}
    cells = [(i, k) for i, k in valid
             if {(i + 1, k), (i, k + 1), (i + 1, k + 1)} <= valid]
    if not cells:
        return empty
    return SquareMesh(eps, tuple(square.centre), axis_angle, _largest_component(cells))


def subdivide_square_boundary(square, j):
    """Integer keys (units of ``1/(n j)``) of the ``4j`` boundary points and segments.

    Keys are exact, so shared edges between neighbouring squares
    deduplicate without floating-point comparison.
    """
    a, b = square.a * j, square.b * j
    ring = ([(a + t, b) for t in range(j)] + [(a + j, b + t) for t in range(j)]
            + [(a + j - t, b + j) for t in range(j)] + [(a, b + j - t) for t in range(j)])
    segs = [(ring[t], ring[(t + 1) % len(ring)]) for t in range(len(ring))]
    return ring, segs


@dataclass
class EdgeSystem:
    """Vertices and edges inside a closed polygonal region with length scale ``h``."""

    region: object
    vertices: np.ndarray
    edges: np.ndarray
    h: float

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)

    def validate(self):
        h = self.h
        if not h > 0:
            raise HypothesisViolation("h must be positive")
        pts = self.vertices
        tree = cKDTree(pts)
        close = tree.query_pairs(h * (1 - REL), output_type="ndarray")
        if len(close):
            i, k = close[0]
            d = float(np.hypot(*(pts[i] - pts[k])))
            raise HypothesisViolation(
                f"hypothesis violation: vertices {i} and {k} are {d:.6g} apart (< h = {h:.6g})")
        if len(self.edges):
            lengths = np.hypot(*(pts[self.edges[:, 1]] - pts[self.edges[:, 0]]).T)
            bad = (lengths < h * (1 - REL)) | (lengths > h * np.sqrt(3) * (1 + REL))
            if bad.any():
                e = int(np.flatnonzero(bad)[0])
                raise HypothesisViolation(
                    f"hypothesis violation: edge {self.edges[e].tolist()} has length "
                    f"{lengths[e]:.6g} outside [h, h*sqrt(3)]")
        region = self.region
        tol = REL * max(1.0, h)
        if not np.all(shapely.intersects_xy(region.buffer(tol), pts[:, 0], pts[:, 1])):
            raise HypothesisViolation("hypothesis violation: vertex outside the region")
        # the region boundary must be covered by system edges
        bnd = region.boundary
        lines = shapely.linestrings(np.stack([pts[self.edges[:, 0]], pts[self.edges[:, 1]]], 1))
        mids = shapely.points(0.5 * (pts[self.edges[:, 0]] + pts[self.edges[:, 1]]))
        on = shapely.distance(mids, bnd) <= tol
        covered = float(shapely.length(lines[on]).sum())
        if abs(covered - bnd.length) > 1e-7 * bnd.length:
            raise HypothesisViolation(
                "region boundary is not subdivided by system edges "
                f"(covered {covered:.9g} of {bnd.length:.9g})")


@dataclass
class QualityReport:
    edge_len_range: tuple
    angle_range: tuple
    contains_input: bool
    violations: list = field(default_factory=list)
    h: float = 0.0

    @property
    def passed(self):
        return self.contains_input and not self.violations

    def to_dict(self):
        return {"h": self.h, "edge_len_range": list(self.edge_len_range),
                "angle_range": list(self.angle_range), "contains_input": self.contains_input,
                "violations": self.violations[:50], "n_violations": len(self.violations),
                "passed": self.passed}


def verify_quality(tri, h, system=None, max_listed=1000):
    """Exhaustive check of edges in ``[h, 2h]`` and angles in ``[pi/6, 2pi/3]``."""
    V = tri.vertices
    lengths = np.hypot(*(V[tri.edges[:, 1]] - V[tri.edges[:, 0]]).T)
    angles = face_angles(V, tri.faces)
    violations = []
    for e in np.flatnonzero((lengths < h * (1 - REL)) | (lengths > 2 * h * (1 + REL)))[:max_listed]:
        violations.append({"kind": "edge", "edge": tri.edges[e].tolist(),
                           "length": float(lengths[e])})
    bad = (angles.min(1) < ANGLE_MIN - REL) | (angles.max(1) > ANGLE_MAX + REL)
    for f in np.flatnonzero(bad)[:max_listed]:
        violations.append({"kind": "angle", "face": int(f), "vertices": tri.faces[f].tolist(),
                           "angles": angles[f].tolist()})
    contains = True if system is None else contains_system(tri, system)
    return QualityReport((float(lengths.min()), float(lengths.max())),
                         (float(angles.min()), float(angles.max())), contains, violations, h)


def contains_system(tri, system):
    n = len(system.vertices)
    if len(tri.vertices) < n or not np.array_equal(tri.vertices[:n], system.vertices):
        return False
    have = {tuple(e) for e in tri.edges.tolist()}
    return all((min(u, v), max(u, v)) in have for u, v in system.edges.tolist())


def _hole_points(region):
    polys = getattr(region, "geoms", [region])
    return [ring_poly.representative_point().coords[0]
            for poly in polys for ring_poly in map(shapely.Polygon, poly.interiors)]


def _cdt(points, segments, holes=()):
    data = {"vertices": points, "segments": segments}
    if len(holes):
        data["holes"] = np.asarray(holes, dtype=float)
    out = triangle.triangulate(data, "pQ")
    if len(out["vertices"]) != len(points):
        raise MeshGenerationError("constrained triangulation introduced Steiner points "
                                  "(input segments intersect)")
    faces = np.asarray(out["triangles"], dtype=np.int64)
    p = points[faces]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    faces[cross < 0] = faces[cross < 0][:, [0, 2, 1]]
    return faces


def _circumcentres(points, faces):
    a, b, c = (points[faces[:, i]] for i in range(3))
    b = b - a
    c = c - a
    d = 2 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    b2 = (b * b).sum(1)
    c2 = (c * c).sum(1)
    ux = (c[:, 1] * b2 - b[:, 1] * c2) / d
    uy = (b[:, 0] * c2 - c[:, 0] * b2) / d
    return a + np.column_stack([ux, uy]), np.hypot(ux, uy)


def complete_triangulation(system, max_rounds=None):
    """Complete an edge system to a triangulation of its region.

    Returns ``(Triangulation2D, QualityReport)``. The first
    ``len(system.vertices)`` output vertices are the input vertices in
    order.
    """
    system.validate()
    h = system.h
    points = np.array(system.vertices, dtype=float)
    segments = system.edges
    region = system.region
    shapely.prepare(region)
    expected = max(1, int(4 * region.area / h ** 2))
    cap = max_rounds or 50 * expected
    holes = _hole_points(region)
    rounds = 0
    while True:
        faces = _cdt(points, segments, holes)
        centres, radius = _circumcentres(points, faces)
        bad = np.flatnonzero(radius > h * (1 + REL))
        if not len(bad):
            break
        rounds += 1
        if rounds > cap:
            raise MeshGenerationError(f"refinement did not terminate within {cap} rounds "
                                      f"({len(bad)} triangles with circumradius > h)")
        order = np.lexsort((centres[bad, 1], centres[bad, 0], -radius[bad]))
        tree = cKDTree(points)
        accepted, grid = [], {}
        rejected = []
        for f in bad[order]:
            c = centres[f]
            if not shapely.intersects_xy(region, c[0], c[1]):
                rejected.append((int(f), "circumcentre outside region"))
                continue
            if tree.query(c)[0] < h * (1 - REL):
                rejected.append((int(f), "circumcentre closer than h to a vertex"))
                continue
            key = (int(np.floor(c[0] / h)), int(np.floor(c[1] / h)))
            near = [grid[(key[0] + dx, key[1] + dy)]
                    for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (key[0] + dx, key[1] + dy) in grid]
            if any(np.hypot(*(c - q)) < h for qs in near for q in qs):
                continue
            grid.setdefault(key, []).append(c)
            accepted.append(c)
        if not accepted:
            f, why = rejected[0] if rejected else (int(bad[0]), "no progress")
            raise MeshGenerationError(
                f"refinement stalled: face {faces[f].tolist()} with circumradius "
                f"{radius[f]:.6g} > h = {h:.6g}: {why}")
        points = np.vstack([points, np.array(accepted)])
        log.debug("round %d: %d bad, %d inserted", rounds, len(bad), len(accepted))
    tri = Triangulation2D(points, faces)
    return tri, verify_quality(tri, h, system)


def polygon_system(region, h, interior=None):
    """Edge system made of the boundary of ``region`` cut into pieces of length in ``[h, h*sqrt(3)]``.

    ``interior`` is an optional ``(vertices, edges)`` pair appended to the
    boundary subdivision (edge indices refer to ``vertices``).
    """
    verts, edges = [], []
    polys = getattr(region, "geoms", [region])
    for poly in polys:
        for ring in (poly.exterior, *poly.interiors):
            pts = np.asarray(ring.coords)[:-1]
            first = len(verts)
            for a, b in zip(pts, np.roll(pts, -1, axis=0)):
                length = float(np.hypot(*(b - a)))
                k = int(np.floor(length / h * (1 + REL)))
                if k < 1 or length / k > h * np.sqrt(3) * (1 + REL):
                    raise HypothesisViolation(
                        f"hypothesis violation: boundary side of length {length:.6g} cannot be "
                        f"cut into pieces of length in [h, h*sqrt(3)] for h = {h:.6g}")
                for t in range(k):
                    verts.append(a + (b - a) * t / k)
            count = len(verts) - first
            edges += [(first + t, first + (t + 1) % count) for t in range(count)]
    if interior is not None:
        iv, ie = interior
        base = len(verts)
        verts += list(np.asarray(iv, dtype=float).reshape(-1, 2))
        edges += [(base + u, base + v) for u, v in np.asarray(ie, dtype=np.int64).reshape(-1, 2)]
    return EdgeSystem(region, np.array(verts), np.array(edges, dtype=np.int64).reshape(-1, 2), h)


def square_system(squares, n, j, axis_angles):
    """Assemble the edge system of a union of grid squares.

    Each square's boundary is cut into ``j`` segments per side and
    receives the aligned square mesh with the given axis angle. Returns
    ``(system, meshes)`` with ``meshes`` parallel to ``squares``.
    """
    h = 1.0 / (n * j)
    index, verts, edges = {}, [], set()

    def key_vertex(k):
        if k not in index:
            index[k] = len(verts)
            verts.append((k[0] / (n * j), k[1] / (n * j)))
        return index[k]

    for sq in squares:
        ring, segs = subdivide_square_boundary(sq, j)
        for a, b in segs:
            u, v = key_vertex(a), key_vertex(b)
            edges.add((min(u, v), max(u, v)))
    meshes = []
    for sq, theta in zip(squares, axis_angles):
        mesh = aligned_square_mesh(sq, j, theta)
        meshes.append(mesh)
        if mesh.is_empty:
            continue
        base = len(verts)
        local = {v: base + i for i, v in enumerate(mesh.lattice_vertices)}
        verts.extend(map(tuple, mesh.to_world(mesh.lattice_vertices)))
        for a, b in mesh.lattice_edges:
            u, v = local[a], local[b]
            edges.add((min(u, v), max(u, v)))
    region = shapely.union_all([sq.polygon for sq in squares])
    system = EdgeSystem(region, np.array(verts), np.array(sorted(edges)), h)
    return system, meshes
