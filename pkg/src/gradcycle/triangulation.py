"""Oriented 2D triangulations, square meshes and fatness statistics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import shapely
from shapely.geometry import Polygon, box

from .geometry import length_tolerance


class TriangulationError(ValueError):
    """Invalid triangulation input; ``simplex`` names the offending item."""

    def __init__(self, message, simplex=None):
        super().__init__(message)
        self.simplex = simplex


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class Triangulation2D:
    """A triangulated polygonal region with CCW faces and edge incidence.

    Parameters
    ----------
    vertices : array_like, shape (V, 2)
    faces : array_like, shape (F, 3)
        Counterclockwise vertex-index triples.

    Attributes
    ----------
    edges : ndarray, shape (E, 2)
        Undirected edges stored as ``(u, v)`` with ``u < v``.
    edge_faces : ndarray, shape (E, 2)
        ``(left, right)`` faces of the directed edge ``u -> v``; ``-1``
        marks the boundary side.
    """

    def __init__(self, vertices, faces):
        verts = np.asarray(vertices, dtype=float).reshape(-1, 2)
        tris = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        nv = len(verts)
        if not np.all(np.isfinite(verts)):
            raise TriangulationError("non-finite vertex coordinates")
        if tris.size and (tris.min() < 0 or tris.max() >= nv):
            bad = int(np.flatnonzero((tris < 0).any(1) | (tris >= nv).any(1))[0])
            raise TriangulationError(f"face {bad}: vertex index out of range", ("face", bad))
        p0, p1, p2 = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
        d1, d2 = p1 - p0, p2 - p0
        areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        tol_area = length_tolerance(verts) ** 2
        if np.any(areas < -tol_area):
            bad = int(np.flatnonzero(areas < -tol_area)[0])
            raise TriangulationError(f"face {bad}: face orientation is clockwise", ("face", bad))
        if np.any(np.abs(areas) <= tol_area):
            bad = int(np.flatnonzero(np.abs(areas) <= tol_area)[0])
            raise TriangulationError(f"face {bad}: degenerate face", ("face", bad))

        heads = tris.reshape(-1)
        tails = np.roll(tris, -1, axis=1).reshape(-1)
        he_key = heads * nv + tails
        uniq, counts = np.unique(he_key, return_counts=True)
        if np.any(counts > 1):
            k = int(uniq[counts > 1][0])
            raise TriangulationError(
                f"edge ({k // nv}, {k % nv}): non-manifold edge or inconsistent "
                "orientation of neighbouring faces", ("edge", (k // nv, k % nv)))
        lo, hi = np.minimum(heads, tails), np.maximum(heads, tails)
        und = lo * nv + hi
        ekeys, inverse = np.unique(und, return_inverse=True)
        edges = np.stack([ekeys // nv, ekeys % nv], axis=1)
        edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
        face_of_he = np.repeat(np.arange(len(tris)), 3)
        forward = heads < tails
        edge_faces[inverse[forward], 0] = face_of_he[forward]
        edge_faces[inverse[~forward], 1] = face_of_he[~forward]

        self.vertices = _frozen(verts)
        self.faces = _frozen(tris)
        self.edges = _frozen(edges)
        self.edge_faces = _frozen(edge_faces)
        self.face_areas = _frozen(areas)
        self._he_face = dict(zip(he_key.tolist(), face_of_he.tolist()))
        self._edge_index = dict(zip(ekeys.tolist(), range(len(ekeys))))

    def __repr__(self):
        return (f"Triangulation2D(V={len(self.vertices)}, E={len(self.edges)}, "
                f"F={len(self.faces)})")

    @property
    def n_vertices(self):
        return len(self.vertices)

    def face_with_halfedge(self, u, v):
        """Face containing the directed edge ``u -> v`` (on its left), or -1."""
        return self._he_face.get(int(u) * self.n_vertices + int(v), -1)

    def edge_index(self, u, v):
        u, v = min(u, v), max(u, v)
        return self._edge_index[int(u) * self.n_vertices + int(v)]

    @cached_property
    def interior_edge_mask(self):
        return (self.edge_faces >= 0).all(axis=1)

    @cached_property
    def boundary_vertex_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[~self.interior_edge_mask].reshape(-1)] = True
        return mask

    @cached_property
    def interior_vertices(self):
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.faces.reshape(-1)] = True
        return np.flatnonzero(used & ~self.boundary_vertex_mask)

    @cached_property
    def vertex_faces(self):
        order = np.argsort(self.faces.reshape(-1), kind="stable")
        verts = self.faces.reshape(-1)[order]
        splits = np.searchsorted(verts, np.arange(self.n_vertices + 1))
        fidx = order // 3
        return [fidx[splits[i]:splits[i + 1]] for i in range(self.n_vertices)]

    @property
    def area(self):
        return float(self.face_areas.sum())

    def face_polygons(self):
        return shapely.polygons(self.vertices[self.faces])

    @cached_property
    def support(self):
        """Closed support as a shapely geometry."""
        return shapely.union_all(self.face_polygons())

    def to_dict(self):
        return {"vertices": self.vertices.tolist(), "faces": self.faces.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["vertices"], data["faces"])

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def to_off(self):
        lines = ["OFF", f"{len(self.vertices)} {len(self.faces)} 0"]
        lines += [f"{x!r} {y!r} 0.0" for x, y in self.vertices]
        lines += [f"3 {a} {b} {c}" for a, b, c in self.faces]
        return "\n".join(lines) + "\n"


def build_triangulation(vertices, faces):
    return Triangulation2D(vertices, faces)


class FatnessStats(NamedTuple):
    theta_min: float
    edge_max: float
    edge_min: float
    worst_face: int


def face_angles(vertices, faces):
    """Interior angles, shape (F, 3); column ``i`` is the angle at ``faces[:, i]``."""
    p = np.asarray(vertices, float)[np.asarray(faces)]
    out = np.empty(p.shape[:2])
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        dot = (a * b).sum(axis=1)
        out[:, i] = np.arctan2(np.abs(cross), dot)
    return out


def fatness(tri):
    angles = face_angles(tri.vertices, tri.faces)
    lengths = np.hypot(*(tri.vertices[tri.edges[:, 1]] - tri.vertices[tri.edges[:, 0]]).T)
    mins = angles.min(axis=1)
    worst = int(np.argmin(mins))
    return FatnessStats(float(mins[worst]), float(lengths.max()), float(lengths.min()), worst)


def vertex_star_ccw(tri, vertex):
    """Faces around an interior vertex in counterclockwise order.

    The cycle starts at the face whose centroid direction has the smallest
    polar angle in ``[0, 2*pi)``. Returns ``(faces, spokes)`` where
    ``spokes[i]`` is the far endpoint of the edge shared by ``faces[i-1]``
    and ``faces[i]`` (the edge is oriented away from ``vertex``).
    """
    k = int(vertex)
    incident = tri.vertex_faces[k]
    if tri.boundary_vertex_mask[k] or len(incident) == 0:
        raise TriangulationError(f"vertex {k}: not an interior vertex", ("vertex", k))
    centre = tri.vertices[k]
    cents = tri.vertices[tri.faces[incident]].mean(axis=1) - centre
    polar = np.mod(np.arctan2(cents[:, 1], cents[:, 0]), 2 * np.pi)
    f = int(incident[np.argmin(polar)])
    faces, spokes = [], []
    for _ in range(len(incident)):
        row = list(tri.faces[f])
        r = row.index(k)
        a, b = row[(r + 1) % 3], row[(r + 2) % 3]
        faces.append(f)
        spokes.append(a)
        f = tri.face_with_halfedge(k, b)
        if f < 0:
            raise TriangulationError(f"vertex {k}: star is not closed", ("vertex", k))
    if f != faces[0]:
        raise TriangulationError(f"vertex {k}: non-manifold vertex star", ("vertex", k))
    return faces, spokes


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class SquareMesh:
    """A rigid image of a subcomplex of the size-``size`` lattice triangulation.

    Cells are integer pairs ``(i, j)`` naming the mesh-frame square
    ``[i, i+1] x [j, j+1]``; each is split by its slope -1 diagonal.
    """

    size: float
    origin: tuple = (0.0, 0.0)
    axis_angle: float = 0.0
    cells: frozenset = frozenset()

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError("square mesh size must be positive")
        object.__setattr__(self, "cells", frozenset((int(i), int(j)) for i, j in self.cells))
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @classmethod
    def block(cls, nx, ny, size=1.0, origin=(0.0, 0.0), axis_angle=0.0, start=(0, 0)):
        cells = {(start[0] + i, start[1] + j) for i in range(nx) for j in range(ny)}
        return cls(size, origin, axis_angle, frozenset(cells))

    @property
    def is_empty(self):
        return not self.cells

    def to_world(self, ij):
        ij = np.asarray(ij, dtype=float).reshape(-1, 2)
        rot = _rotation(self.axis_angle)
        return np.asarray(self.origin) + self.size * ij @ rot.T

    def to_mesh(self, xy):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        rot = _rotation(self.axis_angle)
        return (xy - np.asarray(self.origin)) @ rot / self.size

    @cached_property
    def lattice_vertices(self):
        pts = set()
        for i, j in self.cells:
            pts.update({(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)})
        return sorted(pts)

    @cached_property
    def interior_lattice_vertices(self):
        c = self.cells
        return [(i, j) for i, j in self.lattice_vertices
                if {(i, j), (i - 1, j), (i, j - 1), (i - 1, j - 1)} <= c]

    @cached_property
    def boundary_lattice_vertices(self):
        inner = set(self.interior_lattice_vertices)
        return [v for v in self.lattice_vertices if v not in inner]

    @cached_property
    def lattice_edges(self):
        """Mesh edges as pairs of lattice vertices (sides and diagonals)."""
        edges = set()
        for i, j in sorted(self.cells):
            a, b, c, d = (i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)
            for e in ((a, b), (b, c), (d, c), (a, d), (b, d)):
                edges.add(tuple(sorted(e)))
        return sorted(edges)

    @cached_property
    def triangulation(self):
        index = {v: k for k, v in enumerate(self.lattice_vertices)}
        faces = []
        for i, j in sorted(self.cells):
            faces.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            faces.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
        verts = self.to_world(self.lattice_vertices) if index else np.zeros((0, 2))
        # a reflection-free rigid motion keeps lattice CCW order
        return Triangulation2D(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


class MeshRegions(NamedTuple):
    support: object
    interior: object
    core: object
    crust: object


def _squares(mesh, centres_ij, half):
    if not centres_ij:
        return shapely.Polygon()
    polys = []
    for i, j in centres_ij:
        corners = np.array([[i - half, j - half], [i + half, j - half],
                            [i + half, j + half], [i - half, j + half]], float)
        polys.append(Polygon(mesh.to_world(corners)))
    return shapely.union_all(polys)


def square_mesh_regions(mesh):
    """Support, interior, core and crust of a square mesh as shapely geometries.

    ``interior`` and ``core`` are open sets represented by their closures.
    The crust is the union of the closed side-``size`` squares centred at
    boundary vertices, which tile the support together with the core.
    """
    cells = [(i + 0.5, j + 0.5) for i, j in sorted(mesh.cells)]
    support = _squares(mesh, cells, 0.5)
    core = _squares(mesh, mesh.interior_lattice_vertices, 0.5)
    crust = _squares(mesh, mesh.boundary_lattice_vertices, 0.5)
    return MeshRegions(support, support, core, crust)


def unit_box(lo=(0.0, 0.0), hi=(1.0, 1.0)):
    return box(lo[0], lo[1], hi[0], hi[1])
