"""Planar primitives: signed areas, segment arrangements and winding numbers.

Closed polylines are plain ``(k, 2)`` float arrays whose last vertex is
implicitly joined to the first. A polyline bounds a *region with
multiplicities*: the cells of the planar arrangement of its segments, each
labelled with the winding number of the polyline around it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import shapely
from shapely.geometry import MultiLineString, Polygon
from shapely.ops import polygonize

REL_TOL = 1e-12


class GeometryError(ValueError):
    pass


class Segment(NamedTuple):
    """Oriented segment from ``start`` to ``end``."""

    start: np.ndarray
    end: np.ndarray

    @property
    def vector(self):
        return np.asarray(self.end, float) - np.asarray(self.start, float)

    @property
    def length(self):
        return float(np.hypot(*self.vector))


def length_tolerance(points):
    """Absolute length tolerance scaled by the bounding-box diameter."""
    pts = np.asarray(points, float).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0
    diam = float(np.hypot(*(pts.max(axis=0) - pts.min(axis=0))))
    return REL_TOL * max(diam, 1.0)


def snap(points, tol):
    """Round coordinates to a power-of-two quantum well below ``tol``.

    Removes sub-tolerance coordinate differences (down to subnormals)
    that otherwise produce degenerate arrangement faces. Dyadic values
    such as integers are unchanged.
    """
    pts = np.asarray(points, dtype=float)
    if tol <= 0:
        return pts
    q = 2.0 ** np.floor(np.log2(tol * 1e-3))
    return np.round(pts / q) * q


def as_polyline(points, tol=None):
    """Validate ``points`` and collapse consecutive (cyclic) duplicates.

    The returned array may have fewer than three rows; callers decide
    whether such a polyline is degenerate for their purpose.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise GeometryError("polyline has non-finite coordinates")
    if tol is None:
        tol = length_tolerance(pts)
    out = []
    for p in pts:
        if not out or np.hypot(*(p - out[-1])) > tol:
            out.append(p)
    while len(out) > 1 and np.hypot(*(out[-1] - out[0])) <= tol:
        out.pop()
    return np.array(out, dtype=float).reshape(-1, 2)


def signed_area(poly):
    """Shoelace area; positive for a counterclockwise simple polygon."""
    pts = np.asarray(poly, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def winding_number(poly, points):
    """Winding number of the closed polyline around each query point.

    Signed upward/downward edge crossings of a rightward ray. Points lying
    on the polyline get an arbitrary but deterministic answer.
    """
    pts = np.asarray(poly, dtype=float).reshape(-1, 2)
    q = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 2:
        return np.zeros(len(q), dtype=int)
    a = pts
    b = np.roll(pts, -1, axis=0)
    px = q[:, 0][:, None]
    py = q[:, 1][:, None]
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    side = (bx - ax) * (py - ay) - (px - ax) * (by - ay)
    up = (ay <= py) & (by > py) & (side > 0)
    down = (ay > py) & (by <= py) & (side < 0)
    return (up.sum(axis=1) - down.sum(axis=1)).astype(int)


@dataclass(frozen=True)
class Region:
    """Interior-disjoint polygonal cells carrying nonzero integer multiplicities."""

    cells: tuple = ()

    @property
    def mass(self):
        return float(sum(abs(m) * poly.area for poly, m in self.cells))

    @property
    def algebraic_area(self):
        return float(sum(m * poly.area for poly, m in self.cells))

    def multiplicity_at(self, points):
        q = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(q), dtype=int)
        for poly, m in self.cells:
            inside = shapely.contains_xy(poly, q[:, 0], q[:, 1])
            out[inside] += m
        return out

    def negated(self):
        return Region(tuple((poly, -m) for poly, m in self.cells))

    def __len__(self):
        return len(self.cells)


def _convex_orientation(pts, tol):
    """+1/-1 if the polyline is a once-around convex polygon, else 0."""
    e = np.roll(pts, -1, axis=0) - pts
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    dot = (e * en).sum(axis=1)
    scale = np.hypot(*e.T) * np.hypot(*en.T)
    flat = np.abs(cross) <= 1e-12 * scale
    if np.any(flat & (dot < 0)):
        return 0
    if np.all(cross >= -1e-12 * scale) and not np.all(flat):
        sign = 1
    elif np.all(cross <= 1e-12 * scale) and not np.all(flat):
        sign = -1
    else:
        return 0
    turning = np.arctan2(cross, dot).sum()
    if abs(abs(turning) - 2 * np.pi) > 1e-6:
        return 0
    if abs(signed_area(pts)) <= tol * tol:
        return 0
    return sign


def _arrangement_faces(segments, tol):
    lines = [((float(s[0]), float(s[1])), (float(s[2]), float(s[3])))
             for s in segments]
    try:
        noded = shapely.union_all(MultiLineString(lines))
    except shapely.errors.GEOSException:
        noded = shapely.union_all(MultiLineString(lines), grid_size=tol)
    return [f for f in polygonize(noded) if f.area > tol * tol]


def arrange_and_wind(poly):
    """Decompose the region bounded by a closed polyline into winding cells.

    Raises
    ------
    GeometryError
        If the polyline has zero total length after removing duplicates.
    """
    raw = np.asarray(poly, dtype=float).reshape(-1, 2)
    tol = length_tolerance(raw)
    pts = as_polyline(raw, tol)
    if len(pts) < 2:
        raise GeometryError("degenerate polyline: zero length after dedup")
    if len(pts) == 2:
        return Region()
    pts = snap(pts, tol)
    sign = _convex_orientation(pts, tol)
    if sign:
        return Region(((Polygon(pts if sign > 0 else pts[::-1]), sign),))
    segs = np.hstack([pts, np.roll(pts, -1, axis=0)])
    faces = _arrangement_faces(segs, tol)
    if not faces:
        return Region()
    samples = np.array([f.representative_point().coords[0] for f in faces])
    wind = winding_number(pts, samples)
    return Region(tuple((f, int(w)) for f, w in zip(faces, wind) if w != 0))


def mass_of_region(region):
    return region.mass


def algebraic_area_of_region(region):
    return region.algebraic_area


def join_region(poly, anchor):
    """Region bounded by ``poly`` built as the cone (join) from ``anchor``.

    Each edge ``(v_i, v_{i+1})`` contributes the signed triangle
    ``(anchor, v_i, v_{i+1})``; cell multiplicities are the sum of the
    signed triangle indicators, which is independent of the polyline's
    winding-number machinery.
    """
    raw = np.asarray(poly, dtype=float).reshape(-1, 2)
    anchor = np.asarray(anchor, dtype=float).reshape(2)
    tol = length_tolerance(np.vstack([raw, anchor]))
    pts = snap(as_polyline(raw, tol), tol)
    anchor = snap(anchor, tol)
    if len(pts) < 3:
        return Region()
    nxt = np.roll(pts, -1, axis=0)
    tris = []
    for v, w in zip(pts, nxt):
        tri = np.array([anchor, v, w])
        area = signed_area(tri)
        if abs(area) > tol * tol:
            tris.append((Polygon(tri), 1 if area > 0 else -1))
    if not tris:
        return Region()
    segs = []
    for v, w in zip(pts, nxt):
        segs.append([*v, *w])
        if np.hypot(*(v - anchor)) > tol:
            segs.append([*anchor, *v])
    faces = _arrangement_faces(np.array(segs), tol)
    cells = []
    for f in faces:
        x, y = f.representative_point().coords[0]
        m = sum(sign for tri, sign in tris if shapely.contains_xy(tri, x, y))
        if m != 0:
            cells.append((f, int(m)))
    return Region(tuple(cells))
