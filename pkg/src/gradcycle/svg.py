"""Minimal SVG output for polylines, triangulations and multiplicity regions."""

import numpy as np

_PALETTE = {1: "#9ecae1", 2: "#4292c6", -1: "#fcae91", -2: "#de2d26"}


def _color(m):
    if m in _PALETTE:
        return _PALETTE[m]
    return "#08519c" if m > 0 else "#a50f15"


class SVGCanvas:
    """Collects shapes in world coordinates; y points up in the output."""

    def __init__(self, stroke_width=None):
        self.items = []
        self.lo = np.array([np.inf, np.inf])
        self.hi = np.array([-np.inf, -np.inf])
        self.stroke_width = stroke_width

    def _require(self, pts):
        pts = np.asarray(pts, float).reshape(-1, 2)
        if len(pts):
            self.lo = np.minimum(self.lo, pts.min(axis=0))
            self.hi = np.maximum(self.hi, pts.max(axis=0))

    @staticmethod
    def _path(pts, closed=True):
        d = " ".join(f"{x:.6g},{-y:.6g}" for x, y in pts)
        return f"M {d}{' Z' if closed else ''}"

    def polygon(self, pts, fill="none", stroke="#000000", opacity=1.0):
        self._require(pts)
        self.items.append(
            ("path", self._path(pts), fill, stroke, opacity))

    def polyline(self, pts, stroke="#000000", closed=True):
        self._require(pts)
        self.items.append(("path", self._path(pts, closed), "none", stroke, 1.0))

    def region(self, region):
        for poly, m in region.cells:
            rings = [np.asarray(r.coords)[:-1] for r in (poly.exterior, *poly.interiors)]
            for ring in rings:
                self._require(ring)
            d = " ".join(self._path(r) for r in rings)
            self.items.append(("path", d, _color(m), "none", 0.8))

    def geometry(self, geom, fill="#cccccc", stroke="none", opacity=0.6):
        """Shapely polygon or multipolygon, holes included."""
        parts = getattr(geom, "geoms", [geom])
        for poly in parts:
            if poly.is_empty:
                continue
            rings = [np.asarray(r.coords)[:-1] for r in (poly.exterior, *poly.interiors)]
            for ring in rings:
                self._require(ring)
            d = " ".join(self._path(r) for r in rings)
            self.items.append(("path", d, fill, stroke, opacity))

    def triangulation(self, tri, stroke="#555555"):
        for f in tri.faces:
            self.polygon(tri.vertices[list(f)], stroke=stroke)

    def label(self, xy, text):
        self._require([xy])
        self.items.append(("text", xy, text))

    def to_string(self, width=400):
        if not np.all(np.isfinite(self.lo)):
            self.lo, self.hi = np.zeros(2), np.ones(2)
        span = np.maximum(self.hi - self.lo, 1e-12)
        pad = 0.05 * span.max()
        x0, y0 = self.lo[0] - pad, -(self.hi[1] + pad)
        w, h = span[0] + 2 * pad, span[1] + 2 * pad
        sw = self.stroke_width or 0.004 * max(w, h)
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
               f'height="{width * h / w:.1f}" viewBox="{x0:.6g} {y0:.6g} {w:.6g} {h:.6g}">']
        for item in self.items:
            if item[0] == "path":
                _, d, fill, stroke, op = item
                out.append(f'<path d="{d}" fill="{fill}" stroke="{stroke}" '
                           f'stroke-width="{sw:.4g}" fill-opacity="{op}" fill-rule="evenodd"/>')
            else:
                _, (x, y), text = item
                out.append(f'<text x="{x:.6g}" y="{-y:.6g}" '
                           f'font-size="{3 * sw:.4g}">{text}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path, width=400):
        with open(path, "w") as fh:
            fh.write(self.to_string(width))


def fiber_polygon_svg(polyline, region, labels=True):
    """SVG of a fiber polygon: shaded winding cells under the oriented boundary."""
    canvas = SVGCanvas()
    canvas.region(region)
    pts = np.asarray(polyline, float).reshape(-1, 2)
    canvas.polygon(pts, stroke="#000000")
    if labels:
        for i, (x, y) in enumerate(pts, start=1):
            canvas.label((x, y), f"g{i}=({x:.3g},{y:.3g})")
    return canvas.to_string()
