"""Aligned PL approximation pipeline and the perturbation / crude bound evaluators."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import shapely

from .cycle import build_cycle, build_cycle_from_gradients, mass
from .geometry import arrange_and_wind, as_polyline
from .meshgen import GridSquare, complete_triangulation, square_system
from .plfunc import hessian_det, hessian_eigen_angle, hessian_norm, interpolate
from .triangulation import fatness, square_mesh_regions

log = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


class PreconditionError(ValueError):
    pass


def crude_constant(theta, k):
    """C(theta, k) = 48 pi^2 / (k^2 theta sin theta)."""
    return 48 * np.pi ** 2 / (k * k * theta * np.sin(theta))


def mass_density(f, x):
    """Integrand 1 + 2 sqrt(2) |H_f| + |det H_f| at points ``x``."""
    H = f.hess(x)
    return 1 + 2 * SQRT2 * hessian_norm(H) + np.abs(hessian_det(H))


def _centroid_rule(level):
    n = 2 ** level
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    keep = i + j < n
    lo = np.column_stack([(i[keep] + 1 / 3) / n, (j[keep] + 1 / 3) / n])
    up_keep = i + j < n - 1
    up = np.column_stack([(i[up_keep] + 2 / 3) / n, (j[up_keep] + 2 / 3) / n])
    return np.vstack([lo, up])


def integrate(func, polygon, rtol=1e-6, max_level=9, max_points=4_000_000):
    """Midpoint (centroid) rule over a polygon, refined until two levels agree.

    ``func`` maps ``(N, 2)`` points to ``(N,)`` values. The polygon is
    triangulated once; level ``L`` uses ``4**L`` sub-triangles per piece.
    """
    if polygon is None or polygon.is_empty:
        return 0.0
    tris = shapely.constrained_delaunay_triangles(polygon)
    coords = np.array([np.asarray(t.exterior.coords)[:3] for t in tris.geoms])
    a, b, c = coords[:, 0], coords[:, 1], coords[:, 2]
    area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                        - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    prev = None
    for level in range(max_level + 1):
        lam = _centroid_rule(level)
        if len(lam) * len(coords) > max_points and prev is not None:
            log.warning("quadrature stopped at level %d (point budget)", level - 1)
            return prev
        x = (a[:, None, :] + lam[None, :, :1] * (b - a)[:, None, :]
             + lam[None, :, 1:] * (c - a)[:, None, :]).reshape(-1, 2)
        vals = func(x).reshape(len(coords), len(lam)).mean(axis=1)
        cur = float(np.sum(vals * area))
        if prev is not None and abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    log.warning("quadrature did not reach rtol=%g", rtol)
    return cur


def sampled_sup(values_fn, region, spacing, safety=1.01):
    """Maximum of ``values_fn`` on a grid of the given spacing clipped to ``region``."""
    minx, miny, maxx, maxy = region.bounds
    xs = np.arange(minx, maxx + spacing, spacing)
    ys = np.arange(miny, maxy + spacing, spacing)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = shapely.intersects_xy(region, pts[:, 0], pts[:, 1])
    pts = np.vstack([pts[inside], np.asarray(region.exterior.coords)
                     if hasattr(region, "exterior") else np.zeros((0, 2))])
    if not len(pts):
        return 0.0
    return safety * float(np.max(values_fn(pts)))


# ---------------------------------------------------------------------------


def build_wn(V, n):
    """Closed grid squares of side ``1/n`` meeting the open set ``V``.

    Returns ``(W, squares)`` where ``W`` is the union polygon.
    """
    if V is None or V.is_empty:
        return shapely.Polygon(), []
    minx, miny, maxx, maxy = V.bounds
    squares = []
    for a in range(int(np.floor(minx * n)) - 1, int(np.ceil(maxx * n)) + 1):
        for b in range(int(np.floor(miny * n)) - 1, int(np.ceil(maxy * n)) + 1):
            sq = GridSquare(a, b, n)
            if sq.polygon.intersection(V).area > 0:
                squares.append(sq)
    W = shapely.union_all([s.polygon for s in squares])
    return W, squares


@dataclass
class PipelineConfig:
    f: object
    V: object
    n: int
    j: int
    margin: float = 0.1
    force_axis: float = None
    quad_rtol: float = 1e-5

    def validate(self):
        if self.n < 2 or self.j < 2:
            raise ValueError("n and j must be at least 2")
        if self.V is None or self.V.is_empty:
            raise ValueError("V must be a non-empty polygon")


@dataclass
class PipelineResult:
    n: int
    j: int
    triangulation: object
    pl: object
    cycle: object
    W: object
    V_core: object
    Z: object
    mass_V: dict
    mass_core: dict
    mass_Z: dict
    rhs_integral: float
    core_integral: float
    taylor_slack: float
    crude_bound_value: float
    sup_hessian: float
    areas: dict
    quality: object
    timings: dict = field(default_factory=dict)

    @property
    def budget(self):
        """rhs integral plus the finite-(n, j) slack terms."""
        return self.rhs_integral + self.taylor_slack + self.crude_bound_value

    @property
    def z_area_bound(self):
        return 8 * SQRT2 / self.j * self.areas["W"]

    def to_record(self):
        return {
            "n": self.n, "j": self.j,
            "mass_V": self.mass_V["total"], "mass_core": self.mass_core["total"],
            "mass_Z": self.mass_Z["total"], "mass_V_layers": self.mass_V,
            "rhs": self.rhs_integral, "core_integral": self.core_integral,
            "taylor_slack": self.taylor_slack, "crude_bound": self.crude_bound_value,
            "sup_hessian": self.sup_hessian, "areas": self.areas,
            "z_area_bound": self.z_area_bound,
            "quality": self.quality.to_dict(), "timings": self.timings,
        }


def _oscillation(f, centre, r0, samples=15):
    """Sampled sup of |H_f(x) - H_f(centre)| over the disk B(centre, r0)."""
    t = np.linspace(-r0, r0, samples)
    X, Y = np.meshgrid(t, t)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= r0] + centre
    H0 = f.hess(centre)[0]
    return float(np.max(hessian_norm(f.hess(pts) - H0)))


def taylor_slack_terms(eps, r0, omega, hnorm):
    return (12 * SQRT2 * omega * r0 ** 2 / eps ** 2 + 24 * hnorm * omega * r0 ** 2 / eps ** 2
            + 24 * omega ** 2 * r0 ** 4 / eps ** 4 + 2 * omega * SQRT2
            + 4 * hnorm * omega + 2 * omega ** 2)


def run_pipeline(cfg):
    """Build T_{n,j}, interpolate ``f`` and measure the cycle against its budget."""
    cfg.validate()
    f, V, n, j = cfg.f, cfg.V, cfg.n, cfg.j
    timings = {}
    t0 = time.perf_counter()
    W, squares = build_wn(V, n)
    centres = np.array([s.centre for s in squares])
    if cfg.force_axis is None:
        angles = hessian_eigen_angle(f.hess(centres))
        angles = np.atleast_1d(angles)
    else:
        angles = np.full(len(squares), float(cfg.force_axis))
    system, meshes = square_system(squares, n, j, angles)
    timings["assemble"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tri, quality = complete_triangulation(system)
    timings["complete"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    p = interpolate(f, tri)
    cycle = build_cycle(p)
    timings["cycle"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cores = [square_mesh_regions(m).core for m in meshes if not m.is_empty]
    V_core = shapely.union_all(cores) if cores else shapely.Polygon()
    Z = W.difference(V_core)
    mass_V = mass(cycle, V)
    mass_core = mass(cycle, V_core)
    mass_Z = mass(cycle, Z)
    timings["mass"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    density = lambda x: mass_density(f, x)  # noqa: E731
    rhs = integrate(density, V, rtol=cfg.quad_rtol)
    core_int = integrate(density, V_core, rtol=cfg.quad_rtol) if not V_core.is_empty else 0.0
    h = 1.0 / (n * j)
    U = W.buffer(cfg.margin, join_style="mitre")
    L = sampled_sup(lambda x: hessian_norm(f.hess(x)), U, min(1e-2, h / 4))
    Z_area = Z.area
    crude = crude_constant(np.pi / 6, 0.5) * Z_area * (1 + L + L * L)

    r0 = 1.0 / (n * SQRT2)
    slack = 0.0
    for sq, m in zip(squares, meshes):
        if m.is_empty:
            continue
        core_area = square_mesh_regions(m).core.area
        if core_area == 0:
            continue
        omega = 1.1 * _oscillation(f, sq.centre, r0)
        hn = float(hessian_norm(f.hess(sq.centre))[0])
        slack += core_area * taylor_slack_terms(m.size, r0, omega, hn)
    timings["bounds"] = time.perf_counter() - t0

    areas = {"V": V.area, "W": W.area, "V_core": V_core.area, "Z": Z_area}
    return PipelineResult(n, j, tri, p, cycle, W, V_core, Z, mass_V, mass_core, mass_Z,
                          rhs, core_int, slack, crude, L, areas, quality, timings)


# ---------------------------------------------------------------------------


def _star_diameter(poly):
    d = poly[:, None, :] - poly[None, :, :]
    return float(np.hypot(d[..., 0], d[..., 1]).max())


def difference_mass(poly_a, poly_b):
    """Mass of the difference of the regions bounded by two closed polylines."""
    a = np.asarray(poly_a, float).reshape(-1, 2)
    b = np.asarray(poly_b, float).reshape(-1, 2)
    path = np.vstack([a, a[:1], b[:1], b[:0:-1], b[:1]])
    if len(as_polyline(path)) < 2:
        return 0.0
    return arrange_and_wind(path).mass


def perturbation_bounds(f, g, mesh):
    """Evaluate both sides of the three perturbation inequalities on a square mesh.

    ``sup|f - g|`` is taken over the mesh vertices, which is all the
    interpolants see. Returns worst ratios (left side over right side).
    """
    tri = mesh.triangulation
    eps = mesh.size
    pf, pg = interpolate(f, tri), interpolate(g, tri)
    delta = float(np.max(np.abs(pf.values - pg.values)))
    cf = build_cycle_from_gradients(tri, pf.gradients)
    cg = build_cycle_from_gradients(tri, pg.gradients)

    lhs1 = np.hypot(*(pf.gradients - pg.gradients).T)
    rhs1 = 4 * delta / eps

    interior = np.flatnonzero(tri.interior_edge_mask)
    left, right = tri.edge_faces[interior, 0], tri.edge_faces[interior, 1]
    e = tri.edges[interior]
    elen = np.hypot(*(tri.vertices[e[:, 1]] - tri.vertices[e[:, 0]]).T)
    sf = np.hypot(*(pf.gradients[left] - pf.gradients[right]).T)
    sg = np.hypot(*(pg.gradients[left] - pg.gradients[right]).T)
    lhs2 = np.abs(elen * sf - elen * sg)
    rhs2 = 8 * SQRT2 * delta

    lhs3, rhs3 = [], []
    for pl_f, pl_g in zip(cf.d0_polylines, cg.d0_polylines):
        lhs3.append(difference_mass(pl_f, pl_g))
        rhs3.append(48 * delta * _star_diameter(pl_g) / eps + 96 * delta ** 2 / eps ** 2)
    lhs3, rhs3 = np.array(lhs3), np.array(rhs3)

    def worst(lhs, rhs):
        if not len(lhs):
            return 0.0
        rhs = np.broadcast_to(rhs, lhs.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(rhs > 0, lhs / rhs, np.where(lhs > 1e-12, np.inf, 0.0))
        return float(r.max())

    return {
        "sup_diff": delta, "eps": eps,
        "gradient": {"lhs_max": float(lhs1.max()) if len(lhs1) else 0.0, "rhs": rhs1,
                     "ratio": worst(lhs1, rhs1)},
        "d1": {"lhs_max": float(lhs2.max()) if len(lhs2) else 0.0, "rhs": rhs2,
               "ratio": worst(lhs2, rhs2)},
        "d0": {"lhs_max": float(lhs3.max()) if len(lhs3) else 0.0,
               "ratio": worst(lhs3, rhs3)},
    }


def triangle_symm_diff_bound(P, Q, R, R2):
    """Mass of PQR - PQR' and the bound |R - R'| diam(PQR)."""
    P, Q, R, R2 = (np.asarray(v, float) for v in (P, Q, R, R2))
    m = difference_mass([P, Q, R], [P, Q, R2])
    diam = max(np.hypot(*(P - Q)), np.hypot(*(Q - R)), np.hypot(*(R - P)))
    return m, float(np.hypot(*(R - R2)) * diam)


def taylor_core_bound(f, mesh, x0, r0, omega, samples=41, angle_tol=1e-9):
    """Both sides of the Taylor-remainder core estimate on one square mesh.

    Raises
    ------
    PreconditionError
        If the mesh leaves ``B(x0, r0)``, its axes are not eigen-aligned
        with ``H_f(x0)``, or the sampled Hessian oscillation exceeds ``omega``.
    """
    x0 = np.asarray(x0, float).reshape(2)
    tri = mesh.triangulation
    if np.any(np.hypot(*(tri.vertices - x0).T) > r0 * (1 + 1e-12)):
        raise PreconditionError("mesh interior is not contained in B(x0, r0)")
    H0 = f.hess(x0)[0]
    hn = float(hessian_norm(H0))
    want = hessian_eigen_angle(H0)
    diff = np.mod(mesh.axis_angle - want, np.pi / 2)
    iso = abs(H0[1]) <= 1e-12 * max(hn, 1e-300) and abs(H0[0] - H0[2]) <= 1e-12 * max(hn, 1e-300)
    if not iso and min(diff, np.pi / 2 - diff) > angle_tol:
        raise PreconditionError("mesh axes are not parallel to the eigenvectors of H_f(x0)")
    osc = _oscillation(f, x0, r0, samples)
    if osc > omega:
        raise PreconditionError(f"sampled Hessian oscillation {osc:.6g} exceeds omega={omega:.6g}")
    core = square_mesh_regions(mesh).core
    cycle = build_cycle(interpolate(f, tri))
    lhs = mass(cycle, core)["total"]
    eps = mesh.size
    integral = integrate(lambda x: mass_density(f, x), core) if not core.is_empty else 0.0
    rhs = integral + core.area * taylor_slack_terms(eps, r0, omega, hn)
    return lhs, rhs


def crude_bound(f, tri, theta, k, spacing=None):
    """Both sides of the crude fat-triangulation bound.

    Returns ``(mass, bound, C, stats)``; ``sup |H_f|`` is sampled on a grid
    of ``spacing`` (default a quarter of the shortest edge, at most 1e-2)
    plus all vertices and centroids, times 1.01.
    """
    stats = fatness(tri)
    if stats.theta_min < theta * (1 - 1e-12):
        raise PreconditionError(
            f"triangle {stats.worst_face} has angle {stats.theta_min:.6g} < theta = {theta:.6g}")
    if stats.edge_min / stats.edge_max < k * (1 - 1e-12):
        raise PreconditionError(
            f"edge ratio m/M = {stats.edge_min / stats.edge_max:.6g} < k = {k:.6g}")
    C = crude_constant(theta, k)
    support = tri.support
    if spacing is None:
        spacing = min(1e-2, stats.edge_min / 4)
    L = sampled_sup(lambda x: hessian_norm(f.hess(x)), support, spacing)
    extra = np.vstack([tri.vertices, tri.vertices[tri.faces].mean(1)])
    L = max(L, 1.01 * float(hessian_norm(f.hess(extra)).max()))
    m = build_cycle(interpolate(f, tri)).total_mass
    area = tri.area
    return m, C * area * (1 + L + L * L), C, stats
