"""Acceptance gate.

Run with ``pytest tests/test_acceptance.py`` (or execute this file). After the
run a summary section prints one PASS/FAIL line per criterion. Every
criterion uses a fixed seed, so reruns are reproducible.
"""

import time

import numpy as np
import pytest
import shapely

from conftest import random_fat_mesh
from gradcycle.approx import (
    PipelineConfig,
    crude_bound,
    crude_constant,
    perturbation_bounds,
    run_pipeline,
    triangle_symm_diff_bound,
)
from gradcycle.cli import TREND_BAND, trend_check
from gradcycle.cycle import (
    boundary_check,
    build_cycle,
    lagrangian_check,
    mass,
    support_identity_check,
)
from gradcycle.meshgen import ANGLE_MAX, ANGLE_MIN, complete_triangulation, square_system
from gradcycle.approx import build_wn
from gradcycle.plfunc import (
    PLFunction,
    anisotropic_wave,
    gauss_bump,
    hessian_eigen_angle,
    hessian_norm,
    interpolate,
    quadratic,
    rotated_quadratic,
)
from gradcycle.triangulation import SquareMesh, square_mesh_regions

HEXAGON = np.array([(1, 1), (-3, 1), (-1, 3), (-1, -1), (3, -1), (1, -3)], float)
UNIT_SQUARE = shapely.box(0, 0, 1, 1)
UNIT_DISK = shapely.Point(0, 0).buffer(1.0, 256)
SWEEP = [(4, 8), (8, 8), (16, 8)]


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def quadratic_fiber(a, b, c, size=1.0):
    """Fiber at the origin of the lattice interpolant of a x^2 + 2 b xy + c y^2."""
    mesh = SquareMesh.block(2, 2, size=size, start=(-1, -1))
    cyc = build_cycle(interpolate(quadratic(a, b, c), mesh.triangulation))
    origin = int(np.flatnonzero(np.all(cyc.tri.vertices == 0, axis=1))[0])
    return cyc.fiber(origin)


@pytest.mark.criterion("C1")
def test_c1_hexagon(criterion_detail):
    with Timer() as t:
        poly, region = quadratic_fiber(1, -1, 1)
    criterion_detail(f"mass={region.mass:.12g} algebraic={region.algebraic_area:.3g} "
                     f"t={t.elapsed:.3f}s")
    np.testing.assert_array_equal(poly, HEXAGON)
    assert abs(region.mass - 8.0) <= 1e-9
    assert abs(region.algebraic_area) <= 1e-9
    assert t.elapsed < 1.0


@pytest.mark.criterion("C2")
def test_c2_aligned_quadratic_bound(criterion_detail):
    rng = np.random.default_rng(2)
    worst = -np.inf
    with Timer() as t:
        for a, c in rng.uniform(-5, 5, (100, 2)):
            H = np.array([2 * a, 0.0, 2 * c])
            density = 1 + 2 * np.sqrt(2) * hessian_norm(H) + abs(4 * a * c)
            for eps in (1.0, 0.25, 1 / 16):
                mesh = SquareMesh.block(6, 6, size=eps)
                core = square_mesh_regions(mesh).core
                cyc = build_cycle(interpolate(quadratic(a, 0, c), mesh.triangulation))
                worst = max(worst, mass(cyc, core)["total"] - density * core.area)
    criterion_detail(f"300 cases, max(mass - bound)={worst:.3g} t={t.elapsed:.1f}s")
    assert worst <= 1e-8
    assert t.elapsed < 30


@pytest.mark.criterion("C3")
def test_c3_algebraic_area_identity(criterion_detail):
    rng = np.random.default_rng(3)
    err = 0.0
    with Timer() as t:
        for a, b, c in rng.uniform(-5, 5, (1000, 3)):
            _, region = quadratic_fiber(a, b, c)
            err = max(err, abs(region.algebraic_area - 4 * (a * c - b * b)))
    criterion_detail(f"1000 cases, max error={err:.3g} t={t.elapsed:.1f}s")
    assert err <= 1e-8
    assert t.elapsed < 30


def random_test_function(rng):
    c = rng.uniform(-1, 1, 2)
    s = rng.uniform(0.3, 1.0)
    w = rng.normal(size=2) * 0.3
    ph = rng.uniform(0, 2 * np.pi)

    def phi(x, xi):
        return np.exp(-((x - c) ** 2).sum(1) / (2 * s * s)) * (1.5 + np.cos(xi @ w + ph))

    return phi


@pytest.mark.criterion("C4")
def test_c4_current_oracles(criterion_detail):
    rng = np.random.default_rng(4)
    residual = lagrangian = rel = 0.0
    faces = []
    with Timer() as t:
        for _ in range(50):
            tri = random_fat_mesh(rng, min_faces=200)
            faces.append(len(tri.faces))
            p = PLFunction(tri, rng.normal(size=tri.n_vertices))
            cyc = build_cycle(p)
            report = boundary_check(cyc)
            residual = max(residual, report.residual, report.coefficient_residual)
            lagrangian = max(lagrangian, lagrangian_check(cyc)["max"])
            for _ in range(5):
                lhs, rhs = support_identity_check(cyc, p, random_test_function(rng))
                rel = max(rel, abs(lhs - rhs) / abs(rhs))
    criterion_detail(f"faces {min(faces)}-{max(faces)}, boundary residual={residual:.3g} "
                     f"lagrangian={lagrangian:.3g} support rel={rel:.3g} t={t.elapsed:.1f}s")
    assert min(faces) >= 200
    assert residual == 0
    assert lagrangian <= 1e-8
    assert rel <= 1e-4
    assert t.elapsed < 120


@pytest.mark.criterion("C5")
def test_c5_perturbation(criterion_detail):
    rng = np.random.default_rng(5)
    ratios = {"gradient": 0.0, "d1": 0.0, "d0": 0.0, "triangle": 0.0}
    with Timer() as t:
        for _ in range(100):
            k = int(rng.integers(3, 7))
            eps = rng.uniform(0.05, 0.5)
            mesh = SquareMesh.block(k, k, size=eps, origin=tuple(rng.uniform(-1, 1, 2)),
                                    axis_angle=rng.uniform(0, np.pi))
            centre = mesh.to_world([[k / 2, k / 2]])[0]
            f = quadratic(*rng.uniform(-3, 3, 3)) + gauss_bump(
                rng.uniform(-1, 1), eps * k * rng.uniform(0.2, 1), *centre)
            bump = gauss_bump(1.0, eps * k * rng.uniform(0.1, 1),
                              *(centre + rng.normal(size=2) * eps))
            delta = 10 ** rng.uniform(-5, -1)
            rep = perturbation_bounds(f, f + bump.scaled(delta), mesh)
            for key in ("gradient", "d1", "d0"):
                ratios[key] = max(ratios[key], rep[key]["ratio"])
        for P, Q, R, R2 in rng.uniform(-3, 3, (100, 4, 2)):
            m, bound = triangle_symm_diff_bound(P, Q, R, R2)
            ratios["triangle"] = max(ratios["triangle"], m / bound)
    criterion_detail(" ".join(f"{k}={v:.3g}" for k, v in ratios.items())
                     + f" t={t.elapsed:.1f}s")
    assert max(ratios.values()) <= 1
    assert t.elapsed < 60


def random_family(rng):
    kind = rng.integers(4)
    if kind == 0:
        return quadratic(*rng.uniform(-3, 3, 3))
    if kind == 1:
        return rotated_quadratic(*rng.uniform(-5, 5, 2), rng.uniform(0, np.pi))
    if kind == 2:
        return gauss_bump(rng.uniform(-2, 2), rng.uniform(0.2, 1), *rng.uniform(-1, 1, 2))
    return anisotropic_wave(rng.uniform(2, 20), *rng.uniform(-3, 3, 2))


@pytest.mark.criterion("C6")
def test_c6_crude_bound(criterion_detail):
    rng = np.random.default_rng(6)
    theta, k = np.pi / 6, 0.5
    worst = 0.0
    with Timer() as t:
        for _ in range(50):
            tri = random_fat_mesh(rng, min_faces=1)
            m, bound, C, _ = crude_bound(random_family(rng), tri, theta, k)
            assert C == crude_constant(theta, k)
            worst = max(worst, m / bound)
    criterion_detail(f"50 pairs, max mass/bound={worst:.3g} t={t.elapsed:.1f}s")
    assert worst <= 1
    assert t.elapsed < 120


@pytest.mark.criterion("C7")
def test_c7_mesh_quality(criterion_detail):
    wave = anisotropic_wave(20)
    angles_seen, lengths_seen, lines = [], [], []
    with Timer() as t:
        for n in (4, 8):
            for j in (4, 8):
                W, squares = build_wn(UNIT_DISK, n)
                centres = np.array([s.centre for s in squares])
                axes = np.atleast_1d(hessian_eigen_angle(wave.hess(centres)))
                system, _ = square_system(squares, n, j, axes)
                tri, report = complete_triangulation(system)
                h = 1.0 / (n * j)
                assert report.contains_input, f"(n={n}, j={j}) lost input edges"
                assert report.passed, f"(n={n}, j={j}) violations: {report.violations[:3]}"
                angles_seen.append(report.angle_range)
                lengths_seen.append(np.array(report.edge_len_range) / h)
                lines.append(f"({n},{j}):{len(tri.faces)}")
    lo = min(a for a, _ in angles_seen)
    hi = max(b for _, b in angles_seen)
    lmin = min(a for a, _ in lengths_seen)
    lmax = max(b for _, b in lengths_seen)
    criterion_detail(f"faces {' '.join(lines)}, angles [{np.degrees(lo):.2f}, "
                     f"{np.degrees(hi):.2f}] deg, edges/h [{lmin:.4f}, {lmax:.4f}] "
                     f"t={t.elapsed:.1f}s")
    assert ANGLE_MIN - 1e-9 <= lo and hi <= ANGLE_MAX + 1e-9
    assert 1 - 1e-9 <= lmin and lmax <= 2 + 1e-9
    assert t.elapsed < 120


TREND_FUNCTIONS = {
    "wave": anisotropic_wave(20),
    "rotated-quadratic": rotated_quadratic(5, 0.1, np.pi / 7),
}


@pytest.fixture(scope="module")
def sweep():
    """Every pipeline run of the trend criterion, shared with the Z-area criterion."""
    runs = {}
    start = time.perf_counter()
    for name, f in TREND_FUNCTIONS.items():
        runs[name] = [run_pipeline(PipelineConfig(f, UNIT_SQUARE, n, j)) for n, j in SWEEP]
        n, j = SWEEP[-1]
        runs[name + " forced"] = [run_pipeline(PipelineConfig(f, UNIT_SQUARE, n, j,
                                                              force_axis=0.0))]
    return runs, time.perf_counter() - start


@pytest.mark.criterion("C8")
def test_c8_trend(sweep, criterion_detail):
    runs, elapsed = sweep
    parts, failures = [], []
    for name in TREND_FUNCTIONS:
        aligned = runs[name]
        forced = runs[name + " forced"][-1]
        records = [r.to_record() for r in aligned]
        trend = trend_check(records, TREND_BAND)
        final = aligned[-1]
        masses = "/".join(f"{r.mass_V['total']:.2f}" for r in aligned)
        parts.append(f"{name}: mass {masses} rhs {final.rhs_integral:.2f} "
                     f"forced {forced.mass_V['total']:.2f}")
        if not trend["passed"]:
            failures.append(f"{name}: gap to rhs grew {trend['gaps']}")
        if not final.mass_V["total"] <= final.budget:
            failures.append(f"{name}: final mass {final.mass_V['total']} > {final.budget}")
        if not final.mass_V["total"] < forced.mass_V["total"]:
            failures.append(f"{name}: aligned not below forced axis")
    criterion_detail("; ".join(parts) + f"; t={elapsed:.0f}s")
    assert not failures, failures
    assert elapsed < 600


@pytest.mark.criterion("C9")
def test_c9_z_area(sweep, criterion_detail):
    runs, _ = sweep
    results = [r for group in runs.values() for r in group]
    worst = max(r.areas["Z"] / r.z_area_bound for r in results)
    criterion_detail(f"{len(results)} runs, max area(Z)/bound={worst:.3g}")
    assert all(r.areas["Z"] <= r.z_area_bound for r in results)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
