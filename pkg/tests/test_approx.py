import numpy as np
import pytest
import shapely
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_fat_mesh
from gradcycle.approx import (
    PipelineConfig,
    PreconditionError,
    _oscillation,
    build_wn,
    crude_bound,
    crude_constant,
    difference_mass,
    integrate,
    perturbation_bounds,
    run_pipeline,
    taylor_core_bound,
    triangle_symm_diff_bound,
)
from gradcycle.plfunc import (
    SmoothFunction,
    affine,
    anisotropic_wave,
    gauss_bump,
    quadratic,
    hessian_eigen_angle,
    rotated_quadratic,
)
from gradcycle.triangulation import SquareMesh

UNIT = shapely.box(0, 0, 1, 1)


def test_crude_constant():
    assert crude_constant(np.pi / 2, 1) == pytest.approx(96 * np.pi)


def test_integrate_polynomial_exactly():
    f = lambda x: x[:, 0] ** 2 + 3 * x[:, 1]  # noqa: E731
    assert integrate(f, UNIT, rtol=1e-10) == pytest.approx(1 / 3 + 1.5, rel=1e-6)
    disk = shapely.Point(0, 0).buffer(1, 512)
    assert integrate(lambda x: np.ones(len(x)), disk) == pytest.approx(disk.area)
    assert integrate(f, shapely.Polygon()) == 0.0


def test_build_wn_unit_square():
    for n in (2, 5, 9):
        W, squares = build_wn(UNIT, n)
        assert W.contains(UNIT)
        assert W.area <= (1 + 2 / n) ** 2
        assert len(squares) == n * n  # grid squares sharing only an edge are excluded


def test_build_wn_disk_and_empty():
    disk = shapely.Point(0, 0).buffer(1, 256)
    areas = []
    for n in (5, 10, 20):
        W, squares = build_wn(disk, n)
        assert W.area == pytest.approx(len(squares) / n ** 2)
        areas.append(W.area)
    assert areas[0] > areas[1] > areas[2] > disk.area
    assert build_wn(shapely.Polygon(), 4)[1] == []


def test_pipeline_affine():
    res = run_pipeline(PipelineConfig(affine(1, 2, 0), UNIT, 2, 4))
    assert res.mass_V["total"] == pytest.approx(1.0)
    assert res.rhs_integral == pytest.approx(1.0)
    assert res.quality.passed
    assert res.areas["Z"] <= res.z_area_bound


def test_pipeline_aligned_quadratic():
    f = quadratic(2, 0, -0.5)
    res = run_pipeline(PipelineConfig(f, UNIT, 2, 6))
    density = 1 + 2 * np.sqrt(2) * 2 * np.sqrt(4 + 0.25) + 4
    assert res.mass_core["total"] <= density * res.areas["V_core"] + 1e-8
    assert res.mass_V["total"] <= res.budget
    assert res.areas["V_core"] + res.areas["Z"] == pytest.approx(res.areas["W"])
    record = res.to_record()
    assert {"n", "j", "mass_V", "mass_core", "mass_Z", "rhs", "crude_bound", "areas",
            "timings"} <= set(record)


def test_pipeline_rejects_bad_config():
    with pytest.raises(ValueError):
        run_pipeline(PipelineConfig(affine(), UNIT, 1, 8))
    with pytest.raises(ValueError):
        run_pipeline(PipelineConfig(affine(), shapely.Polygon(), 4, 8))


def test_alignment_beats_forced_axis():
    f = rotated_quadratic(5, 0.1, np.pi / 7)
    aligned = run_pipeline(PipelineConfig(f, UNIT, 4, 8))
    forced = run_pipeline(PipelineConfig(f, UNIT, 4, 8, force_axis=0.0))
    assert aligned.mass_V["total"] < forced.mass_V["total"]


def test_perturbation_identical_functions():
    mesh = SquareMesh.block(4, 4, size=0.25, axis_angle=0.3)
    f = gauss_bump(1, 0.4)
    rep = perturbation_bounds(f, f, mesh)
    assert rep["sup_diff"] == 0.0
    for key in ("gradient", "d1", "d0"):
        assert rep[key]["lhs_max"] == 0.0


def test_perturbation_small_bump():
    mesh = SquareMesh.block(6, 6, size=1 / 6)
    f = quadratic(1, 0, 1)
    g = f + gauss_bump(1e-3, 0.2).scaled(1.0)
    rep = perturbation_bounds(f, g, mesh)
    for key in ("gradient", "d1", "d0"):
        assert rep[key]["ratio"] <= 1


def test_triangle_symm_diff_examples():
    assert triangle_symm_diff_bound((0, 0), (1, 0), (0, 1), (0, 1)) == (0.0, 0.0)
    m, bound = triangle_symm_diff_bound((0, 0), (1, 0), (0, 1), (0, 2))
    assert m == pytest.approx(0.5)
    assert bound == pytest.approx(np.sqrt(2))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8))
def test_triangle_symm_diff_random(c):
    P, Q, R, R2 = np.array(c).reshape(4, 2)
    m, bound = triangle_symm_diff_bound(P, Q, R, R2)
    assert m <= bound + 1e-9


def test_difference_mass_of_equal_polylines():
    hexagon = [(1, 1), (-3, 1), (-1, 3), (-1, -1), (3, -1), (1, -3)]
    assert difference_mass(hexagon, hexagon) == pytest.approx(0.0, abs=1e-12)


def test_taylor_bound_quadratic_and_bump():
    f = quadratic(1.5, 0, 0.5)
    mesh = SquareMesh.block(4, 4, size=0.05, origin=(0.4, 0.4))
    x0 = (0.5, 0.5)
    lhs, rhs = taylor_core_bound(f, mesh, x0, 0.2, 1e-12)
    assert lhs <= rhs
    g = gauss_bump(1, 0.3)  # isotropic Hessian at the centre, so any axes qualify
    omega = 1.1 * _oscillation(g, np.array(x0), 0.2)
    lhs, rhs = taylor_core_bound(g, mesh, x0, 0.2, omega)
    assert lhs <= rhs


def test_taylor_bound_preconditions():
    f = rotated_quadratic(2, 1, 0.4)
    mesh = SquareMesh.block(2, 2, size=0.1, origin=(0.4, 0.4))
    with pytest.raises(PreconditionError, match="eigenvectors"):
        taylor_core_bound(f, mesh, (0.5, 0.5), 0.3, 1e-12)
    with pytest.raises(PreconditionError, match="contained"):
        taylor_core_bound(f, mesh, (0.5, 0.5), 0.05, 1e-12)
    wave = anisotropic_wave(20)
    with pytest.raises(PreconditionError, match="oscillation"):
        taylor_core_bound(wave, SquareMesh.block(2, 2, size=0.1, origin=(0.4, 0.4),
                                                 axis_angle=_wave_axis(wave, (0.5, 0.5))),
                          (0.5, 0.5), 0.3, 1e-6)


def _wave_axis(f, x0):
    return hessian_eigen_angle(f.hess(np.array([x0]))[0])


def test_taylor_budget_grows_when_mesh_shrinks():
    wave = anisotropic_wave(20)
    x0 = np.array([0.5, 0.5])
    theta = _wave_axis(wave, x0)
    r0 = 0.1
    omega = 1.1 * _oscillation(wave, x0, r0)
    budgets = []
    for eps in (0.02, 0.01):
        k = int(0.1 / eps)
        mesh = SquareMesh.block(k, k, size=eps, axis_angle=theta)
        centre = mesh.to_world([[k / 2, k / 2]])[0]
        mesh = SquareMesh(eps, tuple(np.asarray(mesh.origin) + x0 - centre), theta, mesh.cells)
        lhs, rhs = taylor_core_bound(wave, mesh, x0, r0, omega)
        assert lhs <= rhs
        budgets.append(rhs)
    assert budgets[1] > budgets[0]


def test_crude_bound_examples():
    tri = SquareMesh.block(4, 4, size=0.25).triangulation
    m, bound, C, stats = crude_bound(affine(1, 1), tri, np.pi / 4, 1 / np.sqrt(2))
    assert m == pytest.approx(1.0)
    assert m <= bound
    m, bound, C, _ = crude_bound(quadratic(1, -1, 1), tri, np.pi / 4, 1 / np.sqrt(2))
    assert m >= 1 + 9 * 8 * 0.25 ** 2  # nine interior hexagons of area 8 eps^2
    assert m <= bound
    with pytest.raises(PreconditionError):
        crude_bound(affine(), tri, np.pi / 3, 0.5)


def test_crude_bound_on_chew_mesh():
    rng = np.random.default_rng(5)
    tri = random_fat_mesh(rng)
    f = anisotropic_wave(8)
    m, bound, C, stats = crude_bound(f, tri, np.pi / 6, 0.5)
    assert m <= bound
    assert C == pytest.approx(crude_constant(np.pi / 6, 0.5))


def test_smooth_function_sum():
    f = quadratic(1, 0, 0) + affine(0, 1)
    assert isinstance(f, SmoothFunction)
    np.testing.assert_allclose(f.hess([[0.3, 0.1]]), [[2, 0, 0]])
