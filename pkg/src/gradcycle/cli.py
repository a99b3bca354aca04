"""Command-line driver: quadratic fibers, pipeline sweeps, meshing and cycle dumps.

Exit codes: 0 when every invariant holds, 1 on an invariant failure, 2 on
usage errors (bad arguments, malformed spec files).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .approx import PipelineConfig, run_pipeline
from .cycle import boundary_check, build_cycle, lagrangian_check
from .estimator import check_region
from .geometry import GeometryError
from .meshgen import (
    HypothesisViolation,
    MeshGenerationError,
    complete_triangulation,
    polygon_system,
)
from .plfunc import hessian_det, interpolate, parse_family, quadratic
from .svg import SVGCanvas, fiber_polygon_svg
from .triangulation import SquareMesh, Triangulation2D, TriangulationError

log = logging.getLogger("gradcycle")

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2

# base tolerances, multiplied by --tolerance-scale
TOL_EXACT = 1e-9
TOL_LAGRANGIAN = 1e-8
TREND_BAND = 0.02


class UsageError(Exception):
    pass


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _verdict(checks):
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_INVARIANT


def _check(name, passed, **detail):
    return {"name": name, "passed": bool(passed), **detail}


def _print_checks(checks):
    for c in checks:
        log.info("%s %s", "PASS" if c["passed"] else "FAIL", c["name"])


# ---------------------------------------------------------------------------
# quadratic


def cmd_quadratic(args):
    a, b, c = args.a, args.b, args.c
    if not all(np.isfinite([a, b, c, args.epsilon, args.axis_angle])) or args.epsilon <= 0:
        raise UsageError("coefficients must be finite and epsilon positive")
    eps = args.epsilon
    mesh = SquareMesh.block(2, 2, size=eps, axis_angle=args.axis_angle, start=(-1, -1))
    tri = mesh.triangulation
    p = interpolate(quadratic(a, b, c), tri)
    cycle = build_cycle(p)
    centre = int(np.flatnonzero(np.all(np.abs(tri.vertices) < 1e-12 * eps, axis=1))[0])
    poly, region = cycle.fiber(centre)
    det = float(hessian_det([2 * a, 2 * b, 2 * c]))
    tol = TOL_EXACT * args.tolerance_scale * max(1.0, abs(a) + abs(b) + abs(c)) ** 2
    bnd = boundary_check(cycle)
    checks = [
        _check("algebraic area equals eps^2 det H", abs(region.algebraic_area - eps * eps * det) <= tol,
               algebraic_area=region.algebraic_area, expected=eps * eps * det),
        _check("boundary cancels", bnd.ok and bnd.residual <= tol, residual=bnd.residual),
        _check("lagrangian", lagrangian_check(cycle)["max"] <= TOL_LAGRANGIAN * args.tolerance_scale),
    ]
    e = tri.edges[cycle.d1_edges]
    report = {
        "command": "quadratic", "a": a, "b": b, "c": c, "epsilon": eps,
        "axis_angle": args.axis_angle, "seed": args.seed,
        "gradients": poly.tolist(),
        "fiber_mass": region.mass, "algebraic_area": region.algebraic_area,
        "det_hessian": det,
        "cells": [{"multiplicity": m, "area": cell.area} for cell, m in region.cells],
        "d1": [{"edge": tri.vertices[list(uv)].tolist(), "fiber_length": float(length)}
               for uv, length in zip(e, cycle.d1_lengths)],
        "checks": checks,
    }
    _emit(_dump(report), args.out)
    if args.svg:
        Path(args.svg).write_text(fiber_polygon_svg(poly, region))
    _print_checks(checks)
    return _verdict(checks)


# ---------------------------------------------------------------------------
# pipeline


def load_spec(source):
    """Read a run spec from a path or the name of a bundled spec."""
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        bundled = resources.files("gradcycle") / "data" / path.name
        if not bundled.is_file():
            raise UsageError(f"spec file not found: {source}")
        text = bundled.read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed spec: {exc}") from exc
    return validate_spec(spec)


def validate_spec(spec):
    if not isinstance(spec, dict):
        raise UsageError("spec must be a JSON object")
    for key in ("function", "runs"):
        if key not in spec:
            raise UsageError(f"spec is missing {key!r}")
    try:
        parse_family(spec["function"])
        check_region(spec.get("region", "unit-square"))
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    runs = spec["runs"]
    if (not isinstance(runs, list) or not runs
            or not all(isinstance(r, list) and len(r) == 2 and all(isinstance(v, int) and v >= 2
                                                                   for v in r) for r in runs)):
        raise UsageError("runs must be a non-empty list of [n, j] pairs with n, j >= 2")
    axis = spec.get("compare_axis")
    if axis is not None and not isinstance(axis, (int, float)):
        raise UsageError("compare_axis must be a number")
    return spec


def _pipeline_svg(res, V):
    canvas = SVGCanvas(stroke_width=0.1 / (res.n * res.j))
    canvas.geometry(res.Z, fill="#ff7f0e", opacity=0.4)
    canvas.triangulation(res.triangulation, stroke="#999999")
    canvas.geometry(V, fill="none", stroke="#1f77b4", opacity=1.0)
    return canvas.to_string(width=800)


def _pipeline_job(job):
    spec, n, j, axis, draw = job
    f = parse_family(spec["function"])
    V = check_region(spec.get("region", "unit-square"))
    res = run_pipeline(PipelineConfig(f, V, n, j, force_axis=axis))
    record = res.to_record()
    if draw:
        record["svg"] = _pipeline_svg(res, V)
    record["force_axis"] = axis
    record["lagrangian"] = lagrangian_check(res.cycle)["max"]
    bnd = boundary_check(res.cycle)
    record["boundary"] = {"coefficient_residual": bnd.coefficient_residual,
                          "residual": bnd.residual}
    return record


def _run_checks(record, scale):
    return [
        _check("mesh quality", record["quality"]["passed"]),
        _check("Z area bound", record["areas"]["Z"] <= record["z_area_bound"],
               z_area=record["areas"]["Z"], bound=record["z_area_bound"]),
        _check("mass within budget",
               record["mass_V"] <= record["rhs"] + record["taylor_slack"] + record["crude_bound"]),
        _check("boundary cancels", record["boundary"]["coefficient_residual"] == 0),
        _check("lagrangian", record["lagrangian"] <= TOL_LAGRANGIAN * scale),
    ]


def trend_check(records, band=TREND_BAND):
    """Distance to the rhs integral never grows by more than ``band * rhs`` along the sweep."""
    gaps = [abs(r["rhs"] - r["mass_V"]) for r in records]
    slack = band * max(r["rhs"] for r in records)
    ok = all(g1 <= g0 + slack for g0, g1 in zip(gaps, gaps[1:]))
    masses = [r["mass_V"] for r in records]
    literal = all(m1 <= m0 for m0, m1 in zip(masses, masses[1:]))
    return _check("trend toward rhs", ok, gaps=gaps, mass_non_increasing=literal)


def cmd_pipeline(args):
    spec = load_spec(args.spec)
    runs = [tuple(r) for r in spec["runs"]]
    axis = spec.get("compare_axis")
    jobs = [(spec, n, j, None, bool(args.svg) and k == len(runs) - 1)
            for k, (n, j) in enumerate(runs)]
    if axis is not None:
        jobs += [(spec, n, j, float(axis), False) for n, j in runs]
    if args.threads and args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            records = list(pool.map(_pipeline_job, jobs))
    else:
        records = [_pipeline_job(job) for job in jobs]
    if args.svg:
        Path(args.svg).write_text(records[len(runs) - 1].pop("svg"))
    aligned = records[: len(runs)]
    compared = records[len(runs):]

    checks = []
    for rec in records:
        tag = f"(n={rec['n']}, j={rec['j']}, axis={rec['force_axis']})"
        checks += [dict(c, name=f"{c['name']} {tag}") for c in _run_checks(rec, args.tolerance_scale)]
    if spec.get("trend", len(runs) > 1):
        checks.append(trend_check(aligned))
    for a_rec, m_rec in zip(aligned, compared):
        checks.append(_check(f"aligned < forced axis (n={a_rec['n']}, j={a_rec['j']})",
                             a_rec["mass_V"] < m_rec["mass_V"],
                             aligned=a_rec["mass_V"], forced=m_rec["mass_V"]))
    result = {"command": "pipeline", "name": spec.get("name", Path(args.spec).stem),
              "function": spec["function"], "region": spec.get("region", "unit-square"),
              "seed": args.seed, "runs": aligned, "forced_axis_runs": compared,
              "checks": checks}
    _emit(_dump(result), args.out)
    _print_checks(checks)
    return _verdict(checks)


# ---------------------------------------------------------------------------
# mesh


def _disk_polygon(h):
    """Regular polygon inscribed in the unit circle with sides as short as possible but >= h."""
    k = max(8, int(np.floor(np.pi / np.arcsin(min(h / 2, 1.0)))))
    t = 2 * np.pi * np.arange(k) / k
    return check_region(np.column_stack([np.cos(t), np.sin(t)]))


def _load_region(text, h):
    if text == "disk":
        return _disk_polygon(h)
    path = Path(text)
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed region file: {exc}") from exc
        text = data.get("region", data) if isinstance(data, dict) else data
    if text == "square":
        text = "unit-square"
    try:
        return check_region(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _write_triangulation(tri, out, extra=None):
    if out is None or out == "-":
        _emit(_dump({**tri.to_dict(), **(extra or {})}), None)
    elif str(out).endswith(".off"):
        Path(out).write_text(tri.to_off())
    else:
        Path(out).write_text(_dump({**tri.to_dict(), **(extra or {})}))


def cmd_mesh(args):
    if not args.h > 0:
        raise UsageError("h must be positive")
    region = _load_region(args.region, args.h)
    interior = None
    if args.system:
        try:
            data = json.loads(Path(args.system).read_text())
            interior = (np.asarray(data["vertices"], float), np.asarray(data.get("edges", []), int))
        except (OSError, KeyError, ValueError) as exc:
            raise UsageError(f"bad system file: {exc}") from exc
    elif args.lattice:
        nx, ny, angle = args.lattice
        block = SquareMesh.block(int(nx), int(ny), size=args.h, axis_angle=angle)
        shift = np.asarray(region.centroid.coords[0]) - block.to_world([[nx / 2, ny / 2]])[0]
        block = SquareMesh(args.h, tuple(shift), angle, block.cells)
        index = {v: k for k, v in enumerate(block.lattice_vertices)}
        interior = (block.to_world(block.lattice_vertices),
                    [(index[u], index[v]) for u, v in block.lattice_edges])
    system = polygon_system(region, args.h, interior)
    tri, report = complete_triangulation(system)
    summary = report.to_dict()
    _write_triangulation(tri, args.out, {"quality": summary})
    if args.svg:
        canvas = SVGCanvas()
        canvas.triangulation(tri)
        for u, v in system.edges:
            canvas.polyline(system.vertices[[u, v]], stroke="#d62728", closed=False)
        canvas.save(args.svg)
    checks = [_check("edges in [h, 2h] and angles in [pi/6, 2pi/3]", not report.violations),
              _check("contains input system", report.contains_input)]
    _print_checks(checks)
    if args.out not in (None, "-"):
        _emit(_dump({"command": "mesh", "seed": args.seed, "quality": summary,
                     "checks": checks}), None)
    return _verdict(checks)


# ---------------------------------------------------------------------------
# cycle-dump


def cmd_cycle_dump(args):
    f = _parse_function(args.function)
    if args.mesh:
        try:
            tri = Triangulation2D.from_dict(json.loads(Path(args.mesh).read_text()))
        except (OSError, KeyError, ValueError) as exc:
            raise UsageError(f"bad mesh file: {exc}") from exc
    else:
        nx, ny = args.block
        tri = SquareMesh.block(nx, ny, size=args.epsilon, axis_angle=args.axis_angle,
                               start=(-(nx // 2), -(ny // 2))).triangulation
    cycle = build_cycle(interpolate(f, tri))
    bnd = boundary_check(cycle)
    scale = args.tolerance_scale
    checks = [_check("boundary cancels", bnd.ok, residual=bnd.residual),
              _check("lagrangian", lagrangian_check(cycle)["max"] <= TOL_LAGRANGIAN * scale)]
    data = cycle.to_dict()
    data.update({"command": "cycle-dump", "function": args.function, "seed": args.seed,
                 "checks": checks})
    _emit(_dump(data), args.out)
    if args.svg:
        canvas = SVGCanvas()
        canvas.triangulation(tri)
        canvas.save(args.svg)
    _print_checks(checks)
    return _verdict(checks)


def _parse_function(text):
    try:
        return parse_family(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--svg", help="also write an SVG figure to this path")
    common.add_argument("--threads", type=int, default=1,
                        help="worker processes for independent runs")
    common.add_argument("--tolerance-scale", type=float, default=1.0,
                        help="multiply every invariant tolerance by this factor")
    common.add_argument("--seed", type=int, default=0, help="recorded in every output")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gradcycle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quadratic", parents=[common],
                       help="fiber polygon of a x^2 + 2 b xy + c y^2 on the lattice mesh")
    for name in ("a", "b", "c"):
        q.add_argument(name, type=float)
    q.add_argument("--epsilon", type=float, default=1.0)
    q.add_argument("--axis-angle", type=float, default=0.0)
    q.set_defaults(func=cmd_quadratic)

    p = sub.add_parser("pipeline", parents=[common],
                       help="run an (n, j) sweep from a JSON spec (path or bundled name)")
    p.add_argument("spec")
    p.set_defaults(func=cmd_pipeline)

    m = sub.add_parser("mesh", parents=[common],
                       help="complete a boundary subdivision to a quality mesh")
    m.add_argument("region", help="'square', 'disk' or a JSON file with polygon vertices")
    m.add_argument("--h", type=float, required=True)
    group = m.add_mutually_exclusive_group()
    group.add_argument("--system", help="JSON file with interior 'vertices' and 'edges'")
    group.add_argument("--lattice", nargs=3, type=float, metavar=("NX", "NY", "ANGLE"),
                       help="seed a rotated lattice block of size h at the region centroid")
    m.set_defaults(func=cmd_mesh)

    c = sub.add_parser("cycle-dump", parents=[common],
                       help="gradient cycle of an interpolated function as JSON")
    c.add_argument("function", help="family expression such as 'quadratic(1,-1,1)'")
    src = c.add_mutually_exclusive_group()
    src.add_argument("--mesh", help="triangulation JSON written by the mesh command")
    src.add_argument("--block", nargs=2, type=int, default=(4, 4), metavar=("NX", "NY"))
    c.add_argument("--epsilon", type=float, default=1.0)
    c.add_argument("--axis-angle", type=float, default=0.0)
    c.set_defaults(func=cmd_cycle_dump)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    if args.tolerance_scale <= 0 or args.threads < 1:
        parser.error("--tolerance-scale must be positive and --threads at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gradcycle: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisViolation as exc:
        print(f"gradcycle: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (MeshGenerationError, TriangulationError, GeometryError) as exc:
        print(f"gradcycle: invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
