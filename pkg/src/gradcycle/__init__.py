"""Gradient cycles of piecewise-linear functions and Hessian-aligned meshes."""

from .geometry import (
    GeometryError, Region, algebraic_area_of_region, arrange_and_wind, join_region,
    mass_of_region, signed_area, winding_number,
)
from .triangulation import (
    SquareMesh, Triangulation2D, TriangulationError, build_triangulation, fatness,
    square_mesh_regions, vertex_star_ccw,
)
from .plfunc import (
    FAMILIES, PLFunction, SmoothFunction, hessian_det, hessian_eigen_angle, hessian_norm,
    interpolate, parse_family,
)
from .cycle import (
    CycleConsistencyError, GradientCycle, boundary_check, build_cycle, lagrangian_check, mass,
    support_identity_check,
)
from .meshgen import (
    EdgeSystem, GridSquare, HypothesisViolation, MeshGenerationError, QualityReport,
    aligned_square_mesh, complete_triangulation, polygon_system, verify_quality,
)
from .approx import PipelineConfig, PipelineResult, crude_bound, run_pipeline
from .estimator import AlignedPLApproximator

__version__ = "0.1.0"
