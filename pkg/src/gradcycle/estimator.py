"""Estimator-style front end for the aligned PL approximation pipeline.

The "training data" is a smooth function rather than a sample matrix, so
``fit`` takes a :class:`~gradcycle.plfunc.SmoothFunction` (or a family
string such as ``"quadratic(1,-1,1)"``). After fitting, ``predict``
evaluates the PL interpolant and ``transform`` returns its gradient, both
at arrays of planar points.
"""

from __future__ import annotations

import numpy as np
import shapely
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .approx import PipelineConfig, run_pipeline
from .plfunc import SmoothFunction, parse_family

NAMED_REGIONS = {
    "unit-square": lambda: shapely.box(0.0, 0.0, 1.0, 1.0),
    "unit-disk": lambda: shapely.Point(0.0, 0.0).buffer(1.0, 256),
}


def check_points(X):
    """Validate an ``(N, 2)`` array of finite points."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise ValueError(f"expected points with 2 coordinates, got {X.shape[1]}")
    return X


def check_region(region):
    """Coerce a region description to a non-empty shapely polygon.

    Accepts a shapely geometry, a registered name (``"unit-square"``,
    ``"unit-disk"``) or a sequence of polygon vertices.
    """
    if region is None:
        region = "unit-square"
    if isinstance(region, str):
        if region not in NAMED_REGIONS:
            raise ValueError(f"unknown region {region!r}; known: {sorted(NAMED_REGIONS)}")
        return NAMED_REGIONS[region]()
    if not isinstance(region, shapely.Geometry):
        coords = check_array(region, dtype=np.float64)
        if coords.shape[1] != 2 or len(coords) < 3:
            raise ValueError("polygon region needs at least three 2D vertices")
        region = shapely.Polygon(coords)
    if region.is_empty or region.area <= 0 or not region.is_valid:
        raise ValueError("region must be a valid polygon of positive area")
    return region


def check_function(f):
    if isinstance(f, str):
        return parse_family(f)
    if not isinstance(f, SmoothFunction):
        raise TypeError("expected a SmoothFunction or a family string")
    return f


class AlignedPLApproximator(BaseEstimator):
    """PL interpolant of a smooth function on a Hessian-aligned triangulation.

    Parameters
    ----------
    n : int
        Grid squares of side ``1/n`` cover the region.
    j : int
        Each grid square carries a square mesh of size ``1/(n j)``.
    region : str, shapely geometry or array_like, default "unit-square"
    force_axis : float or None
        Use this lattice angle everywhere instead of the Hessian eigen-axis.
    margin : float
        Collar width used when sampling ``sup |H_f|`` for the crude term.

    Attributes
    ----------
    result_ : PipelineResult
    triangulation_ : Triangulation2D
    mass_ : float
        Mass of the gradient cycle over the region.
    rhs_ : float
        Integral of ``1 + 2 sqrt(2) |H_f| + |det H_f|`` over the region.
    """

    def __init__(self, n=8, j=8, region="unit-square", force_axis=None, margin=0.1):
        self.n = n
        self.j = j
        self.region = region
        self.force_axis = force_axis
        self.margin = margin

    def fit(self, f, y=None):
        f = check_function(f)
        V = check_region(self.region)
        cfg = PipelineConfig(f, V, int(self.n), int(self.j), margin=self.margin,
                             force_axis=self.force_axis)
        self.result_ = run_pipeline(cfg)
        self.triangulation_ = self.result_.triangulation
        self.mass_ = self.result_.mass_V["total"]
        self.rhs_ = self.result_.rhs_integral
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.result_.pl(check_points(X))

    def transform(self, X):
        """Gradient of the PL interpolant at each point (NaN outside the mesh)."""
        check_is_fitted(self, "result_")
        X = check_points(X)
        pl = self.result_.pl
        faces = pl.locate(X)
        out = np.full((len(X), 2), np.nan)
        out[faces >= 0] = pl.gradients[faces[faces >= 0]]
        return out
