"""PL functions over triangulations, smooth test functions and Hessian helpers."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import shapely

# ---------------------------------------------------------------------------
# Hessians are passed around as arrays whose last axis is (f_xx, f_xy, f_yy).


def _as_hessian(H):
    H = np.asarray(H, dtype=float)
    if H.shape[-2:] == (2, 2):
        return np.stack([H[..., 0, 0], 0.5 * (H[..., 0, 1] + H[..., 1, 0]), H[..., 1, 1]], -1)
    return H


def hessian_norm(H):
    """Hilbert-Schmidt norm sqrt(f_xx^2 + f_yy^2 + 2 f_xy^2)."""
    h = _as_hessian(H)
    return np.sqrt(h[..., 0] ** 2 + h[..., 2] ** 2 + 2 * h[..., 1] ** 2)


def hessian_det(H):
    h = _as_hessian(H)
    return h[..., 0] * h[..., 2] - h[..., 1] ** 2


def hessian_eigen_angle(H, rtol=1e-12):
    """Angle in ``[0, pi/2)`` of an eigenvector of the symmetric matrix.

    Multiples of the identity return 0.
    """
    h = _as_hessian(H)
    fxx, fxy, fyy = h[..., 0], h[..., 1], h[..., 2]
    scale = rtol * np.maximum(hessian_norm(h), np.finfo(float).tiny)
    iso = (np.abs(fxy) <= scale) & (np.abs(fxx - fyy) <= scale)
    theta = 0.5 * np.arctan2(2 * fxy, fxx - fyy)
    theta = np.where(iso, 0.0, np.mod(theta, np.pi / 2))
    theta = np.where(np.isclose(theta, np.pi / 2, rtol=0, atol=1e-15), 0.0, theta)
    return float(theta) if np.ndim(theta) == 0 else theta


hessian_eigenvectors = hessian_eigen_angle


def rotate_hessian(H, theta):
    """Hessian of ``x -> f(R(theta) x)``, i.e. ``H`` expressed in a frame rotated by ``theta``."""
    h = _as_hessian(H)
    c, s = np.cos(theta), np.sin(theta)
    fxx, fxy, fyy = h[..., 0], h[..., 1], h[..., 2]
    return np.stack([
        c * c * fxx + 2 * c * s * fxy + s * s * fyy,
        -c * s * fxx + (c * c - s * s) * fxy + c * s * fyy,
        s * s * fxx - 2 * c * s * fxy + c * c * fyy,
    ], -1)


# ---------------------------------------------------------------------------


def _pts(x):
    return np.atleast_2d(np.asarray(x, dtype=float))


def fd_hessian(func, x, step=None):
    """Central finite-difference Hessian, step ``max(1e-5, 1e-5*|x|)``."""
    x = _pts(x)
    if step is None:
        step = np.maximum(1e-5, 1e-5 * np.abs(x).max(axis=1))[:, None]
    ex = np.array([1.0, 0.0]) * step
    ey = np.array([0.0, 1.0]) * step
    s2 = step[:, 0] ** 2
    f0 = func(x)
    fxx = (func(x + ex) - 2 * f0 + func(x - ex)) / s2
    fyy = (func(x + ey) - 2 * f0 + func(x - ey)) / s2
    fxy = (func(x + ex + ey) - func(x + ex - ey) - func(x - ex + ey) + func(x - ex - ey)) / (4 * s2)
    return np.stack([fxx, fxy, fyy], -1)


@dataclass(frozen=True)
class SmoothFunction:
    """A C^2 function of two variables with vectorised callbacks.

    ``value``, ``gradient`` and ``hessian`` take ``(N, 2)`` arrays and
    return ``(N,)``, ``(N, 2)`` and ``(N, 3)`` arrays. Callbacks must be
    pure. When ``hessian`` is omitted a finite-difference Hessian is used
    and ``approximate_hessian`` is set.
    """

    value: Callable
    gradient: Callable
    hessian: Callable = None
    name: str = "f"
    approximate_hessian: bool = field(default=False)

    def __post_init__(self):
        if self.hessian is None:
            object.__setattr__(self, "hessian", lambda x: fd_hessian(self.value, x))
            object.__setattr__(self, "approximate_hessian", True)

    def __call__(self, x):
        return self.value(_pts(x))

    def grad(self, x):
        return self.gradient(_pts(x))

    def hess(self, x):
        return self.hessian(_pts(x))

    def __add__(self, other):
        return SmoothFunction(
            lambda x: self.value(x) + other.value(x),
            lambda x: self.gradient(x) + other.gradient(x),
            lambda x: self.hessian(x) + other.hessian(x),
            name=f"{self.name}+{other.name}",
            approximate_hessian=self.approximate_hessian or other.approximate_hessian,
        )

    def scaled(self, k):
        return SmoothFunction(
            lambda x: k * self.value(x), lambda x: k * self.gradient(x),
            lambda x: k * self.hessian(x), name=f"{k}*{self.name}",
            approximate_hessian=self.approximate_hessian)


def affine(alpha=0.0, beta=0.0, gamma=0.0):
    g = np.array([alpha, beta], float)
    return SmoothFunction(
        lambda x: x @ g + gamma,
        lambda x: np.broadcast_to(g, x.shape).copy(),
        lambda x: np.zeros((len(x), 3)),
        name=f"affine({alpha},{beta},{gamma})")


def quadratic(a, b, c, alpha=0.0, beta=0.0, gamma=0.0):
    """q(x, y) = a x^2 + 2 b xy + c y^2 + alpha x + beta y + gamma."""
    def value(x):
        X, Y = x[:, 0], x[:, 1]
        return a * X * X + 2 * b * X * Y + c * Y * Y + alpha * X + beta * Y + gamma

    def gradient(x):
        X, Y = x[:, 0], x[:, 1]
        return np.stack([2 * a * X + 2 * b * Y + alpha, 2 * b * X + 2 * c * Y + beta], -1)

    H = np.array([2 * a, 2 * b, 2 * c], float)
    return SmoothFunction(value, gradient, lambda x: np.tile(H, (len(x), 1)),
                          name=f"quadratic({a},{b},{c})")


def rotated_quadratic(a, c, theta):
    """a u^2 + c v^2 where (u, v) are coordinates along directions theta, theta + pi/2."""
    ct, st = np.cos(theta), np.sin(theta)
    f = quadratic(a * ct * ct + c * st * st, (a - c) * ct * st, a * st * st + c * ct * ct)
    return SmoothFunction(f.value, f.gradient, f.hessian,
                          name=f"rotated-quadratic({a},{c},{theta})")


def gauss_bump(A, s, cx=0.5, cy=0.5):
    """A exp(-|x - centre|^2 / (2 s^2))."""
    ctr = np.array([cx, cy], float)

    def value(x):
        d = x - ctr
        return A * np.exp(-(d * d).sum(1) / (2 * s * s))

    def gradient(x):
        return -(x - ctr) / (s * s) * value(x)[:, None]

    def hessian(x):
        d = x - ctr
        v = value(x) / (s * s)
        return np.stack([v * (d[:, 0] ** 2 / (s * s) - 1), v * d[:, 0] * d[:, 1] / (s * s),
                         v * (d[:, 1] ** 2 / (s * s) - 1)], -1)

    return SmoothFunction(value, gradient, hessian, name=f"gauss-bump({A},{s})")


def anisotropic_wave(K, cx=-0.5, cy=1.5):
    """Circular wave sin(K r) / K about an off-domain centre.

    The Hessian has one eigenvalue of size ~K (radial) and one of size
    ~1/r (tangential), with eigenvectors rotating across the plane. With
    the default centre the fronts over the unit square run roughly along
    the direction (1, 1), so the radial direction crosses the slope -1
    diagonals of an unrotated mesh.
    """
    ctr = np.array([cx, cy], float)

    def _r(x):
        d = x - ctr
        r = np.hypot(d[:, 0], d[:, 1])
        return d, r

    def value(x):
        _, r = _r(x)
        return np.sin(K * r) / K

    def gradient(x):
        d, r = _r(x)
        return (np.cos(K * r) / r)[:, None] * d

    def hessian(x):
        d, r = _r(x)
        ux, uy = d[:, 0] / r, d[:, 1] / r
        radial = -K * np.sin(K * r)
        tangential = np.cos(K * r) / r
        return np.stack([radial * ux * ux + tangential * uy * uy,
                         (radial - tangential) * ux * uy,
                         radial * uy * uy + tangential * ux * ux], -1)

    return SmoothFunction(value, gradient, hessian, name=f"anisotropic-wave({K})")


FAMILIES = {
    "affine": affine,
    "quadratic": quadratic,
    "rotated-quadratic": rotated_quadratic,
    "gauss-bump": gauss_bump,
    "anisotropic-wave": anisotropic_wave,
}

_FAMILY_RE = re.compile(r"^\s*([a-z\-]+)\s*\((.*)\)\s*$")


def parse_family(text):
    """Build a registered function from text such as ``"quadratic(1,-1,1)"``."""
    m = _FAMILY_RE.match(text)
    if not m or m.group(1) not in FAMILIES:
        raise ValueError(f"unknown function family: {text!r}")
    args = [float(eval_number(a)) for a in m.group(2).split(",") if a.strip()]
    return FAMILIES[m.group(1)](*args)


def eval_number(token):
    """Parse a number, allowing ``pi`` expressions like ``pi/7``."""
    token = token.strip().replace("pi", repr(np.pi))
    if not re.fullmatch(r"[0-9eE.+\-*/ ()]+", token):
        raise ValueError(f"bad numeric literal {token!r}")
    return float(eval(token, {"__builtins__": {}}, {}))  # noqa: S307 - restricted charset


# ---------------------------------------------------------------------------


def _face_gradients(vertices, faces, values):
    p = vertices[faces]
    v = values[faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    dv1 = v[:, 1] - v[:, 0]
    dv2 = v[:, 2] - v[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    gx = (dv1 * e2[:, 1] - dv2 * e1[:, 1]) / det
    gy = (e1[:, 0] * dv2 - e2[:, 0] * dv1) / det
    return np.stack([gx, gy], -1)


class PLFunction:
    """Vertex values over a :class:`Triangulation2D`, affine on each face."""

    def __init__(self, base, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        if len(values) != base.n_vertices:
            raise ValueError(f"expected {base.n_vertices} vertex values, got {len(values)}")
        if not np.all(np.isfinite(values)):
            raise ValueError("PL function values must be finite")
        values.flags.writeable = False
        self.base = base
        self.values = values

    @cached_property
    def gradients(self):
        g = _face_gradients(self.base.vertices, self.base.faces, self.values)
        g.flags.writeable = False
        return g

    def face_gradient(self, face):
        return self.gradients[int(face)]

    @cached_property
    def _tree(self):
        return shapely.STRtree(self.base.face_polygons())

    def locate(self, points):
        """Index of a face containing each point (-1 when outside the support)."""
        pts = _pts(points)
        out = np.full(len(pts), -1, dtype=np.int64)
        hits = self._tree.query(shapely.points(pts), predicate="intersects")
        out[hits[0][::-1]] = hits[1][::-1]
        return out

    def __call__(self, points):
        pts = _pts(points)
        face = self.locate(pts)
        if np.any(face < 0):
            raise ValueError("point outside the support of the PL function")
        v0 = self.base.faces[face, 0]
        return self.values[v0] + ((pts - self.base.vertices[v0]) * self.gradients[face]).sum(1)


def interpolate(f, tri):
    """The PL function agreeing with ``f`` at the vertices of ``tri``."""
    values = f(tri.vertices) if len(tri.vertices) else np.zeros(0)
    return PLFunction(tri, values)


def face_gradient(p, face):
    return p.face_gradient(face)
