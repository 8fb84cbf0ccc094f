"""Round-sphere geometry: the ambient model, charts, frames and kernels.

All points live on the unit sphere S^n embedded in R^{n+1}.  The chart at a
point ``a`` is the scaled stereographic map with ``|y_a(x)| = 2 tan(theta/2)``
(theta the geodesic distance), which makes the flat metric
``g_a = u_a^{4/(n-2)} g_0`` exactly Euclidean and turns the conformal Green
kernel quantity into the squared chordal distance.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import (AntipodalSingularity, CoincidentPoints,
                     UnsupportedDimension)

POINT_TOL = 1e-12


def surface_measure(m):
    """|S^{m-1}|, the total measure of the unit (m-1)-sphere in R^m."""
    return 2.0 * np.pi ** (m / 2.0) / special.gamma(m / 2.0)


@dataclass(frozen=True)
class SphereModel:
    """Ambient data of the round unit n-sphere.

    Holds the dimensional constants used everywhere else, plus the
    identically-zero mass and Weyl slots of the round model (kept as callables
    so a curved-background extension can swap them in).
    """
    n: int
    scalar_curvature: float = field(init=False)
    c_n: float = field(init=False)
    omega_n: float = field(init=False)
    gamma_n: float = field(init=False)
    sphere_volume: float = field(init=False)

    def __post_init__(self):
        n = self.n
        if not (3 <= n <= 10):
            raise UnsupportedDimension(f"n={n} outside supported range 3..10")
        object.__setattr__(self, "scalar_curvature", float(n * (n - 1)))
        object.__setattr__(self, "c_n", 4.0 * (n - 1) / (n - 2))
        object.__setattr__(self, "omega_n", surface_measure(n))
        object.__setattr__(
            self, "gamma_n",
            (4.0 * n * (n - 1) * surface_measure(n)) ** (2.0 / (2.0 - n)))
        object.__setattr__(self, "sphere_volume", surface_measure(n + 1))

    @property
    def p_critical(self):
        return (self.n + 2.0) / (self.n - 2.0)

    def mass(self, a):
        """Regular part H(a) of the conformal Green function: 0 on the sphere."""
        return 0.0

    def weyl_norm(self, a):
        """|W(a)| of the Weyl tensor: 0 on the sphere."""
        return 0.0

    def as_point(self, coords):
        return as_point(coords, self.n)


def as_point(coords, n=None):
    """Validate and return ``coords`` as a unit vector in R^{n+1}."""
    x = np.asarray(coords, dtype=float)
    if n is not None and x.shape != (n + 1,):
        raise ValueError(f"expected a {n + 1}-vector, got shape {x.shape}")
    r = np.linalg.norm(x)
    if abs(r - 1.0) > 1e-12:
        raise ValueError(f"point has norm {r}, not on the unit sphere")
    return x


def normalize(coords):
    x = np.asarray(coords, dtype=float)
    return x / np.linalg.norm(x)


def chordal_sq(a, b):
    """Squared ambient distance |a-b|^2; equals gamma_n G_{g0}^{2/(2-n)}."""
    d = np.asarray(a) - np.asarray(b)
    return float(np.dot(d, d))


def geodesic_distance(a, b):
    """Great-circle distance on the unit sphere, stable near 0 and pi."""
    half = 0.5 * np.linalg.norm(np.asarray(a) - np.asarray(b))
    return 2.0 * np.arcsin(min(1.0, half))


def green_kernel(a, b):
    """gamma_n G_{g0}^{2/(2-n)}(a, b) = |a-b|^2, exact on the round sphere.

    Symmetric in its arguments and asymptotic to d_{g0}(a,b)^2 near the
    diagonal.  Raises for coincident points where the Green function has its
    pole.
    """
    k = chordal_sq(a, b)
    if k < POINT_TOL ** 2:
        raise CoincidentPoints("green_kernel evaluated on the diagonal")
    return k


def tangent_projection(a, v):
    """Project the ambient vector v onto the tangent space at a."""
    a = np.asarray(a, dtype=float)
    v = np.asarray(v, dtype=float)
    return v - np.dot(a, v) * a


@dataclass(frozen=True)
class TangentFrame:
    """Deterministic orthonormal basis of T_a S^n.

    Built from a single Householder reflector, so identical inputs give
    bitwise-identical frames.
    """
    base: np.ndarray
    basis: np.ndarray  # shape (n, n+1); rows are tangent vectors

    def to_coords(self, v):
        """Coefficients of an ambient (tangent) vector in this frame."""
        return self.basis @ np.asarray(v, dtype=float)

    def from_coords(self, c):
        return np.asarray(c, dtype=float) @ self.basis


def householder_frame(a):
    """Orthonormal tangent frame at ``a`` from the canonical reflector.

    The reflector maps a to -sign(a_0) e_0; its remaining columns span the
    tangent space.  Deterministic in the bit pattern of ``a``.
    """
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    s = 1.0 if a[0] >= 0.0 else -1.0
    v = a.copy()
    v[0] += s
    v /= np.linalg.norm(v)
    H = np.eye(m) - 2.0 * np.outer(v, v)
    return TangentFrame(base=a, basis=H[:, 1:].T.copy())


def batched_frames(points):
    """Householder frames for a batch of points, shape (m, n+1) -> (m, n, n+1)."""
    pts = np.asarray(points, dtype=float)
    m, dim = pts.shape
    s = np.where(pts[:, 0] >= 0.0, 1.0, -1.0)
    v = pts.copy()
    v[:, 0] += s
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    H = np.eye(dim)[None, :, :] - 2.0 * v[:, :, None] * v[:, None, :]
    return np.swapaxes(H[:, :, 1:], 1, 2)


class Chart:
    """Scaled stereographic chart y_a with |y_a(x)| = 2 tan(theta/2).

    In these coordinates the conformal metric g_a = u_a^{4/(n-2)} g_0 is the
    Euclidean metric, the chart center maps to 0, and points at geodesic
    distance pi/2 map to radius 2.
    """

    def __init__(self, a, frame=None):
        self.base = np.asarray(a, dtype=float)
        self.frame = frame if frame is not None else householder_frame(self.base)

    def to_plane(self, x):
        x = np.asarray(x, dtype=float)
        c = 1.0 + np.dot(self.base, x)
        if c < POINT_TOL:
            raise AntipodalSingularity("chart evaluated at the antipode")
        y_amb = 2.0 * tangent_projection(self.base, x) / c
        return self.frame.to_coords(y_amb)

    def to_sphere(self, y):
        y = np.asarray(y, dtype=float)
        t = 0.25 * np.dot(y, y)
        return ((1.0 - t) * self.base + self.frame.from_coords(y)) / (1.0 + t)


def chart(a):
    """Deterministic chart at ``a`` (frame plus coordinate maps)."""
    return Chart(a)


def conformal_factor(model, a, x):
    """u_a(x) = sec^{n-2}(theta/2), the conformal factor flattening g_0.

    Satisfies u_a(a) = 1; singular at the antipode.
    """
    c = 1.0 + np.dot(np.asarray(a, float), np.asarray(x, float))
    if c < POINT_TOL:
        raise AntipodalSingularity("conformal factor at the antipode")
    return (2.0 / c) ** ((model.n - 2) / 2.0)
