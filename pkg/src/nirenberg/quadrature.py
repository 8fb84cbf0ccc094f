"""Quadrature on S^n: product grids and symmetry-reduced integrals.

Two tools live here.

``quadrature_grid`` builds the classical product Gauss rule in hyperspherical
angles (Gauss-Jacobi in each colatitude cosine, trapezoid in the final
angle); it is exact on low-degree spherical polynomials and serves as the
generic direct integrator at small n.

``reduced_sphere_integral`` is the workhorse for bubble-ensemble integrands.
Every integrand the oracle needs depends on x only through inner products
with a handful of unit "anchor" directions (bubble centers, curvature axes),
possibly times one or two ambient linear factors (x . e).  Writing
x = v + w with v the projection onto the anchor span V (dim d <= 3) reduces
the integral to d dimensions exactly:

    int_{S^n} F(Pi_V x) dmu = |S^{n-d}| int_{B^d} F(v) (1-|v|^2)^{(n-d-1)/2} dv.

Linear factors are handled by parity: components of e orthogonal to V
integrate to zero against F, and a product of two orthogonal components
averages to <e_perp, f_perp>/(n+1-d) * (1-|v|^2).  The remaining d-dimensional
integral is done with graded Gauss panels refined near each concentration
scale 1/lambda, which is what defeats uniform grids for highly peaked
bubbles.
"""
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ResolutionTooCoarse, UnsupportedDimension
from .geometry import surface_measure

MAX_GRID_NODES = 20_000_000


# --------------------------------------------------------------------------
# graded Gauss panels
# --------------------------------------------------------------------------
def gauss_panels(edges, m=12):
    """Composite Gauss-Legendre nodes/weights over consecutive panel edges."""
    xg, wg = np.polynomial.legendre.leggauss(m)
    a = np.asarray(edges[:-1])
    b = np.asarray(edges[1:])
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def graded_edges(a, b, features, base=12):
    """Panel edges on [a, b], geometrically refined around each feature.

    features: iterable of (position, scale); edges are laid at
    position +- scale * 2^k so each dyadic shell gets its own panel.
    """
    pts = {float(a), float(b)}
    span = b - a
    for pos, h in features:
        h = max(float(h), span * 1e-9)
        x = 0.5 * h
        while x < span:
            for s in (pos - x, pos + x):
                if a < s < b:
                    pts.add(float(s))
            x *= 2.0
    edges = sorted(pts)
    out = [edges[0]]
    coarse = span / base
    for e in edges[1:]:
        width = e - out[-1]
        k = max(1, int(np.ceil(width / coarse)))
        out.extend(np.linspace(out[-1], e, k + 1)[1:])
    return np.asarray(out)


def _angle_rule(a, b, features, level, m=None):
    base = 6 + 3 * level
    m = m if m is not None else 12
    return gauss_panels(graded_edges(a, b, features, base=base), m=m)


# --------------------------------------------------------------------------
# product grid in hyperspherical angles
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and positive weights integrating over S^n."""
    nodes: np.ndarray    # (m, n+1)
    weights: np.ndarray  # (m,)
    level: int

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.nodes)))


def quadrature_grid(n, level):
    """Product Gauss rule on S^n, exact on polynomials of degree ~4*level.

    Uses Gauss-Jacobi rules in cos(theta_k) for each colatitude (weight
    (1-t^2)^{(n-k-1)/2}) and a uniform rule in the final angle.
    """
    if not (3 <= n <= 10):
        raise UnsupportedDimension(f"n={n} outside supported range 3..10")
    if level < 1:
        raise ValueError("level must be >= 1")
    m = 2 * level + 4
    count = m ** (n - 1) * (2 * m)
    if count > MAX_GRID_NODES:
        raise ResolutionTooCoarse(
            f"product grid at n={n}, level={level} needs {count} nodes "
            f"(cap {MAX_GRID_NODES}); use the reduced integrator instead")

    axes_t, axes_w = [], []
    for k in range(1, n):                      # colatitudes theta_1..theta_{n-1}
        alpha = (n - k - 1) / 2.0
        t, w = special.roots_jacobi(m, alpha, alpha)
        axes_t.append(t)
        axes_w.append(w)
    phi = np.arange(2 * m) * (np.pi / m)       # final angle, trapezoid-exact
    wphi = np.full(2 * m, np.pi / m)

    mesh = np.meshgrid(*axes_t, phi, indexing="ij")
    wmesh = np.meshgrid(*axes_w, wphi, indexing="ij")
    weights = np.ones(mesh[0].shape)
    for w in wmesh:
        weights = weights * w

    pts = np.empty(mesh[0].shape + (n + 1,))
    sin_prod = np.ones(mesh[0].shape)
    for k in range(n - 1):
        t = mesh[k]
        pts[..., k] = sin_prod * t
        sin_prod = sin_prod * np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    pts[..., n - 1] = sin_prod * np.cos(mesh[n - 1])
    pts[..., n] = sin_prod * np.sin(mesh[n - 1])

    nodes = pts.reshape(-1, n + 1)
    weights = weights.reshape(-1)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    return QuadratureGrid(nodes=nodes, weights=weights, level=level)


# --------------------------------------------------------------------------
# symmetry-reduced integrator
# --------------------------------------------------------------------------
def _orthonormal_span(directions, tol=1e-10):
    A = np.asarray(directions, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0] if len(s) else 1.0)))
    return vt[:rank]


def _stable_q_from_angles(cos_gap, boundary_defect):
    """1 - sin(beta) cos(gap) without cancellation.

    boundary_defect = 1 - sin(beta) given stably; cos_gap = cos(phi - phi_c).
    """
    return boundary_defect + (1.0 - boundary_defect) * (1.0 - cos_gap)


def reduced_sphere_integral(n, directions, F, features=(), linear_vectors=(),
                            level=3, gauss_m=12):
    """Integrate F(x.u_1, ..., x.u_k) * prod (x.e_m) over S^n.

    directions : sequence of unit ambient vectors the integrand depends on
                 (duplicates allowed); their span must have dimension <= 3.
    F          : callable F(S, Q) with S, Q lists of node arrays aligned with
                 ``directions`` (S[k] = x.u_k, Q[k] = 1 - S[k] computed
                 cancellation-free); returns an array over nodes.
    features   : iterable of (direction_index, scale) marking concentration
                 of width ``scale`` around that anchor.
    linear_vectors : up to two ambient vectors e; the integrand is multiplied
                 by prod (x . e) and reduced by parity.

    Exact in the symmetry class; the d-dimensional quadrature refines near
    each feature at the given level.
    """
    dirs = [np.asarray(c, dtype=float) for c in directions]
    es = [np.asarray(e, dtype=float) for e in linear_vectors]
    if len(es) > 2:
        raise ResolutionTooCoarse("at most two linear factors supported")
    if not dirs:
        return _isotropic_integral(n, F, es)

    U = _orthonormal_span(dirs)
    d = U.shape[0]
    if d > 3:
        raise ResolutionTooCoarse(
            f"integrand spans a {d}-dimensional direction space; only d<=3 "
            "is supported by the reduced integrator")

    feats = [(int(i), float(h)) for i, h in features]
    if d == 1:
        return _axial_integral(n, dirs, U[0], F, feats, es, level, gauss_m)
    if d == 2:
        return _plane_integral(n, dirs, U, F, feats, es, level, gauss_m)
    return _space_integral(n, dirs, U, F, feats, es, level, gauss_m)


def _isotropic_integral(n, F, es):
    total = surface_measure(n + 1)
    val = float(np.asarray(F([], [])))
    if len(es) == 0:
        return val * total
    if len(es) == 1:
        return 0.0
    return val * total * float(np.dot(es[0], es[1])) / (n + 1)


def _axial_integral(n, dirs, u1, F, feats, es, level, gauss_m):
    sig = [float(np.dot(c, u1)) for c in dirs]     # each is +-1
    ang_feats = [((0.0 if sig[i] > 0 else np.pi), h) for i, h in feats]
    psi, w = _angle_rule(0.0, np.pi, ang_feats, level, gauss_m)
    cos_psi = np.cos(psi)
    q_plus = 2.0 * np.sin(psi / 2.0) ** 2          # 1 - cos(psi), stable
    q_minus = 2.0 * np.cos(psi / 2.0) ** 2         # 1 + cos(psi)
    S = [s * cos_psi for s in sig]
    Q = [q_plus if s > 0 else q_minus for s in sig]
    vals = np.asarray(F(S, Q), dtype=float)
    weight = np.sin(psi) ** (n - 1)
    pref = surface_measure(n)

    if not es:
        return pref * float(np.dot(w, vals * weight))
    if len(es) == 1:
        c1 = float(np.dot(es[0], u1))
        return pref * c1 * float(np.dot(w, vals * weight * cos_psi))
    c1, c2 = (float(np.dot(e, u1)) for e in es)
    e_perp = [e - np.dot(e, u1) * u1 for e in es]
    par = c1 * c2 * float(np.dot(w, vals * weight * cos_psi ** 2))
    perp = (float(np.dot(e_perp[0], e_perp[1])) / n
            * float(np.dot(w, vals * weight * np.sin(psi) ** 2)))
    return pref * (par + perp)


def _plane_integral(n, dirs, U, F, feats, es, level, gauss_m):
    u1, u2 = U
    ang = [float(np.arctan2(np.dot(c, u2), np.dot(c, u1))) for c in dirs]
    min_scale = min([h for _, h in feats], default=0.3)
    beta_feats = [(np.pi / 2.0, min_scale)]
    phi_feats = []
    for i, h in feats:
        a = ang[i] % (2.0 * np.pi)
        phi_feats.append((a, h))
        if a < np.pi:                              # wrap-around grading
            phi_feats.append((a + 2.0 * np.pi, h))
        else:
            phi_feats.append((a - 2.0 * np.pi, h))

    beta, wb = _angle_rule(0.0, np.pi / 2.0, beta_feats, level, gauss_m)
    phi, wf = _angle_rule(0.0, 2.0 * np.pi, phi_feats, level, gauss_m)
    B = beta[:, None]
    P = phi[None, :]
    sinb = np.sin(B)
    # 1 - sin(beta) without cancellation
    defect = 2.0 * np.sin((np.pi / 2.0 - B) / 2.0) ** 2

    S, Q = [], []
    for a in ang:
        gap = P - a
        cos_gap = np.cos(gap)
        S.append(sinb * cos_gap)
        Q.append(defect + (1.0 - defect) * 2.0 * np.sin(gap / 2.0) ** 2)
    vals = np.asarray(F(S, Q), dtype=float)
    weight = np.cos(B) ** (n - 2) * sinb
    W = wb[:, None] * wf[None, :]
    pref = surface_measure(n - 1)

    def contract(extra):
        return pref * float(np.sum(W * vals * weight * extra))

    if not es:
        return contract(1.0)
    v1 = sinb * np.cos(P)
    v2 = sinb * np.sin(P)
    if len(es) == 1:
        e = es[0]
        return contract(np.dot(e, u1) * v1 + np.dot(e, u2) * v2)
    e, f = es
    ev = np.dot(e, u1) * v1 + np.dot(e, u2) * v2
    fv = np.dot(f, u1) * v1 + np.dot(f, u2) * v2
    e_perp = e - np.dot(e, u1) * u1 - np.dot(e, u2) * u2
    f_perp = f - np.dot(f, u1) * u1 - np.dot(f, u2) * u2
    out = contract(ev * fv)
    out += float(np.dot(e_perp, f_perp)) / (n - 1) * contract(np.cos(B) ** 2)
    return out


def _space_integral(n, dirs, U, F, feats, es, level, gauss_m):
    """d = 3 tensor rule; coarser than the lower-d paths but exact in class."""
    u1, u2, u3 = U
    vc = np.array([[np.dot(c, u1), np.dot(c, u2), np.dot(c, u3)] for c in dirs])
    theta_c = np.arccos(np.clip(vc[:, 2], -1.0, 1.0))
    phi_c = np.arctan2(vc[:, 1], vc[:, 0])
    min_scale = min([h for _, h in feats], default=0.3)

    beta, wb = _angle_rule(0.0, np.pi / 2.0, [(np.pi / 2.0, min_scale)],
                           level, gauss_m)
    th_feats = [(theta_c[i], h) for i, h in feats]
    ph_feats = []
    for i, h in feats:
        a = phi_c[i] % (2.0 * np.pi)
        ph_feats.append((a, h))
        ph_feats.append((a + (2.0 * np.pi if a < np.pi else -2.0 * np.pi), h))
    theta, wt = _angle_rule(0.0, np.pi, th_feats, level, gauss_m)
    phi, wf = _angle_rule(0.0, 2.0 * np.pi, ph_feats, level, gauss_m)

    B = beta[:, None, None]
    T = theta[None, :, None]
    P = phi[None, None, :]
    sinb = np.sin(B)
    defect = 2.0 * np.sin((np.pi / 2.0 - B) / 2.0) ** 2
    uhat = np.stack(np.broadcast_arrays(
        np.sin(T) * np.cos(P), np.sin(T) * np.sin(P),
        np.cos(T) * np.ones_like(P)))

    S, Q = [], []
    for c in vc:
        dot = c[0] * uhat[0] + c[1] * uhat[1] + c[2] * uhat[2]
        gap = np.clip((1.0 - dot), 0.0, None)     # 1 - uhat.c, >= 0
        S.append(sinb * dot)
        Q.append(defect + (1.0 - defect) * gap)
    vals = np.asarray(F(S, Q), dtype=float)
    weight = np.cos(B) ** (n - 3) * sinb ** 2 * np.sin(T)
    W = wb[:, None, None] * wt[None, :, None] * wf[None, None, :]
    pref = surface_measure(n - 2)

    def contract(extra):
        return pref * float(np.sum(W * vals * weight * extra))

    if not es:
        return contract(1.0)
    proj = [np.array([np.dot(e, u1), np.dot(e, u2), np.dot(e, u3)]) for e in es]
    vcomp = [sinb * (p[0] * uhat[0] + p[1] * uhat[1] + p[2] * uhat[2])
             for p in proj]
    if len(es) == 1:
        return contract(vcomp[0])
    perp = [e - sum(np.dot(e, u) * u for u in (u1, u2, u3)) for e in es]
    out = contract(vcomp[0] * vcomp[1])
    out += float(np.dot(perp[0], perp[1])) / (n - 2) * contract(np.cos(B) ** 2)
    return out


def reduced_integral_with_error(n, directions, F, features=(),
                                linear_vectors=(), level=3):
    """Value at ``level`` plus the difference from level-1 as error estimate."""
    hi = reduced_sphere_integral(n, directions, F, features, linear_vectors,
                                 level)
    lo = reduced_sphere_integral(n, directions, F, features, linear_vectors,
                                 max(1, level - 1))
    return hi, abs(hi - lo)
