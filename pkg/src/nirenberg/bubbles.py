"""Bubbles on the round sphere: closed forms, jets and interaction integrals.

The global chordal form

    phi_{a,lambda}(x) = (lambda / (1 + (4 lambda^2 - 1) |x-a|^2 / 4))^{(n-2)/2}

replaces chartwise evaluation: it is smooth through the antipode, makes the
center derivative analytic, and satisfies

    L_{g0} phi = 4 n (n-1) phi^{(n+2)/(n-2)}

exactly on the round sphere.  Interactions between two bubbles are measured
by the scalar eps_{i,j} built from the chordal kernel; the quadrature oracle
here evaluates the interaction integrals directly so the eps-expansions can
be tested instead of trusted.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveLambda
from .geometry import as_point, chordal_sq, tangent_projection
from .quadrature import reduced_sphere_integral

_LEVEL_ERR = 1  # levels stepped down for the error estimate


@dataclass(frozen=True)
class Bubble:
    """A bubble peaked at ``center`` with concentration ``lam`` > 0."""
    center: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=float))
        if not self.lam > 0.0:
            raise NonpositiveLambda(f"lambda = {self.lam}")


@dataclass(frozen=True)
class BubbleJet:
    """phi and its two derivative fields at one evaluation point.

    phi2 = -lam d_lam phi, phi3 = (1/lam) grad_a phi (an ambient vector
    tangent at the bubble center), following the sign conventions of the
    derivative pairings.
    """
    phi1: float
    phi2: float
    phi3: np.ndarray


# -- profile helpers over q = (chordal^2)/2 = 1 - cos(theta) ---------------
def profile(q, lam, n):
    D = 1.0 + (4.0 * lam * lam - 1.0) * 0.5 * q
    return (lam / D) ** ((n - 2) / 2.0)


def profile_lam_dlam(q, lam, n):
    """lam d_lam phi as a function of q."""
    D = 1.0 + (4.0 * lam * lam - 1.0) * 0.5 * q
    return (n - 2) / 2.0 * profile(q, lam, n) * (1.0 - 4.0 * lam * lam * q / D)


def profile_grad_factor(q, lam, n):
    """g(q) with grad_a phi = g(q) * P_{T_a} x (ambient projection)."""
    D = 1.0 + (4.0 * lam * lam - 1.0) * 0.5 * q
    return ((n - 2) * (4.0 * lam * lam - 1.0) / 4.0
            * lam ** ((n - 2) / 2.0) * D ** (-n / 2.0))


def bubble(model, b, x):
    """Exact value phi_{a,lambda}(x); strictly positive, maximal at x = a."""
    q = 0.5 * chordal_sq(b.center, as_point(x, model.n))
    return float(profile(q, b.lam, model.n))


def bubble_jet(model, b, x):
    """phi with its scale and center derivatives at x.

    The center derivative is analytic in the chordal form; phi3 is returned
    as an ambient vector in T_{a} S^n (contract with a frame as needed).
    """
    x = as_point(x, model.n)
    q = 0.5 * chordal_sq(b.center, x)
    phi1 = float(profile(q, b.lam, model.n))
    phi2 = -float(profile_lam_dlam(q, b.lam, model.n))
    g = float(profile_grad_factor(q, b.lam, model.n))
    phi3 = (g / b.lam) * tangent_projection(b.center, x)
    return BubbleJet(phi1=phi1, phi2=phi2, phi3=phi3)


def conformal_laplacian_on_bubble(model, b, x):
    """L_{g0} phi at x: 4n(n-1) phi^{(n+2)/(n-2)}, exact on the sphere."""
    n = model.n
    return 4.0 * n * (n - 1) * bubble(model, b, x) ** ((n + 2) / (n - 2))


# -- interactions -----------------------------------------------------------
def _interaction_sum(model, bi, bj):
    li, lj = bi.lam, bj.lam
    return lj / li + li / lj + li * lj * chordal_sq(bi.center, bj.center)


def epsilon(model, bi, bj):
    """Mutual interaction eps_{i,j}; symmetric, in (0, 2^{(2-n)/2}]."""
    return float(_interaction_sum(model, bi, bj) ** ((2.0 - model.n) / 2.0))


def epsilon_derivatives(model, bi, bj):
    """Analytic lambda_j and a_j derivatives of eps_{i,j}.

    Returns a dict with 'lambda_j_deriv' = lam_j d_{lam_j} eps and
    'a_j_deriv' = (1/lam_j) grad_{a_j} eps (ambient tangent vector at a_j).
    """
    n = model.n
    li, lj = bi.lam, bj.lam
    k = chordal_sq(bi.center, bj.center)
    S = lj / li + li / lj + li * lj * k
    lam_term = (2.0 - n) / 2.0 * (lj / li - li / lj + li * lj * k) \
        * S ** (-n / 2.0)
    a_term = (n - 2.0) * li * S ** (-n / 2.0) \
        * tangent_projection(bj.center, bi.center)
    return {"lambda_j_deriv": float(lam_term), "a_j_deriv": a_term}


def interaction_leading(model, bi, bj, k, b_const):
    """Leading term b_k d_{k,j} eps_{i,j} of the interaction integral."""
    if k == 1:
        return b_const * epsilon(model, bi, bj)
    der = epsilon_derivatives(model, bi, bj)
    if k == 2:
        return -b_const * der["lambda_j_deriv"]
    return b_const * der["a_j_deriv"]


def _tangent_direction(bi, bj):
    """Unit tangent at a_j pointing toward a_i; None if degenerate."""
    t = tangent_projection(bj.center, bi.center)
    norm = np.linalg.norm(t)
    if norm < 1e-14:
        return None
    return t / norm


def interaction_oracle(model, bi, bj, kind, tau=0.0, level=3):
    """Direct quadrature of one interaction integral of the expansion lemma.

    ``kind`` selects the integral family:
      ("ii", k)        lam_i^th int phi_i^{4/(n-2)-tau} phi_{k,i}^2
      ("iii", k)       lam_i^th int phi_i^{(n+2)/(n-2)-tau} phi_{k,j}
      ("iii_rhs", k)   int phi_i^{1-tau} d_{k,j} phi_j^{(n+2)/(n-2)}
      ("iv_cross",k,l) lam_i^th int phi_i^{4/(n-2)-tau} phi_{k,i} phi_{l,i}
      ("iv_single", k) lam_i^th int phi_i^{(n+2)/(n-2)-tau} phi_{k,i}
      ("v", a, b)      lam_i^th int phi_i^{a-tau} phi_j^b
      ("vi",)          int (phi_i phi_j)^{n/(n-2)}

    For k = 3 slots the component along the in-plane separation direction is
    returned (the only one not forced to vanish by symmetry).  Returns
    (value, error_estimate) with the estimate taken from one level down.
    """
    def run(lv):
        return _interaction_value(model, bi, bj, kind, tau, lv)

    hi = run(level)
    lo = run(max(1, level - _LEVEL_ERR))
    return hi, abs(hi - lo)


def _field_factor(model, b, k, q, direction_value=None):
    n = model.n
    if k == 1:
        return profile(q, b.lam, n)
    if k == 2:
        return -profile_lam_dlam(q, b.lam, n)
    return profile_grad_factor(q, b.lam, n) / b.lam  # times (x.e) outside


def _interaction_value(model, bi, bj, kind, tau, level):
    n = model.n
    theta = (n - 2) / 2.0 * tau
    p0 = (n + 2.0) / (n - 2.0)
    dirs = [bi.center, bj.center]
    feats = [(0, 1.0 / bi.lam), (1, 1.0 / bj.lam)]
    name = kind[0]

    def integ(F, linear=()):
        return reduced_sphere_integral(n, dirs, F, feats, linear, level)

    if name == "ii":
        k = kind[1]
        def F(S, Q):
            base = profile(Q[0], bi.lam, n) ** (4.0 / (n - 2) - tau)
            f = _field_factor(model, bi, k, Q[0])
            return base * f * f
        if k == 3:
            e = _any_tangent(bi.center)
            return bi.lam ** theta * integ(F, (e, e))
        return bi.lam ** theta * integ(F)

    if name == "iii":
        k = kind[1]
        def F(S, Q):
            base = profile(Q[0], bi.lam, n) ** (p0 - tau)
            return base * _field_factor(model, bj, k, Q[1])
        if k == 3:
            e = _tangent_direction(bi, bj)
            if e is None:
                return 0.0
            return bi.lam ** theta * integ(F, (e,))
        return bi.lam ** theta * integ(F)

    if name == "iii_rhs":
        k = kind[1]
        def F(S, Q):
            base = profile(Q[0], bi.lam, n) ** (1.0 - tau)
            core = profile(Q[1], bj.lam, n) ** (p0 - 1.0)
            return base * p0 * core * _field_factor(model, bj, k, Q[1])
        if k == 3:
            e = _tangent_direction(bi, bj)
            if e is None:
                return 0.0
            return bi.lam ** theta * integ(F, (e,))
        return bi.lam ** theta * integ(F)

    if name == "iv_cross":
        k, l = kind[1], kind[2]
        def F(S, Q):
            base = profile(Q[0], bi.lam, n) ** (4.0 / (n - 2) - tau)
            return (base * _field_factor(model, bi, k, Q[0])
                    * _field_factor(model, bi, l, Q[0]))
        vecs = []
        if k == 3:
            vecs.append(_any_tangent(bi.center))
        if l == 3:
            vecs.append(_any_tangent(bi.center))
        return bi.lam ** theta * integ(F, tuple(vecs))

    if name == "iv_single":
        k = kind[1]
        def F(S, Q):
            base = profile(Q[0], bi.lam, n) ** (p0 - tau)
            return base * _field_factor(model, bi, k, Q[0])
        if k == 3:
            e = _any_tangent(bi.center)
            return bi.lam ** theta * integ(F, (e,))
        return bi.lam ** theta * integ(F)

    if name == "v":
        a_exp, b_exp = kind[1], kind[2]
        def F(S, Q):
            return (profile(Q[0], bi.lam, n) ** (a_exp - tau)
                    * profile(Q[1], bj.lam, n) ** b_exp)
        return bi.lam ** theta * integ(F)

    if name == "vi":
        def F(S, Q):
            return (profile(Q[0], bi.lam, n)
                    * profile(Q[1], bj.lam, n)) ** (n / (n - 2.0))
        return integ(F)

    raise ValueError(f"unknown interaction kind {kind!r}")


def _any_tangent(a):
    from .geometry import householder_frame
    return householder_frame(a).basis[0]
