"""Prescribed curvature fields with exact intrinsic jets.

A field is the restriction to S^n of a polynomial on R^{n+1}, which keeps
every derivative the downstream expansions need (including the third-order
grad-of-Laplacian) available in closed form.  The intrinsic Laplacian of a
restricted polynomial P is itself the restriction of the polynomial

    Q = Delta_amb P - x.Hess(P).x - n x.grad(P),

obtained from the radial decomposition of the Euclidean Laplacian on the unit
sphere, so third derivatives reduce to first derivatives of Q.
"""
import itertools
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import IncompleteSearch, NotMorse
from .geometry import (TangentFrame, batched_frames, householder_frame,
                       normalize, tangent_projection)

FAMILIES = ("affine", "quadratic", "polynomial")


def _halton_sphere(count, dim, skip=20):
    """Deterministic quasi-uniform points on S^{dim-1} (Halton + inverse CDF)."""
    from scipy.stats import qmc
    h = qmc.Halton(d=dim, scramble=False)
    h.fast_forward(skip)
    u = h.random(count)
    g = np.sqrt(2.0) * special_erfinv(2.0 * u - 1.0)
    g[~np.isfinite(g)] = 0.0
    norms = np.linalg.norm(g, axis=1)
    norms[norms == 0.0] = 1.0
    return g / norms[:, None]


def special_erfinv(x):
    from scipy.special import erfinv
    return erfinv(np.clip(x, -1 + 1e-12, 1 - 1e-12))


class CurvatureField:
    """Positive function K on S^n given by an ambient polynomial.

    Families:
      affine      K(x) = c0 + v . x          coeffs = [c0, v_1, ..., v_{n+1}]
      quadratic   K(x) = c0 + sum d_i x_i^2  coeffs = [c0, d_1, ..., d_{n+1}]
      polynomial  arbitrary monomial list    coeffs = [(c, exponent-tuple), ...]

    Positivity on the sphere is verified exactly for the first two families
    and on a dense quasi-uniform sample for the third.
    """

    def __init__(self, family, coeffs, n):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        self.family = family
        self.n = int(n)
        dim = self.n + 1
        if family == "affine":
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.shape != (dim + 1,):
                raise ValueError("affine field needs 1 + (n+1) coefficients")
            self.c0 = float(coeffs[0])
            self.vec = coeffs[1:].copy()
            self.monomials = [(self.c0, (0,) * dim)] + [
                (self.vec[i], tuple(int(j == i) for j in range(dim)))
                for i in range(dim) if self.vec[i] != 0.0]
        elif family == "quadratic":
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.shape != (dim + 1,):
                raise ValueError("quadratic field needs 1 + (n+1) coefficients")
            self.c0 = float(coeffs[0])
            self.diag = coeffs[1:].copy()
            self.monomials = [(self.c0, (0,) * dim)] + [
                (self.diag[i], tuple(2 * int(j == i) for j in range(dim)))
                for i in range(dim) if self.diag[i] != 0.0]
        else:
            self.monomials = [(float(c), tuple(int(e) for e in exps))
                              for c, exps in coeffs]
            for _, exps in self.monomials:
                if len(exps) != dim:
                    raise ValueError("monomial exponent tuple has wrong length")
        self._check_positive()

    # -- evaluation ---------------------------------------------------------
    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c, exps in self.monomials:
            term = np.full(x.shape[:-1], c)
            for i, e in enumerate(exps):
                if e:
                    term = term * x[..., i] ** e
            out = out + term
        return out if out.shape else float(out)

    def ambient_gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        for c, exps in self.monomials:
            for i, e in enumerate(exps):
                if e:
                    term = np.full(x.shape[:-1], c * e)
                    for j, ej in enumerate(exps):
                        pw = ej - (1 if j == i else 0)
                        if pw:
                            term = term * x[..., j] ** pw
                    g[..., i] += term
        return g

    def ambient_hessian(self, x):
        x = np.asarray(x, dtype=float)
        dim = self.n + 1
        H = np.zeros((dim, dim))
        for c, exps in self.monomials:
            for i in range(dim):
                for j in range(i, dim):
                    fac = exps[i] * exps[j] if i != j else exps[i] * (exps[i] - 1)
                    if fac == 0:
                        continue
                    term = c * fac
                    for m, em in enumerate(exps):
                        pw = em - (1 if m == i else 0) - (1 if m == j else 0)
                        if pw:
                            term = term * x[m] ** pw
                    H[i, j] += term
                    if i != j:
                        H[j, i] += term
        return H

    def laplace_polynomial(self):
        """Ambient polynomial restricting to Delta_{S^n} K."""
        terms = {}

        def add(c, exps):
            if c != 0.0:
                terms[exps] = terms.get(exps, 0.0) + c

        for c, exps in self.monomials:
            deg = sum(exps)
            # Delta_amb of the monomial
            for i, e in enumerate(exps):
                if e >= 2:
                    new = list(exps)
                    new[i] -= 2
                    add(c * e * (e - 1), tuple(new))
            # - d^2/dr^2 - n d/dr parts: -deg(deg-1) - n deg times the monomial
            add(-c * deg * (deg - 1 + self.n), exps)
        mono = [(c, e) for e, c in sorted(terms.items())]
        return _RawPolynomial(mono, self.n)

    def jet(self, x, frame=None):
        return k_jet(self, x, frame)

    # -- bookkeeping --------------------------------------------------------
    def _check_positive(self):
        if self.family == "affine":
            kmin = self.c0 - np.linalg.norm(self.vec)
        elif self.family == "quadratic":
            kmin = self.c0 + self.diag.min()
        else:
            sample = _halton_sphere(4096, self.n + 1)
            kmin = float(np.min(self.value(sample)))
        if kmin <= 0.0:
            raise ValueError(f"curvature field not positive on S^n (min~{kmin:.3g})")

    def to_json(self):
        if self.family == "affine":
            return {"family": "affine", "coeffs": [self.c0, *self.vec.tolist()]}
        if self.family == "quadratic":
            return {"family": "quadratic", "coeffs": [self.c0, *self.diag.tolist()]}
        return {"family": "polynomial",
                "coeffs": [[c, list(e)] for c, e in self.monomials]}

    @classmethod
    def from_json(cls, data, n=None):
        fam = data["family"]
        coeffs = data["coeffs"]
        if fam in ("affine", "quadratic"):
            if n is None:
                n = len(coeffs) - 2
            return cls(fam, coeffs, n)
        if n is None:
            n = len(coeffs[0][1]) - 1
        return cls("polynomial", [(c, tuple(e)) for c, e in coeffs], n)

    @classmethod
    def constant(cls, value, n):
        return cls("affine", [value] + [0.0] * (n + 1), n)


class _RawPolynomial(CurvatureField):
    """Polynomial carrier without the positivity requirement."""

    def __init__(self, monomials, n):
        self.family = "polynomial"
        self.n = int(n)
        self.monomials = [(float(c), tuple(e)) for c, e in monomials]


@dataclass(frozen=True)
class KJet:
    """Intrinsic derivatives of K at a point, in the deterministic frame."""
    value: float
    grad: np.ndarray          # ambient representation, tangent to the sphere
    hess: np.ndarray          # (n, n) symmetric, frame coordinates
    lap: float
    grad_lap: np.ndarray      # ambient representation, tangent
    frame: TangentFrame


def k_jet(field, x, frame=None):
    """Exact (value, grad, Hess, Lap, grad Lap) of K restricted to S^n.

    The Hessian uses the sphere's second fundamental form II(u,v) = -(u.v) x:
    Hess_S K = P Hess_amb K P - (x . grad_amb K) g.
    """
    x = np.asarray(x, dtype=float)
    if frame is None:
        frame = householder_frame(x)
    g_amb = field.ambient_gradient(x)
    grad = tangent_projection(x, g_amb)
    H_amb = field.ambient_hessian(x)
    B = frame.basis
    hess = B @ H_amb @ B.T - np.dot(x, g_amb) * np.eye(field.n)
    lap_poly = field.laplace_polynomial()
    lap = lap_poly.value(x)
    grad_lap = tangent_projection(x, lap_poly.ambient_gradient(x))
    return KJet(value=float(field.value(x)), grad=grad, hess=0.5 * (hess + hess.T),
                lap=float(lap), grad_lap=grad_lap, frame=frame)


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    morse_index: int
    lap: float
    is_blowup_candidate: bool
    value: float
    least_hess_eig: float


def find_critical_points(field, grad_tol=1e-10, hess_tol=1e-8, seeds=None,
                         max_iter=60):
    """All critical points of K on S^n by multi-start projected Newton.

    Seeds are 4^n quasi-uniform points unless supplied.  Each converged point
    is annotated with its Morse index and Laplacian sign; a singular tangent
    Hessian raises NotMorse, and a failed Morse-count parity check emits an
    IncompleteSearch warning.  Points are returned in lexicographic order of
    their coordinates.
    """
    n = field.n
    if seeds is None:
        seeds = _halton_sphere(4 ** n, n + 1)
    pts = np.asarray(seeds, dtype=float)

    for _ in range(max_iter):
        frames = batched_frames(pts)            # (m, n, n+1)
        g_amb = field.ambient_gradient(pts)     # (m, n+1)
        radial = np.einsum("mi,mi->m", pts, g_amb)
        g_tan = g_amb - radial[:, None] * pts
        g_loc = np.einsum("mki,mi->mk", frames, g_tan)
        H = np.stack([field.ambient_hessian(p) for p in pts])
        H_loc = np.einsum("mki,mij,mlj->mkl", frames, H, frames)
        H_loc -= radial[:, None, None] * np.eye(n)[None]
        try:
            step = np.linalg.solve(H_loc, -g_loc)
        except np.linalg.LinAlgError:
            jitter = 1e-12 * np.eye(n)[None]
            step = np.linalg.solve(H_loc + jitter, -g_loc)
        nrm = np.linalg.norm(step, axis=1, keepdims=True)
        step = step * np.minimum(1.0, 0.5 / np.maximum(nrm, 1e-300))
        pts = pts + np.einsum("mk,mki->mi", step, frames)
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)

    # keep converged, dedupe
    g_amb = field.ambient_gradient(pts)
    g_tan = g_amb - np.einsum("mi,mi->m", pts, g_amb)[:, None] * pts
    ok = np.linalg.norm(g_tan, axis=1) < grad_tol
    found = []
    for p in pts[ok]:
        if not any(np.linalg.norm(p - q) < 1e-6 for q in found):
            found.append(p)

    crits = []
    for p in sorted(found, key=lambda q: tuple(np.round(q, 9))):
        jet = k_jet(field, p)
        eigs = np.linalg.eigvalsh(jet.hess)
        least = float(np.min(np.abs(eigs)))
        if least < hess_tol:
            raise NotMorse(
                f"critical point {np.round(p, 6)} has |least Hessian eig| "
                f"{least:.2e} < {hess_tol:g}")
        crits.append(CriticalPoint(
            location=p, morse_index=int(np.sum(eigs < 0.0)), lap=jet.lap,
            is_blowup_candidate=bool(jet.lap < 0.0), value=jet.value,
            least_hess_eig=least))

    if not crits:
        raise NotMorse("no nondegenerate critical points found "
                       "(constant or degenerate field)")
    # Morse parity on S^n: sum of (-1)^index equals Euler characteristic
    chi = 1 + (-1) ** n
    if sum((-1) ** c.morse_index for c in crits) != chi:
        warnings.warn("Morse-count parity check failed; the critical point "
                      "inventory may be incomplete", IncompleteSearch)
    return crits


@dataclass
class NondegeneracyEntry:
    points: tuple
    least_eig: float
    eigvec_positive: bool
    ok: bool


@dataclass
class NondegeneracyReport:
    n: int
    entries: list = dc_field(default_factory=list)
    ok: bool = True

    def add(self, entry):
        self.entries.append(entry)
        self.ok = self.ok and entry.ok


def check_nondegeneracy(field, q, crits=None, tol=1e-10):
    """Verify the blow-up nondegeneracy condition for the field.

    n >= 5: Delta K must be nonzero at every critical point.  n = 4: each
    interaction matrix over subsets (size <= q) of candidate points must have
    a nonvanishing least eigenvalue; the report also records whether that
    eigenvalue is simple with a one-signed eigenvector.
    """
    n = field.n
    if crits is None:
        crits = find_critical_points(field)
    report = NondegeneracyReport(n=n)
    if n >= 5:
        for c in crits:
            ok = abs(c.lap) > tol
            report.add(NondegeneracyEntry(
                points=(tuple(np.round(c.location, 9)),), least_eig=c.lap,
                eigvec_positive=True, ok=ok))
        return report

    # n == 4: build every interaction matrix over blow-up candidates
    from .solver import interaction_matrix
    cands = [c for c in crits if c.is_blowup_candidate]
    for size in range(1, min(q, len(cands)) + 1):
        for subset in itertools.combinations(cands, size):
            mat = interaction_matrix(field, [c.location for c in subset])
            positive = bool(np.all(mat.eigvec > 0) or np.all(mat.eigvec < 0))
            report.add(NondegeneracyEntry(
                points=tuple(tuple(np.round(c.location, 9)) for c in subset),
                least_eig=mat.least_eig, eigvec_positive=positive,
                ok=abs(mat.least_eig) > tol))
    return report
