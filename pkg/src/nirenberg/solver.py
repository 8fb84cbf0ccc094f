"""Predicted blow-up parameters and Newton refinement to expansion zeros.

``predict`` turns a set of admissible critical points into the asymptotic
parameter laws (scales sigma/sqrt(tau), center shifts cancelling the cubic
gradient term, amplitudes through the global normalization constant), and
``newton_refine`` drives the closed-form reduced gradient to an actual zero
with a finite-difference Jacobian.  The n = 4 machinery (interaction matrix,
convex sigma system) lives here too.
"""
from dataclasses import dataclass, field as dc_field

import numpy as np

from .bubbles import Bubble, epsilon
from .constants import constant
from .curvature import CriticalPoint, k_jet
from .errors import (CoincidentPoints, DimensionMismatch, NoSolution,
                     NonConvergence, NotBlowupCandidate)
from .expansion import (ConfigEntry, Configuration, aggregates, center_jets,
                        k_hat, normalize_to_unit_k, reduced_gradient)
from .geometry import Chart, chordal_sq, householder_frame, surface_measure


def _as_locations(points):
    out = []
    for p in points:
        if isinstance(p, CriticalPoint):
            out.append(np.asarray(p.location, dtype=float))
        else:
            out.append(np.asarray(p, dtype=float))
    return out


@dataclass(frozen=True)
class InteractionMatrix:
    """The n = 4 blow-up interaction matrix over a set of critical points.

    Diagonal -tilde_c2 DK/K^2 (the mass slot is zero on the sphere),
    off-diagonal -tilde_c4 / (chordal^2 sqrt(K_i K_j)), which realizes the
    Green-function coupling through the exact chordal kernel.
    """
    points: tuple
    matrix: np.ndarray
    least_eig: float
    eigvec: np.ndarray

    @property
    def positive_definite(self):
        return self.least_eig > 0.0


def interaction_matrix(field, points, model=None):
    n = field.n
    if n != 4:
        raise DimensionMismatch(f"interaction matrix is defined for n=4, "
                                f"got n={n}")
    locs = _as_locations(points)
    k = len(locs)
    tc2 = constant("tilde_c2", 4)
    tc4 = constant("tilde_c4", 4)
    M = np.zeros((k, k))
    jets = [k_jet(field, x) for x in locs]
    for i in range(k):
        M[i, i] = -tc2 * jets[i].lap / jets[i].value ** 2
        for j in range(i + 1, k):
            ksq = chordal_sq(locs[i], locs[j])
            if ksq < 1e-24:
                raise CoincidentPoints("interaction matrix needs pairwise "
                                       "distinct points")
            M[i, j] = M[j, i] = -tc4 / (
                ksq * np.sqrt(jets[i].value * jets[j].value))
    eigval, eigvec = np.linalg.eigh(M)
    v = eigvec[:, 0]
    nz = np.flatnonzero(np.abs(v) > 1e-14)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return InteractionMatrix(points=tuple(map(tuple, locs)), matrix=M,
                             least_eig=float(eigval[0]), eigvec=v)


def sigma_solve(field, points, matrix=None, y0=None, tol=1e-13,
                max_iter=100):
    """Unique positive solution of the n = 4 scale system.

    Solves tilde_c1 sigma_j / K_j = [M (1/sigma)]_j by minimizing the
    strictly convex G(y) = y.M y - 2 tilde_c1 sum ln(y_i)/K_i over y = 1/sigma
    > 0; requires M positive definite (otherwise no solution exists and
    NoSolution is raised).  The returned sigma satisfies the stationarity
    system to max-norm residual below 1e-12.
    """
    locs = _as_locations(points)
    M = matrix.matrix if matrix is not None else \
        interaction_matrix(field, locs).matrix
    least = float(np.linalg.eigvalsh(M)[0])
    if least <= 0.0:
        raise NoSolution(f"interaction matrix not positive definite "
                         f"(least eigenvalue {least:.3e})")
    tc1 = constant("tilde_c1", 4)
    K = np.array([field.value(x) for x in locs])
    y = np.asarray(y0, dtype=float) if y0 is not None else \
        np.sqrt(tc1 / (K * np.diag(M)))
    for _ in range(max_iter):
        grad = 2.0 * M @ y - 2.0 * tc1 / (K * y)
        if np.max(np.abs(grad)) < tol * max(1.0, np.max(np.abs(M @ y))):
            break
        hess = 2.0 * M + np.diag(2.0 * tc1 / (K * y * y))
        step = np.linalg.solve(hess, -grad)
        t = 1.0
        G0 = y @ M @ y - 2.0 * tc1 * np.sum(np.log(y) / K)
        for _ in range(60):
            cand = y + t * step
            if np.all(cand > 0):
                G1 = cand @ M @ cand - 2.0 * tc1 * np.sum(np.log(cand) / K)
                if G1 < G0 + 1e-4 * t * (grad @ step):
                    break
            t *= 0.5
        y = y + t * step
    sigma = 1.0 / y
    resid = np.max(np.abs(tc1 * sigma / K - M @ (1.0 / sigma)))
    if resid > 1e-12 * max(1.0, float(np.max(np.abs(M)))):
        raise NonConvergence(f"sigma system residual {resid:.3e}")
    return sigma


@dataclass
class PredictionEntry:
    point: np.ndarray
    lambda_pred: float
    a_shift: np.ndarray      # ambient tangent vector at the point
    center: np.ndarray       # exp of the shift
    alpha_pred: float


@dataclass
class CriticalPrediction:
    entries: list
    Theta: float
    tau: float
    sigma: np.ndarray = None

    def to_configuration(self):
        return Configuration(self.tau, tuple(
            ConfigEntry(e.alpha_pred, Bubble(e.center, e.lambda_pred))
            for e in self.entries))

    def to_json(self):
        out = {"tau": self.tau, "Theta": self.Theta, "entries": [
            {"point": e.point.tolist(), "lambda": e.lambda_pred,
             "a_shift": e.a_shift.tolist(), "center": e.center.tolist(),
             "alpha": e.alpha_pred} for e in self.entries]}
        if self.sigma is not None:
            out["sigma"] = list(self.sigma)
        return out


def _exp_map(x, v):
    nv = np.linalg.norm(v)
    if nv < 1e-300:
        return np.asarray(x, dtype=float)
    return np.cos(nv) * np.asarray(x, float) + np.sin(nv) * v / nv


def _green_over_gamma(model, x, y):
    # G_{g0}(x,y) / gamma_n through the chordal kernel
    n = model.n
    gam = model.gamma_n
    return gam ** ((n - 4.0) / 2.0) / chordal_sq(x, y) ** ((n - 2.0) / 2.0)


def predict(model, field, points, tau):
    """Asymptotic blow-up parameters at the given critical points.

    n >= 5 uses the scalar scale law lambda = sqrt((tc2/tc1)(-DK/K)/tau)
    (with the n = 5 cross-point Green correction at its stated order for
    q >= 2); n = 4 routes the scales through the sigma system.  Center
    shifts cancel the cubic term of the center-gradient bound; amplitudes
    are balanced through Theta fixed by the unit-k_tau normalization.
    """
    if tau <= 0.0:
        raise ValueError("predict needs tau > 0")
    n = model.n
    locs = _as_locations(points)
    jets = [k_jet(field, x) for x in locs]
    sigma = None
    if n == 4:
        for x, jet in zip(locs, jets):
            if jet.lap >= 0.0:
                raise NotBlowupCandidate(
                    f"Delta K = {jet.lap:.4g} >= 0 at {np.round(x, 4)}")
        mat = interaction_matrix(field, locs, model)
        sigma = sigma_solve(field, locs, matrix=mat)
        lams = sigma / np.sqrt(tau)
    else:
        for x, jet in zip(locs, jets):
            if jet.lap >= 0.0:
                raise NotBlowupCandidate(
                    f"Delta K = {jet.lap:.4g} >= 0 at {np.round(x, 4)}")
        ratio = constant("tilde_c2", n) / constant("tilde_c1", n)
        lams = np.sqrt(ratio * np.array(
            [-j.lap / j.value for j in jets]) / tau)
        if n == 5 and len(locs) > 1:
            # one Picard pass for the cross-point Green term of the scale law
            r41 = constant("tilde_c4", n) / constant("tilde_c1", n)
            corr = np.zeros(len(locs))
            for j in range(len(locs)):
                for i in range(len(locs)):
                    if i != j:
                        corr[j] += r41 * np.sqrt(
                            jets[j].value / jets[i].value) * _green_over_gamma(
                                model, locs[i], locs[j]) / (
                                    lams[i] * lams[j]) ** 1.5
            lams = np.sqrt(ratio * np.array(
                [-j.lap / j.value for j in jets]) / (tau + corr))

    c_ratio = constant("check_c4", n) / constant("check_c3", n)
    entries = []
    for x, jet, lam in zip(locs, jets, lams):
        frame = jet.frame
        gl_loc = frame.to_coords(jet.grad_lap)
        shift_loc = -c_ratio * np.linalg.solve(jet.hess, gl_loc) / lam ** 2
        a_shift = frame.from_coords(shift_loc)
        center = _exp_map(x, a_shift)
        entries.append(PredictionEntry(point=np.asarray(x, float),
                                       lambda_pred=float(lam),
                                       a_shift=a_shift, center=center,
                                       alpha_pred=1.0))

    theta = (n - 2) / 2.0 * tau
    p = (n + 2.0) / (n - 2.0) - tau
    # per-point amplitude brackets (H = 0 on the sphere)
    E = np.array([j.lap / (j.value * lam ** 2)
                  for j, lam in zip(jets, lams)])
    Kv = np.array([j.value for j in jets])
    mean = float(np.sum(E / Kv) / np.sum(1.0 / Kv))
    if n == 4:
        bracket = 1.0 + (E - mean) / 8.0
    elif n == 5:
        bracket = 1.0 - (E - mean) / 90.0
    else:
        bracket = np.ones(len(locs))

    c0 = constant("bar_c0", n)
    c1 = constant("bar_c1", n)
    c2 = constant("bar_c2", n)
    Ka = np.array([field.value(e.center) for e in entries])
    base = np.array([(lam ** theta / ka) for lam, ka in zip(lams, Ka)])
    norm_sum = float(np.sum(base ** (2.0 / (p - 1.0))
                            * (c0 + c1 * tau + c2 * E)))
    Theta = norm_sum ** (-1.0 / (p + 1.0))
    for e, b, bc in zip(entries, base, bracket):
        e.alpha_pred = float(Theta * (b * bc) ** (1.0 / (p - 1.0)))
    return CriticalPrediction(entries=entries, Theta=float(Theta), tau=tau,
                              sigma=sigma)


# --------------------------------------------------------------------------
# Newton refinement
# --------------------------------------------------------------------------
@dataclass
class RefinementResult:
    config: Configuration
    gradient_norm: float
    residual_norm: float
    status: str              # converged | non_convergence | left_regime
    iterations: int
    history: list = dc_field(default_factory=list)

    @property
    def converged(self):
        return self.status == "converged"


class _Parametrization:
    """Chart-based coordinates for Newton steps around an anchor config."""

    def __init__(self, config0):
        self.tau = config0.tau
        self.q = config0.q
        self.charts = [Chart(e.bubble.center) for e in config0.entries]

    def unpack(self, x):
        q = self.q
        alphas = x[:q]
        loglam = x[q:2 * q]
        entries = []
        for j in range(q):
            y = x[2 * q + j * (len(self.charts[j].base) - 1):
                  2 * q + (j + 1) * (len(self.charts[j].base) - 1)]
            center = self.charts[j].to_sphere(y)
            center = center / np.linalg.norm(center)
            entries.append(ConfigEntry(float(max(alphas[j], 1e-12)),
                                       Bubble(center, float(np.exp(loglam[j])))))
        return Configuration(self.tau, tuple(entries))

    def pack0(self, config0):
        q = self.q
        n1 = len(self.charts[0].base) - 1
        x = np.zeros(2 * q + q * n1)
        for j, e in enumerate(config0.entries):
            x[j] = e.alpha
            x[q + j] = np.log(e.bubble.lam)
        return x


def _regime_violation(model, config, tau):
    for e in config.entries:
        lam = e.bubble.lam
        if not (2.0 < lam < 1e8):
            return f"lambda = {lam:.3g} out of window"
        if not (1e-4 < e.alpha < 1e4):
            return f"alpha = {e.alpha:.3g} out of window"
    for i in range(config.q):
        for j in range(i + 1, config.q):
            e = epsilon(model, config.entries[i].bubble,
                        config.entries[j].bubble)
            if e > 0.35:
                return f"eps_{i}{j} = {e:.3g} too large"
    return None


def newton_refine(model, field, config0, tau=None, grad_tol=1e-10,
                  max_iter=50, fd_step=1e-6):
    """Damped Newton on the reduced gradient with the unit-k constraint.

    The map is (g_alpha_j, g_lambda_j, g_a_j components, k_hat - 1) over
    (alpha_j, ln lambda_j, chart coordinates of a_j); the Jacobian is built
    by central finite differences (the expansion is only first-order
    trustworthy, so hand-coded second derivatives would overstate accuracy).
    Non-convergence returns the best iterate with its residual rather than
    raising.
    """
    if tau is not None and tau != config0.tau:
        config0 = Configuration(tau, config0.entries)
    tau = config0.tau
    par = _Parametrization(config0)
    x = par.pack0(config0)

    def residual(xv):
        config = par.unpack(xv)
        grad = reduced_gradient(model, field, config)
        frames = [householder_frame(e.bubble.center) for e in config.entries]
        comps = grad.flat(frames)
        kc = k_hat(model, field, config) - 1.0
        return np.append(comps, kc), grad.norm(), config

    res, gnorm, config = residual(x)
    best = (config, gnorm, float(np.linalg.norm(res)))
    history = [gnorm]
    status = "non_convergence"
    it = 0
    for it in range(1, max_iter + 1):
        if gnorm < grad_tol:
            status = "converged"
            break
        dim = x.size
        J = np.zeros((res.size, dim))
        for k in range(dim):
            h = fd_step * max(1.0, abs(x[k]))
            xp = x.copy(); xp[k] += h
            xm = x.copy(); xm[k] -= h
            rp, _, _ = residual(xp)
            rm, _, _ = residual(xm)
            J[:, k] = (rp - rm) / (2.0 * h)
        step, *_ = np.linalg.lstsq(J, -res, rcond=None)
        t = 1.0
        base_norm = np.linalg.norm(res)
        for _ in range(15):
            xc = x + t * step
            try:
                rc, gc, cc = residual(xc)
            except (ValueError, FloatingPointError):
                t *= 0.5
                continue
            if np.linalg.norm(rc) < base_norm * (1.0 - 1e-4 * t) or t < 1e-3:
                break
            t *= 0.5
        x = x + t * step
        res, gnorm, config = residual(x)
        history.append(gnorm)
        if np.linalg.norm(res) < best[2]:
            best = (config, gnorm, float(np.linalg.norm(res)))
        bad = _regime_violation(model, config, tau)
        if bad is not None:
            return RefinementResult(config=best[0], gradient_norm=best[1],
                                    residual_norm=best[2],
                                    status="left_regime", iterations=it,
                                    history=history)
    else:
        it = max_iter
    if status == "converged":
        return RefinementResult(config=config, gradient_norm=gnorm,
                                residual_norm=float(np.linalg.norm(res)),
                                status=status, iterations=it, history=history)
    return RefinementResult(config=best[0], gradient_norm=best[1],
                            residual_norm=best[2], status=status,
                            iterations=it, history=history)


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------
@dataclass
class ResidualCertificate:
    lower_bound: float
    upper_bound: float
    gradient_norm: float
    ratio: float
    terms: dict

    def to_json(self):
        return {"lower_bound": self.lower_bound,
                "upper_bound": self.upper_bound,
                "gradient_norm": self.gradient_norm, "ratio": self.ratio}


def residual_certificate(model, field, config):
    """Gradient norm against the theorem's lower/upper bound expressions.

    The lower bound is tau + sum(|grad K|/lam + 1/lam^2 + |1 - balance|)
    + sum eps; the upper adds the lam^{2-n} and eps^{(n+2)/(2n)} weakenings
    (the v-norm slot is zero for pure bubble ensembles).
    """
    n = model.n
    jets = center_jets(field, config)
    agg = aggregates(model, field, config, jets)
    p = config.p(n)
    th = config.theta(n)
    al = config.alphas()
    low = config.tau
    up = config.tau
    balance_terms = []
    for j, (entry, jet) in enumerate(zip(config.entries, jets)):
        lam = entry.bubble.lam
        gk = float(np.linalg.norm(jet.grad))
        bal = abs(1.0 - agg.alpha_sq / agg.alpha_k_tau[p + 1.0]
                  * jet.value / lam ** th * al[j] ** (p - 1.0))
        balance_terms.append(bal)
        low += gk / lam + lam ** -2.0 + bal
        up += gk / lam + lam ** -2.0 + lam ** (2.0 - n) + bal
    eps_sum = 0.0
    eps_up = 0.0
    for i in range(config.q):
        for j in range(config.q):
            if i != j:
                e = epsilon(model, config.entries[i].bubble,
                            config.entries[j].bubble)
                eps_sum += e
                eps_up += e ** ((n + 2.0) / (2.0 * n))
    low += eps_sum
    up += eps_up
    gnorm = reduced_gradient(model, field, config).norm()
    return ResidualCertificate(
        lower_bound=float(low), upper_bound=float(up), gradient_norm=gnorm,
        ratio=gnorm / low if low > 0 else np.inf,
        terms={"balance": balance_terms, "eps_sum": eps_sum})
