"""Optimal-choice projection onto the bubble manifold.

Inputs are analytic ensembles (bubbles plus ambient coordinate modes plus a
constant), so every energy pairing <f, L g> is quadrature-exact: the
conformal Laplacian acts in closed form on each component and the integrals
reduce to the symmetric quadrature.  The projector minimizes the energy
distance with Gauss-Newton/Levenberg over (alpha, ln lambda, chart center)
and certifies the first-order orthogonality of the remainder.
"""
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .bubbles import (Bubble, profile, profile_grad_factor, profile_lam_dlam)
from .errors import IllConditioned, LocalMinWarning
from .expansion import ConfigEntry, Configuration
from .geometry import Chart, householder_frame
from .quadrature import reduced_sphere_integral


@dataclass(frozen=True)
class Component:
    kind: str                # bubble | ldl | graddir | coord | const
    coef: float
    bubble: Bubble = None
    vector: np.ndarray = None   # direction for graddir / coordinate axis
    l_applied: bool = False


@dataclass
class AnalyticEnsemble:
    """A function with closed-form L-action: bubbles + coordinate modes."""
    n: int
    bubbles: list = dc_field(default_factory=list)   # (alpha, Bubble)
    coords: list = dc_field(default_factory=list)    # (coef, axis index)
    const: float = 0.0

    def components(self):
        comps = [Component("bubble", a, bubble=b) for a, b in self.bubbles]
        for c, k in self.coords:
            e = np.zeros(self.n + 1)
            e[k] = 1.0
            comps.append(Component("coord", c, vector=e))
        if self.const:
            comps.append(Component("const", self.const))
        return comps

    def to_json(self):
        return {"n": self.n, "const": self.const,
                "bubbles": [{"alpha": a, "center": b.center.tolist(),
                             "lambda": b.lam} for a, b in self.bubbles],
                "coords": [{"coef": c, "axis": k} for c, k in self.coords]}

    @classmethod
    def from_json(cls, data):
        n = int(data["n"])
        bubbles = [(float(b["alpha"]),
                    Bubble(np.asarray(b["center"], float), float(b["lambda"])))
                   for b in data.get("bubbles", [])]
        coords = [(float(c["coef"]), int(c["axis"]))
                  for c in data.get("coords", [])]
        return cls(n=n, bubbles=bubbles, coords=coords,
                   const=float(data.get("const", 0.0)))


def _factor(model, comp):
    """(profile callable over q, linear vector or None) for a component.

    With l_applied the closed-form conformal Laplacian is included:
    L phi = 4n(n-1) phi^{p0}, L commutes with the parameter derivatives, and
    L x_k = (n c_n + n(n-1)) x_k on coordinate modes.
    """
    n = model.n
    p0 = (n + 2.0) / (n - 2.0)
    four = 4.0 * n * (n - 1)
    if comp.kind == "const":
        c = comp.coef * (model.scalar_curvature if comp.l_applied else 1.0)
        return None, None, c
    if comp.kind == "coord":
        c = comp.coef
        if comp.l_applied:
            c *= n * model.c_n + model.scalar_curvature
        return None, comp.vector, c
    b = comp.bubble
    if comp.kind == "bubble":
        if comp.l_applied:
            return (lambda q: four * profile(q, b.lam, n) ** p0, None,
                    comp.coef)
        return (lambda q: profile(q, b.lam, n), None, comp.coef)
    if comp.kind == "ldl":
        if comp.l_applied:
            return (lambda q: four * p0 * profile(q, b.lam, n) ** (p0 - 1.0)
                    * profile_lam_dlam(q, b.lam, n), None, comp.coef)
        return (lambda q: profile_lam_dlam(q, b.lam, n), None, comp.coef)
    if comp.kind == "graddir":
        if comp.l_applied:
            return (lambda q: four * p0 * profile(q, b.lam, n) ** (p0 - 1.0)
                    * profile_grad_factor(q, b.lam, n), comp.vector, comp.coef)
        return (lambda q: profile_grad_factor(q, b.lam, n), comp.vector,
                comp.coef)
    raise ValueError(comp.kind)


def pair(model, f, g, level=2):
    """Energy pairing <f, L g> for two analytic components."""
    g = Component(g.kind, g.coef, g.bubble, g.vector, l_applied=True)
    pf, vf, cf = _factor(model, f)
    pg, vg, cg = _factor(model, g)
    dirs, feats, profs = [], [], []
    for comp, prof in ((f, pf), (g, pg)):
        if prof is not None:
            idx = len(dirs)
            dirs.append(comp.bubble.center)
            feats.append((idx, 1.0 / comp.bubble.lam))
            profs.append((idx, prof))

    def F(S, Q):
        out = 1.0
        for idx, prof in profs:
            out = out * prof(Q[idx])
        return out

    linear = tuple(v for v in (vf, vg) if v is not None)
    return cf * cg * reduced_sphere_integral(model.n, dirs, F, feats, linear,
                                             level)


def _model_components(config):
    return [Component("bubble", e.alpha, bubble=e.bubble)
            for e in config.entries]


def _tangent_fields(config, charts):
    """Parameter-derivative components of the bubble sum.

    Order per entry: d/d alpha, d/d ln lambda, then the chart directions.
    Chart motion of the center enters through the ambient velocity of the
    chart inverse, contracted with the analytic center gradient.
    """
    fields = []
    for e, chart in zip(config.entries, charts):
        b = e.bubble
        fields.append(Component("bubble", 1.0, bubble=b))
        fields.append(Component("ldl", e.alpha, bubble=b))
        y = chart.to_plane(b.center)
        t = 0.25 * float(np.dot(y, y))
        for s in range(len(y)):
            vel = (chart.frame.basis[s]
                   - 0.5 * y[s] * (chart.base + b.center)) / (1.0 + t)
            fields.append(Component("graddir", e.alpha, bubble=b, vector=vel))
    return fields


@dataclass
class DecompositionResult:
    config: Configuration
    v_norm_sq: float
    ortho_residuals: dict
    status: str
    restart_spread: float = 0.0
    iterations: int = 0

    def to_json(self):
        return {"config": self.config.to_json(), "v_norm_sq": self.v_norm_sq,
                "status": self.status, "restart_spread": self.restart_spread,
                "ortho_residuals": {str(k): v
                                    for k, v in self.ortho_residuals.items()}}


def _pack(config, charts):
    xs = []
    for e, chart in zip(config.entries, charts):
        xs.append(e.alpha)
        xs.append(np.log(e.bubble.lam))
        xs.extend(chart.to_plane(e.bubble.center))
    return np.array(xs)


def _unpack(x, charts, tau=0.0):
    q = len(charts)
    per = len(x) // q
    entries = []
    for j in range(q):
        blk = x[j * per:(j + 1) * per]
        center = charts[j].to_sphere(blk[2:])
        center = center / np.linalg.norm(center)
        entries.append(ConfigEntry(float(max(blk[0], 1e-12)),
                                   Bubble(center, float(np.exp(blk[1])))))
    return Configuration(tau, tuple(entries))


def _gn_minimize(model, u_comps, config0, level, gtol=1e-11, max_iter=40):
    charts = [Chart(e.bubble.center) for e in config0.entries]
    x = _pack(config0, charts)
    uu = sum(pair(model, f, g, level) for f in u_comps for g in u_comps)

    def objective_terms(config):
        m_comps = _model_components(config)
        um = sum(pair(model, f, g, level) for f in u_comps for g in m_comps)
        mm = sum(pair(model, f, g, level) for f in m_comps for g in m_comps)
        return uu - 2.0 * um + mm

    config = _unpack(x, charts)
    Q = objective_terms(config)
    mu = 1e-10
    it = 0
    for it in range(1, max_iter + 1):
        m_comps = _model_components(config)
        fields = _tangent_fields(config, charts)
        P = len(fields)
        b = np.array([
            sum(pair(model, f, df, level) for f in u_comps)
            - sum(pair(model, f, df, level) for f in m_comps)
            for df in fields])
        G = np.empty((P, P))
        for a in range(P):
            for c in range(a, P):
                G[a, c] = G[c, a] = pair(model, fields[a], fields[c], level)
        scale = max(np.max(np.abs(np.diag(G))), 1e-300)
        if np.max(np.abs(b)) < gtol * scale:
            return config, Q, "converged", it
        accepted = False
        for _ in range(12):
            try:
                step = np.linalg.solve(G + mu * np.diag(np.diag(G)), b)
            except np.linalg.LinAlgError:
                mu = max(mu * 10.0, 1e-8)
                continue
            x_new = x + step
            try:
                cand = _unpack(x_new, charts)
            except Exception:
                mu = max(mu * 10.0, 1e-8)
                continue
            Q_new = objective_terms(cand)
            if Q_new <= Q + 1e-14 * abs(Q):
                x, config, Q = x_new, cand, Q_new
                mu = max(mu / 4.0, 1e-12)
                accepted = True
                break
            mu = max(mu * 10.0, 1e-10)
        if not accepted:
            return config, Q, "non_convergence", it
    return config, Q, "non_convergence", it


def _ortho_residuals(model, u_comps, config, level):
    charts = [Chart(e.bubble.center) for e in config.entries]
    m_comps = _model_components(config)
    out = {}
    for j, e in enumerate(config.entries):
        b = e.bubble
        frame = householder_frame(b.center)
        slots = {(1, j): Component("bubble", 1.0, bubble=b),
                 (2, j): Component("ldl", -1.0, bubble=b)}
        for s in range(model.n):
            slots[(3, j, s)] = Component("graddir", 1.0 / b.lam, bubble=b,
                                         vector=frame.basis[s])
        for key, fld in slots.items():
            val = (sum(pair(model, f, fld, level) for f in u_comps)
                   - sum(pair(model, f, fld, level) for f in m_comps))
            norm = np.sqrt(max(pair(model, fld, fld, level), 1e-300))
            out[key] = (float(val), float(norm))
    return out


def project_to_bubbles(model, ensemble, q, init, level=2, restarts=3,
                       jitter=0.01, seed=7):
    """Fit q bubbles to the ensemble by energy-distance minimization.

    Runs Gauss-Newton with Levenberg damping from the init and from
    ``restarts`` jittered copies; emits LocalMinWarning when the restarts
    disagree beyond 1e-6 in parameters.  The returned residuals certify the
    remainder's orthogonality to the manifold tangent fields.
    """
    if init.q != q:
        raise ValueError(f"init has {init.q} entries, expected {q}")
    u_comps = ensemble.components()
    config, Q, status, iters = _gn_minimize(model, u_comps, init, level)

    spread = 0.0
    rng = np.random.default_rng(seed)
    base_vec = _flatten(config)
    for _ in range(max(0, restarts - 1)):
        pert = []
        for e in init.entries:
            c = e.bubble.center + jitter * rng.standard_normal(model.n + 1) \
                / e.bubble.lam
            pert.append(ConfigEntry(e.alpha * (1 + jitter * rng.standard_normal()),
                                    Bubble(c / np.linalg.norm(c),
                                           e.bubble.lam * (1 + jitter))))
        alt, _, alt_status, _ = _gn_minimize(
            model, u_comps, Configuration(init.tau, tuple(pert)), level)
        if alt_status == "converged":
            spread = max(spread,
                         float(np.max(np.abs(_flatten(alt) - base_vec))))
    if spread > 1e-6:
        warnings.warn(f"restarted fits disagree by {spread:.2e}",
                      LocalMinWarning)

    residuals = _ortho_residuals(model, u_comps, config, level)
    return DecompositionResult(config=config, v_norm_sq=max(Q, 0.0),
                               ortho_residuals=residuals, status=status,
                               restart_spread=spread, iterations=iters)


def _flatten(config):
    out = []
    for e in config.entries:
        out.append(e.alpha)
        out.append(np.log(e.bubble.lam))
        out.extend(e.bubble.center)
    return np.array(out)


def h_projection(model, ensemble, config, level=2, cond_cap=1e8):
    """Coefficients of the ensemble on span{phi_{k,i}} in the energy product.

    Solves the Gram system of the manifold tangent fields at the given
    configuration; raises IllConditioned when the Gram matrix condition
    number exceeds the cap (near-coincident bubbles).  Returns the
    coefficient dict, the energy norm^2 of the complement component and the
    max normalized residual of the complement against the span.
    """
    u_comps = ensemble.components()
    fields = []
    keys = []
    for j, e in enumerate(config.entries):
        b = e.bubble
        frame = householder_frame(b.center)
        fields.append(Component("bubble", 1.0, bubble=b))
        keys.append((1, j))
        fields.append(Component("ldl", -1.0, bubble=b))
        keys.append((2, j))
        for s in range(model.n):
            fields.append(Component("graddir", 1.0 / b.lam, bubble=b,
                                    vector=frame.basis[s]))
            keys.append((3, j, s))
    P = len(fields)
    G = np.empty((P, P))
    for a in range(P):
        for c in range(a, P):
            G[a, c] = G[c, a] = pair(model, fields[a], fields[c], level)
    cond = float(np.linalg.cond(G))
    if cond > cond_cap:
        raise IllConditioned(f"Gram condition number {cond:.3e} > {cond_cap:g}")
    rhs = np.array([sum(pair(model, f, fld, level) for f in u_comps)
                    for fld in fields])
    coeffs = np.linalg.solve(G, rhs)
    uu = sum(pair(model, f, g, level) for f in u_comps for g in u_comps)
    complement_sq = float(uu - rhs @ coeffs)
    resid = rhs - G @ coeffs
    norms = np.sqrt(np.maximum(np.diag(G), 1e-300))
    max_resid = float(np.max(np.abs(resid) / norms))
    return {"coefficients": dict(zip(keys, coeffs)),
            "complement_norm_sq": complement_sq,
            "max_residual": max_resid,
            "condition_number": cond}
