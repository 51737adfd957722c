"""Approximating measures of the p-chain and the limit objects built from them.

Measures are stored against the averaged quadrature: gradient-type measures
(mu, M) live on the gradient samples with ``sample_weights``, nu on the nodes
with ``mean_weights``, so a measure with unit density has mass 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densities import DensityF, DensityG, kappa
from .diagnostics import DiagnosticsReport
from .discrete_calculus import DiscreteDomain, GridField, gradient, gradient_array, w11_norm
from .lp_solver import LpSolution, euler_lagrange_residual
from .mollifier import TransversalField, k_epsilon, transversal_field
from .normalize import normalize

LOG_FLOOR = -700.0


def _pow_ratio(log_num, log_den, e):
    """exp(e (log_num - log_den)) with the exponent clamped below at -700."""
    return np.exp(np.maximum(e * (log_num - log_den), LOG_FLOOR))


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    domain: DiscreteDomain
    density: np.ndarray  # (nn,) | (nn, S) scalar, or (..., N, n) matrix-valued
    weights: np.ndarray  # (nn,) or (nn, S): averaged quadrature weights
    label: str = ""

    @property
    def is_matrix(self):
        return self.density.ndim > self.weights.ndim

    def _magnitude(self):
        if self.is_matrix:
            return np.sqrt((self.density ** 2).sum(axis=(-1, -2)))
        return self.density

    @property
    def total_mass(self):
        """Mass, or total variation for matrix densities."""
        return float(np.sum(self.weights * self._magnitude()))

    def integrate(self, values):
        """Pair a scalar array shaped like the weights (or broadcastable) with the measure."""
        if self.is_matrix:
            raise ValueError("integrate expects a scalar measure")
        return float(np.sum(self.weights * self.density * values))

    def node_masses(self):
        """Mass carried by each node, shape (nn,)."""
        m = self.weights * self._magnitude()
        return m.sum(axis=1) if m.ndim == 2 else m

    def node_density(self):
        """Density per node against the averaged node measure."""
        mw = self.domain.mean_weights
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(mw > 0, self.node_masses() / np.where(mw > 0, mw, 1.0), 0.0)

    def scaled(self, c):
        return DiscreteMeasure(self.domain, self.density * c, self.weights, self.label)


def build_measures(sol: LpSolution, F: DensityF, G: DensityG):
    """(mu_p, nu_p, M_p) with densities (f/Lambda)^(p-1), g^(p-1), (f/Lambda)^(p-1) df."""
    u = sol.u_p
    dom = u.domain
    p = sol.p
    Du = gradient_array(dom, u.values)
    f = F.value(Du)
    log_Lam = sol.log_lambda_p / p
    dmu = _pow_ratio(_log(f), log_Lam, p - 1)
    dnu = _pow_ratio(_log(G.value(u.values)), 0.0, p - 1)
    dM = dmu[..., None, None] * F.grad(Du)
    sw, mw = dom.sample_weights, dom.mean_weights
    return (DiscreteMeasure(dom, dmu, sw, f"mu_{p:g}"),
            DiscreteMeasure(dom, dnu, mw, f"nu_{p:g}"),
            DiscreteMeasure(dom, dM, sw, f"M_{p:g}"))


def infinity_renormalised(u: GridField, G: DensityG):
    """u scaled so that max g(u) = 1."""
    return u * normalize(u, np.inf, G).t


def omega(u_p: GridField, u_ref: GridField, G: DensityG):
    """sup |g(u_p) - g(u_ref)|."""
    return float(np.abs(G.value(u_p.values) - G.value(u_ref.values)).max())


def mass_bounds_check(sol, mu, nu, M, F, G, u_ref, Lambda_inf):
    """mu mass <= kappa^(1-1/p), 1/(1+omega) <= nu mass <= 1 and the M variation bound."""
    p = sol.p
    k = kappa(F, G)
    w = omega(sol.u_p, u_ref, G)
    rep = DiagnosticsReport(f"measure masses p={p:g}")
    slack = 1e-12
    rep.upper("mu mass - kappa^(1-1/p)", mu.total_mass - k ** (1 - 1 / p), slack)
    rep.upper("1/(1+omega) - nu mass", 1.0 / (1.0 + w) - nu.total_mass, slack)
    rep.upper("nu mass - 1", nu.total_mass - 1.0, slack)
    # Hoelder gives |M_p| <= kappa^(1-1/p)(C5 J_p^beta + C6); Lambda_inf + 1 bounds J_p
    # only once p is large, so the larger of the two enters
    top = max(Lambda_inf + 1.0, sol.J_p)
    Mb = k ** (1 - 1 / p) * (F.C5 * top ** F.beta + F.C6)
    rep.upper("|M| - kappa^(1-1/p)(C5 max(Lambda+1, J_p)^beta + C6)", M.total_mass - Mb, slack)
    rep.omega = w
    return rep


def concentration_report(solutions, u_ref: GridField, G: DensityG, radius=0.1, p_check=512,
                         nus=None):
    """Sublevel decay of nu_p and concentration of nu at the maximum of g(u_ref)."""
    if len(solutions) < 3:
        raise ValueError("concentration needs at least three exponents")
    dom = u_ref.domain
    if nus is None:
        nus = [DiscreteMeasure(dom, _pow_ratio(_log(G.value(s.u_p.values)), 0.0, s.p - 1),
                               dom.mean_weights) for s in solutions]
    gref = G.value(u_ref.values)
    centre = dom.nodes[int(np.argmax(gref))]
    outside = np.linalg.norm(dom.nodes - centre, axis=1) > radius
    rep = DiagnosticsReport("nu concentration")
    far = []
    for s, nu in zip(solutions, nus):
        w = omega(s.u_p, u_ref, G)
        sub = gref < 1.0 - 2.0 * w
        vol = float(dom.mean_weights[sub].sum())
        lhs = float(nu.node_masses()[sub].sum())
        bound = (1.0 - w) ** (s.p - 1) * vol if w < 1 else vol
        rep.upper(f"p={s.p:g}: nu(g(u_ref) < 1 - 2 omega) - (1-omega)^(p-1)|S|", lhs - bound, 1e-14)
        far.append(float(nu.node_masses()[outside].sum()))
    ps = [s.p for s in solutions]
    at = [f for p, f in zip(ps, far) if p >= p_check]
    if at:
        rep.upper(f"nu mass outside |x - x0| <= {radius} at p={p_check:g}", at[0], 1e-3)
    nu_inf = nus[-1]
    rep.upper("|nu_inf mass - 1|", abs(nu_inf.total_mass - 1.0), 0.02)
    ring = dom.boundary_ring
    rep.upper("nu mass on the boundary ring at the largest p",
              float(nu_inf.node_masses()[ring].sum()), 1e-6)
    rep.far_mass = far
    rep.centre = centre
    return rep


def weak_star_proxy(measures, test_functions):
    """Gaps of the pairings against fixed continuous functions shrink over the last three p."""
    rep = DiagnosticsReport("weak-* pairing gaps")
    for k, psi in enumerate(test_functions):
        vals = [m.integrate(psi if m.weights.ndim == 1 else psi[:, None]) for m in measures[-3:]]
        g1, g2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
        rep.upper(f"psi_{k}: later gap - earlier gap", g2 - g1, 1e-12 * max(1.0, abs(vals[-1])))
    return rep


def continuous_test_functions(domain: DiscreteDomain, count=10):
    """Smooth node functions: 1, coordinates, products and cosines."""
    x = domain.nodes / (domain.diameter / 2.0)
    out = [np.ones(domain.num_nodes)]
    k = 0
    while len(out) < count:
        a = k % domain.n
        out.append([x[:, a], x[:, a] ** 2, np.cos(np.pi * x[:, a] * (1 + k // domain.n)),
                    np.exp(-x[:, a] ** 2)][(k // domain.n) % 4])
        k += 1
    return out[:count]


def energy_identity_check(sol: LpSolution, mu: DiscreteMeasure, F: DensityF, G: DensityG,
                          scale=3.0):
    """int f(Du_p) dmu_p = kappa Lambda_p and the second-moment bound."""
    dom = sol.u_p.domain
    p = sol.p
    k = kappa(F, G)
    Du = gradient_array(dom, sol.u_p.values)
    f = F.value(Du)
    sq = np.einsum("ksai,ksai->ks", Du, Du)
    lhs = mu.integrate(f)
    rep = DiagnosticsReport(f"energy identity p={p:g}")
    rep.upper("|int f dmu - kappa Lambda| / (kappa Lambda)",
              abs(lhs - k * sol.Lambda_p) / (k * sol.Lambda_p), 1e-6)
    bound = (k / F.C4) * (sol.Lambda_p + F.C3 * k ** (-1.0 / p))
    rep.upper("int |Du|^2 dmu - (kappa/C4)(Lambda + C3 kappa^(-1/p))", mu.integrate(sq) - bound,
              1e-12 * bound)
    ms = mu.scaled(scale)
    hom = max(abs(ms.integrate(f) - scale * lhs), abs(ms.integrate(sq) - scale * mu.integrate(sq)))
    rep.upper("homogeneity under mu -> c mu", hom, 1e-12 * scale * max(lhs, 1.0))
    return rep


def differential_identity_check(sol: LpSolution, mu, nu, v: GridField, F: DensityF,
                                G: DensityG, factor=10.0):
    """Expansion of int f(Dv - Du_p) dmu_p through the weak system, and the c_0 inequality.

    The identity is the weak system tested with v - u_p, so its gap is
    compared with ``factor`` times the solver's residual scale
    kappa^(1-1/p) el_residual W11(v - u_p).
    """
    u = sol.u_p
    dom = u.domain
    p = sol.p
    k = kappa(F, G)
    Lam = sol.Lambda_p
    Du = gradient_array(dom, u.values)
    Dv = gradient_array(dom, v.values)
    f_diff = mu.integrate(F.value(Dv - Du))
    f_v = mu.integrate(F.value(Dv))
    f_u = mu.integrate(F.value(Du))
    dg = G.grad(u.values)
    pair = Lam * nu.integrate(np.einsum("ka,ka->k", dg, u.values - v.values))
    gap = abs(f_diff - (f_v - f_u + pair))
    d = v - u
    scale = w11_norm(d)
    # the trace residual is a sup over polynomial fields only; d itself may
    # point outside that span, so its own residual enters the scale too
    el_d = euler_lagrange_residual(u, sol.log_lambda_p, p, F, G, [d])
    el = max(sol.el_residual, el_d, 1e-12)
    tol = factor * k ** (1 - 1 / p) * el * scale + 1e-12 * max(f_v, 1.0)
    rep = DiagnosticsReport(f"differential identity p={p:g}")
    rep.upper("|lhs - rhs|", gap, tol)
    c0 = F.c0
    C0 = Lam * float(np.linalg.norm(dg, axis=1).max()) * nu.total_mass
    lhs16 = c0 * mu.integrate(np.einsum("ksai,ksai->ks", Dv - Du, Dv - Du))
    rhs16 = f_v - k * Lam + C0 * d.norm_inf()
    rep.upper("c0 int |Dv - Du|^2 dmu - (int f(Dv) dmu - kappa Lambda + C0 |u - v|)",
              lhs16 - rhs16, tol)
    rep.terms = dict(f_diff=f_diff, f_v=f_v, f_u=f_u, pairing=pair)
    return rep


# -- Du-star ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DuStarField:
    domain: DiscreteDomain
    values: np.ndarray  # (nn, N, n); zero where undefined
    undefined_mask: np.ndarray  # (nn,) bool, interior nodes only
    eps_schedule: tuple
    spread: np.ndarray  # (nn,) spread of the last three levels

    def agreement(self, u: GridField, tol=None):
        """Fraction of interior nodes where Du-star matches the centred gradient of u."""
        dom = self.domain
        tol = 10.0 * dom.h if tol is None else tol
        Du = gradient(u).node_values
        err = np.sqrt(((self.values - Du) ** 2).sum(axis=(1, 2)))
        inner = dom.interior_mask
        return float(np.mean(err[inner] <= tol))

    def undefined_lebesgue(self):
        return float(self.domain.mean_weights[self.undefined_mask].sum())


def default_eps_schedule(domain: DiscreteDomain):
    """3h, 2.5h, 2h: the smallest resolvable levels."""
    return (3.0 * domain.h, 2.5 * domain.h, 2.0 * domain.h)


def build_du_star(u_ref: GridField, eps_schedule=None, xi: TransversalField = None, tol=None,
                  corrected=True):
    """Pointwise limit of mollified gradients along a decreasing eps schedule.

    With ``corrected`` the sequence is D(K^eps u)[I + eps ell Dxi]^(-T), which
    equals K^eps(Du) and differs from D(K^eps u) by at most eps ell |Dxi| |Du|,
    so both have the same limit; the corrected one has no O(eps) shift bias.
    A node is defined when the last three levels agree within ``tol``.
    """
    dom = u_ref.domain
    xi = xi or transversal_field(dom)
    eps_schedule = tuple(eps_schedule) if eps_schedule is not None else default_eps_schedule(dom)
    if len(eps_schedule) < 3 or any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps schedule must be decreasing with at least three levels")
    tol = 10.0 * dom.h if tol is None else tol
    levels = []
    for e in eps_schedule:
        D = gradient(k_epsilon(u_ref, e, xi)).node_values
        if corrected:
            J = np.eye(dom.n) + e * xi.ell * xi.jacobian(dom.nodes)
            D = np.einsum("kai,kij->kaj", D, np.linalg.inv(np.swapaxes(J, 1, 2)))
        levels.append(D)
    last = np.stack(levels[-3:])
    spread = np.sqrt(((last - last[-1]) ** 2).sum(axis=(2, 3))).max(axis=0)
    undefined = (spread > tol) & dom.interior_mask
    vals = np.where(undefined[:, None, None], 0.0, levels[-1])
    vals = np.where(dom.interior_mask[:, None, None], vals, 0.0)
    return DuStarField(dom, vals, undefined, eps_schedule, spread)


def limit_pde_residual(du_star: DuStarField, mu: DiscreteMeasure, nu: DiscreteMeasure,
                       u_ref: GridField, Lambda, F: DensityF, G: DensityG, test_fields):
    """max over phi of |int df(Du*):Dphi dmu - Lambda int dg(u)·phi dnu| / scale.

    The scale is sup|df(Du*)| mu(total) sup|Dphi|, the largest value the left
    pairing can take.  mu is read per node; Dphi is the centred gradient.
    """
    dom = du_star.domain
    flux = F.grad(du_star.values)
    mu_node = mu.node_masses()
    nu_node = nu.node_masses()
    dg = G.grad(u_ref.values)
    fsup = float(np.sqrt((flux ** 2).sum(axis=(1, 2)))[mu_node > 0].max()) if mu_node.any() else 0.0
    worst = 0.0
    for phi in test_fields:
        Dphi = gradient(phi).node_values
        lhs = float(np.sum(mu_node * np.einsum("kai,kai->k", flux, Dphi)))
        rhs = Lambda * float(np.sum(nu_node * np.einsum("ka,ka->k", dg, phi.values)))
        scale = fsup * mu.total_mass * float(np.sqrt((Dphi ** 2).sum(axis=(1, 2))).max())
        if scale == 0.0:
            continue
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def explicit_cone_pair(domain: DiscreteDomain, N=1):
    """The closed-form cone triple on nodes: (Du*, mu, nu, u, Lambda), unaveraged masses.

    mu has density 1/(n alpha(n) |x|^(n-1)) (1/2 in one dimension), the centre
    node carrying the mass of the equal-volume ball; nu is a unit point mass at
    the centre, u the cone (1 - |x|/R) e and Lambda = 1/R.
    """
    from .oracles import cone_field, cone_profile, unit_ball_volume
    _, R = cone_profile(domain)
    n = domain.n
    x = domain.nodes
    r = np.linalg.norm(x, axis=1)
    inner = domain.interior_mask
    cell = domain.quad_weights
    if n == 1:
        dens = np.full(r.size, 0.5)
    else:
        dens = np.where(r > 0, 1.0 / (n * unit_ball_volume(n) * np.where(r > 0, r, 1.0) ** (n - 1)), 0.0)
    mu_w = np.where(inner, dens * cell, 0.0)
    c = int(np.argmin(r))
    rho = (cell[c] / unit_ball_volume(n)) ** (1.0 / n)
    mu_w[c] = rho if n > 1 else 0.5 * cell[c]
    nu_w = np.zeros(domain.num_nodes)
    nu_w[c] = 1.0
    D = np.zeros((domain.num_nodes, N, n))
    with np.errstate(invalid="ignore", divide="ignore"):
        D[:, 0, :] = np.where((r > 0)[:, None] & inner[:, None], -x / (R * np.where(r > 0, r, 1.0))[:, None], 0.0)
    du = DuStarField(domain, D, np.zeros(domain.num_nodes, bool), (), np.zeros(domain.num_nodes))
    mu = DiscreteMeasure(domain, np.ones(domain.num_nodes), mu_w, "mu_cone")
    nu = DiscreteMeasure(domain, np.ones(domain.num_nodes), nu_w, "nu_cone")
    return du, mu, nu, cone_field(domain, N), 1.0 / R


def mass_identities_check(mu_inf: DiscreteMeasure, du_star: DuStarField, Lambda, kappa_,
                          F: DensityF, delta=0.05):
    """mu mass = kappa, Lambda = (1/kappa) int f(Du*) dmu, concentration and boundary nullset."""
    dom = du_star.domain
    node_mu = mu_inf.node_masses()
    fstar = F.value(du_star.values)
    rep = DiagnosticsReport("limit mass identities")
    mass = mu_inf.total_mass
    rep.upper("|mu mass - kappa| / kappa", abs(mass - kappa_) / kappa_, 0.03)
    energy = float(node_mu @ fstar) / kappa_
    rep.upper("|Lambda - (1/kappa) int f(Du*) dmu| / Lambda", abs(Lambda - energy) / Lambda, 0.03)
    low = fstar < Lambda * (1.0 - delta)
    rep.upper(f"mu mass of f(Du*) < Lambda(1-{delta}) / mu mass", float(node_mu[low].sum()) / mass, 0.02)
    tv = float((node_mu * np.sqrt((du_star.values ** 2).sum(axis=(1, 2))))[dom.boundary_ring].sum())
    rep.upper("|Du* mu| on the boundary ring", tv, 1e-6)
    rep.undefined_mu = float(node_mu[du_star.undefined_mask].sum()) / mass
    return rep
