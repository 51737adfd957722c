"""Boundary-respecting regularisation K^eps with an explicit transversal field.

(K^eps v)(x) = sum_k rho_k v(x + eps*ell*xi(x) - eps*y_k), where y_k is a
lattice in the unit ball, rho_k the discretely normalised bump, and v is read by
multilinear interpolation of the lattice data (zero at every node outside the
domain, so the interpolant is the continuous zero extension).  xi points
outward with |xi| = 1 on the collar {dist < r0}, so the shifted kernel ball of
any node within eps of the boundary misses the support and K^eps v is exactly
zero there.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .diagnostics import DiagnosticsReport
from scipy.spatial import cKDTree

from .discrete_calculus import DiscreteDomain, GridField, gradient, w11_norm

# -- smooth cutoff -------------------------------------------------------------


def _smoothstep(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def _smoothstep_deriv(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    sc = np.where(inside, s, 0.5)
    a = np.exp(-1.0 / sc)
    b = np.exp(-1.0 / (1.0 - sc))
    da = a / sc ** 2
    db = -b / (1.0 - sc) ** 2
    d = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return np.where(inside, d, 0.0)


@lru_cache(maxsize=None)
def _smoothstep_slope_max():
    s = np.linspace(0.0, 1.0, 200001)
    return float(_smoothstep_deriv(s).max())


def collar_cutoff(d, r0):
    """1 on d <= r0, 0 on d >= 2 r0."""
    return _smoothstep((2.0 * r0 - d) / r0)


def collar_cutoff_deriv(d, r0):
    return -_smoothstep_deriv((2.0 * r0 - d) / r0) / r0


# -- transversal field ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransversalField:
    domain: DiscreteDomain
    r0: float
    ell: float
    eps0: float
    Dxi_bound: float

    def value(self, x):
        """xi at points x, shape (m, n)."""
        dom = self.domain
        x = np.atleast_2d(x)
        if dom.kind == "ball":
            R = dom.extents[0]
            r = np.linalg.norm(x, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                xh = np.where(r[:, None] > 0, x / r[:, None], 0.0)
            return collar_cutoff(R - r, self.r0)[:, None] * xh
        half = np.array(dom.extents) / 2.0
        v = np.sign(x) * collar_cutoff(half - np.abs(x), self.r0)
        nv = np.linalg.norm(v, axis=1)
        return v / np.maximum(nv, 1.0)[:, None]

    def jacobian(self, x):
        """D xi at points x, shape (m, n, n)."""
        dom = self.domain
        x = np.atleast_2d(x)
        n = dom.n
        if dom.kind == "ball":
            R = dom.extents[0]
            r = np.linalg.norm(x, axis=1)
            safe = np.where(r > 0, r, 1.0)
            xh = x / safe[:, None]
            P = np.einsum("ki,kj->kij", xh, xh)
            chi = collar_cutoff(R - r, self.r0)
            dchi = collar_cutoff_deriv(R - r, self.r0)
            J = -dchi[:, None, None] * P + (chi / safe)[:, None, None] * (np.eye(n) - P)
            return np.where((r > 0)[:, None, None], J, 0.0)
        half = np.array(dom.extents) / 2.0
        d = half - np.abs(x)
        v = np.sign(x) * collar_cutoff(d, self.r0)
        Dv = np.zeros((len(x), n, n))
        idx = np.arange(n)
        Dv[:, idx, idx] = -collar_cutoff_deriv(d, self.r0)  # d/dx_a of sgn(x_a) chi(h_a - |x_a|)
        nv = np.linalg.norm(v, axis=1)
        big = nv > 1.0
        s = np.where(big, nv, 1.0)
        proj = np.eye(n) / s[:, None, None] - np.einsum("ki,kj->kij", v, v) / (s ** 3)[:, None, None]
        proj = np.where(big[:, None, None], proj, np.eye(n))
        return np.einsum("kij,kjl->kil", proj, Dv)


def transversal_field(domain: DiscreteDomain, ell=None, r0=None, eps0=None):
    """Built-in outward field: r0 = R/4, eps0 = r0/ell, R the inradius.

    The zero-extended interpolant is supported within sqrt(n) h of the domain
    when the boundary is off-lattice (balls); ell = 2 + sqrt(n)/2 then pushes
    the kernel ball of every node within eps of the boundary clear of it for
    all eps >= 2h.  Lattice-aligned boundaries use ell = 2.
    """
    if ell is None:
        ell = 2.0 + 0.5 * np.sqrt(domain.n) if domain.kind == "ball" else 2.0
    R = domain.inradius
    r0 = R / 4.0 if r0 is None else r0
    eps0 = r0 / ell if eps0 is None else eps0
    slope = _smoothstep_slope_max() / r0
    if domain.kind == "ball" and domain.n > 1:
        bound = max(slope, 1.0 / (R - 2.0 * r0))
    else:
        # the normalisation v -> v / max(|v|, 1) is 1-Lipschitz
        bound = slope
    return TransversalField(domain, r0, ell, eps0, bound)


# -- kernel ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MollifierKernel:
    points: np.ndarray  # (K, n) in the unit ball
    weights: np.ndarray  # (K,), sum 1

    @property
    def mass(self):
        return float(self.weights.sum())


def bump_kernel(n, spacing):
    """exp(-1/(1-|y|^2)) sampled at cell centres of a cubic lattice, normalised.

    Cell centres keep the samples off the grid nodes, where the interpolant
    has its kinks.
    """
    k = int(np.ceil(1.0 / spacing))
    ax = spacing * (np.arange(-k, k) + 0.5)
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    y = np.stack([m.ravel() for m in mesh], axis=1)
    r2 = (y ** 2).sum(axis=1)
    keep = r2 < 1.0
    y, r2 = y[keep], r2[keep]
    w = np.exp(-1.0 / (1.0 - r2))
    return MollifierKernel(y, w / w.sum())


def kernel_for(domain: DiscreteDomain, eps, fine=False):
    # physical sub-spacing at most h/2 (h/4 when fine)
    frac = 0.25 if fine else 0.5
    spacing = min(0.125, frac * domain.h / eps)
    return bump_kernel(domain.n, spacing)


# -- K^eps --------------------------------------------------------------------

def _check_eps(domain, eps, xi):
    if eps < 2.0 * domain.h * (1 - 1e-12):
        raise ValueError(f"eps={eps} below 2h: kernel unresolvable")
    if eps > xi.eps0 * (1 + 1e-12):
        raise ValueError(f"eps={eps} above eps0={xi.eps0}")


def mollify_array(domain: DiscreteDomain, V, eps, xi: TransversalField = None, kernel=None,
                  chunk=4096):
    """K^eps applied to any per-node array V of shape (num_nodes, ...)."""
    xi = xi or transversal_field(domain)
    _check_eps(domain, eps, xi)
    kernel = kernel or kernel_for(domain, eps)
    V = np.asarray(V, dtype=float)
    tail = V.shape[1:]
    flat = V.reshape(domain.num_nodes, -1)
    interp = RegularGridInterpolator(domain.axes, flat.reshape(domain.shape + (flat.shape[1],)),
                                     method="linear", bounds_error=False, fill_value=0.0)
    out = np.zeros_like(flat)
    nodes = domain.nodes
    centre = nodes + eps * xi.ell * xi.value(nodes)
    live = np.flatnonzero(domain.interior_mask)
    for s in range(0, live.size, chunk):
        rows = live[s:s + chunk]
        z = centre[rows, None, :] - eps * kernel.points[None, :, :]
        vals = interp(z.reshape(-1, domain.n)).reshape(len(rows), len(kernel.weights), -1)
        out[rows] = np.einsum("rkc,k->rc", vals, kernel.weights)
    return out.reshape((domain.num_nodes,) + tail)


def mollify_gradient(domain: DiscreteDomain, U, eps, xi: TransversalField = None, kernel=None,
                     chunk=4096):
    """K^eps(Dv) with Dv the a.e. gradient of the multilinear interpolant of U (num_nodes, N).

    The interpolant is piecewise multilinear, so a central quotient with a
    step far below h returns its gradient exactly except on cell faces.
    """
    xi = xi or transversal_field(domain)
    _check_eps(domain, eps, xi)
    kernel = kernel or kernel_for(domain, eps)
    U = np.asarray(U, dtype=float)
    Ncomp = U.shape[1]
    n = domain.n
    interp = RegularGridInterpolator(domain.axes, U.reshape(domain.shape + (Ncomp,)),
                                     method="linear", bounds_error=False, fill_value=0.0)
    delta = 1e-6 * domain.h
    out = np.zeros((domain.num_nodes, Ncomp, n))
    centre = domain.nodes + eps * xi.ell * xi.value(domain.nodes)
    live = np.flatnonzero(domain.interior_mask)
    for s in range(0, live.size, chunk):
        rows = live[s:s + chunk]
        z = (centre[rows, None, :] - eps * kernel.points[None, :, :]).reshape(-1, n)
        acc = np.zeros((len(rows), Ncomp, n))
        for a in range(n):
            e = np.zeros(n)
            e[a] = delta
            d = (interp(z + e) - interp(z - e)) / (2.0 * delta)
            acc[:, :, a] = np.einsum("rkc,k->rc", d.reshape(len(rows), -1, Ncomp), kernel.weights)
        out[rows] = acc
    return out


def k_epsilon(v: GridField, eps, xi: TransversalField = None, kernel=None):
    dom = v.domain
    out = mollify_array(dom, v.values, eps, xi, kernel)
    return GridField(dom, np.where(dom.interior_mask[:, None], out, 0.0))


# -- property checks ------------------------------------------------------------

def _node_gradient(v: GridField):
    return gradient(v).node_values  # (num_nodes, N, n), centred quotients


_SIXTH = ((1, 45.0), (2, -9.0), (3, 1.0))


def _sixth_order_gradient(dom: DiscreteDomain, values):
    """Centred sixth-order quotients per axis, shape (num_nodes, N, n).

    Rolled stencils wrap around; callers keep 3h away from the lattice edge.
    """
    W = values.reshape(dom.shape + (-1,))
    out = np.zeros((dom.num_nodes, W.shape[-1], dom.n))
    for a in range(dom.n):
        acc = np.zeros(W.shape)
        for k, c in _SIXTH:
            acc += c * (np.roll(W, -k, axis=a) - np.roll(W, k, axis=a))
        out[:, :, a] = (acc / (60.0 * dom.h)).reshape(dom.num_nodes, -1)
    return out


def gradient_identity_check(v: GridField, eps, xi: TransversalField = None, tol=None):
    """D(K^eps v) against K^eps(Dv)[I + eps ell D xi]^T, and the eps-linear bound.

    K^eps v varies on the scale eps, so at eps = 4h the plain centred quotient
    carries a truncation of order h^2/eps^2; D(K^eps v) is taken with a
    sixth-order quotient instead and the grid-gradient residual is reported
    alongside.  Where the kernel reaches past the boundary, the quotient also
    straddles the slope jump [Dv] of the zero extension, which adds about
    (h/eps)|[Dv]| independently of h.
    """
    dom = v.domain
    xi = xi or transversal_field(dom)
    tol = 3.0 * dom.h if tol is None else tol
    kernel = kernel_for(dom, eps, fine=True)
    Kv = k_epsilon(v, eps, xi, kernel)
    lhs = _sixth_order_gradient(dom, Kv.values)
    grid_lhs = _node_gradient(Kv)
    Dv = _node_gradient(v)
    KDv = mollify_gradient(dom, v.values, eps, xi, kernel)
    J = np.eye(dom.n) + eps * xi.ell * xi.jacobian(dom.nodes)
    rhs = np.einsum("kai,kji->kaj", KDv, J)  # K(Dv) [I + eps ell Dxi]^T
    core = dom.boundary_distance > eps + 3.0 * dom.h
    m = int(core.sum())
    diff = np.linalg.norm((lhs - rhs)[core].reshape(m, -1), axis=1)
    grid_diff = np.linalg.norm((grid_lhs - rhs)[core].reshape(m, -1), axis=1)
    shift = np.linalg.norm((lhs - KDv)[core].reshape(m, -1), axis=1)
    Dv_sup = float(np.linalg.norm(Dv.reshape(dom.num_nodes, -1), axis=1).max())
    bound = eps * xi.ell * xi.Dxi_bound * Dv_sup
    rep = DiagnosticsReport(f"gradient identity eps={eps:.4g}")
    rep.upper("max |D(K v) - K(Dv)[I + eps l Dxi]^T|", diff.max(), tol)
    rep.upper("max |D(K v) - K(Dv)| - eps l |Dxi| |Dv|", shift.max() - bound, tol)
    rep.identity_residual = float(diff.max())
    rep.grid_residual = float(grid_diff.max())
    rep.measured_shift = float(shift.max())
    rep.shift_bound = bound
    return rep


def sup_transfer_check(v: GridField, eps, phi, xi: TransversalField = None, lip=1.0):
    """Phi(K^eps v(x)) <= sup of Phi(v) over the shifted kernel ball, node by node.

    The ess sup over Omega cap B_eps(x + eps ell xi(x)) is read off the
    interior nodes within eps + h of the shifted centre (and Phi(0) for the
    zero extension); ``lip`` is the Lipschitz constant of Phi o v entering the
    interpolation allowance 3h*lip.
    """
    dom = v.domain
    xi = xi or transversal_field(dom)
    Kv = k_epsilon(v, eps, xi)
    src = phi(v.values)
    out = phi(Kv.values)
    base = float(phi(np.zeros_like(v.values[:1]))[0])
    centre = dom.nodes + eps * xi.ell * xi.value(dom.nodes)
    inside = np.flatnonzero(dom.interior_mask)
    nbrs = cKDTree(dom.nodes[inside]).query_ball_point(centre[inside], eps + dom.h)
    gap = np.array([out[k] - max(base, src[inside[nb]].max() if nb else base)
                    for k, nb in zip(inside, nbrs)])
    rep = DiagnosticsReport(f"sup transfer eps={eps:.4g}")
    rep.upper("max Phi(K v) - local sup Phi(v)", float(gap.max()), 3.0 * dom.h * lip)
    rep.global_sup = float(out.max())
    return rep


def gradient_sup_check(v: GridField, eps, phi, dphi_sup, xi: TransversalField = None, lip=1.0):
    """sup Phi(D(K^eps v)) <= ||Phi(Dv)||_inf + eps C*, C* = ell |DPhi| |Dxi| |Dv|.

    ``dphi_sup`` bounds |DPhi| on gradients of size |Dv|(1 + eps ell |Dxi|).
    """
    dom = v.domain
    xi = xi or transversal_field(dom)
    Kv = k_epsilon(v, eps, xi)
    G = gradient(v).values
    Dv_sup = float(np.sqrt((G ** 2).sum(axis=(-1, -2))).max())
    C_star = xi.ell * dphi_sup * xi.Dxi_bound * Dv_sup
    lhs = float(phi(_node_gradient(Kv)).max())
    rhs = float(phi(G).max()) + eps * C_star
    rep = DiagnosticsReport(f"gradient sup transfer eps={eps:.4g}")
    rep.upper("sup Phi(D K v) - sup Phi(Dv) - eps C*", lhs - rhs, 3.0 * dom.h * lip)
    rep.lhs, rep.C_star = lhs, C_star
    return rep


def zero_trace_check(v: GridField, eps, xi=None):
    dom = v.domain
    Kv = k_epsilon(v, eps, xi)
    ring = dom.boundary_distance < eps
    leak = float(np.abs(Kv.values[ring]).max()) if ring.any() else 0.0
    return DiagnosticsReport(f"zero trace eps={eps:.4g}").upper("max |K v| on dist < eps", leak, 0.0)


def convergence_report(v: GridField, eps_levels, F=None, xi=None, Lambda=None):
    """K^eps v -> v along decreasing eps: L^1, sup and W^{1,1} distances shrink.

    With a density F, also checks that the excess sup f(D K^eps v) - Lambda
    shrinks with eps and stays below eps C* + 3h*Lambda at every level,
    Lambda defaulting to sup f(Dv).
    """
    dom = v.domain
    xi = xi or transversal_field(dom)
    eps_levels = sorted(eps_levels, reverse=True)
    mw = dom.mean_weights
    l1, sup, w11, excess = [], [], [], []
    Gv = gradient(v).values
    lam = None
    if F is not None:
        lam = Lambda if Lambda is not None else float(F.value(Gv).max())
        Dv_sup = float(np.sqrt((Gv ** 2).sum(axis=(-1, -2))).max())
    for e in eps_levels:
        Kv = k_epsilon(v, e, xi)
        d = Kv - v
        l1.append(float(mw @ np.linalg.norm(d.values, axis=1)))
        sup.append(d.norm_inf())
        w11.append(w11_norm(d))
        if F is not None:
            excess.append(float(F.value(_node_gradient(Kv)).max()) - lam)
    rep = DiagnosticsReport("mollifier convergence")
    for name, seq in (("L1", l1), ("sup", sup), ("W11", w11)):
        worst = max(b - a for a, b in zip(seq, seq[1:]))
        rep.upper(f"{name} distance increase along eps", worst, 0.0)
    if F is not None:
        rep.upper("sup f(D K v) - Lambda increase along eps",
                  max(b - a for a, b in zip(excess, excess[1:])), 0.0)
        for e, ex in zip(eps_levels, excess):
            dphi = Dv_sup * (1.0 + e * xi.ell * xi.Dxi_bound)
            rep.upper(f"sup f(D K v) - Lambda - eps C* at eps={e:.4g}",
                      ex - e * xi.ell * dphi * xi.Dxi_bound * Dv_sup, 3.0 * dom.h * lam)
    rep.excess = excess
    rep.l1, rep.sup, rep.w11 = l1, sup, w11
    return rep


def property_suite(v: GridField, eps_levels, F, G, xi=None):
    """All regularisation checks for one field; F and G are the half-square densities."""
    dom = v.domain
    xi = xi or transversal_field(dom)
    Gsup = float(np.sqrt((gradient(v).values ** 2).sum(axis=(-1, -2))).max())
    reports = []
    shifts = []
    for e in eps_levels:
        reports.append(zero_trace_check(v, e, xi))
        gi = gradient_identity_check(v, e, xi)
        shifts.append(gi.measured_shift)
        reports.append(gi)
        reports.append(sup_transfer_check(v, e, G.value, xi, lip=v.norm_inf()))
        dphi = Gsup * (1.0 + e * xi.ell * xi.Dxi_bound)
        reports.append(gradient_sup_check(v, e, F.value, dphi, xi, lip=dphi))
    rep = DiagnosticsReport("eps-linear gradient shift")
    order = np.argsort(eps_levels)
    for i, j in zip(order, order[1:]):
        ratio = shifts[j] / shifts[i] / (eps_levels[j] / eps_levels[i])
        rep.add(f"shift ratio per doubling {eps_levels[i]:.4g}->{eps_levels[j]:.4g}",
                2.0 * ratio, 2.0, 1.5 <= 2.0 * ratio <= 2.5, "normalised to a doubling")
    reports.append(rep)
    reports.append(convergence_report(v, list(eps_levels) + [min(eps_levels) / 2.0]
                                      if min(eps_levels) / 2.0 >= 2.0 * dom.h * (1 - 1e-12)
                                      else eps_levels, F, xi))
    return reports
