"""Constrained minimisation of ||f(Du)||_p on {||g(u)||_p = 1} for one finite p.

The iteration is a projected descent: a quasi-Newton direction built from the
Lagrangian gradient, an Armijo backtracking step on J_p, then rescaling back
onto the constraint by ``normalize``.  The multiplier is recovered afterwards
from the energy pairing with u_p.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .densities import DensityF, DensityG, kappa
from .discrete_calculus import (DiscreteDomain, GridField, gradient_adjoint, gradient_array,
                                polynomial_test_fields, w11_norm)
from .normalize import normalize

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-8
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    initial_guess: str = "hat_profile"  # hat_profile | boundary_distance | warm_start
    warm_start: Optional[GridField] = None
    memory: int = 12  # quasi-Newton pairs; 0 gives preconditioned gradient descent
    symmetrize: bool = False  # restrict directions to fields even under x -> -x
    preconditioner: str = "weighted"  # weighted | sobolev

    def __post_init__(self):
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.gradient_tolerance <= 0 or self.max_iterations < 0:
            raise ValueError("tolerances must be positive")
        if self.initial_guess not in ("hat_profile", "boundary_distance", "warm_start"):
            raise ValueError(f"unknown initial guess {self.initial_guess!r}")
        if self.preconditioner not in ("weighted", "sobolev"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class LpSolution:
    u_p: GridField
    p: float
    J_p: float
    lambda_p: float
    Lambda_p: float
    log_lambda_p: float
    el_residual: float
    converged: bool
    iterations: int
    gradient_norm: float
    constraint_error: float
    history: list = field(default_factory=list, repr=False)


# -- energies ------------------------------------------------------------------

def _powers(ratio, e):
    """ratio**e for ratio >= 0, via exp(e log ratio) clamped at -700."""
    with np.errstate(divide="ignore"):
        lg = np.log(ratio)
    return np.where(ratio > 0, np.exp(np.maximum(e * lg, -700.0)), 0.0)


def _objective(dom, F, U, p):
    Du = gradient_array(dom, U)
    f = F.value(Du)
    M = float(f.max())
    if M <= 0:
        return 0.0, np.zeros_like(U)
    s = float(np.sum(dom.sample_weights * _powers(f / M, p)))
    J = M * s ** (1.0 / p)
    w = dom.sample_weights * _powers(f / J, p - 1)
    grad = gradient_adjoint(dom, w[..., None, None] * F.grad(Du))
    return J, grad


def _constraint(dom, G, U, p):
    g = G.value(U)
    M = float(g.max())
    s = float(dom.mean_weights @ _powers(g / M, p))
    C = M * s ** (1.0 / p)
    w = dom.mean_weights * _powers(g / C, p - 1)
    return C, w[:, None] * G.grad(U)


def objective_and_gradient(u: GridField, p, F: DensityF):
    """J_p(u) = ||f(Du)||_p and dJ_p/du at every node (zero off the interior)."""
    if not p >= 2 or not np.isfinite(p):
        raise ValueError("objective requires a finite exponent p >= 2")
    dom = u.domain
    J, grad = _objective(dom, F, u.values, p)
    grad = np.where(dom.interior_mask[:, None], grad, 0.0)
    return J, GridField(dom, grad)


# -- multiplier and residual ----------------------------------------------------

def recover_multiplier(u: GridField, p, F: DensityF, G: DensityG):
    """lambda_p from testing the weak system with u_p; returns (lambda, Lambda, log lambda)."""
    dom = u.domain
    U = u.values
    Du = gradient_array(dom, U)
    f = F.value(Du)
    J = float(f.max())
    s = float(np.sum(dom.sample_weights * _powers(f / J, p)))
    J = J * s ** (1.0 / p)
    num = float(np.sum(dom.sample_weights * _powers(f / J, p - 1)
                       * np.einsum("ksai,ksai->ks", F.grad(Du), Du)))
    g = G.value(U)
    Mg = float(g.max())
    den = float(dom.mean_weights @ (_powers(g / Mg, p - 1) * np.einsum("ka,ka->k", G.grad(U), U)))
    if not den > 0:
        raise ValueError("zero denominator in the multiplier: field is not admissible")
    log_lam = (p - 1) * (np.log(J) - np.log(Mg)) + np.log(num) - np.log(den)
    with np.errstate(over="ignore"):
        lam = float(np.exp(log_lam))
    return lam, float(np.exp(log_lam / p)), float(log_lam)


def euler_lagrange_residual(u: GridField, log_lambda, p, F, G, test_fields):
    """Max over test fields of the normalised weak residual of the p-system."""
    dom = u.domain
    U = u.values
    Du = gradient_array(dom, U)
    f = F.value(Du)
    J = float(f.max())
    J = J * float(np.sum(dom.sample_weights * _powers(f / J, p))) ** (1.0 / p)
    flux = (dom.sample_weights * _powers(f / J, p - 1))[..., None, None] * F.grad(Du)
    coef = np.exp(log_lambda - (p - 1) * np.log(J))
    src = (dom.mean_weights * _powers(G.value(U), p - 1))[:, None] * G.grad(U)
    worst = 0.0
    for phi in test_fields:
        nrm = w11_norm(phi)
        if nrm == 0.0:
            continue
        Dphi = gradient_array(dom, phi.values)
        r = np.sum(flux * Dphi) - coef * np.sum(src * phi.values)
        worst = max(worst, abs(r) / nrm)
    return float(worst)


# -- initial guesses ----------------------------------------------------------

def hat_profile(dom: DiscreteDomain):
    x = dom.nodes
    if dom.kind == "ball":
        prof = 1.0 - np.linalg.norm(x, axis=1) / dom.extents[0]
    else:
        half = np.array(dom.extents) / 2.0
        prof = np.prod(1.0 - np.abs(x) / half, axis=1)
    return np.where(dom.interior_mask, np.maximum(prof, 0.0), 0.0)


def initial_field(dom, N, config: SolverConfig):
    if config.initial_guess == "warm_start":
        if config.warm_start is None:
            raise ValueError("warm_start policy needs a field")
        return config.warm_start
    prof = hat_profile(dom) if config.initial_guess == "hat_profile" else dom.boundary_distance
    vals = np.zeros((dom.num_nodes, N))
    vals[:, 0] = prof
    return GridField(dom, vals)


# -- solver --------------------------------------------------------------------

class _Problem:
    """Interior-node view of the discrete problem.

    Two metrics are kept: the averaged H^1_0 Gram matrix, which defines the
    convergence norm, and a lagged-diffusion approximation of the Hessian of
    J_p, refreshed at each iterate and used to precondition the direction.
    """

    def __init__(self, dom, F, G, p, N, weighted=True):
        self.dom, self.F, self.G, self.p, self.N = dom, F, G, p, N
        self.idx = dom.interior_index
        self.weighted = weighted
        W = sp.diags(dom.mean_weights)
        K = W.copy()
        for D in dom.difference_operators.values():
            K = K + 0.5 * (D.T @ W @ D)
        self.K_sob = sp.csc_matrix(K[self.idx][:, self.idx])
        self._sob = spla.factorized(self.K_sob)
        self._pre = self._sob
        self._ops = {k: sp.csr_matrix(D[:, self.idx]) for k, D in dom.difference_operators.items()}
        try:
            self.c0 = F.c0
        except ValueError:
            self.c0 = 0.5 * F.C4

    def full(self, x):
        U = np.zeros((self.dom.num_nodes, self.N))
        U[self.idx] = x.reshape(-1, self.N)
        return U

    def project(self, x):
        t = normalize(self.full(x), self.p, self.G, domain=self.dom).t
        return t * x

    def energy(self, x):
        J, gJ = _objective(self.dom, self.F, self.full(x), self.p)
        return J, gJ[self.idx].ravel()

    def lagrangian_gradient(self, x, J, gJ):
        _, gC = _constraint(self.dom, self.G, self.full(x), self.p)
        gC = gC[self.idx].ravel()
        # multiplier from the pairing with x; exact tangency along the scaling ray
        m = float(gJ @ x) / float(gC @ x)
        return gJ - m * gC

    def refresh(self, x, J):
        if not self.weighted:
            return
        dom, p = self.dom, self.p
        f = self.F.value(gradient_array(dom, self.full(x)))
        act = dom.sample_weights * _powers(f / J, p - 1)
        # curvature of J_p along a gradient perturbation, isotropic in the components
        scale = 2.0 * self.c0 * (2.0 * p - 1.0) / J
        K = 1e-3 * scale * self.K_sob
        for (a, side), D in self._ops.items():
            wa = act[:, dom.orientations[:, a] == side].sum(axis=1)
            K = K + scale * (D.T @ sp.diags(wa) @ D)
        self._pre = spla.factorized(sp.csc_matrix(K))

    def _apply(self, solve, r):
        r = r.reshape(-1, self.N)
        return np.column_stack([solve(r[:, k]) for k in range(self.N)]).ravel()

    def precondition(self, r):
        return self._apply(self._pre, r)

    def dual_norm(self, r):
        """Norm of the Lagrangian gradient dual to the averaged H^1_0 norm."""
        return float(np.sqrt(max(float(r @ self._apply(self._sob, r)), 0.0)))


def _symmetrizer(dom, idx):
    """Permutation of interior nodes realising x -> -x (lattices are centred)."""
    rev = np.arange(dom.num_nodes)[::-1]
    pos = np.full(dom.num_nodes, -1)
    pos[idx] = np.arange(idx.size)
    perm = pos[rev[idx]]
    if np.any(perm < 0) or not np.allclose(dom.nodes[idx][perm], -dom.nodes[idx]):
        raise ValueError("domain lattice is not symmetric under x -> -x")
    return perm


def solve_lp(domain: DiscreteDomain, F: DensityF, G: DensityG, p, config: SolverConfig = None,
             N=1, test_fields=None):
    config = config or SolverConfig()
    if not p >= 2 or not np.isfinite(p):
        raise ValueError("solve_lp requires a finite exponent p >= 2")
    u0 = initial_field(domain, N, config)
    N = u0.N
    prob = _Problem(domain, F, G, p, N, weighted=config.preconditioner == "weighted")
    perm = _symmetrizer(domain, prob.idx) if config.symmetrize else None

    def sym(x):
        if perm is None:
            return x
        X = x.reshape(-1, N)
        return (0.5 * (X + X[perm])).ravel()

    x = u0.values[prob.idx].ravel()
    if not np.any(x != 0):
        raise ValueError("initial guess vanishes identically")
    x = prob.project(sym(x))
    J, gJ = prob.energy(x)
    r = prob.lagrangian_gradient(x, J, gJ)
    gnorm = prob.dual_norm(r)
    history = [J]
    pairs = deque(maxlen=config.memory)
    it = 0
    converged = gnorm <= config.gradient_tolerance
    stalled = False
    while not converged and it < config.max_iterations:
        prob.refresh(x, J)
        d = sym(-_two_loop(r, pairs, prob.precondition))
        slope = float(r @ d)
        if not slope < 0:
            pairs.clear()
            d = sym(-prob.precondition(r))
            slope = float(r @ d)
        step = 1.0
        accepted = False
        r_new = None
        for _ in range(config.max_backtracks):
            x_new = prob.project(x + step * d)
            J_new, gJ_new = prob.energy(x_new)
            if J_new <= J + config.armijo_c * step * slope:
                accepted = True
                break
            if abs(J_new - J) <= 1e-13 * abs(J):
                # decrease below roundoff: fall back to approximate Wolfe on the slope
                r_new = prob.lagrangian_gradient(x_new, J_new, gJ_new)
                s_new = float(r_new @ d)
                if 0.9 * slope <= s_new <= -(1.0 - 2.0 * config.armijo_c) * slope:
                    accepted = True
                    break
                r_new = None
            step *= config.backtrack
        if not accepted:
            if pairs:
                pairs.clear()
                continue
            stalled = True
            break
        if r_new is None:
            r_new = prob.lagrangian_gradient(x_new, J_new, gJ_new)
        s_vec, y_vec = x_new - x, r_new - r
        sy = float(s_vec @ y_vec)
        if sy > 1e-12 * float(np.sqrt((s_vec @ s_vec) * (y_vec @ y_vec))):
            pairs.append((s_vec, y_vec, 1.0 / sy))
        x, J, r = x_new, J_new, r_new
        history.append(J)
        gnorm = prob.dual_norm(r)
        it += 1
        converged = gnorm <= config.gradient_tolerance

    u = GridField(domain, prob.full(x))
    lam, Lam, log_lam = recover_multiplier(u, p, F, G)
    if test_fields is None:
        test_fields = polynomial_test_fields(domain, N)
    el = euler_lagrange_residual(u, log_lam, p, F, G, test_fields)
    C, _ = _constraint(domain, G, u.values, p)
    if not converged:
        log.warning("p=%g: stopped after %d iterations, |grad|=%.3e%s", p, it, gnorm,
                    " (line search stalled)" if stalled else "")
    return LpSolution(u, float(p), float(J), lam, Lam, log_lam, el, bool(converged), it,
                      gnorm, abs(C - 1.0), history)


def _two_loop(r, pairs, H0):
    q = r.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        z = H0(q)
        gamma = float(s @ y) / float(y @ H0(y))
        z *= gamma
    else:
        z = H0(q)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ z)
        z += (a - b) * s
    return z
