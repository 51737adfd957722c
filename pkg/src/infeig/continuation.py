"""The p -> infinity chain: geometric schedule, warm starts and limit diagnostics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .densities import DensityF, DensityG
from .diagnostics import DiagnosticsReport
from .discrete_calculus import INF, DiscreteDomain, GridField, gradient, lp_mean_norm
from .lp_solver import LpSolution, SolverConfig, solve_lp
from .normalize import normalize, radial_inverse

log = logging.getLogger(__name__)


def geometric_schedule(k_max=10, k_min=1):
    return [2.0 ** k for k in range(k_min, k_max + 1)]


@dataclass
class ContinuationTrace:
    p_schedule: list
    solutions: list
    sup_gradient_norms: list
    cauchy_gaps: list  # ||u_{p_{j+1}} - u_{p_j}||_inf, one shorter than the schedule
    Lambda_infty_estimate: float
    Lambda_aitken: float
    complete: bool
    F: DensityF = field(repr=False, default=None)
    G: DensityG = field(repr=False, default=None)

    @property
    def domain(self):
        return self.solutions[0].u_p.domain

    @property
    def final(self) -> LpSolution:
        return self.solutions[-1]

    def Lambdas(self):
        return np.array([s.Lambda_p for s in self.solutions])


def aitken(x):
    """Delta-squared extrapolation from the last three terms; nan if degenerate."""
    if len(x) < 3:
        return float("nan")
    a, b, c = x[-3:]
    den = (c - b) - (b - a)
    if den == 0:
        return float(c)
    return float(c - (c - b) ** 2 / den)


def run_continuation(domain: DiscreteDomain, F: DensityF, G: DensityG, schedule=None,
                     config: SolverConfig = None, N=1, callback=None):
    schedule = list(schedule if schedule is not None else geometric_schedule())
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule not increasing")
    config = config or SolverConfig()
    sols = []
    u = None
    for p in schedule:
        if u is None:
            cfg = config
        else:
            # warm start, rescaled onto the new constraint before the first step
            t = normalize(u, p, G).t
            cfg = replace(config, initial_guess="warm_start", warm_start=u * t)
        sol = solve_lp(domain, F, G, p, cfg, N=N)
        sols.append(sol)
        u = sol.u_p
        if callback is not None:
            callback(sol)
        log.info("p=%g J=%.8f Lambda=%.8f iters=%d converged=%s", p, sol.J_p, sol.Lambda_p,
                 sol.iterations, sol.converged)
    sup_grad = [gradient(s.u_p).sup_norm() for s in sols]
    gaps = [float(np.max(np.abs(b.u_p.values - a.u_p.values))) for a, b in zip(sols, sols[1:])]
    lams = [s.Lambda_p for s in sols]
    return ContinuationTrace(schedule, sols, sup_grad, gaps, float(lams[-1]), aitken(lams),
                             all(s.converged for s in sols), F, G)


def lambda_bounds(domain: DiscreteDomain, F: DensityF, G: DensityG, N=1):
    """Two-sided bracket for the limit eigenvalue from the structural constants."""
    a = F.alpha
    S = G.sup_grad_on_sublevel(1.0)
    inner = F.C4 ** (1.0 / a) / (domain.diameter * S) - F.C3 ** (1.0 / a)
    lower = max(inner, 0.0) ** a
    s_star = radial_inverse(G, N, 1.0)
    upper = F.C5 * (s_star / domain.inradius) ** a + F.C6
    return float(lower), float(upper)


def sup_f_of_gradient(v: GridField, F: DensityF):
    return float(F.value(gradient(v).values).max())


def energy_inequality_check(trace: ContinuationTrace, comparison_fields, tol=0.05):
    """J at the largest p against ||f(Dv)||_inf for competitors with ||g(v)||_inf = 1.

    Two checks per competitor: the sup comparison with tolerance ``tol`` and
    the exact discrete minimality J_p(u_p) <= J_p(t_p v) at the final p.
    """
    F, G = trace.F, trace.G
    fin = trace.final
    p = fin.p
    rep = DiagnosticsReport("energy inequality")
    for k, v in enumerate(comparison_fields):
        v = v * normalize(v, INF, G).t
        sup = sup_f_of_gradient(v, F)
        rep.upper(f"competitor {k}: J_pmax - sup f(Dv)", fin.J_p - sup, tol)
        vp = v * normalize(v, p, G).t
        Jv = lp_mean_norm(F.value(gradient(vp).values), p, vp.domain)
        rep.upper(f"competitor {k}: J_pmax - J_pmax(v)", fin.J_p - Jv, 1e-9 * fin.J_p)
    return rep


def multiplier_sandwich_check(trace: ContinuationTrace, rel=1e-8):
    """(C1/C8)^(1/p) J_p <= Lambda_p <= (C2/C7)^(1/p) J_p at every solved p."""
    F, G = trace.F, trace.G
    rep = DiagnosticsReport("multiplier sandwich")
    for s in trace.solutions:
        lo = (F.C1 / G.C8) ** (1.0 / s.p) * s.J_p
        hi = (F.C2 / G.C7) ** (1.0 / s.p) * s.J_p
        rep.upper(f"p={s.p:g}: lower - Lambda", (lo - s.Lambda_p) / s.Lambda_p, rel)
        rep.upper(f"p={s.p:g}: Lambda - upper", (s.Lambda_p - hi) / s.Lambda_p, rel)
    return rep


def chain_report(trace: ContinuationTrace, el_tol=1e-6):
    """Convergence, Euler-Lagrange residuals and the bracket for the limit eigenvalue."""
    rep = DiagnosticsReport("continuation chain")
    for s in trace.solutions:
        rep.add(f"p={s.p:g}: converged", float(s.converged), 1.0, s.converged)
        rep.upper(f"p={s.p:g}: Euler-Lagrange residual", s.el_residual, el_tol)
    lo, hi = lambda_bounds(trace.domain, trace.F, trace.G, trace.final.u_p.N)
    est = trace.Lambda_infty_estimate
    rep.add("Lambda_inf estimate in the structural bracket", est, hi, lo <= est <= hi,
            f"bracket [{lo:.6g}, {hi:.6g}]")
    return rep
