"""Acceptance criteria on the 1D cone fixture and its companions.

Each test records its measured values through ``conftest.record``; the pytest
terminal summary then prints one PASS/FAIL line per criterion.  Criteria that
do not hold on the stated grid are left failing (xfail, strict) with the
measured numbers printed next to them.
"""
import json
import time

import numpy as np
import pytest

from conftest import record
from infeig import DiscreteDomain, GridField, geometric_schedule, normalize, run_continuation
from infeig import measures as ms
from infeig.cli import main
from infeig.continuation import lambda_bounds, multiplier_sandwich_check
from infeig.densities import DensityF, half_euclidean_f, half_euclidean_g, kappa
from infeig.discrete_calculus import (bubble, gradient, gradient_array, lp_mean_norm,
                                      monotonicity_check, polynomial_test_fields)
from infeig.lp_solver import objective_and_gradient, solve_lp
from infeig.mollifier import property_suite
from infeig.oracles import cone_triple_residual, inverse_power_p2

H = 1 / 200


# 1 -------------------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="the discrete limit is the sqrt(2)-scaled cone: "
                   "sup|Du| -> 1.41, Lambda -> 1.0; see README 'Known failures'")
def test_criterion_1_cone_gradient_and_eigenvalue(FG):
    dom = DiscreteDomain.interval(2.0, H)
    t0 = time.perf_counter()
    trace = run_continuation(dom, *FG, geometric_schedule(10))
    elapsed = time.perf_counter() - t0
    record(1, "runtime of the p = 2 .. 1024 chain", elapsed < 120, f"{elapsed:.2f} s (< 120 s)")
    u = trace.final.u_p
    g = gradient(u).sup_norm()
    Lam = trace.final.Lambda_p
    ok_g = record(1, "sup|Du_1024| within 5% of 1", abs(g - 1) <= 0.05, f"{g:.6f}")
    ok_L = record(1, "Lambda_1024 within 10% of 0.5", abs(Lam - 0.5) <= 0.05, f"{Lam:.6f}")
    s = u.norm_inf()
    record(1, "after rescaling to sup|u| = 1", None,
           f"sup|Du|/sup|u| = {g / s:.6f}, Lambda/sup|u|^2 = {Lam / s ** 2:.6f}")
    assert ok_g and ok_L


# 2 ---------------------------------------------------------------------------------

def test_criterion_2_bracket(cone_chain, interval, FG):
    lo, hi = lambda_bounds(interval, *FG)
    L = cone_chain.Lambda_infty_estimate
    ok = record(2, "Lambda_inf estimate inside the structural bracket", lo <= L <= hi,
                f"{lo:.4g} <= {L:.6f} <= {hi:.4g}")
    assert ok


# 3 --------------------------------------------------------------------------------

def test_criterion_3_sandwich(cone_chain):
    rep = multiplier_sandwich_check(cone_chain, rel=1e-8)
    worst = max(c.value for c in rep.checks)
    ok = record(3, "(C1/C8)^(1/p) L_p <= Lambda_p <= (C2/C7)^(1/p) L_p at all 10 p",
                rep.passed, f"worst relative violation {worst:.3g} (bound 1e-8)")
    assert ok


# 4 ---------------------------------------------------------------------------------

def test_criterion_4_energy_identity(cone_chain, cone_measures, FG):
    errs = []
    for s, (mu, _, _) in zip(cone_chain.solutions, cone_measures):
        rep = ms.energy_identity_check(s, mu, *FG)
        errs.append(rep["|int f dmu - kappa Lambda| / (kappa Lambda)"].value)
    ok = record(4, "int f(Du_p) dmu_p = kappa Lambda_p at all 10 p", max(errs) <= 1e-6,
                f"max relative error {max(errs):.3g} (bound 1e-6)")
    assert ok


# 5 ---------------------------------------------------------------------------------

def test_criterion_5_masses(cone_chain, cone_measures, FG, u_ref):
    F, G = FG
    k = kappa(F, G)
    mu_ok, nu_ok = True, True
    for s, (mu, nu, _) in zip(cone_chain.solutions, cone_measures):
        w = ms.omega(s.u_p, u_ref, G)
        mu_ok &= mu.total_mass <= k ** (1 - 1 / s.p) * (1 + 1e-12)
        nu_ok &= 1 / (1 + w) - 1e-12 <= nu.total_mass <= 1 + 1e-12
    record(5, "mu_p mass <= kappa^(1-1/p) at all p", mu_ok)
    record(5, "nu_p mass in [1/(1+omega(p)), 1] at all p", nu_ok)
    nu_inf = cone_measures[-1][1].total_mass
    ok_inf = record(5, "nu_inf mass = 1 +- 2%", abs(nu_inf - 1) <= 0.02, f"{nu_inf:.6f}")
    rep = ms.concentration_report(cone_chain.solutions, u_ref, G, radius=0.1, p_check=512,
                                  nus=[m[1] for m in cone_measures])
    far = rep["nu mass outside |x - x0| <= 0.1 at p=512"].value
    ok_far = record(5, "nu mass outside |x| <= 0.1 at p = 512 below 1e-3", far < 1e-3,
                    f"{far:.3g}, centre node x = {rep.centre[0]:.3g}")
    assert mu_ok and nu_ok and ok_inf and ok_far


# 6 -----------------------------------------------------------------------------------

def test_criterion_6_limit_pde(cone_chain, cone_measures, FG, u_ref, interval):
    ds = ms.build_du_star(u_ref)
    mu, nu, _ = cone_measures[-1]
    tests = polynomial_test_fields(interval, 1, 10)
    res = ms.limit_pde_residual(ds, mu, nu, u_ref, cone_chain.Lambda_infty_estimate, *FG, tests)
    ok = record(6, "limit PDE residual with M = df(Du*) mu, p = 1024, 10 test fields",
                res <= 0.05, f"{res:.4f} (bound 0.05)")
    for n, h in ((1, 1 / 200), (2, 1 / 60)):
        r = cone_triple_residual(n, h)
        ok &= record(6, f"explicit cone triple residual n = {n}, h = {h:.4g}", r <= h,
                     f"{r:.3g} (bound h)")
    assert ok


# 7 -----------------------------------------------------------------------------------

def test_criterion_7_mollifier_suite(u_ref, interval, FG):
    eps = [4 * interval.h, 8 * interval.h, 16 * interval.h]
    reps = property_suite(u_ref, eps, *FG)
    for r in reps:
        worst = max(r.checks, key=lambda c: c.value - c.bound)
        record(7, r.name, r.passed, f"{worst.name}: {worst.value:.3g} (bound {worst.bound:.3g})")
    assert all(r.passed for r in reps)


# 8 ---------------------------------------------------------------------------------------

def test_criterion_8_objective_gradient():
    dom = DiscreteDomain.interval(2.0, 0.02)
    F = half_euclidean_f()
    rng = np.random.default_rng(1)
    worst = 0.0
    for p in (2.0, 7.0, 64.0, 1024.0):
        vals = np.where(dom.interior_mask, rng.uniform(0.2, 1, dom.num_nodes), 0.0)[:, None]
        d = np.where(dom.interior_mask, rng.standard_normal(dom.num_nodes), 0.0)[:, None]
        _, g = objective_and_gradient(GridField(dom, vals), p, F)

        def J(V):
            return lp_mean_norm(F.value(gradient_array(dom, V)), p, dom)
        step = 1e-6
        fd = (J(vals + step * d) - J(vals - step * d)) / (2 * step)
        worst = max(worst, abs(np.sum(g.values * d) - fd) / abs(fd))
    ok = record(8, "objective gradient vs central differences", worst <= 1e-4,
                f"max relative error {worst:.3g} (bound 1e-4)")
    assert ok


def test_criterion_8_normalize_and_monotonicity():
    dom = DiscreteDomain.interval(2.0, 0.01)
    G = half_euclidean_g()
    v = GridField(dom, bubble(dom))
    res, eq = 0.0, 0.0
    for p in (2, 16, 1024, 2 ** 20, np.inf):
        r = normalize(v, p, G)
        res = max(res, r.residual)
        for c in (1e-3, 7.0, 1e4):
            eq = max(eq, abs(normalize(v * c, p, G).t * c / r.t - 1))
    ok1 = record(8, "normalize residual", res <= 1e-12, f"{res:.3g} (bound 1e-12)")
    ok2 = record(8, "normalize scale-equivariance t(cv) c = t(v)", eq <= 1e-11, f"{eq:.3g}")
    rng = np.random.default_rng(2)
    mono = all(monotonicity_check(rng.uniform(0, 10, dom.num_nodes) ** rng.uniform(0.5, 4),
                                  [1, 2, 3.5, 16, 300, 1e4, np.inf], dom) for _ in range(50))
    ok3 = record(8, "averaged L^p norm monotone in p (50 random fields)", mono)
    assert ok1 and ok2 and ok3


def test_criterion_8_determinism(tmp_path):
    import pathlib
    cfg = pathlib.Path(__file__).resolve().parents[1] / "configs" / "cone1d.cfg"
    for k in (0, 1):
        main(["solve", str(cfg), "--out", str(tmp_path / f"r{k}"), "--quiet"])
    a, b = (json.loads((tmp_path / f"r{k}" / "results.json").read_text()) for k in (0, 1))
    a.pop("timing"), b.pop("timing")
    same_csv = all((tmp_path / "r0" / f).read_bytes() == (tmp_path / "r1" / f).read_bytes()
                   for f in ("trace.csv", "fields_p1024.csv", "du_star.csv"))
    ok = record(8, "two full runs identical except timing", a == b and same_csv)
    assert ok


@pytest.mark.xfail(strict=True, reason="Du* is undefined on a boundary layer of width ~3 eps "
                   "and at the apex; about 4% of the nodes at h = 1/200. See README")
def test_criterion_8_du_star_agreement(u_ref, interval, FG):
    ds = ms.build_du_star(u_ref)
    a = ds.agreement(u_ref)
    ok = record(8, "Du* agrees with Du on >= 98% of interior nodes (h = 1/200)", a >= 0.98,
                f"{a:.4f}; undefined Lebesgue fraction {ds.undefined_lebesgue():.3f}")
    for h in (1 / 400, 1 / 1000):
        dom = DiscreteDomain.interval(2.0, h)
        tr = run_continuation(dom, *FG, geometric_schedule(10))
        u = ms.infinity_renormalised(tr.final.u_p, FG[1])
        d = ms.build_du_star(u)
        record(8, f"Du* agreement under refinement, h = 1/{round(1 / h)}", None,
               f"{d.agreement(u):.4f}; undefined fraction {d.undefined_lebesgue():.4f}")
    assert ok


# 9 -----------------------------------------------------------------------------------------

def test_criterion_9_p2_oracle(cone_chain, interval):
    ref = inverse_power_p2(interval)
    J2 = cone_chain.solutions[0].J_p
    rel = abs(J2 - ref.J2) / ref.J2
    ok = record(9, "J_2 against inverse power iteration, same grid", rel <= 0.02 and ref.converged,
                f"solver {J2:.8f}, oracle {ref.J2:.8f}, relative {rel:.2e} (bound 2%)")
    assert ok
