"""Batch driver: ``infeig solve|validate|oracle CONFIG``.

Configs are INI files (configparser).  Any key can be overridden from the
environment as INFEIG_<SECTION>__<KEY>, e.g. INFEIG_DOMAIN__H=0.01.
Exit codes: 0 all enabled checks pass, 1 some check failed (outputs are still
written in full), 2 configuration error (nothing written).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import measures as ms
from . import mollifier as mol
from .continuation import (ContinuationTrace, chain_report, energy_inequality_check,
                           geometric_schedule, lambda_bounds, multiplier_sandwich_check,
                           run_continuation)
from .densities import DensityF, DensityG, QuadraticTensor, kappa, validate_hypotheses
from .diagnostics import DiagnosticsReport
from .discrete_calculus import (DiscreteDomain, GridField, bubble, gradient,
                                polynomial_test_fields)
from .lp_solver import SolverConfig
from .oracles import cone_field, cone_profile, cone_triple_residual

SCHEMA_VERSION = "1.0"
TRACE_COLUMNS = ["p", "J_p", "Lambda_p", "lambda_p", "mu_mass", "nu_mass", "el_residual",
                 "sup_grad"]
ENV_PREFIX = "INFEIG_"

log = logging.getLogger("infeig")


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------------

@dataclass
class DomainSpec:
    kind: str = "interval"
    n: int = 1
    N: int = 1
    extents: tuple = (2.0,)
    h: float = 0.005

    def build(self):
        if self.h <= 0:
            raise ConfigError("domain h must be positive")
        if self.kind == "interval":
            if self.n != 1:
                raise ConfigError("interval domains have n = 1")
            return DiscreteDomain.interval(self.extents[0], self.h)
        if self.kind == "box":
            if len(self.extents) != self.n:
                raise ConfigError("box needs one extent per dimension")
            return DiscreteDomain.box(self.extents, self.h)
        if self.kind == "ball":
            return DiscreteDomain.ball(self.n, self.extents[0], self.h)
        raise ConfigError(f"unknown domain kind {self.kind!r}")


@dataclass
class DensitySpec:
    kind: str = "scaled_euclidean"
    c: float = 0.5
    scale: float = 1.0  # quadratic: A = scale * I; power_of_quadratic: B = scale * I
    gamma: float = 0.5
    constants: dict = field(default_factory=dict)


@dataclass
class Diagnostics:
    measures: bool = True
    mollifier: bool = True
    du_star: bool = True
    oracle: bool = False
    eps_multiples: tuple = (4.0, 8.0, 16.0)
    du_star_multiples: tuple = (3.0, 2.5, 2.0)


@dataclass
class RunConfig:
    domain: DomainSpec
    f: DensitySpec
    g: DensitySpec
    schedule: list
    solver: SolverConfig
    diagnostics: Diagnostics
    out: str = "out"
    seed: int = 0
    source: str = ""

    def build_densities(self):
        N, n = self.domain.N, self.domain.n
        fs, gs = self.f, self.g
        if fs.kind == "scaled_euclidean":
            F = DensityF.scaled_euclidean(fs.c)
        elif fs.kind == "quadratic":
            F = DensityF.quadratic(QuadraticTensor.identity(N, n, fs.scale))
        else:
            raise ConfigError(f"unknown f kind {fs.kind!r}")
        if gs.kind == "scaled_euclidean":
            G = DensityG.scaled_euclidean(gs.c)
        elif gs.kind == "power_of_quadratic":
            G = DensityG.power_of_quadratic(gs.scale * np.eye(N), gs.gamma)
        else:
            raise ConfigError(f"unknown g kind {gs.kind!r}")
        if fs.constants:
            F = F.with_constants(**fs.constants)
        if gs.constants:
            G = G.with_constants(**gs.constants)
        return F, G


def _floats(text):
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_config(path, environ=None):
    environ = os.environ if environ is None else environ
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for key, val in sorted(environ.items()):
        if key.startswith(ENV_PREFIX) and "__" in key:
            sec, opt = key[len(ENV_PREFIX):].split("__", 1)
            sec = sec.lower()
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, opt.lower(), val)
    try:
        return _parse(cp, str(path))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


_CONSTANT_KEYS = ("C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "alpha", "beta")


def _density(cp, sec):
    if not cp.has_section(sec):
        return DensitySpec()
    s = cp[sec]
    consts = {k: float(s[k.lower()]) for k in _CONSTANT_KEYS if k.lower() in s}
    return DensitySpec(s.get("kind", "scaled_euclidean"), float(s.get("c", 0.5)),
                       float(s.get("scale", 1.0)), float(s.get("gamma", 0.5)), consts)


def _parse(cp, source):
    if not cp.has_section("domain"):
        raise ConfigError("missing [domain] section")
    d = cp["domain"]
    dom = DomainSpec(d.get("kind", "interval"), int(d.get("n", 1)), int(d.get("components", 1)),
                     _floats(d.get("extents", "2.0")), float(d.get("h", 0.005)))
    if cp.has_section("schedule") and "p" in cp["schedule"]:
        sched = list(_floats(cp["schedule"]["p"]))
    else:
        s = cp["schedule"] if cp.has_section("schedule") else {}
        sched = geometric_schedule(int(s.get("k_max", 10)), int(s.get("k_min", 1)))
    if not sched or any(b <= a for a, b in zip(sched, sched[1:])):
        raise ConfigError("schedule not increasing")
    if sched[0] < 2:
        raise ConfigError("exponents start at p = 2")
    kw = {}
    if cp.has_section("solver"):
        types = {f.name: f.type for f in fields(SolverConfig)}
        for k, v in cp["solver"].items():
            if k not in types or k == "warm_start":
                raise ConfigError(f"unknown solver key {k!r}")
            t = types[k]
            kw[k] = _bool(v) if t in (bool, "bool") else (
                int(v) if t in (int, "int") else float(v) if t in (float, "float") else v)
    solver = SolverConfig(**kw)
    diag = Diagnostics()
    if cp.has_section("diagnostics"):
        s = cp["diagnostics"]
        for k in s:
            if k in ("measures", "mollifier", "du_star", "oracle"):
                setattr(diag, k, _bool(s[k]))
            elif k in ("eps_multiples", "du_star_multiples"):
                setattr(diag, k, _floats(s[k]))
            else:
                raise ConfigError(f"unknown diagnostics key {k!r}")
    out = cp.get("output", "dir", fallback="out")
    seed = cp.getint("run", "seed", fallback=0)
    cfg = RunConfig(dom, _density(cp, "f"), _density(cp, "g"), sched, solver, diag, out, seed,
                    source)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    """Static checks that need no solve."""
    if cfg.domain.kind not in ("interval", "box", "ball"):
        raise ConfigError(f"unknown domain kind {cfg.domain.kind!r}")
    if cfg.diagnostics.oracle and cfg.domain.kind not in ("interval", "ball"):
        raise ConfigError("oracle requires ball or interval")
    if cfg.diagnostics.oracle and (cfg.f.kind, cfg.g.kind) != ("scaled_euclidean",
                                                               "scaled_euclidean"):
        raise ConfigError("oracle requires the scaled Euclidean densities")
    for name, m in (("eps_multiples", cfg.diagnostics.eps_multiples),
                    ("du_star_multiples", cfg.diagnostics.du_star_multiples)):
        if min(m) < 2.0:
            raise ConfigError(f"{name} must be at least 2 (in units of h)")
    dm = cfg.diagnostics.du_star_multiples
    if len(dm) < 3 or any(b >= a for a, b in zip(dm, dm[1:])):
        raise ConfigError("du_star_multiples must decrease, at least three levels")
    cfg.build_densities()
    cfg.domain.build()


# -- oracle ---------------------------------------------------------------------

def oracle_compare(trace: ContinuationTrace, domain: DiscreteDomain, nu=None,
                   triple_dims=(1, 2, 3)):
    """Largest-p field against the cone, all after rescaling to sup|u| = 1."""
    prof, R = cone_profile(domain)
    u = trace.final.u_p
    scale = u.norm_inf()
    inner = domain.interior_mask
    grad = gradient(u).node_values / scale
    gnorm = np.sqrt((grad ** 2).sum(axis=(1, 2)))
    # exclude the apex cell where the cone has no gradient
    r = np.linalg.norm(domain.nodes, axis=1)
    sel = inner & (r > 1.5 * domain.h)
    rel = np.abs(gnorm[sel] - 1.0 / R) * R
    q = float(np.quantile(rel, 0.95))
    prof_err = float(np.abs(np.linalg.norm(u.values, axis=1) / scale - prof)[inner].max())
    rep = DiagnosticsReport("cone oracle")
    rep.upper("0.95-quantile | |Du|/sup|u| - 1/R | R", q, 0.05)
    rep.upper("sup | |u|/sup|u| - cone profile |", prof_err, 0.05)
    if nu is not None:
        c = int(np.argmin(r))
        near = r <= 0.1 * R
        frac = float(nu.node_masses()[near].sum() / nu.total_mass)
        rep.upper("nu mass fraction outside |x| <= R/10", 1.0 - frac, 1e-3)
        rep.centre_fraction = float(nu.node_masses()[c] / nu.total_mass)
    for n in triple_dims:
        h = domain.h if n == domain.n else {1: 1 / 200, 2: 1 / 60, 3: 1 / 20}[n]
        res = cone_triple_residual(n, h, 1.0)
        rep.upper(f"explicit triple residual n={n}, h={h:.4g} (bound h)", res, h)
    rep.quantile, rep.profile_error = q, prof_err
    return rep


# -- run --------------------------------------------------------------------------

def _num(x):
    x = float(x)
    return x if np.isfinite(x) else None


def _fmt(x):
    return format(float(x), ".17g")


def _p_tag(p):
    return str(int(p)) if float(p).is_integer() else format(p, "g")


class _Stages:
    def __init__(self):
        self.times = {}

    def run(self, name, fn, *a, **kw):
        t = time.perf_counter()
        out = fn(*a, **kw)
        self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t
        return out


def execute(cfg: RunConfig, force_oracle=False):
    """Run the chain and diagnostics; returns (bundle, reports, trace, extras)."""
    dom = cfg.domain.build()
    F, G = cfg.build_densities()
    N = cfg.domain.N
    diag = cfg.diagnostics
    oracle_on = diag.oracle or force_oracle
    if oracle_on and dom.kind not in ("interval", "ball"):
        raise ConfigError("oracle requires ball or interval")
    st = _Stages()
    rng = np.random.default_rng(cfg.seed)
    reports = []

    hyp = st.run("hypotheses", validate_hypotheses, F, G, N, dom.n, seed=cfg.seed)
    reports.append(hyp)
    trace = st.run("continuation", run_continuation, dom, F, G, cfg.schedule, cfg.solver, N)
    reports.append(chain_report(trace))
    reports.append(multiplier_sandwich_check(trace))

    u_ref = ms.infinity_renormalised(trace.final.u_p, G)
    competitors = [cone_field(dom, N)] if dom.kind in ("interval", "ball") else []
    competitors.append(GridField(dom, (bubble(dom) * rng.uniform(0.5, 1.5, dom.num_nodes))[:, None]
                                 * np.eye(N)[0]))
    reports.append(st.run("energy inequality", energy_inequality_check, trace, competitors))

    meas = [ms.build_measures(s, F, G) for s in trace.solutions]
    extras = {"measures": meas, "u_ref": u_ref}
    if diag.measures:
        def _measures():
            out = []
            for s, (mu, nu, M) in zip(trace.solutions, meas):
                out.append(ms.mass_bounds_check(s, mu, nu, M, F, G, u_ref,
                                                trace.Lambda_infty_estimate))
                out.append(ms.energy_identity_check(s, mu, F, G))
            if len(trace.solutions) >= 3:
                out.append(ms.concentration_report(trace.solutions, u_ref, G,
                                                   nus=[m[1] for m in meas]))
                tf = ms.continuous_test_functions(dom)
                w_mu = ms.weak_star_proxy([m[0] for m in meas], tf)
                w_mu.name = "weak-* pairing gaps (mu)"
                w_nu = ms.weak_star_proxy([m[1] for m in meas], tf)
                w_nu.name = "weak-* pairing gaps (nu)"
                out += [w_mu, w_nu]
            fin = trace.final
            mu, nu, _ = meas[-1]
            for k, v in enumerate([fin.u_p] + competitors):
                r = ms.differential_identity_check(fin, mu, nu, v, F, G)
                r.name += f" (field {k})"
                out.append(r)
            return out
        reports += st.run("measures", _measures)
    if diag.mollifier:
        eps = [m * dom.h for m in diag.eps_multiples]
        reports += st.run("mollifier", mol.property_suite, u_ref, eps, F, G)
    if diag.du_star:
        def _du_star():
            ds = ms.build_du_star(u_ref, [m * dom.h for m in diag.du_star_multiples])
            mu, nu, _ = meas[-1]
            rep = DiagnosticsReport("Du-star")
            rep.add("agreement with Du on interior nodes", ds.agreement(u_ref), 0.98,
                    ds.agreement(u_ref) >= 0.98, "fraction; lower bound")
            rep.upper("undefined set, Lebesgue fraction", ds.undefined_lebesgue(), 0.02)
            undef_mu = float(mu.node_masses()[ds.undefined_mask].sum() / mu.total_mass)
            rep.upper("undefined set, mu fraction", undef_mu, 0.02)
            tests = polynomial_test_fields(dom, N, 10)
            res = ms.limit_pde_residual(ds, mu, nu, u_ref, trace.Lambda_infty_estimate, F, G,
                                        tests)
            rep.upper("limit PDE residual", res, 0.05)
            mass = ms.mass_identities_check(mu, ds, trace.Lambda_infty_estimate, kappa(F, G), F)
            extras["du_star"] = ds
            return [rep, mass]
        reports += st.run("du_star", _du_star)
    if oracle_on:
        triple = (1, 2, 3)
        reports.append(st.run("oracle", oracle_compare, trace, dom, meas[-1][1], triple))

    lo, hi = lambda_bounds(dom, F, G, N)
    rows = []
    for s, (mu, nu, M) in zip(trace.solutions, meas):
        rows.append({"p": s.p, "J_p": s.J_p, "Lambda_p": s.Lambda_p, "lambda_p": s.lambda_p,
                     "mu_mass": mu.total_mass, "nu_mass": nu.total_mass,
                     "el_residual": s.el_residual, "sup_grad": gradient(s.u_p).sup_norm()})
    bundle = {
        "schema_version": SCHEMA_VERSION,
        "config": _config_echo(cfg),
        "trace": [{k: _num(v) for k, v in r.items()} for r in rows],
        "summary": {
            "Lambda_inf_estimate": _num(trace.Lambda_infty_estimate),
            "Lambda_aitken": _num(trace.Lambda_aitken),
            "Lambda_bracket": [_num(lo), _num(hi)],
            "kappa": _num(kappa(F, G)),
            "cauchy_gaps": [_num(x) for x in trace.cauchy_gaps],
            "complete": trace.complete,
        },
        "measure_masses": [{"p": s.p, "mu": _num(m[0].total_mass), "nu": _num(m[1].total_mass),
                            "M": _num(m[2].total_mass)} for s, m in zip(trace.solutions, meas)],
        "diagnostics": [_report_json(r) for r in reports],
        "passed": all(r.passed for r in reports),
        "timing": {k: round(v, 6) for k, v in st.times.items()},
    }
    return bundle, reports, trace, extras


def _report_json(r: DiagnosticsReport):
    d = r.as_dict()
    for c in d["checks"]:
        c["value"], c["bound"] = _num(c["value"]), _num(c["bound"])
    return d


def _config_echo(cfg: RunConfig):
    return {
        "domain": {"kind": cfg.domain.kind, "n": cfg.domain.n, "N": cfg.domain.N,
                   "extents": list(cfg.domain.extents), "h": cfg.domain.h},
        "f": {"kind": cfg.f.kind, "c": cfg.f.c, "scale": cfg.f.scale, "constants": cfg.f.constants},
        "g": {"kind": cfg.g.kind, "c": cfg.g.c, "scale": cfg.g.scale, "gamma": cfg.g.gamma,
              "constants": cfg.g.constants},
        "schedule": list(cfg.schedule),
        "solver": {f.name: getattr(cfg.solver, f.name) for f in fields(SolverConfig)
                   if f.name != "warm_start"},
        "diagnostics": {f.name: (list(v) if isinstance(v := getattr(cfg.diagnostics, f.name), tuple)
                                 else v) for f in fields(Diagnostics)},
        "seed": cfg.seed,
    }


def write_outputs(out_dir, bundle, trace, extras):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.json", "w") as fh:
        json.dump(bundle, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in bundle["trace"]:
            w.writerow(["nan" if r[c] is None else _fmt(r[c]) for c in TRACE_COLUMNS])
    dom = trace.domain
    n, N = dom.n, trace.final.u_p.N
    head = ([f"x_{a}" for a in range(n)] + [f"u_{b}" for b in range(N)]
            + [f"du_{b}_{a}" for b in range(N) for a in range(n)] + ["mu", "nu"])
    for s, (mu, nu, _) in zip(trace.solutions, extras["measures"]):
        D = gradient(s.u_p).node_values.reshape(dom.num_nodes, -1)
        cols = np.column_stack([dom.nodes, s.u_p.values, D, mu.node_density(), nu.node_density()])
        _write_table(out / f"fields_p{_p_tag(s.p)}.csv", head, cols)
    if "du_star" in extras:
        ds = extras["du_star"]
        head2 = ([f"x_{a}" for a in range(n)]
                 + [f"dustar_{b}_{a}" for b in range(N) for a in range(n)] + ["undefined"])
        cols = np.column_stack([dom.nodes, ds.values.reshape(dom.num_nodes, -1),
                                ds.undefined_mask.astype(float)])
        _write_table(out / "du_star.csv", head2, cols)


def _write_table(path, head, cols):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for row in cols:
            w.writerow([_fmt(x) for x in row])


# -- entry point --------------------------------------------------------------------

def _parser():
    ap = argparse.ArgumentParser(prog="infeig", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=["solve", "validate", "oracle"])
    ap.add_argument("config")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    ap.add_argument("--quiet", action="store_true", help="only errors on stderr")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    say = (lambda *a: None) if args.quiet else print
    try:
        cfg = read_config(args.config)
        if args.out:
            cfg.out = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "oracle":
            cfg.diagnostics.oracle = True
            validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        dom = cfg.domain.build()
        F, G = cfg.build_densities()
        hyp = validate_hypotheses(F, G, cfg.domain.N, dom.n, seed=cfg.seed)
        lo, hi = lambda_bounds(dom, F, G, cfg.domain.N)
        say(f"domain {dom.kind} n={dom.n} N={cfg.domain.N} nodes={dom.num_nodes} h={dom.h:g}")
        say(f"schedule {', '.join(_p_tag(p) for p in cfg.schedule)}")
        say(f"Lambda bracket [{lo:.6g}, {hi:.6g}]")
        say(hyp.summary())
        return 0 if hyp.passed else 1
    try:
        bundle, reports, trace, extras = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    write_outputs(cfg.out, bundle, trace, extras)
    for r in reports:
        if not r.passed or not args.quiet:
            say(r.summary())
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"{len(failed)} diagnostic(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    say(f"all diagnostics passed; outputs in {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
