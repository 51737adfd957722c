"""Scaling root t > 0 with ||g(t v)||_p = 1, the admissibility projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discrete_calculus import INF, GridField


@dataclass(frozen=True)
class NormalizationResult:
    t: float
    residual: float
    iterations: int


def _log_norm_and_slope(G, V, t, p, mean_w):
    """log ||g(tV)||_p and its derivative in log t, both overflow-safe."""
    eta = t * V
    g = G.value(eta)
    M = float(g.max())
    if M <= 0.0:
        return -np.inf, 0.0
    pair = np.einsum("ka,ka->k", G.grad(eta), eta)  # d g(e^s v) / ds
    if p == INF:
        k = int(np.argmax(g))
        return np.log(M), pair[k] / g[k]
    r = g / M
    rp = r ** p
    S = float(np.dot(mean_w, rp))
    with np.errstate(divide="ignore", invalid="ignore"):
        # d/ds (1/p) log mean g^p = mean g^(p-1) dg.v / mean g^p
        slope = float(np.dot(mean_w, np.where(r > 0, rp / r, 0.0) * pair / M)) / S
    return np.log(M) + np.log(S) / p, slope


def increasing_root(logfun, target=0.0, s0=0.0, tol=1e-12, max_iter=200):
    """Root s of an increasing ``logfun(s) -> (value, slope)`` on the real line.

    The value must be a log-scale quantity; success means |exp(value - target) - 1| <= tol.
    Bracketing by doubling/halving t = e^s, then Newton safeguarded by bisection.
    """
    step = np.log(2.0)
    s = s0
    val, slope = logfun(s)
    it = 0
    lo = hi = None
    if val <= target:
        lo = (s, val)
        while True:
            s += step
            val, slope = logfun(s)
            it += 1
            if val > target:
                hi = (s, val)
                break
            lo = (s, val)
            if it > max_iter:
                raise RuntimeError("bracketing failed")
    else:
        hi = (s, val)
        while True:
            s -= step
            val, slope = logfun(s)
            it += 1
            if val < target:
                lo = (s, val)
                break
            hi = (s, val)
            if it > max_iter:
                raise RuntimeError("bracketing failed")
    a, b = lo[0], hi[0]
    for _ in range(max_iter):
        if abs(np.expm1(val - target)) <= tol:
            return s, abs(np.expm1(val - target)), it
        s_new = s - (val - target) / slope if slope > 0 else 0.5 * (a + b)
        if not (a < s_new < b):
            s_new = 0.5 * (a + b)
        s = s_new
        val, slope = logfun(s)
        it += 1
        if val > target:
            b = s
        else:
            a = s
        if b - a < 1e-300:
            break
    return s, abs(np.expm1(val - target)), it


def normalize(v, p, G, domain=None, tol=1e-12):
    """Return t with ||g(t v)||_{L^p} = 1 (averaged norm; p may be inf)."""
    if isinstance(v, GridField):
        domain = v.domain
        V = v.values
    else:
        V = np.asarray(v, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
    if not np.any(V != 0.0):
        raise ValueError("cannot normalise the zero field")
    mw = domain.mean_weights
    # drop zero nodes: they contribute nothing and keep the arrays small
    keep = np.any(V != 0.0, axis=1)
    Vk, wk = V[keep], mw[keep]
    scale = 1.0 / float(np.max(np.abs(Vk)))
    s, res, it = increasing_root(lambda s: _log_norm_and_slope(G, Vk, scale * np.exp(s), p, wk),
                                 tol=tol)
    t = scale * np.exp(s)
    return NormalizationResult(float(t), float(res), int(it))


def rho(v: GridField, p, G, t):
    """rho_p(t) = mean g(t v)^p, or max g(t v) for p = inf."""
    val, _ = _log_norm_and_slope(G, v.values, t, p, v.domain.mean_weights)
    return float(np.exp(val * (1 if p == INF else p)))


def t_convergence_study(v, G, p_schedule):
    ps = list(p_schedule)
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValueError("schedule not increasing")
    return [normalize(v, p, G).t for p in ps]


def radial_inverse(G, N, level=1.0):
    """s > 0 with g(s e_1) = level, found by the same root finder."""
    e = np.zeros((1, N))
    e[0, 0] = 1.0

    def logfun(s):
        t = np.exp(s)
        g = float(G.value(t * e)[0])
        pair = float(np.dot(G.grad(t * e)[0], t * e[0]))
        return np.log(g), pair / g

    s, _, _ = increasing_root(logfun, target=np.log(level))
    return float(np.exp(s))
