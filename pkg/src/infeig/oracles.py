"""Reference solutions that do not go through the projected-descent solver.

* ``inverse_power_p2`` solves the p = 2 problem for f = g = |.|^2/2 in one
  dimension by the inverse power method for the 4-Laplacian, assembling its own
  cell differences.
* The cone family (1 - |x|/R) e on balls and intervals, with the explicit
  divergence-measure triple of the limit system.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi

import numpy as np
import scipy.optimize as so
import scipy.sparse as sp

from .discrete_calculus import DiscreteDomain, GridField


@dataclass
class PowerIterationResult:
    u: GridField
    J2: float
    rayleigh: float
    iterations: int
    converged: bool


def _cell_system(dom: DiscreteDomain):
    """Cell differences (u_{j+1} - u_j)/h on interior unknowns and cell weights.

    A cell between nodes j and j+1 inherits half the averaged weight of each
    endpoint, which is what the one-sided node samples assign to it.
    """
    if dom.n != 1:
        raise ValueError("the p = 2 oracle is one-dimensional")
    m = dom.num_nodes
    h = dom.h
    rows = np.repeat(np.arange(m - 1), 2)
    cols = np.column_stack([np.arange(m - 1), np.arange(1, m)]).ravel()
    vals = np.tile([-1.0 / h, 1.0 / h], m - 1)
    B = sp.csr_matrix((vals, (rows, cols)), shape=(m - 1, m))
    mw = dom.mean_weights
    cw = 0.5 * (mw[:-1] + mw[1:])
    inner = dom.interior_index
    return sp.csr_matrix(B[:, inner]), cw, mw[inner], inner


def inverse_power_p2(dom: DiscreteDomain, tol=1e-12, max_iter=500):
    """First eigenpair of the discrete 4-Laplacian: u <- argmin (1/4)|Dw|_4^4 - <u^3, w>."""
    B, cw, mw, inner = _cell_system(dom)
    x = 1.0 - np.abs(dom.nodes[inner, 0]) / (dom.extents[0] / 2.0)

    def rayleigh(v):
        return float(cw @ (B @ v) ** 4) / float(mw @ v ** 4)

    def inner_solve(b, w0):
        def fun(w):
            Dw = B @ w
            return 0.25 * float(cw @ Dw ** 4) - float(b @ w), B.T @ (cw * Dw ** 3) - b

        def hessp(w, v):
            Dw = B @ w
            return B.T @ (3.0 * cw * Dw ** 2 * (B @ v))

        # trust-krylov probes a degenerate step on its first iterate; harmless
        with np.errstate(invalid="ignore"):
            res = so.minimize(fun, w0, jac=True, hessp=hessp, method="trust-krylov",
                              options={"gtol": 1e-13 * max(1.0, np.abs(b).max())})
        return res.x

    x = x / float(mw @ x ** 4) ** 0.25
    R = rayleigh(x)
    converged = False
    for k in range(1, max_iter + 1):
        w = inner_solve(mw * x ** 3, x)
        x_new = w / float(mw @ w ** 4) ** 0.25
        R_new = rayleigh(x_new)
        done = abs(R_new - R) <= tol * R and np.max(np.abs(x_new - x)) <= 1e-8
        x, R = x_new, R_new
        if done:
            converged = True
            break
    # scale to ||g(u)||_2 = 1 with g = |u|^2/2: mean u^4 = 4
    U = np.zeros((dom.num_nodes, 1))
    U[inner, 0] = x * np.sqrt(2.0)
    return PowerIterationResult(GridField(dom, U), float(np.sqrt(R)), R, k, converged)


# -- cone -------------------------------------------------------------------------

def unit_ball_volume(n):
    return pi ** (n / 2) / gamma(n / 2 + 1)


def cone_profile(dom: DiscreteDomain):
    """1 - |x|/R on a ball, 1 - |x|/a on the interval (-a, a)."""
    if dom.kind == "ball":
        R = dom.extents[0]
    elif dom.kind == "interval":
        R = dom.extents[0] / 2.0
    else:
        raise ValueError("cone requires a ball or interval")
    r = np.linalg.norm(dom.nodes, axis=1)
    return np.where(dom.interior_mask, np.maximum(1.0 - r / R, 0.0), 0.0), R


def cone_field(dom: DiscreteDomain, N=1, height=1.0):
    prof, _ = cone_profile(dom)
    U = np.zeros((dom.num_nodes, N))
    U[:, 0] = height * prof
    return GridField(dom, U)


def cone_triple_residual(n, h, R=1.0, test_functions=None):
    """Weak residual of -div(D C mu) = (1/R) e delta_0 for the explicit cone triple.

    mu has density 1/(n alpha(n) |x|^(n-1)) (in one dimension the constant 1/2),
    D C = -(1/R) x/|x| (x) e and the right-hand side pairs with phi(0).  Plain
    (unaveraged) integrals, evaluated by the midpoint rule on cells of width h
    covering the ball; test functions are smooth with gradients given in closed
    form.  Returns the max over test functions of |lhs - rhs| / max(|rhs|, sup|D phi|).
    """
    if test_functions is None:
        test_functions = cone_test_functions(n, R)
    k = int(np.ceil(R / h))
    ax = h * (np.arange(-k, k) + 0.5)  # cell centres, symmetric, origin is a vertex
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    x = np.stack([m.ravel() for m in mesh], axis=1)
    r = np.linalg.norm(x, axis=1)
    keep = r < R
    x, r = x[keep], r[keep]
    if n == 1:
        density = np.full(r.size, 0.5)
    else:
        density = 1.0 / (n * unit_ball_volume(n) * r ** (n - 1))
    radial = x / r[:, None]
    vol = h ** n
    worst = 0.0
    for phi, dphi in test_functions:
        g = dphi(x)  # (m, n) gradient of the e-component
        lhs = float(np.sum(-(1.0 / R) * np.einsum("ki,ki->k", radial, g) * density) * vol)
        rhs = (1.0 / R) * float(phi(np.zeros((1, n)))[0])
        scale = max(abs(rhs), float(np.abs(g).max()))
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def cone_test_functions(n, R=1.0, count=10):
    """Polynomials times the bubble (R^2 - |x|^2), with analytic gradients."""
    specs = [(None, 0)]
    a = 0
    deg = 1
    while len(specs) < count:
        specs.append((a % n, deg))
        a += 1
        if a % n == 0:
            deg += 1
    out = []
    for axis, deg in specs[:count]:
        def phi(x, axis=axis, deg=deg):
            b = R ** 2 - (x ** 2).sum(axis=1)
            m = np.ones(len(x)) if axis is None else (1.0 + x[:, axis] / R) ** deg
            return b * m

        def dphi(x, axis=axis, deg=deg):
            b = R ** 2 - (x ** 2).sum(axis=1)
            m = np.ones(len(x)) if axis is None else (1.0 + x[:, axis] / R) ** deg
            g = -2.0 * x * m[:, None]
            if axis is not None:
                g[:, axis] += b * deg * (1.0 + x[:, axis] / R) ** (deg - 1) / R
            return g
        out.append((phi, dphi))
    return out
