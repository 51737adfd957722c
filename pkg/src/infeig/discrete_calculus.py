"""Structured grids, zero-trace fields, the discrete gradient and averaged L^p norms.

Every domain is a uniform tensor lattice centred at the origin.  The ball is a
masked box.  Node arrays are flattened in C order, so a scalar field is a
vector of length ``num_nodes`` and a vector field has shape ``(num_nodes, N)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from math import gamma, pi

import numpy as np
import scipy.sparse as sp

INF = np.inf
KINDS = ("interval", "box", "ball")


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _axis_grid(half, h):
    m = int(round(2.0 * half / h))
    if m < 2 or abs(m * h - 2.0 * half) > 1e-9 * max(half, 1.0):
        raise ValueError(f"extent {2 * half} is not a multiple of h={h}")
    return np.linspace(-half, half, m + 1)


def _trapezoid(x, h):
    w = np.full(x.size, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """Uniform lattice on an interval, box or ball, with mask and quadrature."""

    kind: str
    n: int
    extents: tuple  # full side lengths (interval/box) or (R,) for the ball
    h: float
    axes: tuple = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    interior_mask: np.ndarray = field(repr=False)
    boundary_distance: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)

    # -- constructors -------------------------------------------------------
    @classmethod
    def interval(cls, length=2.0, h=0.01):
        return cls.box((length,), h, _kind="interval")

    @classmethod
    def box(cls, lengths, h, _kind="box"):
        lengths = tuple(float(L) for L in lengths)
        axes = tuple(_axis_grid(L / 2.0, h) for L in lengths)
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        half = np.array(lengths) / 2.0
        dist = np.min(half - np.abs(nodes), axis=1)
        tol = 1e-12 * max(lengths)
        interior = dist > tol
        dist = np.where(interior, dist, 0.0)
        w = _trapezoid(axes[0], h)
        for ax in axes[1:]:
            w = np.multiply.outer(w, _trapezoid(ax, h))
        return cls(_kind, len(lengths), lengths, float(h), axes,
                   _readonly(nodes), _readonly(interior), _readonly(dist),
                   _readonly(np.asarray(w, dtype=float).ravel()))

    @classmethod
    def ball(cls, n, R=1.0, h=0.05):
        R = float(R)
        k = int(np.ceil(R / h - 1e-9)) + 1
        ax = h * np.arange(-k, k + 1)
        axes = (ax,) * n
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        r = np.linalg.norm(nodes, axis=1)
        signed = R - r
        interior = signed > 1e-12 * R
        # cut cells: linear clipped fraction of the cell's width along the normal
        with np.errstate(invalid="ignore", divide="ignore"):
            nu = np.where(r[:, None] > 0, nodes / r[:, None], 0.0)
        width = h * np.maximum(np.abs(nu).sum(axis=1), 1.0)
        frac = np.clip(0.5 + signed / width, 0.0, 1.0)
        w = frac * h ** n
        dist = np.where(interior, signed, 0.0)
        return cls("ball", n, (R,), float(h), axes, _readonly(nodes),
                   _readonly(interior), _readonly(dist), _readonly(w))

    # -- geometry -----------------------------------------------------------
    @property
    def shape(self):
        return tuple(a.size for a in self.axes)

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @cached_property
    def interior_index(self):
        return np.flatnonzero(self.interior_mask)

    @cached_property
    def volume(self):
        """Quadrature volume; the averaged integrals divide by this."""
        return float(self.quad_weights.sum())

    @property
    def analytic_volume(self):
        if self.kind == "ball":
            R = self.extents[0]
            return pi ** (self.n / 2) / gamma(self.n / 2 + 1) * R ** self.n
        return float(np.prod(self.extents))

    @property
    def diameter(self):
        if self.kind == "ball":
            return 2.0 * self.extents[0]
        return float(np.linalg.norm(self.extents))

    @property
    def inradius(self):
        """Radius of the largest open ball contained in the domain."""
        if self.kind == "ball":
            return self.extents[0]
        return 0.5 * min(self.extents)

    @cached_property
    def mean_weights(self):
        """Weights of the averaged integral, w_i / |Omega|."""
        return _readonly(self.quad_weights / self.volume)

    @cached_property
    def orientations(self):
        """Sign patterns selecting forward (+1) or backward (-1) differences per axis."""
        return np.array(list(product((1, -1), repeat=self.n)), dtype=int)

    @property
    def num_samples(self):
        return 2 ** self.n

    @cached_property
    def difference_operators(self):
        """{(axis, side): sparse one-sided difference matrix}."""
        return {(a, s): _shift_operator(self, a, s) for a in range(self.n) for s in (1, -1)}

    @cached_property
    def sample_weights(self):
        """Averaged quadrature weight of each (node, orientation) gradient sample."""
        w = np.repeat(self.mean_weights[:, None], self.num_samples, axis=1) / self.num_samples
        return _readonly(w)

    @cached_property
    def boundary_ring(self):
        """Interior nodes with a non-interior lattice neighbour."""
        ring = np.zeros(self.num_nodes, dtype=bool)
        mask = self.interior_mask.reshape(self.shape)
        for a in range(self.n):
            for s in (1, -1):
                nb = np.roll(mask, s, axis=a)
                edge = [slice(None)] * self.n
                edge[a] = 0 if s == 1 else -1
                nb[tuple(edge)] = False
                ring |= (mask & ~nb).ravel()
        return _readonly(ring)

    def zeros(self, N=1):
        return GridField(self, np.zeros((self.num_nodes, N)))

    def field_from(self, fn, N=None):
        """Sample ``fn(nodes) -> (num_nodes,) or (num_nodes, N)`` with zero trace."""
        vals = np.asarray(fn(self.nodes), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if N is not None and vals.shape[1] != N:
            vals = np.repeat(vals, N, axis=1) if vals.shape[1] == 1 else vals
        vals = np.where(self.interior_mask[:, None], vals, 0.0)
        return GridField(self, vals)


def _shift_operator(dom: DiscreteDomain, a: int, side: int):
    """One-sided difference along axis a: side=+1 forward, side=-1 backward.

    Neighbours beyond the lattice edge read as zero (zero exterior extension).
    """
    shape = dom.shape
    idx = np.arange(dom.num_nodes).reshape(shape)
    nb = np.roll(idx, -side, axis=a)
    valid = np.ones(shape, dtype=bool)
    edge = [slice(None)] * dom.n
    edge[a] = -1 if side == 1 else 0
    valid[tuple(edge)] = False
    i, j, ok = idx.ravel(), nb.ravel(), valid.ravel()
    h = dom.h
    rows = np.concatenate([i, i[ok]])
    cols = np.concatenate([i, j[ok]])
    vals = np.concatenate([np.full(i.size, -side / h), np.full(ok.sum(), side / h)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(dom.num_nodes, dom.num_nodes))


@dataclass(frozen=True, eq=False)
class GridField:
    """Vector field u: nodes -> R^N, zero at every non-interior node."""

    domain: DiscreteDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.domain.num_nodes:
            raise ValueError("field length does not match the domain")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite values")
        if np.any(v[~self.domain.interior_mask] != 0.0):
            raise ValueError("field must vanish at non-interior nodes")
        object.__setattr__(self, "values", _readonly(v.copy()))

    @property
    def N(self):
        return self.values.shape[1]

    def __mul__(self, s):
        return GridField(self.domain, self.values * float(s))

    __rmul__ = __mul__

    def __add__(self, other):
        return GridField(self.domain, self.values + other.values)

    def __sub__(self, other):
        return GridField(self.domain, self.values - other.values)

    def norm_inf(self):
        return float(np.max(np.linalg.norm(self.values, axis=1)))


@dataclass(frozen=True, eq=False)
class GradientField:
    """Gradient samples, shape (num_nodes, 2^n, N, n).

    Sample k at node i uses forward or backward differences per axis according
    to ``domain.orientations[k]``.  ``node_values`` averages the samples, which
    gives the centred difference quotient.
    """

    domain: DiscreteDomain
    values: np.ndarray

    @property
    def node_values(self):
        return self.values.mean(axis=1)

    def frobenius(self):
        return np.sqrt(np.einsum("ksai,ksai->ks", self.values, self.values))

    def sup_norm(self):
        return float(self.frobenius().max())


def gradient_array(dom: DiscreteDomain, U):
    """Raw (num_nodes, 2^n, N, n) gradient samples of a (num_nodes, N) array."""
    ops = dom.difference_operators
    per_axis = {(a, s): ops[a, s] @ U for a in range(dom.n) for s in (1, -1)}
    out = np.empty((dom.num_nodes, dom.num_samples, U.shape[1], dom.n))
    for k, signs in enumerate(dom.orientations):
        for a, s in enumerate(signs):
            out[:, k, :, a] = per_axis[a, s]
    return out


def gradient_adjoint(dom: DiscreteDomain, G):
    """Transpose of ``gradient_array``: (num_nodes, 2^n, N, n) -> (num_nodes, N)."""
    ops = dom.difference_operators
    out = 0.0
    for a in range(dom.n):
        for s in (1, -1):
            sel = dom.orientations[:, a] == s
            out = out + ops[a, s].T @ G[..., a][:, sel].sum(axis=1)
    return out


def gradient(u: GridField) -> GradientField:
    return GradientField(u.domain, gradient_array(u.domain, u.values))


def _mean_weights_for(values, domain):
    if values.ndim == 2 and values.shape == (domain.num_nodes, domain.num_samples):
        return domain.sample_weights  # a density evaluated on gradient samples
    return domain.mean_weights


def lp_mean_norm(values, p, domain: DiscreteDomain):
    """Averaged L^p norm M (sum_i w_i/|Omega| (v_i/M)^p)^(1/p), M = max v.

    ``values`` is either one value per node or one per gradient sample,
    shape (num_nodes, 2^n).
    """
    v = np.asarray(values, dtype=float)
    if not p >= 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    if np.any(v < 0):
        raise ValueError("lp_mean_norm expects nonnegative values")
    M = float(v.max()) if v.size else 0.0
    if M == 0.0:
        return 0.0
    if p == INF:
        return M
    s = float(np.sum(_mean_weights_for(v, domain) * (v / M) ** p))
    return M * s ** (1.0 / p)


def log_lp_mean_norm(values, p, domain: DiscreteDomain):
    """log of lp_mean_norm; -inf for the zero field."""
    n = lp_mean_norm(values, p, domain)
    return np.log(n) if n > 0 else -np.inf


def monotonicity_check(values, p_list, domain, rel=1e-12):
    norms = [lp_mean_norm(values, p, domain) for p in p_list]
    return all(b >= a * (1.0 - rel) for a, b in zip(norms, norms[1:]))


def bubble(domain: DiscreteDomain):
    """Smooth nonnegative profile vanishing on the boundary, max 1 at the centre."""
    x = domain.nodes
    if domain.kind == "ball":
        R = domain.extents[0]
        b = 1.0 - (x ** 2).sum(axis=1) / R ** 2
    else:
        half = np.array(domain.extents) / 2.0
        b = np.prod(1.0 - (x / half) ** 2, axis=1)
    return np.where(domain.interior_mask, np.maximum(b, 0.0), 0.0)


def polynomial_test_fields(domain: DiscreteDomain, N=1, count=10):
    """Bubble times low-degree monomials, cycling through the N components."""
    x = domain.nodes / (domain.diameter / 2.0)
    b = bubble(domain)
    # distinct monomials in graded order: 1, x_a, then degree 2, ...
    monos = []
    deg = 0
    while len(monos) < count:
        exps = [e for e in product(range(deg + 1), repeat=domain.n) if sum(e) == deg]
        for e in sorted(exps, reverse=True):
            monos.append(np.prod(x ** np.array(e), axis=1))
        deg += 1
    out = []
    for k, m in enumerate(monos[:count]):
        vals = np.zeros((domain.num_nodes, N))
        vals[:, k % N] = b * m
        out.append(GridField(domain, vals))
    return out


def w11_norm(phi: GridField):
    """Averaged W^{1,1} norm: mean |phi| + mean |D phi|."""
    dom = phi.domain
    Dphi = gradient_array(dom, phi.values)
    a = np.linalg.norm(phi.values, axis=1)
    b = np.sqrt(np.einsum("ksai,ksai->ks", Dphi, Dphi))
    return float(dom.mean_weights @ a + np.sum(dom.sample_weights * b))
