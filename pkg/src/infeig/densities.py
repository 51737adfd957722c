"""Gradient densities f on R^{N x n}, constraint densities g on R^N, and a sampling validator.

Arrays are vectorised over leading axes: f acts on (..., N, n), g on (..., N).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .diagnostics import DiagnosticsReport


@dataclass(frozen=True, eq=False)
class QuadraticTensor:
    """Fourth-order tensor A[a, i, b, j] with its symmetric part and spectrum."""

    A: np.ndarray
    SA: np.ndarray = field(init=False, repr=False)
    spectrum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 4 or A.shape[:2] != A.shape[2:]:
            raise ValueError("tensor must have shape (N, n, N, n)")
        SA = 0.5 * (A + A.transpose(2, 3, 0, 1))
        N, n = A.shape[:2]
        eig = np.linalg.eigvalsh(SA.reshape(N * n, N * n))
        if eig[0] <= 0:
            raise ValueError(f"symmetric part not positive definite (min eig {eig[0]:.3g})")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "SA", SA)
        object.__setattr__(self, "spectrum", eig)

    @classmethod
    def identity(cls, N, n, scale=1.0):
        I = np.einsum("ab,ij->aibj", np.eye(N), np.eye(n))
        return cls(scale * I)

    @property
    def shape(self):
        return self.A.shape[:2]


@dataclass(frozen=True, eq=False)
class DensityF:
    """f(X) = A:X(x)X (kind 'quadratic'), c|X|^2 ('scaled_euclidean') or user callbacks."""

    kind: str
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C6: float
    alpha: float
    beta: float
    c: float = 0.5
    tensor: Optional[QuadraticTensor] = None
    value_fn: Optional[Callable] = field(default=None, repr=False)
    grad_fn: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("quadratic", "scaled_euclidean", "callback"):
            raise ValueError(f"unknown f kind {self.kind!r}")
        if min(self.C1, self.C2, self.C4, self.C5) <= 0 or self.C3 < 0 or self.C6 < 0:
            raise ValueError("hypothesis constants must be positive")
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1")
        if self.kind == "quadratic" and self.tensor is None:
            raise ValueError("quadratic density needs a tensor")

    # built-ins
    @classmethod
    def scaled_euclidean(cls, c=0.5, C6=1e-9):
        # |df| = 2c|X| = 2 sqrt(c) f^(1/2), f = c|X|^2
        return cls("scaled_euclidean", 2.0, 2.0, 0.0, c, max(c, 2.0 * np.sqrt(c)), C6,
                   2.0, 0.5, c=c)

    @classmethod
    def quadratic(cls, tensor, C6=1e-9):
        if not isinstance(tensor, QuadraticTensor):
            tensor = QuadraticTensor(tensor)
        lo, hi = tensor.spectrum[0], tensor.spectrum[-1]
        return cls("quadratic", 2.0, 2.0, 0.0, lo, max(hi, 2.0 * hi / np.sqrt(lo)), C6,
                   2.0, 0.5, tensor=tensor)

    @classmethod
    def callback(cls, value_fn, grad_fn, **constants):
        return cls("callback", value_fn=value_fn, grad_fn=grad_fn, **constants)

    def with_constants(self, **kw):
        d = {k: getattr(self, k) for k in
             ("kind", "C1", "C2", "C3", "C4", "C5", "C6", "alpha", "beta", "c",
              "tensor", "value_fn", "grad_fn")}
        d.update(kw)
        return DensityF(**d)

    @property
    def c0(self):
        """Smallest eigenvalue of the symmetric part (coercivity of f)."""
        if self.kind == "quadratic":
            return float(self.tensor.spectrum[0])
        if self.kind == "scaled_euclidean":
            return float(self.c)
        raise ValueError("c0 is only defined for quadratic densities")

    def value(self, X):
        X = np.asarray(X, dtype=float)
        if self.kind == "scaled_euclidean":
            return self.c * np.einsum("...ai,...ai->...", X, X)
        if self.kind == "quadratic":
            return np.einsum("...ai,aibj,...bj->...", X, self.tensor.SA, X)
        return np.asarray(self.value_fn(X), dtype=float)

    def grad(self, X):
        X = np.asarray(X, dtype=float)
        if self.kind == "scaled_euclidean":
            return 2.0 * self.c * X
        if self.kind == "quadratic":
            # A:((.)(x)X + X(x)(.)) = (A + A^T) X = 2 SA X
            return 2.0 * np.einsum("aibj,...bj->...ai", self.tensor.SA, X)
        return np.asarray(self.grad_fn(X), dtype=float)


@dataclass(frozen=True, eq=False)
class DensityG:
    """g(eta) = c|eta|^2 ('scaled_euclidean') or (B:eta(x)eta)^(2 gamma) ('power_of_quadratic')."""

    kind: str
    C7: float
    C8: float
    c: float = 0.5
    B: Optional[np.ndarray] = None
    gamma: float = 0.5
    value_fn: Optional[Callable] = field(default=None, repr=False)
    grad_fn: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("scaled_euclidean", "power_of_quadratic", "callback"):
            raise ValueError(f"unknown g kind {self.kind!r}")
        if min(self.C7, self.C8) <= 0:
            raise ValueError("C7, C8 must be positive")
        if self.kind == "power_of_quadratic":
            B = np.atleast_2d(np.asarray(self.B, dtype=float))
            SB = 0.5 * (B + B.T)
            if np.linalg.eigvalsh(SB)[0] <= 0:
                raise ValueError("symmetric part of B must be positive definite")
            if self.gamma <= 0:
                raise ValueError("gamma must be positive")
            object.__setattr__(self, "B", SB)

    @classmethod
    def scaled_euclidean(cls, c=0.5):
        return cls("scaled_euclidean", 2.0, 2.0, c=c)

    @classmethod
    def power_of_quadratic(cls, B, gamma):
        return cls("power_of_quadratic", 4.0 * gamma, 4.0 * gamma, B=B, gamma=gamma)

    @classmethod
    def callback(cls, value_fn, grad_fn, C7, C8):
        return cls("callback", C7, C8, value_fn=value_fn, grad_fn=grad_fn)

    def with_constants(self, **kw):
        d = {k: getattr(self, k) for k in
             ("kind", "C7", "C8", "c", "B", "gamma", "value_fn", "grad_fn")}
        d.update(kw)
        return DensityG(**d)

    def _q(self, eta):
        return np.einsum("...a,ab,...b->...", eta, self.B, eta)

    def value(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == "scaled_euclidean":
            return self.c * np.einsum("...a,...a->...", eta, eta)
        if self.kind == "power_of_quadratic":
            return self._q(eta) ** (2.0 * self.gamma)
        return np.asarray(self.value_fn(eta), dtype=float)

    def grad(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == "scaled_euclidean":
            return 2.0 * self.c * eta
        if self.kind == "power_of_quadratic":
            q = self._q(eta)
            e = 2.0 * self.gamma - 1.0
            with np.errstate(divide="ignore", invalid="ignore"):
                qe = np.where(q > 0, np.abs(q) ** e, 0.0)
            return 4.0 * self.gamma * qe[..., None] * np.einsum("ab,...b->...a", self.B, eta)
        return np.asarray(self.grad_fn(eta), dtype=float)

    def sup_grad_on_sublevel(self, level=1.0):
        """sup |dg| over {g <= level}, closed form for the built-ins."""
        if self.kind == "scaled_euclidean":
            return 2.0 * self.c * np.sqrt(level / self.c)
        if self.kind == "power_of_quadratic":
            # |dg| = 4 gamma q^(2gamma-1) |B eta| <= 4 gamma q^(2gamma-1/2) sqrt(lmax)
            if 2.0 * self.gamma < 0.5:
                return np.inf
            lmax = np.linalg.eigvalsh(self.B)[-1]
            qmax = level ** (1.0 / (2.0 * self.gamma))
            return 4.0 * self.gamma * qmax ** (2.0 * self.gamma - 0.5) * np.sqrt(lmax)
        raise ValueError("no closed form for callback densities")


def half_euclidean_f():
    """f = |X|^2/2 with (C1..C6) = (2, 2, 0, 1/2, sqrt 2, 1e-9), alpha = 2, beta = 1/2."""
    return DensityF.scaled_euclidean(0.5)


def half_euclidean_g():
    return DensityG.scaled_euclidean(0.5)


def kappa(F: DensityF, G: DensityG):
    return G.C8 / F.C1


def _random_directions(rng, shape, count):
    Z = rng.standard_normal((count,) + shape)
    norms = np.sqrt((Z.reshape(count, -1) ** 2).sum(axis=1))
    return Z / norms.reshape((count,) + (1,) * len(shape))


def validate_hypotheses(F: DensityF, G: DensityG, N, n, sample_count=4000, seed=0,
                        slack=1e-9):
    """Monte-Carlo check of the structural inequalities on radii 1e-3 .. 1e3.

    Each check reports the worst ratio lhs/rhs of its inequality; ratios above
    1 + slack are violations.
    """
    if sample_count < 1000:
        raise ValueError("sample_count must be at least 1000")
    rng = np.random.default_rng(seed)
    radii = 10.0 ** rng.uniform(-3, 3, sample_count)
    X = _random_directions(rng, (N, n), sample_count) * radii[:, None, None]
    eta = _random_directions(rng, (N,), sample_count) * radii[:, None]

    f = F.value(X)
    df = F.grad(X)
    pair = np.einsum("kai,kai->k", df, X)
    absX = radii
    absdf = np.sqrt(np.einsum("kai,kai->k", df, df))
    g = G.value(eta)
    pg = np.einsum("ka,ka->k", G.grad(eta), eta)

    rep = DiagnosticsReport("hypotheses")

    def ratio(name, lhs, rhs):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 1.0))
        worst = float(np.max(r))
        rep.add(name, worst, 1.0 + slack, worst <= 1.0 + slack)

    ratio("C1 f <= df:X", F.C1 * f, pair)
    ratio("df:X <= C2 f", pair, F.C2 * f)
    ratio("C4|X|^a - C3 <= f", F.C4 * absX ** F.alpha - F.C3, f)
    ratio("f <= C5|X|^a + C6", f, F.C5 * absX ** F.alpha + F.C6)
    ratio("|df| <= C5 f^b + C6", absdf, F.C5 * f ** F.beta + F.C6)
    ratio("C7 g <= dg.eta", G.C7 * g, pg)
    ratio("dg.eta <= C8 g", pg, G.C8 * g)
    return rep
