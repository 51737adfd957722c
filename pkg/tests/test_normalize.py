import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infeig import DiscreteDomain, GridField, lp_mean_norm, normalize
from infeig.densities import DensityG, half_euclidean_g
from infeig.discrete_calculus import bubble
from infeig.normalize import radial_inverse, rho, t_convergence_study

D = DiscreteDomain.interval(2.0, 0.02)
B = GridField(D, bubble(D))
EXPONENTS = st.one_of(st.floats(2, 1e5), st.just(np.inf))


def _constraint(v, p, G):
    return lp_mean_norm(G.value(v.values), p, v.domain)


@settings(max_examples=80, deadline=None)
@given(EXPONENTS, st.floats(1e-6, 1e6))
def test_residual_below_1e12(p, c):
    G = half_euclidean_g()
    res = normalize(B * c, p, G)
    assert res.residual <= 1e-12
    assert _constraint(B * (c * res.t), p, G) == pytest.approx(1.0, rel=1e-11)


@settings(max_examples=60, deadline=None)
@given(EXPONENTS, st.floats(1e-4, 1e4))
def test_scale_equivariance(p, c):
    G = half_euclidean_g()
    t1 = normalize(B, p, G).t
    tc = normalize(B * c, p, G).t
    assert tc * c == pytest.approx(t1, rel=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.floats(2, 4096), st.floats(0.6, 2.0))
def test_non_homogeneous_constraint(p, gamma):
    G = DensityG.power_of_quadratic(np.eye(2), gamma)
    v = GridField(D, np.column_stack([bubble(D), 0.3 * bubble(D) * D.nodes[:, 0]]))
    t = normalize(v, p, G).t
    assert _constraint(v * t, p, G) == pytest.approx(1.0, rel=1e-11)


def test_t_decreases_towards_the_sup_scaling():
    G = half_euclidean_g()
    ts = t_convergence_study(B, G, [2, 8, 64, 1024, np.inf])
    assert all(b <= a * (1 + 1e-12) for a, b in zip(ts, ts[1:]))
    assert ts[-1] == pytest.approx(np.sqrt(2.0), rel=1e-12)  # g = |u|^2/2, max u = 1


def test_rho_at_solution_is_one():
    G = half_euclidean_g()
    t = normalize(B, 16, G).t
    assert rho(B, 16, G, t) == pytest.approx(1.0, rel=1e-11)


def test_zero_field_rejected():
    with pytest.raises(ValueError):
        normalize(D.zeros(), 4, half_euclidean_g())


def test_radial_inverse():
    assert radial_inverse(half_euclidean_g(), 2) == pytest.approx(np.sqrt(2.0), rel=1e-12)
