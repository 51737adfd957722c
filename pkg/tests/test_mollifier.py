import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infeig import DiscreteDomain, GridField
from infeig.discrete_calculus import bubble
from infeig.mollifier import (_smoothstep, bump_kernel, collar_cutoff, gradient_identity_check,
                              k_epsilon, kernel_for, property_suite, transversal_field,
                              zero_trace_check)
from infeig.oracles import cone_field

I1 = DiscreteDomain.interval(2.0, 0.01)
DISC = DiscreteDomain.ball(2, 1.0, 0.05)
BOX = DiscreteDomain.box((2.0, 2.0), 0.05)


def test_smoothstep_ends_flat():
    s = np.array([-1.0, 0.0, 1.0, 2.0])
    np.testing.assert_array_equal(_smoothstep(s), [0.0, 0.0, 1.0, 1.0])
    assert np.all(np.diff(_smoothstep(np.linspace(0, 1, 101))) >= 0)


def test_cutoff_is_one_at_boundary_and_zero_inside():
    r0 = 0.25
    assert collar_cutoff(np.array([0.0]), r0)[0] == 1.0
    assert collar_cutoff(np.array([r0]), r0)[0] == 1.0
    assert collar_cutoff(np.array([2 * r0]), r0)[0] == 0.0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_kernel_is_a_symmetric_probability(n):
    K = bump_kernel(n, 0.125)
    assert K.mass == pytest.approx(1.0, rel=1e-14)
    np.testing.assert_allclose(K.weights @ K.points, 0.0, atol=1e-14)
    assert np.all(np.linalg.norm(K.points, axis=1) < 1.0)


@pytest.mark.parametrize("dom", [I1, DISC, BOX], ids=["interval", "disc", "box"])
def test_field_points_outward_with_unit_normal_component(dom):
    xi = transversal_field(dom)
    if dom.kind == "ball":
        t = np.linspace(0, 2 * np.pi, 17)
        x = 0.999999 * np.column_stack([np.cos(t), np.sin(t)])
        normal = x / np.linalg.norm(x, axis=1)[:, None]
    else:
        half = np.array(dom.extents) / 2
        x = np.diag(half * 0.999999)
        normal = np.eye(dom.n)
    np.testing.assert_allclose(np.einsum("ki,ki->k", xi.value(x), normal), 1.0, atol=1e-5)
    deep = np.zeros((1, dom.n))
    assert np.all(xi.value(deep) == 0)


@pytest.mark.parametrize("dom", [I1, DISC, BOX], ids=["interval", "disc", "box"])
def test_field_jacobian_matches_differences(dom, rng):
    xi = transversal_field(dom)
    scale = dom.inradius
    x = rng.uniform(-0.95 * scale, 0.95 * scale, (40, dom.n))
    if dom.kind == "ball":
        x = x[np.linalg.norm(x, axis=1) < 0.95]
    J = xi.jacobian(x)
    d = 1e-6
    for a in range(dom.n):
        e = np.zeros(dom.n)
        e[a] = d
        fd = (xi.value(x + e) - xi.value(x - e)) / (2 * d)
        np.testing.assert_allclose(J[:, :, a], fd, atol=1e-5)
    assert np.abs(J).max() <= xi.Dxi_bound * np.sqrt(dom.n) + 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([2.0, 3.0, 5.0]))
def test_zero_trace_is_exact_for_any_field(seed, mult):
    rng = np.random.default_rng(seed)
    dom = DiscreteDomain.interval(2.0, 0.02)
    v = GridField(dom, np.where(dom.interior_mask, rng.standard_normal(dom.num_nodes), 0.0))
    assert zero_trace_check(v, mult * dom.h).passed


FINE_DISC = DiscreteDomain.ball(2, 1.0, 1 / 60)


def test_zero_trace_on_disc(rng):
    d = FINE_DISC
    v = GridField(d, np.where(d.interior_mask[:, None], rng.standard_normal((d.num_nodes, 2)), 0.0))
    assert zero_trace_check(v, 2 * d.h).passed


def test_linear_data_reproduced_away_from_collar():
    dom = I1
    v = GridField(dom, np.where(dom.interior_mask, 0.3 + dom.nodes[:, 0], 0.0))
    Kv = k_epsilon(v, 4 * dom.h)
    core = np.abs(dom.nodes[:, 0]) < 0.4  # xi vanishes for |x| < 1 - 2 r0 = 0.5
    np.testing.assert_allclose(Kv.values[core], v.values[core], atol=1e-12)


def test_eps_range_enforced():
    v = GridField(I1, bubble(I1))
    with pytest.raises(ValueError):
        k_epsilon(v, 1.5 * I1.h)
    with pytest.raises(ValueError):
        k_epsilon(v, 0.2)


def test_kernel_resolution_follows_eps():
    assert len(kernel_for(I1, 4 * I1.h).points) == 16
    assert len(kernel_for(I1, 4 * I1.h, fine=True).points) == 32


@pytest.mark.parametrize("eps_mult", [4, 8, 16])
def test_gradient_identity_on_smooth_field(eps_mult):
    dom = DiscreteDomain.interval(2.0, 0.005)
    v = GridField(dom, bubble(dom))
    rep = gradient_identity_check(v, eps_mult * dom.h)
    assert rep.passed, rep.summary()


def test_gradient_identity_on_disc():
    # squared bubble: C^1 across the boundary, so the zero extension has no slope jump
    v = GridField(FINE_DISC, bubble(FINE_DISC) ** 2)
    rep = gradient_identity_check(v, 4 * FINE_DISC.h)
    assert rep.passed, rep.summary()


def test_suite_on_cone(FG):
    dom = DiscreteDomain.interval(2.0, 0.005)
    v = cone_field(dom) * np.sqrt(2.0)
    reps = property_suite(v, [4 * dom.h, 8 * dom.h, 16 * dom.h], *FG)
    bad = [r.summary() for r in reps if not r.passed]
    assert not bad, "\n".join(bad)
