import numpy as np
import pytest

from infeig import DiscreteDomain, geometric_schedule, half_euclidean_f, half_euclidean_g
from infeig import run_continuation
from infeig.continuation import (aitken, chain_report, energy_inequality_check, lambda_bounds,
                                 multiplier_sandwich_check)
from infeig.oracles import cone_field


def test_geometric_schedule():
    assert geometric_schedule(10) == [2.0 ** k for k in range(1, 11)]


def test_schedule_must_increase(interval, FG):
    with pytest.raises(ValueError, match="schedule not increasing"):
        run_continuation(interval, *FG, [8, 4])


def test_chain_converges_at_every_p(cone_chain):
    assert cone_chain.complete
    assert chain_report(cone_chain).passed


def test_Lambda_decreases_to_a_limit(cone_chain):
    L = cone_chain.Lambdas()
    assert np.all(np.diff(L) < 0)
    assert abs(L[-1] - L[-2]) < abs(L[1] - L[0])
    gaps = cone_chain.cauchy_gaps
    assert gaps[-1] < gaps[0]


def test_bracket_contains_limit(cone_chain, interval, FG):
    lo, hi = lambda_bounds(interval, *FG)
    assert lo == pytest.approx(0.0625)
    assert hi == pytest.approx(2 * np.sqrt(2), rel=1e-6)
    assert lo <= cone_chain.Lambda_infty_estimate <= hi


def test_sandwich(cone_chain):
    assert multiplier_sandwich_check(cone_chain, rel=1e-8).passed


def test_energy_inequality_against_cone(cone_chain, interval):
    assert energy_inequality_check(cone_chain, [cone_field(interval)]).passed


def test_aitken_exact_on_geometric_sequence():
    x = [1 + 0.5 ** k for k in range(3)]
    assert aitken(x) == pytest.approx(1.0)
    assert np.isnan(aitken([1.0]))


def test_callback_sees_every_solve():
    dom = DiscreteDomain.interval(2.0, 0.05)
    seen = []
    run_continuation(dom, half_euclidean_f(), half_euclidean_g(), [2, 4, 8],
                     callback=lambda s: seen.append(s.p))
    assert seen == [2, 4, 8]
