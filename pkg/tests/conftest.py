import numpy as np
import pytest

from infeig import DiscreteDomain, geometric_schedule, half_euclidean_f, half_euclidean_g
from infeig import run_continuation
from infeig import measures as ms


@pytest.fixture(scope="session")
def FG():
    return half_euclidean_f(), half_euclidean_g()


@pytest.fixture(scope="session")
def interval():
    return DiscreteDomain.interval(2.0, 1 / 200)


@pytest.fixture(scope="session")
def cone_chain(interval, FG):
    """The 1D fixture chain p = 2 .. 1024, shared by every module test."""
    F, G = FG
    return run_continuation(interval, F, G, geometric_schedule(10))


@pytest.fixture(scope="session")
def cone_measures(cone_chain, FG):
    F, G = FG
    return [ms.build_measures(s, F, G) for s in cone_chain.solutions]


@pytest.fixture(scope="session")
def u_ref(cone_chain, FG):
    return ms.infinity_renormalised(cone_chain.final.u_p, FG[1])


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# -- acceptance lines ---------------------------------------------------------
# test_acceptance records one entry per checked item; the summary prints one
# PASS/FAIL line per criterion followed by its items.

ACCEPTANCE = {}


def record(criterion, item, passed, detail=""):
    """passed=None marks an informational line that does not enter the verdict."""
    ACCEPTANCE.setdefault(criterion, []).append((item, None if passed is None else bool(passed),
                                                 detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        items = ACCEPTANCE[k]
        ok = all(p for _, p, _ in items if p is not None)
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}")
        for item, p, detail in items:
            tag = "info" if p is None else ("ok" if p else "FAIL")
            tr.write_line(f"    [{tag}] {item}: {detail}")
