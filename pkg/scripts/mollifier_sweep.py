"""Gradient-identity residual of K^eps against eps/h on the interval and the disc.

The quotient straddles the slope jump of the zero extension once the shifted
kernel leaves the domain, so the residual tracks (h/eps)|[Dv]| for the bubble
and drops for the squared bubble, whose extension is C^1.
"""
from dataclasses import dataclass

from infeig import DiscreteDomain, GridField
from infeig.discrete_calculus import bubble
from infeig.mollifier import gradient_identity_check, transversal_field


@dataclass
class Case:
    label: str
    domain: DiscreteDomain
    power: int


if __name__ == "__main__":
    cases = [Case("interval h=1/200", DiscreteDomain.interval(2.0, 1 / 200), 1),
             Case("interval h=1/200", DiscreteDomain.interval(2.0, 1 / 200), 2),
             Case("disc h=1/60", DiscreteDomain.ball(2, 1.0, 1 / 60), 1),
             Case("disc h=1/60", DiscreteDomain.ball(2, 1.0, 1 / 60), 2)]
    print(f"{'case':>18} {'field':>9} {'eps/h':>6} {'residual':>10} {'res/h':>7} {'shift':>8}")
    for c in cases:
        xi = transversal_field(c.domain)
        v = GridField(c.domain, bubble(c.domain) ** c.power)
        for m in (2, 3, 4, 8, 16):
            e = m * c.domain.h
            if e > xi.eps0:
                continue
            r = gradient_identity_check(v, e, xi)
            print(f"{c.label:>18} {'bubble^' + str(c.power):>9} {m:6d} {r.identity_residual:10.4g} "
                  f"{r.identity_residual / c.domain.h:7.2f} {r.measured_shift:8.4f}")
