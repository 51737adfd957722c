"""Du* agreement and undefined fraction as h shrinks, on the 1D chain and on a smooth bubble."""
import argparse
from dataclasses import dataclass, field

from infeig import DiscreteDomain, GridField, geometric_schedule, run_continuation
from infeig import measures as ms
from infeig.densities import half_euclidean_f, half_euclidean_g
from infeig.discrete_calculus import bubble


@dataclass
class Experiment:
    inverse_h: list = field(default_factory=lambda: [100, 200, 400, 1000])
    k_max: int = 10


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--inverse-h", type=int, nargs="+", default=Experiment().inverse_h)
    cfg = Experiment(ap.parse_args().inverse_h)
    F, G = half_euclidean_f(), half_euclidean_g()
    print(f"{'1/h':>6} {'agree(u_inf)':>13} {'undef':>7} {'mu-undef':>9} {'agree(bubble)':>14}")
    for m in cfg.inverse_h:
        dom = DiscreteDomain.interval(2.0, 1.0 / m)
        tr = run_continuation(dom, F, G, geometric_schedule(cfg.k_max))
        u = ms.infinity_renormalised(tr.final.u_p, G)
        ds = ms.build_du_star(u)
        mu = ms.build_measures(tr.final, F, G)[0]
        mu_undef = mu.node_masses()[ds.undefined_mask].sum() / mu.total_mass
        b = GridField(dom, bubble(dom))
        print(f"{m:6d} {ds.agreement(u):13.4f} {ds.undefined_lebesgue():7.4f} {mu_undef:9.4f} "
              f"{ms.build_du_star(b).agreement(b):14.4f}")


if __name__ == "__main__":
    main()
