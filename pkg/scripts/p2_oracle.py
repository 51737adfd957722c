"""solve_lp at p = 2 against the inverse power iteration for the discrete 4-Laplacian."""
import time

from infeig import DiscreteDomain, solve_lp
from infeig.densities import half_euclidean_f, half_euclidean_g
from infeig.oracles import inverse_power_p2

if __name__ == "__main__":
    F, G = half_euclidean_f(), half_euclidean_g()
    print(f"{'1/h':>6} {'J_2 solver':>14} {'J_2 oracle':>14} {'rel':>9} {'t_solve':>8} {'t_orc':>7}")
    for m in (50, 100, 200, 400):
        dom = DiscreteDomain.interval(2.0, 1.0 / m)
        t = time.perf_counter()
        s = solve_lp(dom, F, G, 2.0)
        t1 = time.perf_counter()
        o = inverse_power_p2(dom)
        t2 = time.perf_counter()
        print(f"{m:6d} {s.J_p:14.10f} {o.J2:14.10f} {abs(s.J_p - o.J2) / o.J2:9.2e} "
              f"{t1 - t:8.2f} {t2 - t1:7.2f}")
