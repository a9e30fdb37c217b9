"""Level-set test function on windows starting at t0 > 0.

The auxiliary potential restarts from zero at t0, so the start slice of the
test function is -eps Lambda^beta + sup(-phi_tilde(t0)) - s.  This prints it,
and the window maximum, over a grid of (t0, s).
"""

import argparse

import numpy as np

from mafl import auxflows as aux
from mafl import estimates as est
from mafl import flow, functionals as fn, torus
from mafl.operators import OperatorSpec, ThetaProfile


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=32)
    ap.add_argument("--T", type=float, default=2.0)
    args = ap.parse_args()

    g = torus.make_grid(1, args.N)
    F = g.field(lambda x, y: 0.3 * np.cos(2 * np.pi * x) + 0.2 * np.cos(4 * np.pi * y + 0.5) + 0.1 * np.cos(2 * np.pi * (x + y)))
    src = flow.make_source(F, 4.0)
    run = flow.run_flow(g.zeros(), src, OperatorSpec("monge_ampere", 1), ThetaProfile("log"), args.T, 0.125)
    phit = run.normalized()
    C4 = fn.c4_constant(1, fn.c3_constant(g, src.K))
    tol = est.lemma31_tolerance(phit)
    print(f"tolerance {tol:.3e}")
    print("t0,s_frac,s,start_value,window_max,pass")
    for t0 in np.arange(0.0, args.T - 1 + 1e-9, 0.25):
        win = phit.window(t0, t0 + 1)
        top = float((-win.slices).max())
        for frac in (0.0, 0.5, 0.9):
            s = frac * top
            try:
                w = aux.build_weight(phit, src, "level_set", float(t0), s=s, k=100)
            except aux.EmptySupport:
                continue
            a = aux.run_aux(w)
            k = est.constants31(1, w.A, C4)
            rec = est.check_lemma31(a.window_trajectory(), phit.window(w.t0, w.t1), s, k)
            print(f"{t0:g},{frac:g},{s:.5f},{rec.params['slice_max'][0]:.5f},{rec.lhs:.5f},{rec.passed}")


if __name__ == "__main__":
    main()
