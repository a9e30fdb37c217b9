"""Parabolic ABP check on u = t (1 - |x|^2): both sides, under refinement and scaling."""

import argparse

from mafl import estimates as est


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=2)
    args = ap.parse_args()

    # u_t |det D^2 u| = (1 - r^2) (2t)^m
    exact = 2**args.m / (args.m + 1) * est.unit_ball_volume(args.m) * 2 / (args.m + 2)
    print(f"C_dim={est.abp_constant(args.m):.6f} exact integral={exact:.6f}")
    print("points,lhs,integral,rhs,ratio,ratio_2u")
    for pts in (17, 33, 65) if args.m == 2 else (9, 17, 33):
        patch = est.quadratic_patch(args.m, pts)
        a = est.abp_check(patch)
        b = est.abp_check(est.Patch(2 * patch.u, patch.dx, patch.dt, patch.diam, patch.mask))
        print(f"{pts},{a.lhs:.6f},{a.integral:.6f},{a.rhs:.6f},{a.ratio:.6f},{b.ratio:.6f}")


if __name__ == "__main__":
    main()
