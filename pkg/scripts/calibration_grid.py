"""Calibrated control limits across memory parameters and grid sizes.

Prints ``c_R(alpha)`` for zeta in {10, 20} and N in {500, 1000, 2000} so the
grid discretisation error can be read off directly.
"""

from __future__ import annotations

import argparse
import sys

from kpss_monitor.limit_sim import calibrate


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--kappa", type=float, default=0.1)
    ap.add_argument("--gamma", type=float, default=0.02)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    alphas = (0.01, 0.05, 0.1)
    print("zeta,N," + ",".join(f"c_R({a})" for a in alphas))
    for zeta in (10.0, 20.0):
        for N in (500, 1000, 2000):
            t = calibrate("gaussian-paper", zeta, args.kappa, args.gamma, 1, alphas, args.paths, args.seed, N, args.threads)
            print(f"{zeta:g},{N}," + ",".join(f"{t.c_R(a):.5g}" for a in alphas), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
