"""Normalized noise-norm densities for sigma_n = 0.1 and a few N, as CSV on stdout."""
import argparse
import sys

import numpy as np

from sklab.special import NoiseNormDistribution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", default="2,4,10,50,200")
    ap.add_argument("--sigma-n", type=float, default=0.1)
    ap.add_argument("--points", type=int, default=401)
    args = ap.parse_args()
    Ns = [int(v) for v in args.N.split(",")]
    rho = np.linspace(0, 3 * args.sigma_n, args.points)
    cols = [NoiseNormDistribution(n, args.sigma_n).pdf(rho) for n in Ns]
    out = sys.stdout
    out.write("rho," + ",".join(f"N{n}" for n in Ns) + "\n")
    for i, r in enumerate(rho):
        out.write(f"{r:.6g}," + ",".join(f"{c[i]:.6g}" for c in cols) + "\n")
    for n in Ns:
        d = NoiseNormDistribution(n, args.sigma_n)
        print(f"# N={n}: mode {d.mode:.5f}, std {d.variance ** 0.5:.5f}", file=sys.stderr)


if __name__ == "__main__":
    main()
