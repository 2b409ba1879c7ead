"""Distance to OPTA of the closed-form predictions as the dimension grows."""
import argparse

from sklab.asymptotics import opta_gap_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--csnr-db", type=float, default=20.0)
    args = ap.parse_args()
    c = 10 ** (args.csnr_db / 10)
    dims = [4 ** k for k in range(1, 8)]
    exp_a = dict(opta_gap_curve("expansion", 2, dims, c))
    exp_f = dict(opta_gap_curve("expansion", 2, dims, c, model="finite"))
    red = dict(opta_gap_curve("reduction", 0.5, dims, c))
    print(f"gap_db = OPTA SDR - predicted SDR at CSNR {args.csnr_db:g} dB")
    print(f"{'dim':>6} {'exp r=2 asym':>13} {'exp r=2 finite':>15} {'red r=1/2':>10}")
    for d in dims:
        print(f"{d:>6} {exp_a[d]:>13.4f} {exp_f[d]:>15.4f} {red[d]:>10.4f}")


if __name__ == "__main__":
    main()
