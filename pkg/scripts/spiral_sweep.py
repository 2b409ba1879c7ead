"""Simulated spiral SDR over a CSNR ladder next to the weak-noise prediction and OPTA."""
import argparse
import math
from pathlib import Path

from sklab.config import load_config
from sklab.simulation import run_sweep

DEFAULT = Path(__file__).resolve().parents[1] / "configs" / "spiral_sweep.ini"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default=str(DEFAULT))
    ap.add_argument("--trials", type=int)
    ap.add_argument("--jobs", type=int, default=4)
    args = ap.parse_args()
    cfg, _ = load_config(args.config, trials=args.trials)
    print(f"{'csnr':>5} {'sdr':>7} {'+-':>5} {'weak pred':>9} {'opta':>6} {'anomaly':>8}")
    for rep in run_sweep(cfg, jobs=args.jobs):
        pred = 10 * math.log10(1 / rep.predicted_mse) if rep.predicted_mse else math.nan
        print(f"{rep.csnr_db:5.1f} {rep.sdr_db:7.2f} {rep.sdr_ci_db:5.2f} {pred:9.2f} "
              f"{rep.opta_db:6.2f} {rep.anomaly_rate:8.1e}")


if __name__ == "__main__":
    main()
