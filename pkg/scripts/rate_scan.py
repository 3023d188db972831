"""Log-log slope of E rho_alpha in eps, for several alpha.

Usage: python3 scripts/rate_scan.py --paths 250 --alphas 0.35 0.4 0.45
"""

import argparse

import numpy as np

from roughmag import homogenize as hz
from roughmag.ousim import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=250)
    ap.add_argument("--grid", type=int, default=8192)
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.4])
    args = ap.parse_args()
    M = np.array([[1.0, 1.0], [-1.0, 1.0]])
    eps = (0.2, 0.1, 0.05, 0.025)
    for a in args.alphas:
        cfg = hz.ExperimentConfig(ModelParams.from_eps(M, eps[0], y0_mode="stationary"),
                                  eps_list=eps, n_paths=args.paths, grid_steps=args.grid, alpha=a)
        rr = hz.rate_experiment(cfg)
        print(f"alpha {a:.2f}: slope {rr.slope:.3f} +- {rr.slope_se:.3f} "
              f"(target {rr.theoretical_slope:.2f}, level-1 {rr.level1_slope:.3f}) "
              f"means {np.round(rr.mean, 4).tolist()}")


if __name__ == "__main__":
    main()
