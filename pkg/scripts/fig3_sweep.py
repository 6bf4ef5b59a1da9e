"""Mean cost of FHS and PFHS under constant flip noise across penalties.

Writes one row per (noise, lambda, algorithm) and prints the PFHS cost
reduction at each noise level.

    python3 scripts/fig3_sweep.py --noise 0.01 0.14 --out fig3.csv
"""

import argparse
import csv

import numpy as np

from fhsearch.sim import SweepParams, run_sweep, theta_grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--noise", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.14], help="flip probabilities")
    ap.add_argument("--samples", type=int, default=15, help="readings per search (count)")
    ap.add_argument("--lambdas", type=int, default=10, help="penalties in linspace(0.01, 1.9) (count)")
    ap.add_argument("--thetas", type=int, default=20, help="change points (count)")
    ap.add_argument("--trials", type=int, default=50, help="trials per change point (count)")
    ap.add_argument("--grid-size", type=int, default=10_000, help="posterior bins (count)")
    ap.add_argument("--seed", type=int, default=5, help="base seed")
    ap.add_argument("--threads", type=int, default=1, help="worker processes (count)")
    ap.add_argument("--out", default="fig3.csv", help="output CSV")
    args = ap.parse_args(argv)

    rows = []
    for p in args.noise:
        means = {}
        for algo in ("fhs", "pfhs"):
            vals = []
            for lam in np.linspace(0.01, 1.9, args.lambdas):
                params = SweepParams(lam=float(lam), n_samples=args.samples, flip_prob=p,
                                     grid_size=args.grid_size, seed=args.seed, threads=args.threads)
                rep = run_sweep(algo, theta_grid(args.thetas), args.trials, params)
                rows.append((p, float(lam), algo, rep.mean("cost"), rep.stderr("cost"),
                             rep.mean("error"), rep.mean("distance")))
                vals.append(rep.mean("cost"))
            means[algo] = float(np.mean(vals))
        print(f"p={p}: FHS {means['fhs']:.4f} PFHS {means['pfhs']:.4f} "
              f"reduction {1 - means['pfhs'] / means['fhs']:.1%}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("noise", "lambda", "algo", "cost", "cost_se", "error", "distance"))
        w.writerows(rows)


if __name__ == "__main__":
    main()
