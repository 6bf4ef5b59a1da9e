"""Time-optimal penalty against the travel-to-sample time ratio.

The noiseless column uses the analytic sample count and distance; noisy
columns use PFHS Monte Carlo tables. With ``--compare-pqs`` the script also
reports the mission time of PFHS at its selected penalty against the best
constant-fraction PQS policy at each ratio.

    python3 scripts/fig4_lambda.py --noise 0.15 --out fig4.csv
"""

import argparse
import csv

import numpy as np

from fhsearch.policy import select_lambda
from fhsearch.sim import SweepParams, noisy_cost_table, run_sweep, theta_grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--noise", type=float, nargs="*", default=[0.15], help="flip probabilities for MC tables")
    ap.add_argument("--epsilon", type=float, default=0.01, help="target interval length")
    ap.add_argument("--ratios", type=int, default=20, help="ratios in logspace(-4, 3) (count)")
    ap.add_argument("--ts", type=float, default=100.0, help="time per sample (s)")
    ap.add_argument("--lambda-max", type=float, default=1.5, help="largest penalty on the 0.1-spaced grid")
    ap.add_argument("--thetas", type=int, default=50, help="change points per table entry (count)")
    ap.add_argument("--trials", type=int, default=20, help="trials per change point (count)")
    ap.add_argument("--grid-size", type=int, default=1000, help="posterior bins (count)")
    ap.add_argument("--seed", type=int, default=6, help="base seed")
    ap.add_argument("--compare-pqs", action="store_true", help="also sweep PQS over m")
    ap.add_argument("--out", default="fig4.csv", help="output CSV")
    args = ap.parse_args(argv)

    lams = tuple(round(0.1 * k, 1) for k in range(int(round(args.lambda_max * 10)) + 1))
    ratios = np.logspace(-4, 3, args.ratios)
    thetas = theta_grid(args.thetas)
    tables = {p: noisy_cost_table(lams, args.epsilon, p, thetas, args.trials, seed=args.seed,
                                  grid_size=args.grid_size) for p in args.noise}
    pqs = {}
    if args.compare_pqs:
        for p in args.noise:
            for m in (2.0, 2.5, 3.0, 4.0, 6.0):
                params = SweepParams(m=m, stop_error=args.epsilon, flip_prob=p, grid_size=args.grid_size,
                                     seed=args.seed)
                rep = run_sweep("pqs", thetas, args.trials, params)
                pqs[(p, m)] = (rep.mean("samples"), rep.mean("distance"))

    header = ["ratio", "lambda_p0"] + [f"lambda_p{p}" for p in args.noise]
    if args.compare_pqs:
        header += [f"pfhs_vs_pqs_p{p}" for p in args.noise]
    rows = []
    for r in ratios:
        tt = args.ts * r
        row = [r, select_lambda(args.ts, tt, args.epsilon, 1.0, lams)[0]]
        picks = []
        for p in args.noise:
            lam, _ = select_lambda(args.ts, tt, args.epsilon, 1.0, lams, tables[p])
            picks.append((p, lam))
            row.append(lam)
        if args.compare_pqs:
            for p, lam in picks:
                n, d = tables[p][lam]
                best_pqs = min(args.ts * pn + tt * pd for (q, _), (pn, pd) in pqs.items() if q == p)
                row.append(1.0 - (args.ts * n + tt * d) / best_pqs)
        rows.append(row)
        print(" ".join(f"{h}={v:.4g}" for h, v in zip(header, row)))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


if __name__ == "__main__":
    main()
