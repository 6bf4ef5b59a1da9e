"""Command-line entry point.

Every subcommand writes its CSVs and a ``manifest.json`` into one output
directory; ``fhsearch replay <manifest>`` reruns a recorded invocation.
Exit codes: 0 success, 2 bad arguments or parameters, 3 runtime/IO failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .gp import KernelSpec, grid_axis
from .policy import PolicyDomainError, compute_policy, diagnostics, expected_distance, policy_for_error, select_lambda
from .posterior import NoiseModel, pfhs_search
from .search import SearchTimeout, fhs_search
from .sim import (
    ALGORITHMS,
    FlipStep,
    GaussianStep,
    GridFormatError,
    NoiselessStep,
    SweepParams,
    generate_gp_field,
    load_grid_field,
    noisy_cost_table,
    run_gplse,
    run_sweep,
    save_grid_field,
    theta_grid,
)

OUT_ENV = "FHSEARCH_OUT"
# penalties near 2 make noisy searches take thousands of readings
DEFAULT_LAMBDA_GRID = tuple(round(0.1 * k, 1) for k in range(16))


class UsageError(Exception):
    """Bad parameter values; exit code 2."""


@dataclasses.dataclass
class RunConfig:
    """What a manifest records: enough to rerun the command exactly."""

    subcommand: str
    argv: list
    version: str = __version__
    out: str = ""
    created: str = ""

    @classmethod
    def from_manifest(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown manifest keys: {sorted(unknown)}")
        return cls(**data)


def _out_dir(args) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = Path(os.environ.get(OUT_ENV, "runs"))
        stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S%f")
        out = root / f"{args.command}-{stamp}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args, argv) -> None:
    cfg = RunConfig(args.command, list(argv), out=str(out), created=_dt.datetime.now().isoformat(timespec="seconds"))
    (out / "manifest.json").write_text(json.dumps(dataclasses.asdict(cfg), indent=2) + "\n")


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam < 2.0:
        raise UsageError(f"--lambda must lie in [0, 2), got {lam}")


def _threads(n):
    return n if n else (os.cpu_count() or 1)


# -- subcommands -------------------------------------------------------------


def cmd_policy(args, out: Path) -> None:
    _check_lambda(args.lam)
    if args.n is not None:
        if args.n < 1:
            raise UsageError("--n must be at least 1")
        pol = compute_policy(args.n, args.lam)
        length = args.length
    elif args.epsilon is not None:
        if args.epsilon <= 0:
            raise UsageError("--epsilon must be positive")
        pol = policy_for_error(args.epsilon, args.lam, args.length)
        length = args.length
    else:
        raise UsageError("give --n or --epsilon")
    diag = diagnostics(pol, length)
    rows = [(k + 1, z, x, r) for k, (z, x, r) in enumerate(zip(pol.fractions, diag.xi, diag.rho))]
    _write_rows(out / "policy.csv", ("step", "fraction", "xi", "rho"), rows)
    print(f"{'step':>5} {'fraction':>12} {'xi':>12} {'rho':>12}")
    for k, z, x, r in rows:
        print(f"{k:>5} {z:>12.6f} {x:>12.6f} {r:>12.6f}")
    print(f"steps={len(pol)} lambda={pol.lam} greedy_fraction={pol.greedy_fraction:.6f}")
    print(f"expected_length={diag.expected_length:.6g} expected_distance={diag.expected_distance:.6g} "
          f"expected_cost={diag.expected_cost:.6g}")


def cmd_search(args, out: Path) -> None:
    _check_lambda(args.lam)
    if not 0.0 <= args.theta <= 1.0:
        raise UsageError("--theta must lie in [0, 1]")
    if args.epsilon <= 0:
        raise UsageError("--epsilon must be positive")
    pol = policy_for_error(args.epsilon, args.lam)
    rng = np.random.default_rng(args.seed)
    if args.algo == "fhs":
        if args.sigma:
            raise UsageError("fhs reads binary labels; use --flip, or --algo pfhs with --sigma")
        oracle = FlipStep(args.theta, args.flip, rng) if args.flip else NoiselessStep(args.theta)
        trace = fhs_search(oracle, pol, args.epsilon, max_samples=args.samples)
        err = abs(trace.estimate - args.theta)
    else:
        if args.sigma:
            oracle = GaussianStep(args.theta, args.sigma, rng)
            noise = NoiseModel(sigma=args.sigma, threshold=0.5)
        else:
            oracle = FlipStep(args.theta, args.flip, rng) if args.flip else NoiselessStep(args.theta)
            noise = NoiseModel(threshold=0.5, flip_prob=args.flip or None)
        res = pfhs_search(oracle, pol, noise, args.epsilon / 4.0, args.grid_size, max_samples=args.samples)
        trace = res.trace
        err = abs(trace.estimate - args.theta)
        _write_rows(out / "posterior.csv", ("bin_center", "mass"), res.posterior.to_rows())
        if res.timed_out:
            (out / "trace.csv").write_text(trace.to_csv())
            raise SearchTimeout(res)
    (out / "trace.csv").write_text(trace.to_csv())
    print(f"algo={args.algo} theta={args.theta} estimate={trace.estimate:.6f} abs_error={err:.6g} "
          f"samples={trace.sample_count} distance={trace.total_distance:.6g}")


def _sweep_params(args) -> SweepParams:
    if args.samples is None and args.epsilon is None:
        raise UsageError("give --epsilon or --samples")
    if args.samples is not None and args.epsilon is not None:
        raise UsageError("--epsilon and --samples are exclusive")
    _check_lambda(args.lam)
    if args.flip and args.sigma:
        raise UsageError("--flip and --sigma are exclusive")
    if not 0.0 <= args.flip < 0.5:
        raise UsageError("--flip must lie in [0, 0.5)")
    if args.m < 2:
        raise UsageError("--m must be at least 2")
    return SweepParams(
        lam=args.lam, m=args.m, stop_error=args.epsilon, n_samples=args.samples,
        flip_prob=args.flip, sigma=args.sigma, sample_time=args.ts, travel_time=args.tt,
        grid_size=args.grid_size, seed=args.seed, threads=_threads(args.threads),
    )


def cmd_sweep(args, out: Path) -> None:
    params = _sweep_params(args)
    n_theta, trials = (20, 20) if args.fast else (args.thetas, args.trials)
    rep = run_sweep(args.algo, theta_grid(n_theta), trials, params)
    rep.write(out / "report.csv")
    s = rep.summary()
    print(f"algo={args.algo} trials={s['trials']} mean samples = {s['samples_mean']:.6g} "
          f"mean distance = {s['distance_mean']:.6g} mean error = {s['error_mean']:.6g} "
          f"mean cost = {s['cost_mean']:.6g} mean time = {s['time_mean']:.6g}")


def cmd_select_lambda(args, out: Path) -> None:
    if args.ts < 0:
        raise UsageError("--ts must be non-negative")
    travel = args.tt if args.tt is not None else args.ts * args.ratio
    if travel < 0:
        raise UsageError("travel time must be non-negative")
    if args.epsilon <= 0:
        raise UsageError("--epsilon must be positive")
    grid = tuple(args.lambda_grid) if args.lambda_grid else DEFAULT_LAMBDA_GRID
    for lam in grid:
        _check_lambda(lam)
    if args.noise:
        if not 0.0 < args.noise < 0.5:
            raise UsageError("--noise must lie in (0, 0.5)")
        table = noisy_cost_table(grid, args.epsilon, args.noise, theta_grid(args.thetas), args.trials,
                                 seed=args.seed, grid_size=args.grid_size, threads=_threads(args.threads))
    else:
        table = None
    lam_star, pol = select_lambda(args.ts, travel, args.epsilon, 1.0, grid, table)
    rows = []
    for lam in sorted(grid):
        if table is None:
            p = policy_for_error(args.epsilon, lam)
            n, d = len(p), expected_distance(p)
        else:
            n, d = table[float(lam)]
        rows.append((lam, n, d, args.ts * n + travel * d))
    _write_rows(out / "selection.csv", ("lambda", "samples", "distance", "time"), rows)
    _write_rows(out / "policy.csv", ("step", "fraction"), [(k + 1, z) for k, z in enumerate(pol.fractions)])
    print(f"lambda_star={lam_star} steps={len(pol)} fractions=" + ",".join(f"{z:.4f}" for z in pol.fractions))


def cmd_genfield(args, out: Path) -> None:
    if args.rows < 2 or args.cols < 2:
        raise UsageError("grid needs at least 2 rows and 2 columns")
    kern = KernelSpec(args.boundary_lengthscale, args.boundary_variance)
    grid, boundary = generate_gp_field(kern, args.field_lengthscale, (args.rows, args.cols),
                                       args.field_samples, args.field_noise, args.seed)
    grid.values = grid.values * args.scale + args.gamma
    grid.gamma, grid.sigma, grid.cell_km = args.gamma, args.sigma, args.cell_km
    save_grid_field(grid, out / "field.csv")
    _write_rows(out / "boundary.csv", ("x1", "x2"), zip(boundary.x1, boundary.x2))
    print(f"field {args.rows}x{args.cols} seed={args.seed} super_level_fraction={grid.truth().classification.mean():.4f}")


def cmd_gplse(args, out: Path) -> None:
    _check_lambda(args.lam)
    if args.transects < 2:
        raise UsageError("--transects must be at least 2")
    if args.stop_error <= 0:
        raise UsageError("--stop-error must be positive")
    grid = load_grid_field(args.field)
    if args.sigma is not None:
        grid.sigma = args.sigma
    kern = KernelSpec(args.boundary_lengthscale, args.boundary_variance)
    res, outcome = run_gplse(grid, args.transects, args.stop_error, args.lam, kern, seed=args.seed,
                             grid_size=args.grid_size)
    rows, cols = grid.grid_dims
    _write_rows(out / "boundary_estimates.csv", ("x1", "estimate", "samples"),
                [(r.coordinate, r.estimate, r.trace.sample_count) for r in res.transects])
    _write_rows(out / "boundary_curve.csv", ("x1", "boundary"), zip(grid_axis(cols), res.estimate.boundary_estimate))
    _write_rows(out / "classification.csv", [f"c{j}" for j in range(cols)], res.estimate.classification.astype(int))
    _write_rows(out / "path.csv", ("x1", "x2"), res.path)
    times = []
    for ts, speed in zip(args.ts, args.speed):
        total = ts * outcome.samples + 3600.0 / speed * outcome.distance_km
        times.append((ts, speed, total))
    _write_rows(out / "summary.csv", ("sample_time_s", "speed_kmh", "samples", "distance_km", "error", "time_s"),
                [(ts, sp, outcome.samples, outcome.distance_km, outcome.error, t) for ts, sp, t in times])
    print(f"error={outcome.error:.4f} samples={outcome.samples} distance_km={outcome.distance_km:.4g} "
          f"wall_s={outcome.seconds:.3f}")
    for ts, sp, t in times:
        print(f"  sample_time={ts}s speed={sp}km/h time={t / 3600.0:.3f}h")
    if res.timed_out:
        raise SearchTimeout(res)


def cmd_replay(args, out_unused) -> int:
    cfg = RunConfig.from_manifest(args.manifest)
    argv = list(cfg.argv)
    if "--out" in argv:
        i = argv.index("--out")
        del argv[i:i + 2]
    if args.out:
        argv += ["--out", args.out]
    return main(argv)


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fhsearch", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs, plus <command>-<timestamp>)")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="base random seed (integer)")

    p = sub.add_parser("policy", help="optimal sampling fractions")
    p.add_argument("--n", type=int, help="number of steps (count)")
    p.add_argument("--epsilon", type=float, help="target expected interval length (domain units)")
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="distance penalty, unitless, in [0, 2)")
    p.add_argument("--length", type=float, default=1.0, help="initial interval length (domain units)")
    common(p, seed=False)

    p = sub.add_parser("search", help="one search against a step function")
    p.add_argument("--algo", choices=("fhs", "pfhs"), default="fhs", help="search algorithm")
    p.add_argument("--theta", type=float, required=True, help="true change point in [0, 1] (domain units)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="distance penalty, unitless, in [0, 2)")
    p.add_argument("--epsilon", type=float, default=0.01, help="stop interval length (domain units)")
    p.add_argument("--samples", type=int, help="fixed number of readings (count); overrides stopping")
    p.add_argument("--flip", type=float, default=0.0, help="label flip probability (unitless)")
    p.add_argument("--sigma", type=float, default=0.0, help="Gaussian noise std around a unit step (field units)")
    p.add_argument("--grid-size", type=int, default=10_000, help="posterior bins (count)")
    common(p)

    p = sub.add_parser("sweep", help="Monte Carlo sweep over change points")
    p.add_argument("--algo", choices=ALGORITHMS, required=True, help="search algorithm")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="distance penalty, unitless, in [0, 2)")
    p.add_argument("--m", type=float, default=2.0, help="quantile-search parameter, fraction 1/m (unitless, >= 2)")
    p.add_argument("--epsilon", type=float, help="stop interval length (domain units)")
    p.add_argument("--samples", type=int, help="fixed number of readings per search (count)")
    p.add_argument("--flip", type=float, default=0.0, help="label flip probability (unitless)")
    p.add_argument("--sigma", type=float, default=0.0, help="Gaussian noise std around a unit step (field units)")
    p.add_argument("--thetas", type=int, default=100, help="number of change points (count)")
    p.add_argument("--trials", type=int, default=100, help="trials per change point (count)")
    p.add_argument("--fast", action="store_true", help="20 change points x 20 trials")
    p.add_argument("--ts", type=float, default=0.0, help="time per sample (seconds)")
    p.add_argument("--tt", type=float, default=0.0, help="time per unit distance (seconds per domain unit)")
    p.add_argument("--grid-size", type=int, default=10_000, help="posterior bins (count)")
    p.add_argument("--threads", type=int, default=0, help="worker processes (count, 0 = all cores)")
    common(p)

    p = sub.add_parser("select-lambda", help="time-optimal distance penalty")
    p.add_argument("--ts", type=float, default=100.0, help="time per sample (seconds)")
    p.add_argument("--ratio", type=float, default=1.0, help="travel-to-sample time ratio (unitless)")
    p.add_argument("--tt", type=float, help="time per unit distance (seconds per domain unit); overrides --ratio")
    p.add_argument("--epsilon", type=float, default=0.01, help="target interval length (domain units)")
    p.add_argument("--noise", type=float, default=0.0, help="label flip probability (unitless); >0 uses Monte Carlo")
    p.add_argument("--lambda-grid", type=float, nargs="+", help="candidate penalties, unitless, in [0, 2) (default 0, 0.1, ..., 1.5)")
    p.add_argument("--thetas", type=int, default=50, help="change points for the noisy table (count)")
    p.add_argument("--trials", type=int, default=20, help="trials per change point for the noisy table (count)")
    p.add_argument("--grid-size", type=int, default=1000, help="posterior bins for the noisy table (count)")
    p.add_argument("--threads", type=int, default=0, help="worker processes (count, 0 = all cores)")
    common(p)

    p = sub.add_parser("genfield", help="synthetic field with a GP boundary")
    p.add_argument("--rows", type=int, default=21, help="grid rows along x2 (count)")
    p.add_argument("--cols", type=int, default=20, help="grid columns along x1 (count)")
    p.add_argument("--boundary-lengthscale", type=float, default=0.6, help="boundary GP lengthscale (domain units)")
    p.add_argument("--boundary-variance", type=float, default=0.04, help="boundary GP variance (domain units squared)")
    p.add_argument("--field-lengthscale", type=float, default=0.1, help="smoothing GP lengthscale (domain units)")
    p.add_argument("--field-samples", type=int, default=500, help="signed-distance samples (count)")
    p.add_argument("--field-noise", type=float, default=1e-4, help="signed-distance noise variance (domain units squared)")
    p.add_argument("--scale", type=float, default=1.0, help="field units per domain unit of signed distance")
    p.add_argument("--gamma", type=float, default=0.0, help="threshold (field units)")
    p.add_argument("--sigma", type=float, default=0.1, help="measurement noise std written to the file (field units)")
    p.add_argument("--cell-km", type=float, default=1.0, help="grid spacing (km)")
    common(p)

    p = sub.add_parser("gplse", help="transect level set estimation on a grid field")
    p.add_argument("--field", required=True, help="grid CSV (rows,cols,cell_km,gamma,sigma header)")
    p.add_argument("--transects", type=int, default=5, help="number of transects (count, >= 2)")
    p.add_argument("--stop-error", type=float, default=0.03, help="per-transect expected absolute error (domain units)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5, help="distance penalty, unitless, in [0, 2)")
    p.add_argument("--sigma", type=float, help="override measurement noise std (field units)")
    p.add_argument("--boundary-lengthscale", type=float, default=0.6, help="boundary GP lengthscale (domain units)")
    p.add_argument("--boundary-variance", type=float, default=0.04, help="boundary GP variance (domain units squared)")
    p.add_argument("--ts", type=float, nargs="+", default=[8.0, 30.0], help="sample times to report (seconds)")
    p.add_argument("--speed", type=float, nargs="+", default=[32.0, 65.0], help="vehicle speeds to report (km/h), paired with --ts")
    p.add_argument("--grid-size", type=int, default=10_000, help="posterior bins (count)")
    common(p)

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest", help="path to manifest.json")
    p.add_argument("--out", help="output directory for the rerun")
    return ap


COMMANDS = {
    "policy": cmd_policy,
    "search": cmd_search,
    "sweep": cmd_sweep,
    "select-lambda": cmd_select_lambda,
    "genfield": cmd_genfield,
    "gplse": cmd_gplse,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return cmd_replay(args, None)
        out = _out_dir(args)
        _write_manifest(out, args, argv)
        COMMANDS[args.command](args, out)
    except GridFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (UsageError, PolicyDomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SearchTimeout, OSError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
