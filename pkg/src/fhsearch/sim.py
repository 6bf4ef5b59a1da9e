"""Oracles, synthetic fields and Monte Carlo sweeps."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .gp import KernelSpec, LevelSetEstimate, gp_fit, gp_predict, grid_axis, level_set_error, transect_lse
from .policy import Policy, PolicyDomainError, compute_policy, policy_for_error
from .posterior import DEFAULT_GRID_SIZE, NoiseModel, pfhs_search
from .search import fhs_search

ALGORITHMS = ("fhs", "pfhs", "qs", "pqs")
REPORT_COLUMNS = ("algo", "theta", "lambda", "noise", "samples", "distance", "error", "cost", "time")


# -- oracles -----------------------------------------------------------------


class NoiselessStep:
    """``1`` left of ``theta``, ``0`` from ``theta`` on."""

    def __init__(self, theta: float):
        self.theta = theta

    def __call__(self, x: float) -> int:
        return 1 if x < self.theta else 0


class FlipStep:
    """Step labels flipped independently with probability ``p``."""

    def __init__(self, theta: float, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 0.5:
            raise ValueError(f"flip probability must lie in [0, 1/2), got {p}")
        self.theta, self.p, self.rng = theta, p, rng

    def __call__(self, x: float) -> int:
        y = 1 if x < self.theta else 0
        return y ^ int(self.rng.random() < self.p)


class GaussianStep:
    """Raw reading ``1{x < theta} + N(0, sigma**2)``; threshold it at 1/2."""

    def __init__(self, theta: float, sigma: float, rng: np.random.Generator):
        self.theta, self.sigma, self.rng = theta, sigma, rng

    def __call__(self, x: float) -> float:
        y = 1.0 if x < self.theta else 0.0
        return y + self.sigma * self.rng.standard_normal() if self.sigma > 0 else y


@dataclass
class GridField:
    """Field values on a ``rows x cols`` grid over the unit square.

    ``values[i, j]`` is the field at ``x1 = j / (cols - 1)``,
    ``x2 = i / (rows - 1)``. ``sigma`` is the measurement noise standard
    deviation and ``cell_km`` the physical grid spacing.
    """

    values: np.ndarray
    gamma: float = 0.0
    sigma: float = 0.0
    cell_km: float = 1.0

    @property
    def grid_dims(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def scale_km(self) -> tuple[float, float]:
        rows, cols = self.grid_dims
        return (self.cell_km * (cols - 1), self.cell_km * (rows - 1))

    def value(self, x1: float, x2: float) -> float:
        """Bilinear interpolation of the grid."""
        rows, cols = self.values.shape
        u = min(max(x1, 0.0), 1.0) * (cols - 1)
        v = min(max(x2, 0.0), 1.0) * (rows - 1)
        j = min(int(u), cols - 2) if cols > 1 else 0
        i = min(int(v), rows - 2) if rows > 1 else 0
        fu, fv = u - j, v - i
        g = self.values
        j1 = min(j + 1, cols - 1)
        i1 = min(i + 1, rows - 1)
        top = g[i, j] * (1 - fu) + g[i, j1] * fu
        bot = g[i1, j] * (1 - fu) + g[i1, j1] * fu
        return float(top * (1 - fv) + bot * fv)

    def truth(self) -> LevelSetEstimate:
        return LevelSetEstimate.from_values(self.values, self.gamma)

    def noise_model(self) -> NoiseModel:
        return NoiseModel(sigma=self.sigma, threshold=self.gamma)

    def oracle(self, rng: np.random.Generator) -> "GridOracle":
        return GridOracle(self, rng)


class GridOracle:
    def __init__(self, grid: GridField, rng: np.random.Generator):
        self.grid, self.rng = grid, rng

    def __call__(self, x1: float, x2: float) -> float:
        y = self.grid.value(x1, x2)
        if self.grid.sigma > 0:
            y += self.grid.sigma * self.rng.standard_normal()
        return y


class GridFormatError(ValueError):
    pass


def save_grid_field(grid: GridField, path) -> None:
    rows, cols = grid.grid_dims
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([rows, cols, repr(grid.cell_km), repr(grid.gamma), repr(grid.sigma)])
        for r in grid.values:
            w.writerow([repr(float(v)) for v in r])


def load_grid_field(path, metadata: dict | None = None) -> GridField:
    """Read a grid CSV: a ``rows,cols,cell_km,gamma,sigma`` line, then one line per row.

    Keys in ``metadata`` override ``cell_km``, ``gamma`` and ``sigma`` from the header.

    Raises:
        GridFormatError: on missing metadata, wrong row lengths or bad numbers,
            naming the 1-based line and column.
    """
    with open(path, newline="") as fh:
        lines = list(csv.reader(fh))
    lines = [ln for ln in lines if any(c.strip() for c in ln)]
    if not lines:
        raise GridFormatError(f"{path}: empty file")
    head = [c.strip() for c in lines[0]]
    if len(head) != 5:
        raise GridFormatError(f"{path}: line 1: expected rows,cols,cell_km,gamma,sigma, got {len(head)} fields")
    try:
        rows, cols = int(head[0]), int(head[1])
        meta = {"cell_km": float(head[2]), "gamma": float(head[3]), "sigma": float(head[4])}
    except ValueError as exc:
        raise GridFormatError(f"{path}: line 1: {exc}") from None
    meta.update(metadata or {})
    if rows < 1 or cols < 1:
        raise GridFormatError(f"{path}: line 1: grid must be at least 1x1")
    body = lines[1:]
    if len(body) != rows:
        raise GridFormatError(f"{path}: expected {rows} data rows, found {len(body)}")
    values = np.empty((rows, cols))
    for i, ln in enumerate(body):
        if len(ln) != cols:
            raise GridFormatError(f"{path}: line {i + 2}: expected {cols} values, found {len(ln)}")
        for j, cell in enumerate(ln):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise GridFormatError(f"{path}: line {i + 2}, column {j + 1}: not a number: {cell!r}") from None
            if not math.isfinite(values[i, j]):
                raise GridFormatError(f"{path}: line {i + 2}, column {j + 1}: non-finite value")
    if meta["sigma"] < 0 or meta["cell_km"] <= 0:
        raise GridFormatError(f"{path}: sigma must be >= 0 and cell_km > 0")
    return GridField(values, gamma=meta["gamma"], sigma=meta["sigma"], cell_km=meta["cell_km"])


# -- synthetic GP fields -----------------------------------------------------


@dataclass
class Boundary:
    """Boundary curve ``x2 = f(x1)`` sampled densely on [0, 1]."""

    x1: np.ndarray
    x2: np.ndarray

    def __call__(self, x1):
        return np.interp(x1, self.x1, self.x2)

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Euclidean distance to the curve, positive below it."""
        curve = np.stack([self.x1, self.x2], axis=1)
        d = np.sqrt(((pts[:, None, :] - curve[None, :, :]) ** 2).sum(-1)).min(axis=1)
        below = pts[:, 1] < self(pts[:, 0])
        return np.where(below, d, -d)


class FieldGenerationError(RuntimeError):
    pass


def sample_boundary(kernel: KernelSpec, rng: np.random.Generator, offset: float = 0.5, n_points: int = 201) -> Boundary:
    x1 = np.linspace(0.0, 1.0, n_points)
    cov = kernel(x1, x1)
    g = rng.multivariate_normal(np.zeros(n_points), cov, method="eigh")
    return Boundary(x1, offset + g)


def generate_gp_field(
    boundary_kernel: KernelSpec,
    field_lengthscale: float = 0.1,
    grid_dims: tuple[int, int] = (21, 20),
    n_field_samples: int = 500,
    field_noise: float = 1e-4,
    seed: int = 0,
    *,
    offset: float = 0.5,
    field_variance: float = 1.0,
    max_retries: int = 50,
) -> tuple[GridField, Boundary]:
    """Random field whose zero level set follows a GP-sampled boundary.

    The boundary is ``offset`` plus a draw from ``boundary_kernel``; draws
    leaving (0, 1) are rejected and redrawn with the next seed. Signed
    distances to the boundary at ``n_field_samples`` uniform points, plus
    noise of variance ``field_noise``, are smoothed onto the grid by GP
    regression with lengthscale ``field_lengthscale``. The returned field has
    threshold 0 and no measurement noise; set ``sigma`` before searching.
    """
    for attempt in range(max_retries):
        rng = np.random.default_rng([seed, attempt])
        boundary = sample_boundary(boundary_kernel, rng, offset)
        if boundary.x2.min() > 0.0 and boundary.x2.max() < 1.0:
            break
    else:
        raise FieldGenerationError(f"no admissible boundary after {max_retries} draws (seed {seed})")
    pts = rng.random((n_field_samples, 2))
    y = boundary.signed_distance(pts) + math.sqrt(field_noise) * rng.standard_normal(n_field_samples)
    kern = KernelSpec(field_lengthscale, field_variance, field_noise)
    model = gp_fit(pts, y, kern)
    rows, cols = grid_dims
    gx1, gx2 = np.meshgrid(grid_axis(cols), grid_axis(rows))
    mean, _ = gp_predict(model, np.stack([gx1.ravel(), gx2.ravel()], axis=1))
    return GridField(mean.reshape(rows, cols), gamma=0.0, sigma=0.0), boundary


# -- baselines and costs -----------------------------------------------------


def qs_policy(m: float, n_steps: int = 1) -> Policy:
    """Constant-fraction quantile search: always move ``1/m`` of the interval.

    The matching distance penalty is ``2 - 4/m``, so ``m = 2`` is bisection.
    """
    if not m > 1:
        raise PolicyDomainError(f"m must exceed 1, got {m!r}")
    if m < 2:
        raise PolicyDomainError(f"m < 2 would move more than half the interval (m={m!r})")
    z = 1.0 / m
    return Policy(lam=2.0 - 4.0 / m, fractions=(z,) * n_steps, greedy_fraction=z)


def time_cost(entry, sample_time: float, travel_time: float) -> float:
    """``sample_time * samples + travel_time * distance``.

    ``entry`` is a :class:`TrialRecord`, or a ``(samples, distance)`` pair.
    """
    if sample_time < 0 or travel_time < 0:
        raise ValueError("times must be non-negative")
    if isinstance(entry, TrialRecord):
        n, d = entry.samples, entry.distance
    else:
        n, d = entry
    return sample_time * n + travel_time * d


# -- sweeps ------------------------------------------------------------------


@dataclass
class SweepParams:
    """Settings shared by every trial of a sweep.

    ``stop_error`` is on the interval-length scale for every algorithm; the
    posterior searches stop when their expected absolute error reaches a
    quarter of it. ``n_samples`` fixes the number of readings instead.
    """

    lam: float = 0.0
    m: float = 2.0
    stop_error: float | None = None
    n_samples: int | None = None
    flip_prob: float = 0.0
    sigma: float = 0.0
    sample_time: float = 0.0
    travel_time: float = 0.0
    grid_size: int = DEFAULT_GRID_SIZE
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if (self.stop_error is None) == (self.n_samples is None):
            raise ValueError("give exactly one of stop_error and n_samples")
        if self.flip_prob and self.sigma:
            raise ValueError("use either flip_prob or sigma, not both")

    @property
    def noise_level(self) -> float:
        return self.flip_prob if self.flip_prob else self.sigma

    @property
    def noisy(self) -> bool:
        return self.flip_prob > 0 or self.sigma > 0


@dataclass
class TrialRecord:
    algo: str
    theta: float
    lam: float
    noise: float
    samples: int
    distance: float
    error: float
    cost: float
    time: float

    def row(self) -> list:
        return [self.algo] + [repr(float(v)) if isinstance(v, float) else v for v in asdict(self).values()][1:]


@dataclass
class CostReport:
    records: list[TrialRecord] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def mean(self, name: str) -> float:
        return float(self.column(name).mean())

    def stderr(self, name: str) -> float:
        c = self.column(name)
        return float(c.std(ddof=1) / math.sqrt(c.size)) if c.size > 1 else 0.0

    def summary(self) -> dict[str, float]:
        out: dict[str, float] = {"trials": len(self.records)}
        for name in ("samples", "distance", "error", "cost", "time"):
            out[f"{name}_mean"] = self.mean(name)
            out[f"{name}_se"] = self.stderr(name)
        return out

    def to_csv(self, fh=None) -> str | None:
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.records:
            w.writerow(r.row())
        return out.getvalue() if fh is None else None

    def summary_csv(self, fh=None) -> str | None:
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        s = self.summary()
        w.writerow(list(s))
        w.writerow([repr(v) if isinstance(v, float) else v for v in s.values()])
        return out.getvalue() if fh is None else None

    def write(self, path) -> tuple[Path, Path]:
        path = Path(path)
        summary_path = path.with_name(path.stem + "_summary" + path.suffix)
        with open(path, "w", newline="") as fh:
            self.to_csv(fh)
        with open(summary_path, "w", newline="") as fh:
            self.summary_csv(fh)
        return path, summary_path


def theta_grid(count: int) -> np.ndarray:
    """``count`` interior points ``i / (count + 1)``; the endpoints are excluded."""
    return np.arange(1, count + 1) / (count + 1)


def trial_rng(seed: int, theta_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, theta_index, trial]))


def _policy_for(algorithm: str, params: SweepParams) -> Policy:
    if algorithm in ("qs", "pqs"):
        return qs_policy(params.m, params.n_samples or 1)
    if params.n_samples is not None:
        return compute_policy(params.n_samples, params.lam)
    return policy_for_error(params.stop_error, params.lam)


def run_trial(algorithm: str, theta: float, params: SweepParams, rng: np.random.Generator, policy: Policy) -> TrialRecord:
    """One search against a freshly seeded oracle for ``theta``."""
    if params.flip_prob:
        oracle = FlipStep(theta, params.flip_prob, rng)
        noise = NoiseModel(threshold=0.5, flip_prob=params.flip_prob)
    elif params.sigma:
        oracle = GaussianStep(theta, params.sigma, rng)
        noise = NoiseModel(sigma=params.sigma, threshold=0.5)
    else:
        oracle = NoiselessStep(theta)
        noise = NoiseModel(sigma=0.0, threshold=0.5)

    if algorithm in ("fhs", "qs"):
        if params.sigma:
            raw = oracle
            oracle = lambda x: int(raw(x) > 0.5)  # noqa: E731
        stop = params.stop_error if params.stop_error is not None else 0.0
        trace = fhs_search(oracle, policy, stop, max_samples=params.n_samples)
        a, b = (trace.steps[-1].a, trace.steps[-1].b) if trace.steps else (0.0, 1.0)
        error = 4.0 * abs(trace.estimate - theta) if params.noisy else b - a
    else:
        stop = params.stop_error / 4.0 if params.stop_error is not None else 0.0
        trace = pfhs_search(oracle, policy, noise, stop, params.grid_size, max_samples=params.n_samples).trace
        error = 4.0 * abs(trace.estimate - theta)
    n, d = trace.sample_count, trace.total_distance
    return TrialRecord(
        algo=algorithm,
        theta=float(theta),
        lam=policy.lam,
        noise=params.noise_level,
        samples=n,
        distance=d,
        error=error,
        cost=error + policy.lam * d,
        time=time_cost((n, d), params.sample_time, params.travel_time),
    )


def _run_theta(args) -> list[TrialRecord]:
    algorithm, k, theta, trials, params = args
    policy = _policy_for(algorithm, params)
    return [run_trial(algorithm, theta, params, trial_rng(params.seed, k, t), policy) for t in range(trials)]


def run_sweep(algorithm: str, thetas: Sequence[float], trials: int, params: SweepParams) -> CostReport:
    """Every ``(theta, trial)`` pair, each with its own derived seed.

    Records come back in ``theta`` then trial order regardless of
    ``params.threads``, so reports are reproducible bit for bit.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    jobs = [(algorithm, k, float(th), trials, params) for k, th in enumerate(thetas)]
    if params.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=params.threads) as pool:
            chunks = list(pool.map(_run_theta, jobs))
    else:
        chunks = [_run_theta(j) for j in jobs]
    return CostReport([r for c in chunks for r in c])


def noisy_cost_table(
    lambda_grid: Sequence[float],
    target_error: float,
    flip_prob: float,
    thetas: Sequence[float],
    trials: int,
    seed: int = 0,
    grid_size: int = DEFAULT_GRID_SIZE,
    threads: int = 1,
) -> dict[float, tuple[float, float]]:
    """Monte Carlo ``(mean samples, mean distance)`` of PFHS for each penalty."""
    table = {}
    for lam in lambda_grid:
        params = SweepParams(lam=float(lam), stop_error=target_error, flip_prob=flip_prob,
                             grid_size=grid_size, seed=seed, threads=threads)
        rep = run_sweep("pfhs", thetas, trials, params)
        table[float(lam)] = (rep.mean("samples"), rep.mean("distance"))
    return table


# -- GP level set runs -------------------------------------------------------


@dataclass
class GPLSEOutcome:
    error: float
    samples: int
    distance_km: float
    seconds: float
    timed_out: bool


def run_gplse(
    grid: GridField,
    n_transects: int,
    stop_error: float,
    lam: float,
    boundary_kernel: KernelSpec,
    seed: int = 0,
    grid_size: int = DEFAULT_GRID_SIZE,
):
    """Transect LSE on ``grid`` with a seeded noisy oracle; returns the result and an outcome summary."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    res = transect_lse(grid.oracle(rng), grid.noise_model(), n_transects, stop_error, lam,
                       boundary_kernel, grid.grid_dims, grid_size=grid_size)
    elapsed = time.perf_counter() - t0
    err = level_set_error(grid.truth(), res.estimate)
    out = GPLSEOutcome(err, res.samples, res.path_length(grid.scale_km), elapsed, res.timed_out)
    return res, out
