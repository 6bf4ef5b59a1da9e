"""GP regression and transect-based level set estimation on the unit square.

The super-level set is assumed to lie below a boundary curve
``x2 = boundary(x1)``. Each transect is a vertical line ``x1 = t``; a noisy
change-point search along it estimates ``boundary(t)`` and a 1-D GP through
those estimates gives the boundary everywhere.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .policy import policy_for_error
from .posterior import (
    DEFAULT_GRID_SIZE,
    P_CLAMP,
    NoiseModel,
    Posterior,
    effective_interval_size,
    error_probability,
    is_positive,
    pfhs_search,
    update,
)
from .search import SearchTrace, Step

JITTER = 1e-10


class GPFactorizationError(LinAlgError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential kernel ``variance * exp(-r**2 / (2 lengthscale**2))``."""

    lengthscale: float = 1.0
    variance: float = 1.0
    noise_variance: float = 0.0
    kind: str = "rbf"

    def __post_init__(self):
        if self.kind != "rbf":
            raise ValueError(f"unsupported kernel {self.kind!r}")
        if not (self.lengthscale > 0 and self.variance > 0 and self.noise_variance >= 0):
            raise ValueError("kernel needs lengthscale > 0, variance > 0, noise_variance >= 0")

    def __call__(self, a, b) -> np.ndarray:
        a = _as_points(a)
        b = _as_points(b)
        sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
        return self.variance * np.exp(-0.5 * sq / self.lengthscale**2)


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x[:, None]
    return x


@dataclass
class GPModel:
    kernel: KernelSpec
    train_x: np.ndarray
    train_y: np.ndarray
    factor: tuple | None
    weights: np.ndarray


def gp_fit(x, y, kernel: KernelSpec) -> GPModel:
    """Factor ``K + noise_variance * I`` (plus a tiny jitter) for prediction."""
    x = _as_points(x) if np.size(x) else np.zeros((0, 1))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise ValueError(f"{x.shape[0]} inputs but {y.size} targets")
    if y.size == 0:
        return GPModel(kernel, x, y, None, y)
    k = kernel(x, x)
    k[np.diag_indices_from(k)] += kernel.noise_variance + JITTER
    try:
        factor = cho_factor(k, lower=True)
    except LinAlgError as exc:
        raise GPFactorizationError(f"kernel matrix is not positive definite: {exc}") from exc
    return GPModel(kernel, x, y, factor, cho_solve(factor, y))


def gp_predict(model: GPModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance of the latent function at ``x``.

    Variance excludes observation noise and is clipped at zero.
    """
    xq = _as_points(x)
    prior_var = np.full(xq.shape[0], model.kernel.variance)
    if model.factor is None:
        return np.zeros(xq.shape[0]), prior_var
    ks = model.kernel(xq, model.train_x)
    mean = ks @ model.weights
    v = cho_solve(model.factor, ks.T)
    var = prior_var - np.einsum("ij,ji->i", ks, v)
    if np.any(var < -1e-10):
        raise ArithmeticError(f"negative predictive variance {var.min()}")
    return mean, np.maximum(var, 0.0)


@dataclass
class LevelSetEstimate:
    """Per-cell super-level flags on a ``rows x cols`` grid.

    Row ``i`` sits at ``x2 = i / (rows - 1)`` and column ``j`` at
    ``x1 = j / (cols - 1)``.
    """

    classification: np.ndarray
    boundary_estimate: np.ndarray | None = None

    @property
    def grid_dims(self) -> tuple[int, int]:
        return self.classification.shape

    @classmethod
    def from_boundary(cls, boundary: np.ndarray, grid_dims: tuple[int, int]) -> "LevelSetEstimate":
        rows, cols = grid_dims
        boundary = np.asarray(boundary, dtype=float)
        if boundary.shape != (cols,):
            raise ValueError(f"need one boundary value per column, got {boundary.shape}")
        x2 = grid_axis(rows)
        return cls(x2[:, None] < boundary[None, :], boundary)

    @classmethod
    def from_values(cls, values: np.ndarray, threshold: float) -> "LevelSetEstimate":
        return cls(np.asarray(values) >= threshold)


def grid_axis(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)


def level_set_error(truth: LevelSetEstimate, estimate: LevelSetEstimate) -> float:
    """Fraction of grid cells classified differently."""
    if truth.grid_dims != estimate.grid_dims:
        raise ValueError(f"grid mismatch {truth.grid_dims} vs {estimate.grid_dims}")
    return float(np.mean(truth.classification != estimate.classification))


@dataclass
class TransectRun:
    coordinate: float
    trace: SearchTrace
    estimate: float
    initial_length: float
    policy_steps: int
    timed_out: bool = False


@dataclass
class LSEResult:
    estimate: LevelSetEstimate
    transects: list[TransectRun]
    path: list[tuple[float, float]]
    boundary_model: GPModel
    boundary_offset: float
    samples: int = 0
    hops: list[float] = field(default_factory=list)

    def path_length(self, scale: tuple[float, float] = (1.0, 1.0)) -> float:
        """Euclidean length of the sensor path with axes scaled by ``scale``."""
        pts = np.asarray(self.path) * np.asarray(scale, dtype=float)
        if len(pts) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))

    @property
    def total_distance(self) -> float:
        return self.path_length()

    @property
    def timed_out(self) -> bool:
        return any(t.timed_out for t in self.transects)

    def predict_boundary(self, x1) -> np.ndarray:
        mean, _ = gp_predict(self.boundary_model, x1)
        return mean + self.boundary_offset


def transect_coordinates(n_transects: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_transects)


def transect_lse(
    field_oracle: Callable[[float, float], float],
    noise: NoiseModel,
    n_transects: int,
    transect_stop_error: float,
    lam: float,
    boundary_kernel: KernelSpec,
    grid_dims: tuple[int, int],
    *,
    grid_size: int = DEFAULT_GRID_SIZE,
    boundary_noise: float | None = None,
    max_iter: int = 10_000,
) -> LSEResult:
    """Estimate the super-level set from searches along equally spaced transects.

    The first transect starts at the origin. Every later one starts with a
    reading at the previous transect's estimate; the exponentiated entropy
    of the resulting posterior sets the interval length for which its
    fixed-error policy is computed. ``transect_stop_error`` bounds the
    posterior expected absolute error on each transect, so policies target
    an interval of four times that. Change-point estimates enter the
    boundary GP with noise variance ``boundary_noise``, by default
    ``(transect_stop_error / 2) ** 2``.
    """
    if n_transects < 2:
        raise ValueError("need at least two transects")
    if transect_stop_error <= 0:
        raise ValueError("transect_stop_error must be positive")
    target = 4.0 * transect_stop_error
    margin = 1.0 / grid_size
    coords = transect_coordinates(n_transects)
    runs: list[TransectRun] = []
    path: list[tuple[float, float]] = [(float(coords[0]), 0.0)]
    hops: list[float] = []
    for idx, t in enumerate(coords):
        oracle = _along(field_oracle, float(t))
        if idx == 0:
            start = 0.0
            prior = Posterior.uniform(grid_size)
            length = 1.0
            first_step = None
        else:
            start = min(max(runs[-1].estimate, margin), 1.0 - margin)
            y0 = float(oracle(start))
            if not math.isfinite(y0):
                raise ValueError(f"oracle returned {y0!r} at ({t}, {start})")
            positive = is_positive(y0, noise)
            p0 = min(error_probability(y0, noise), P_CLAMP)
            prior = update(Posterior.uniform(grid_size), start, positive, p0)
            length = effective_interval_size(start, positive, p0)
            a, b = prior.support()
            first_step = Step(x=start, y=y0, label=int(positive), a=a, b=b, estimate=prior.median(), p=p0)
        policy = policy_for_error(target, lam, length)
        res = pfhs_search(
            oracle, policy, noise, transect_stop_error, grid_size,
            prior=prior, start=start, max_iter=max_iter,
        )
        trace = SearchTrace(start=start)
        if first_step is not None:
            trace.append(first_step)
        for s in res.trace.steps:
            trace.append(s)
        trace.estimate = res.trace.estimate
        if trace.steps:
            if idx > 0:
                prev = np.asarray(path[-1])
                hops.append(float(np.hypot(t - prev[0], trace.steps[0].x - prev[1])))
            path.extend((float(t), s.x) for s in trace.steps)
        runs.append(TransectRun(float(t), trace, trace.estimate, length, len(policy), res.timed_out))

    ts = np.array([r.coordinate for r in runs])
    ests = np.array([r.estimate for r in runs])
    offset = float(ests.mean())
    if boundary_noise is None:
        boundary_noise = (transect_stop_error / 2.0) ** 2
    kernel = dataclasses.replace(boundary_kernel, noise_variance=boundary_noise)
    model = gp_fit(ts, ests - offset, kernel)
    rows, cols = grid_dims
    boundary = gp_predict(model, grid_axis(cols))[0] + offset
    estimate = LevelSetEstimate.from_boundary(boundary, grid_dims)
    samples = sum(r.trace.sample_count for r in runs)
    return LSEResult(estimate, runs, path, model, offset, samples, hops)


def _along(field_oracle: Callable[[float, float], float], t: float) -> Callable[[float], float]:
    return lambda s: field_oracle(t, s)
