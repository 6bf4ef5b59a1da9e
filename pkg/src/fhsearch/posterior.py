"""Grid posterior over the change point and the noisy search built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .policy import Policy
from .search import SearchTimeout, SearchTrace, Step, _check_start

DEFAULT_GRID_SIZE = 10_000
P_CLAMP = 0.4999


class DegenerateUpdateError(ArithmeticError):
    """Bayesian update whose normaliser vanishes."""


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise around the level-set threshold.

    With ``flip_prob`` set, raw measurements are binary labels (1 above the
    threshold) flipped with that constant probability, and ``sigma`` is unused.
    """

    sigma: float = 0.0
    threshold: float = 0.5
    flip_prob: float | None = None

    def __post_init__(self):
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma!r}")
        if self.flip_prob is not None and not (0.0 <= self.flip_prob < 0.5):
            raise ValueError(f"flip_prob must lie in [0, 1/2), got {self.flip_prob!r}")


def error_probability(raw_value: float, noise: NoiseModel) -> float:
    """Probability that thresholding ``raw_value`` gave the wrong label.

    Returns 1/2 for a reading exactly on the threshold.
    """
    if noise.flip_prob is not None:
        return float(noise.flip_prob)
    d = raw_value - noise.threshold
    if d == 0.0:
        return 0.5
    if noise.sigma == 0.0:
        return 0.0
    # tail of the standard normal on the far side of the threshold
    return float(ndtr(-abs(d) / noise.sigma))


def is_positive(raw_value: float, noise: NoiseModel) -> bool:
    return raw_value > noise.threshold


@dataclass
class Posterior:
    """Piecewise-constant density on ``grid_size`` equal bins of [0, 1]."""

    mass: np.ndarray

    @classmethod
    def uniform(cls, grid_size: int = DEFAULT_GRID_SIZE) -> "Posterior":
        if grid_size < 1:
            raise ValueError("grid_size must be >= 1")
        return cls(np.full(grid_size, 1.0 / grid_size))

    @property
    def grid_size(self) -> int:
        return self.mass.size

    @property
    def width(self) -> float:
        return 1.0 / self.mass.size

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.mass.size + 1)

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.mass.size) + 0.5) * self.width

    def copy(self) -> "Posterior":
        return Posterior(self.mass.copy())

    def cdf(self, x: float) -> float:
        """Mass in ``[0, x]`` with the density uniform inside each bin."""
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return float(self.mass.sum())
        pos = x * self.mass.size
        i = min(int(pos), self.mass.size - 1)
        return float(self.mass[:i].sum() + self.mass[i] * (pos - i))

    def quantile(self, q: float) -> float:
        return quantile(self, q)

    def median(self) -> float:
        return quantile(self, 0.5)

    def support(self) -> tuple[float, float]:
        nz = np.flatnonzero(self.mass > 0.0)
        return float(nz[0] * self.width), float((nz[-1] + 1) * self.width)

    def expected_abs_error(self, estimate: float) -> float:
        """``E|estimate - theta|`` integrated exactly over the piecewise density."""
        n = self.mass.size
        w = self.width
        c = self.centers
        d = np.abs(c - estimate) * self.mass
        i = min(max(int(estimate * n), 0), n - 1)
        lo = i * w
        hi = lo + w
        d[i] = self.mass[i] / w * ((estimate - lo) ** 2 + (hi - estimate) ** 2) / 2.0
        return float(d.sum())

    def to_rows(self) -> list[tuple[float, float]]:
        return list(zip(self.centers.tolist(), self.mass.tolist()))


def quantile(posterior: Posterior, q: float) -> float:
    """Location with cumulative mass ``q``, interpolated linearly inside bins."""
    mass = posterior.mass
    n = mass.size
    cum = np.cumsum(mass)
    total = cum[-1]
    target = min(max(q, 0.0), 1.0) * total
    i = int(np.searchsorted(cum, target, side="left"))
    if i >= n:
        i = n - 1
    # skip empty bins so the quantile lands inside the support
    if mass[i] == 0.0:
        nz = np.flatnonzero(mass)
        later = nz[nz >= i]
        i = int(later[0]) if later.size else int(nz[-1])
    before = cum[i] - mass[i]
    frac = (target - before) / mass[i] if mass[i] > 0 else 0.0
    frac = min(max(frac, 0.0), 1.0)
    return float((i + frac) / n)


def update(
    posterior: Posterior,
    sample_location: float,
    label_positive: bool,
    p: float,
    z: float | None = None,
) -> Posterior:
    """Bayes update after a thresholded measurement with error probability ``p``.

    A positive label favours change points right of ``sample_location``. The
    bin containing the sample is split in proportion to the overlap. ``z`` is
    the prior mass left of the sample and is computed when omitted.
    """
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"p must lie in [0, 1/2], got {p!r}")
    if z is None:
        z = posterior.cdf(sample_location)
    if label_positive:
        norm = z * p + (1.0 - z) * (1.0 - p)
        w_left, w_right = p, 1.0 - p
    else:
        norm = z * (1.0 - p) + (1.0 - z) * p
        w_left, w_right = 1.0 - p, p
    if norm <= 0.0:
        raise DegenerateUpdateError(
            f"update at x={sample_location} with z={z}, p={p} has zero normaliser"
        )
    mass = posterior.mass
    n = mass.size
    pos = min(max(sample_location, 0.0), 1.0) * n
    i = min(int(pos), n - 1)
    frac_left = pos - i
    out = np.empty_like(mass)
    out[:i] = mass[:i] * (w_left / norm)
    out[i + 1:] = mass[i + 1:] * (w_right / norm)
    out[i] = mass[i] * (frac_left * w_left + (1.0 - frac_left) * w_right) / norm
    total = out.sum()
    if total <= 0.0:
        raise DegenerateUpdateError("posterior mass vanished")
    out /= total
    return Posterior(out)


def _xlogy(a: float, b: float) -> float:
    return 0.0 if a == 0.0 else a * math.log(b)


def effective_interval_size(x0: float, label_positive: bool, p: float) -> float:
    """Exponentiated entropy of a uniform prior after one reading at ``x0``.

    Equals the surviving interval length when ``p == 0``.
    """
    if not 0.0 < x0 < 1.0:
        raise ValueError(f"x0 must lie in (0, 1), got {x0!r}")
    if not 0.0 <= p < 0.5:
        raise ValueError(f"p must lie in [0, 1/2), got {p!r}")
    q = 1.0 - p
    if label_positive:
        norm = x0 * p + (1.0 - x0) * q
        left, right = x0, 1.0 - x0
    else:
        norm = x0 * q + (1.0 - x0) * p
        left, right = 1.0 - x0, x0
    # left side carries weight p, right side 1 - p (mirrored for negatives)
    log_e = math.log(norm) - (_xlogy(p * left, p) + _xlogy(q * right, q)) / norm
    return math.exp(log_e)


def mixing_constant(p: float) -> float:
    """``sqrt(p) / (sqrt(p) + sqrt(1 - p))``."""
    return math.sqrt(p) / (math.sqrt(p) + math.sqrt(1.0 - p))


def convergence_terms(p: float) -> tuple[float, float, float]:
    """The three coefficients whose sum is one; the third is damped by ``1 - 2z``."""
    alpha = mixing_constant(p)
    a = (1.0 - p) / (2.0 * (1.0 - alpha))
    # p / (2 alpha) -> 0 as p -> 0
    b = 0.0 if p == 0.0 else p / (2.0 * alpha)
    return a, b, (a - b) * (1.0 - 2.0 * alpha)


def convergence_factor(z: float, p: float) -> float:
    """Per-step contraction of the discretised search error bound."""
    if not 0.0 < z <= 0.5:
        raise ValueError(f"z must lie in (0, 1/2], got {z!r}")
    if not 0.0 <= p < 0.5:
        raise ValueError(f"p must lie in [0, 1/2), got {p!r}")
    a, b, c = convergence_terms(p)
    return a + b + c * (1.0 - 2.0 * z)


@dataclass
class PFHSResult:
    trace: SearchTrace
    posterior: Posterior
    timed_out: bool = False
    clamped_steps: list[int] = field(default_factory=list)


def next_location(candidates: tuple[float, float], current: float, median: float) -> float:
    """Nearer of the two quantiles, truncated at the median if it would cross it."""
    x = min(candidates, key=lambda c: abs(c - current))
    if (x - median) * (current - median) < 0.0:
        return median
    return x


def pfhs_search(
    oracle: Callable[[float], float],
    policy: Policy,
    noise: NoiseModel,
    stop_error: float,
    grid_size: int = DEFAULT_GRID_SIZE,
    *,
    prior: Posterior | None = None,
    start: float = 0.0,
    max_samples: int | None = None,
    max_iter: int = 10_000,
    raise_on_timeout: bool = False,
) -> PFHSResult:
    """Posterior-quantile search driven by a noiseless-optimal policy.

    Each step samples whichever of the ``z`` and ``1 - z`` posterior quantiles
    is closer to the sensor, never crossing the posterior median, thresholds
    the reading, and applies the Bayes update with the reading's error
    probability (clamped below 1/2). Stops once the posterior expected absolute error of the
    median is at most ``stop_error`` or after ``max_samples`` readings.

    ``prior`` and ``start`` let a caller resume from an earlier reading.
    Exceeding ``max_iter`` returns a result with ``timed_out`` set, or raises
    :class:`SearchTimeout` when ``raise_on_timeout`` is true.
    """
    _check_start(start)
    post = prior.copy() if prior is not None else Posterior.uniform(grid_size)
    trace = SearchTrace(start=start)
    x_cur = start
    estimate = post.median()
    clamped = []
    n = 1
    timed_out = False
    while post.expected_abs_error(estimate) > stop_error:
        if max_samples is not None and n > max_samples:
            break
        if n > max_iter:
            timed_out = True
            break
        z = policy.fraction(n)
        x0 = post.quantile(z)
        x1 = post.quantile(1.0 - z)
        x_new = next_location((x0, x1), x_cur, estimate)
        y = oracle(x_new)
        if not np.isfinite(y):
            raise ValueError(f"oracle returned non-finite value {y!r} at x={x_new}")
        positive = is_positive(y, noise)
        p = error_probability(y, noise)
        if p > P_CLAMP:
            p = P_CLAMP
            clamped.append(n)
        post = update(post, x_new, positive, p)
        estimate = post.median()
        a, b = post.support()
        trace.append(Step(x=x_new, y=float(y), label=int(positive), a=a, b=b, estimate=estimate, p=p))
        x_cur = x_new
        n += 1
    trace.estimate = estimate
    result = PFHSResult(trace=trace, posterior=post, timed_out=timed_out, clamped_steps=clamped)
    if timed_out and raise_on_timeout:
        raise SearchTimeout(result)
    return result
