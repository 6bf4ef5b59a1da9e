"""Noiseless finite-horizon search against a binary step oracle."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

from .policy import Policy

TRACE_COLUMNS = ("step", "x", "y", "label", "a", "b", "estimate", "cumulative_distance")


class SearchTimeout(RuntimeError):
    """A search exceeded its iteration cap; ``result`` holds the partial run."""

    def __init__(self, result):
        super().__init__("search did not converge within the iteration cap")
        self.result = result


@dataclass
class Step:
    x: float
    y: float
    label: int
    a: float
    b: float
    estimate: float
    p: float = 0.0
    cumulative_distance: float = 0.0


@dataclass
class SearchTrace:
    """Sampled locations with running interval/estimate and path length."""

    start: float = 0.0
    steps: list[Step] = field(default_factory=list)
    total_distance: float = 0.0
    estimate: float = float("nan")

    def append(self, step: Step) -> None:
        prev = self.steps[-1].x if self.steps else self.start
        self.total_distance += abs(step.x - prev)
        step.cumulative_distance = self.total_distance
        self.steps.append(step)

    @property
    def sample_count(self) -> int:
        return len(self.steps)

    @property
    def locations(self) -> list[float]:
        return [s.x for s in self.steps]

    def rows(self) -> list[tuple]:
        return [
            (i + 1, s.x, s.y, s.label, s.a, s.b, s.estimate, s.cumulative_distance)
            for i, s in enumerate(self.steps)
        ]

    def to_csv(self, fh=None) -> str | None:
        """Write the trace as CSV; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
        return out.getvalue() if fh is None else None


def _check_start(start: float) -> None:
    if not 0.0 <= start <= 1.0:
        raise ValueError(f"start must lie in [0, 1], got {start!r}")


def step_oracle(theta: float) -> Callable[[float], int]:
    """Noiseless indicator of ``[0, theta)``; the change point itself reads 0."""
    return lambda x: 1 if x < theta else 0


def fhs_search(
    oracle: Callable[[float], int],
    policy: Policy,
    stop_error: float,
    *,
    max_samples: int | None = None,
    max_iter: int = 10_000,
) -> SearchTrace:
    """Run the finite-horizon search until the feasible interval is short enough.

    The sensor starts at 0 with an implied positive label, so the first move
    is forward. Each step moves ``z_n`` of the interval length away from the
    current location, forward after a positive label and backward after a
    negative one; the new reading replaces the matching interval endpoint.
    Under noiseless labels the sample always lies strictly inside the
    interval, so this equals taking the max positive / min negative location.
    Once the policy's fractions run out the greedy fraction is repeated.

    ``max_samples`` caps the number of readings for fixed-horizon runs; with
    flipped labels the interval no longer brackets the change point but the
    update stays well defined.

    Raises:
        ValueError: if the oracle returns something other than 0 or 1.
        SearchTimeout: after ``max_iter`` readings without reaching ``stop_error``.
    """
    a, b = 0.0, 1.0
    x, y = 0.0, 1
    trace = SearchTrace(start=0.0)
    n = 1
    while b - a > stop_error:
        if max_samples is not None and n > max_samples:
            break
        if n > max_iter:
            trace.estimate = (a + b) / 2.0
            raise SearchTimeout(trace)
        z = policy.fraction(n)
        step = z * (b - a)
        x = x + step if y == 1 else x - step
        y = oracle(x)
        if y not in (0, 1):
            raise ValueError(f"oracle must return 0 or 1, got {y!r} at x={x}")
        y = int(y)
        if y == 1:
            a = x
        else:
            b = x
        trace.append(Step(x=x, y=float(y), label=y, a=a, b=b, estimate=(a + b) / 2.0))
        n += 1
    trace.estimate = (a + b) / 2.0
    return trace
