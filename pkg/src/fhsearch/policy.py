"""Closed-form finite-horizon sampling policies.

A policy is a list of fractions ``z_1 .. z_N``: at step ``n`` the sensor moves
``z_n`` of the current feasible interval away from the endpoint it sits on.
The fractions minimise the expected final interval length plus ``lam`` times
the expected distance travelled, assuming a uniform prior on the change point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_MAX_HORIZON = 10_000


class PolicyDomainError(ValueError):
    """Raised for distance penalties or targets outside the admissible range."""


def _check_lambda(lam: float) -> None:
    if not (0.0 <= lam < 2.0) or not np.isfinite(lam):
        raise PolicyDomainError(f"lambda must lie in [0, 2), got {lam!r}")


def greedy_fraction(lam: float) -> float:
    """One-step optimal fraction, also the last fraction of every horizon."""
    return 0.5 - lam / 4.0


def xi(z):
    """Expected one-step shrink factor ``z**2 + (1 - z)**2``."""
    z = np.asarray(z, dtype=float)
    return z * z + (1.0 - z) * (1.0 - z)


@dataclass(frozen=True)
class Policy:
    """Ordered sampling fractions plus the continuation fraction.

    ``greedy_fraction`` is used once ``fractions`` are exhausted.
    """

    lam: float
    fractions: tuple[float, ...]
    greedy_fraction: float

    def __len__(self) -> int:
        return len(self.fractions)

    def fraction(self, n: int) -> float:
        """Fraction used at step ``n`` (1-based)."""
        if n <= len(self.fractions):
            return self.fractions[n - 1]
        return self.greedy_fraction

    @property
    def z_min(self) -> float:
        return min(self.fractions + (self.greedy_fraction,))


@dataclass(frozen=True)
class PolicyDiagnostics:
    xi: tuple[float, ...]
    rho: tuple[float, ...]
    expected_length: float
    expected_distance: float
    expected_cost: float


def _backward(n_steps: int, lam: float) -> tuple[list[float], list[float]]:
    # rho_k = xi_{k+1} rho_{k+1} + lam z_{k+1}, rho_N = 1
    zs = [0.0] * n_steps
    rhos = [0.0] * n_steps
    rho = 1.0
    for k in range(n_steps - 1, -1, -1):
        if k < n_steps - 1:
            z_next = zs[k + 1]
            rho = float(xi(z_next)) * rho + lam * z_next
        rhos[k] = rho
        zs[k] = 0.5 - lam / (4.0 * rho)
    return zs, rhos


def compute_policy(n_steps: int, lam: float) -> Policy:
    """Optimal ``n_steps`` fractions for distance penalty ``lam``.

    Computed by the backward recursion from the last step, so the cost is
    linear in ``n_steps``.

    >>> compute_policy(3, 0.0).fractions
    (0.5, 0.5, 0.5)
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise PolicyDomainError(f"n_steps must be a positive integer, got {n_steps!r}")
    _check_lambda(lam)
    zs, _ = _backward(int(n_steps), lam)
    return Policy(lam=float(lam), fractions=tuple(zs), greedy_fraction=greedy_fraction(lam))


def rho_values(fractions: Sequence[float], lam: float) -> list[float]:
    """Tail weights ``rho_k`` for arbitrary fractions, with ``rho_N = 1``."""
    n = len(fractions)
    rhos = [1.0] * n
    for k in range(n - 2, -1, -1):
        z_next = fractions[k + 1]
        rhos[k] = float(xi(z_next)) * rhos[k + 1] + lam * z_next
    return rhos


def expected_interval_length(policy: Policy | Sequence[float], initial_length: float = 1.0) -> float:
    fr = policy.fractions if isinstance(policy, Policy) else policy
    return float(initial_length * np.prod(xi(np.asarray(fr, dtype=float))))


def expected_distance(policy: Policy | Sequence[float], initial_length: float = 1.0) -> float:
    """Expected path length; step ``i`` travels ``z_i`` times the expected interval before it."""
    fr = np.asarray(policy.fractions if isinstance(policy, Policy) else policy, dtype=float)
    if fr.size == 0:
        return 0.0
    before = np.concatenate(([1.0], np.cumprod(xi(fr))[:-1]))
    return float(initial_length * np.sum(fr * before))


def expected_cost(policy: Policy | Sequence[float], initial_length: float = 1.0, lam: float | None = None) -> float:
    """Expected final length plus ``lam`` times expected distance.

    ``lam`` defaults to the policy's own penalty; pass it explicitly when
    ``policy`` is a bare sequence of fractions.
    """
    if lam is None:
        if not isinstance(policy, Policy):
            raise TypeError("lam is required when policy is a plain sequence")
        lam = policy.lam
    return expected_interval_length(policy, initial_length) + lam * expected_distance(policy, initial_length)


def cost_gradient(fractions: Sequence[float], lam: float) -> np.ndarray:
    """Gradient of :func:`expected_cost` (unit length) with respect to each fraction."""
    fr = np.asarray(fractions, dtype=float)
    if np.any((fr < 0.0) | (fr > 1.0)):
        raise PolicyDomainError("fractions must lie in [0, 1]")
    if fr.size == 0:
        return np.zeros(0)
    rho = np.asarray(rho_values(fr, lam))
    before = np.concatenate(([1.0], np.cumprod(xi(fr))[:-1]))
    return before * ((4.0 * fr - 2.0) * rho + lam)


def diagnostics(policy: Policy, initial_length: float = 1.0) -> PolicyDiagnostics:
    return PolicyDiagnostics(
        xi=tuple(float(v) for v in xi(np.asarray(policy.fractions))),
        rho=tuple(rho_values(policy.fractions, policy.lam)),
        expected_length=expected_interval_length(policy, initial_length),
        expected_distance=expected_distance(policy, initial_length),
        expected_cost=expected_cost(policy, initial_length),
    )


def policy_for_error(
    target_error: float,
    lam: float,
    initial_length: float = 1.0,
    max_horizon: int = DEFAULT_MAX_HORIZON,
) -> Policy:
    """Shortest optimal policy whose expected final length is at most ``target_error``.

    The horizon is grown one step at a time from the end: the tail of an
    ``N``-step policy is the optimal policy for the shorter horizon, so each
    extension only prepends a fraction. Returns an empty policy when the
    initial interval is already small enough.

    Raises:
        PolicyDomainError: for ``lam`` outside ``[0, 2)``, non-positive inputs,
            or when more than ``max_horizon`` steps would be needed.
    """
    _check_lambda(lam)
    if not target_error > 0 or not initial_length > 0:
        raise PolicyDomainError("target_error and initial_length must be positive")
    g = greedy_fraction(lam)
    if initial_length <= target_error:
        return Policy(lam=float(lam), fractions=(), greedy_fraction=g)

    zs = [g]
    rho = 1.0
    shrink = float(xi(g))
    while initial_length * shrink > target_error:
        if len(zs) >= max_horizon:
            raise PolicyDomainError(
                f"target {target_error} needs more than {max_horizon} steps at lambda={lam}"
            )
        z_next = zs[-1]
        rho = float(xi(z_next)) * rho + lam * z_next
        z = 0.5 - lam / (4.0 * rho)
        zs.append(z)
        shrink *= float(xi(z))
    zs.reverse()
    return Policy(lam=float(lam), fractions=tuple(zs), greedy_fraction=g)


def select_lambda(
    sample_time: float,
    travel_time: float,
    target_error: float,
    initial_length: float = 1.0,
    lambda_grid: Sequence[float] = (),
    cost_table: dict[float, tuple[float, float]] | None = None,
) -> tuple[float, Policy]:
    """Pick the penalty minimising ``sample_time * N + travel_time * D`` over a grid.

    Without ``cost_table`` the sample count comes from :func:`policy_for_error`
    and the distance from :func:`expected_distance`. With it, ``cost_table``
    maps each grid value to an empirical ``(mean_samples, mean_distance)``.
    Ties go to the smaller penalty.
    """
    if len(lambda_grid) == 0:
        raise PolicyDomainError("lambda_grid is empty")
    if sample_time < 0 or travel_time < 0:
        raise PolicyDomainError("times must be non-negative")
    best = None
    for lam in sorted(float(v) for v in lambda_grid):
        _check_lambda(lam)
        if cost_table is not None:
            n_lam, d_lam = cost_table[lam]
        else:
            pol = policy_for_error(target_error, lam, initial_length)
            n_lam, d_lam = len(pol), expected_distance(pol, initial_length)
        total = sample_time * n_lam + travel_time * d_lam
        if best is None or total < best[0]:
            best = (total, lam)
    lam_star = best[1]
    return lam_star, policy_for_error(target_error, lam_star, initial_length)
