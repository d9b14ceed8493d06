"""zCDP accounting: conversions, noise calibration, and the release ledger.

Every Gaussian release of L2/Frobenius sensitivity ``s`` with noise standard
deviation ``sigma * s`` costs ``1 / (2 sigma^2)`` rho under zCDP, and costs
add under composition. Conversion to (epsilon, delta)-DP uses the standard
closed-form bound

    epsilon = rho + 2 * sqrt(rho * ln(1/delta)),

which is invertible in rho. Tighter (Renyi-order-optimized) conversions exist
and report smaller rho for the same epsilon; this module deliberately sticks
to the closed form so that calibration round-trips exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

FIRST_ORDER = "first_order"
NEWTON = "newton"
LEAST_SQUARES = "least_squares"
FEATURE_COVARIANCE = "feature_covariance"

METHODS = (FIRST_ORDER, NEWTON, LEAST_SQUARES, FEATURE_COVARIANCE)


@dataclass(frozen=True)
class PrivacyBudget:
    """Target (epsilon, delta)-DP guarantee for one training run."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be finite and positive, got {self.epsilon}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def rho(self) -> float:
        return rho_from_epsilon_delta(self.epsilon, self.delta)


@dataclass(frozen=True)
class MechanismCost:
    """Total zCDP cost of a method as ``rho_coefficient / sigma^2``.

    first_order spends T gradient releases of 1/(2 sigma^2) each; newton
    spends 2 per class per iteration at 1/(2 m sigma^2); least_squares spends
    three joint releases regardless of the class count; feature_covariance
    spends one covariance release plus T gradient releases.
    """

    method: str
    iterations: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method != LEAST_SQUARES and self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")

    @property
    def rho_coefficient(self) -> float:
        t = self.iterations
        if self.method == FIRST_ORDER:
            return t / 2.0
        if self.method == NEWTON:
            return float(t)
        if self.method == LEAST_SQUARES:
            return 1.5
        return (t + 1) / 2.0


def rho_from_epsilon_delta(epsilon: float, delta: float) -> float:
    """The unique rho with ``epsilon_from_rho(rho, delta) == epsilon``.

    Closed form: rho = (sqrt(L + epsilon) - sqrt(L))^2 with L = ln(1/delta).
    Strictly increasing in epsilon and strictly decreasing in L.
    """
    budget = PrivacyBudget(epsilon, delta)  # validation only
    big_l = math.log(1.0 / budget.delta)
    return (math.sqrt(big_l + budget.epsilon) - math.sqrt(big_l)) ** 2


def epsilon_from_rho(rho: float, delta: float) -> float:
    """Standard zCDP -> (epsilon, delta)-DP bound."""
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


def calibrate_sigma(cost: MechanismCost, budget: PrivacyBudget) -> float:
    """Noise multiplier spending exactly the budget: sigma = sqrt(coef / rho)."""
    return calibrate_sigma_from_rho(cost, budget.rho)


def calibrate_sigma_from_rho(cost: MechanismCost, rho: float) -> float:
    if not (rho > 0 and math.isfinite(rho)):
        raise ValueError(f"target rho must be positive and finite, got {rho}")
    return math.sqrt(cost.rho_coefficient / rho)


class Ledger:
    """Append-only record of the zCDP cost of every sanitized release.

    Solvers route each Gaussian release through the ledger so a run's total
    can be audited against the closed-form coefficient. The total is computed
    with exact (fsum) summation.
    """

    def __init__(self):
        self._entries: list[tuple[str, float]] = []

    def charge(self, label: str, rho: float) -> None:
        if rho < 0:
            raise ValueError(f"cannot charge negative rho {rho} ({label})")
        self._entries.append((str(label), float(rho)))

    @property
    def entries(self) -> tuple[tuple[str, float], ...]:
        return tuple(self._entries)

    @property
    def total_rho(self) -> float:
        return math.fsum(rho for _, rho in self._entries)

    def epsilon_at(self, delta: float) -> float:
        return epsilon_from_rho(self.total_rho, delta)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"Ledger(releases={len(self._entries)}, total_rho={self.total_rho:.6g})"
