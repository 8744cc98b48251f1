"""zCDP accounting and the two private mechanisms.

The total budget rho is fixed up front from (epsilon, delta); every mechanism
call charges the accountant before sampling, so no value is ever released
without a recorded charge. Gaussian measurement noise has variance
1 / (2 n^2 rho); top-K selection adds Gumbel noise of scale K / (sqrt(2 rho) n)
to the query errors and reports the K largest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ParameterError

_LEDGER_SLACK = 1e-12


def rho_from_eps_delta(epsilon: float, delta: float) -> float:
    """The unique rho > 0 with epsilon = rho + 2 sqrt(rho ln(1/delta))."""
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    log_inv = math.log(1.0 / delta)
    return (math.sqrt(log_inv + epsilon) - math.sqrt(log_inv)) ** 2


def eps_from_rho_delta(rho: float, delta: float) -> float:
    if rho < 0 or not 0 < delta < 1:
        raise ParameterError("need rho >= 0 and delta in (0, 1)")
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


@dataclass
class PrivacyAccountant:
    """Total budget plus an itemized spend ledger. Charges are atomic."""

    rho_total: float
    epsilon: float
    delta: float
    ledger: list = field(default_factory=list)  # (label, rho) pairs

    @classmethod
    def from_eps_delta(cls, epsilon: float, delta: float) -> "PrivacyAccountant":
        return cls(rho_total=rho_from_eps_delta(epsilon, delta), epsilon=epsilon, delta=delta)

    @property
    def spent(self) -> float:
        return sum(rho for _, rho in self.ledger)

    @property
    def remaining(self) -> float:
        return self.rho_total - self.spent

    def charge(self, label: str, rho: float) -> None:
        if not rho > 0:
            raise ParameterError("charge must be positive")
        shortfall = self.spent + rho - self.rho_total
        if shortfall > _LEDGER_SLACK:
            raise BudgetError(
                f"charge {label!r} of {rho:g} exceeds remaining budget "
                f"{self.remaining:g} by {shortfall:g}",
                shortfall=shortfall,
            )
        self.ledger.append((label, rho))

    def ledger_export(self) -> list:
        out = []
        total = 0.0
        for label, rho in self.ledger:
            total += rho
            out.append({"label": label, "rho": rho, "cumulative": total})
        return out


@dataclass(frozen=True)
class NoisyMeasurement:
    """A privately measured query answer, clamped to [0, 1]."""

    query_id: int
    value: float
    rho_spent: float
    epoch: int


def gaussian_measure(
    true_answer: float,
    n: int,
    rho: float,
    rng: np.random.Generator,
    accountant: PrivacyAccountant | None = None,
    query_id: int = -1,
    epoch: int = 0,
    label: str = "gaussian",
    zero_noise: bool = False,
) -> NoisyMeasurement:
    """Release true_answer + N(0, 1/(2 n^2 rho)), clamped to [0, 1].

    The accountant (if given) is charged before the noise is drawn. The
    zero_noise hook forces Z = 0 for testing; it does not skip the charge.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not rho > 0:
        raise ParameterError("rho must be positive")
    if accountant is not None:
        accountant.charge(label, rho)
    if zero_noise:
        z = 0.0
    else:
        z = rng.normal(0.0, math.sqrt(1.0 / (2.0 * n * n * rho)))
    value = min(max(true_answer + z, 0.0), 1.0)
    return NoisyMeasurement(query_id=query_id, value=value, rho_spent=rho, epoch=epoch)


def gumbel_topk(
    errors,
    k: int,
    rho: float,
    n: int,
    rng: np.random.Generator,
    accountant: PrivacyAccountant | None = None,
    label: str = "select",
    zero_noise: bool = False,
) -> list[int]:
    """One-shot noisy top-K selection over error scores.

    Adds independent Gumbel(K / (sqrt(2 rho) n)) noise to each score and
    returns the indices of the K largest noisy scores in descending order.
    With zero_noise, ties break toward the lower index.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 1 or errors.size == 0:
        raise ParameterError("errors must be a non-empty vector")
    if not 1 <= k <= errors.size:
        raise ParameterError(f"K={k} out of range for {errors.size} scores")
    if not rho > 0:
        raise ParameterError("rho must be positive")
    if n < 1:
        raise ParameterError("n must be >= 1")
    if accountant is not None:
        accountant.charge(label, rho)
    if zero_noise:
        noisy = errors
    else:
        scale = k / (math.sqrt(2.0 * rho) * n)
        u = rng.random(errors.size)
        # Inverse-CDF Gumbel draw; reproducible across platforms.
        noisy = errors - scale * np.log(-np.log(u))
    order = np.argsort(-noisy, kind="stable")
    return [int(i) for i in order[:k]]
