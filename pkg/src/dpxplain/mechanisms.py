"""zCDP primitives: noise-scale calibration, Gaussian/Gumbel sampling, the budget ledger.

All sampling goes through an explicit `RandomSource` so that a fixed seed
reproduces every mechanism output bit-for-bit on one platform.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import CalibrationError, InsufficientBudgetError

# Budget comparisons allow this much slack so exact-fit charges are accepted.
BUDGET_SLACK = 1e-12


def gaussian_scale(delta: float, rho: float) -> float:
    """Noise scale sigma = delta / sqrt(2 rho) for a rho-zCDP Gaussian release."""
    if delta < 0:
        raise CalibrationError(f"sensitivity must be >= 0, got {delta}")
    if rho <= 0:
        raise CalibrationError(f"privacy budget must be > 0, got {rho}")
    return delta / math.sqrt(2.0 * rho)


def inverse_erf(gamma: float) -> float:
    """Inverse error function on [0, 1), accurate to about 1e-15.

    Seeds with the Winitzki rational approximation, then refines with Newton
    steps on erf(x) - gamma (derivative 2/sqrt(pi) * exp(-x^2)).
    """
    if not 0.0 <= gamma < 1.0:
        raise CalibrationError(f"inverse_erf requires 0 <= gamma < 1, got {gamma}")
    if gamma == 0.0:
        return 0.0
    a = 0.147
    log_term = math.log(1.0 - gamma * gamma)
    half = 2.0 / (math.pi * a) + log_term / 2.0
    x = math.sqrt(math.sqrt(half * half - log_term / a) - half)
    two_over_sqrt_pi = 2.0 / math.sqrt(math.pi)
    for _ in range(50):
        err = math.erf(x) - gamma
        step = err / (two_over_sqrt_pi * math.exp(-x * x))
        x -= step
        if abs(step) <= 1e-15 * (1.0 + abs(x)):
            break
    return x


class RandomSource:
    """Deterministic random stream; same seed implies identical draw sequence.

    Children derived via `derive(*key)` are independent streams that are
    themselves a pure function of (seed, key), which is how per-request and
    per-repetition streams stay replayable.
    """

    def __init__(self, seed: int, _sequence: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._sequence = _sequence if _sequence is not None else np.random.SeedSequence(self.seed)
        self._gen = np.random.Generator(np.random.PCG64(self._sequence))

    def derive(self, *key: int) -> "RandomSource":
        child = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(int(k) for k in key))
        return RandomSource(self.seed, child)

    def gaussian(self, sigma: float) -> float:
        if sigma < 0:
            raise CalibrationError(f"gaussian scale must be >= 0, got {sigma}")
        return float(self._gen.standard_normal() * sigma)

    def gaussian_vector(self, sigma: float, size: int) -> np.ndarray:
        if sigma < 0:
            raise CalibrationError(f"gaussian scale must be >= 0, got {sigma}")
        return self._gen.standard_normal(size) * sigma

    def _gumbel_from_uniform(self, u: np.ndarray | float, sigma: float):
        # Inverse CDF of Pr[Z <= z] = exp(-exp(-z/sigma)); clamp u off {0, 1}
        # so the double log never sees 0.
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        return -sigma * np.log(-np.log(u))

    def gumbel(self, sigma: float) -> float:
        if sigma <= 0:
            raise CalibrationError(f"gumbel scale must be > 0, got {sigma}")
        return float(self._gumbel_from_uniform(self._gen.random(), sigma))

    def gumbel_vector(self, sigma: float, size: int) -> np.ndarray:
        if sigma <= 0:
            raise CalibrationError(f"gumbel scale must be > 0, got {sigma}")
        return self._gumbel_from_uniform(self._gen.random(size), sigma)

    def uniform(self) -> float:
        return float(self._gen.random())

    def uniform_vector(self, size: int) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))


def sample_gaussian(sigma: float, rng: RandomSource) -> float:
    """One draw from N(0, sigma^2)."""
    return rng.gaussian(sigma)


def sample_gumbel(sigma: float, rng: RandomSource) -> float:
    """One draw with CDF exp(-exp(-z/sigma))."""
    return rng.gumbel(sigma)


class PrivacyLedger:
    """Append-only record of labeled rho charges against a fixed total budget.

    Compensated (Neumaier) summation keeps the spent total exact to one ulp
    per charge; a charge that would exceed the cap is rejected atomically.
    """

    def __init__(self, total: float):
        if total < 0:
            raise CalibrationError(f"total budget must be >= 0, got {total}")
        self.total = float(total)
        self._charges: list[tuple[str, float]] = []
        self._sum = 0.0
        self._correction = 0.0

    @property
    def charges(self) -> tuple[tuple[str, float], ...]:
        return tuple(self._charges)

    @property
    def spent(self) -> float:
        return self._sum + self._correction

    @property
    def remaining(self) -> float:
        return self.total - self.spent

    def _accumulate(self, amounts: Iterable[float]) -> tuple[float, float]:
        s, c = self._sum, self._correction
        for x in amounts:
            t = s + x
            if abs(s) >= abs(x):
                c += (s - t) + x
            else:
                c += (x - t) + s
            s = t
        return s, c

    def ensure(self, rho: float) -> None:
        """Raise unless a charge of `rho` would fit."""
        if rho <= 0:
            raise CalibrationError(f"charge must be positive, got {rho}")
        s, c = self._accumulate([rho])
        if s + c > self.total + BUDGET_SLACK:
            raise InsufficientBudgetError(
                f"charge of {rho} exceeds remaining budget {self.remaining}",
                requested=rho,
                remaining=self.remaining,
            )

    def charge(self, label: str, rho: float) -> None:
        self.ensure(rho)
        self._sum, self._correction = self._accumulate([rho])
        self._charges.append((label, float(rho)))

    def charge_all(self, items: Sequence[tuple[str, float]]) -> None:
        """Apply several charges atomically: all fit, or none is recorded."""
        for _, rho in items:
            if rho <= 0:
                raise CalibrationError(f"charge must be positive, got {rho}")
        s, c = self._accumulate([rho for _, rho in items])
        if s + c > self.total + BUDGET_SLACK:
            total_rho = sum(rho for _, rho in items)
            raise InsufficientBudgetError(
                f"charges totaling {total_rho} exceed remaining budget {self.remaining}",
                requested=total_rho,
                remaining=self.remaining,
            )
        for label, rho in items:
            self._sum, self._correction = self._accumulate([rho])
            self._charges.append((label, float(rho)))

    def snapshot(self) -> dict:
        return {
            "total": self.total,
            "spent": self.spent,
            "remaining": self.remaining,
            "charges": [{"label": label, "rho": rho} for label, rho in self._charges],
        }
