"""Per-block non-zero density profiles parametrized by a scalar mu."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidProfile


@dataclass(frozen=True)
class DensityProfile:
    """Map from a scalar parameter mu to per-block densities (rho_1..rho_T).

    kind "uniform":   rho_t = mu for every block.
    kind "localized": rho_1 = T mu, other blocks empty (needs T mu <= 1).
    kind "custom":    user supplied, must be continuous and componentwise
                      nondecreasing in mu with values in [0, 1].
    """

    kind: str
    T: int
    custom_fn: Callable[[float], tuple] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.T < 2:
            raise InvalidProfile("profiles need at least two blocks")
        if self.kind not in ("uniform", "localized", "custom"):
            raise InvalidProfile(f"unknown profile kind {self.kind!r}")
        if self.kind == "custom" and self.custom_fn is None:
            raise InvalidProfile("custom profiles need a density function")

    @classmethod
    def uniform(cls, T: int) -> "DensityProfile":
        return cls("uniform", T)

    @classmethod
    def localized(cls, T: int) -> "DensityProfile":
        return cls("localized", T)

    @classmethod
    def custom(cls, T: int, fn: Callable[[float], tuple]) -> "DensityProfile":
        return cls("custom", T, custom_fn=fn)

    @property
    def mu_max(self) -> float:
        """Largest mu for which every block density stays within [0, 1]."""
        return 1.0 / self.T if self.kind == "localized" else 1.0

    def rho(self, mu: float) -> np.ndarray:
        """Per-block densities at mu, validated against [0, 1]."""
        if self.kind == "uniform":
            out = np.full(self.T, float(mu))
        elif self.kind == "localized":
            out = np.zeros(self.T)
            out[0] = self.T * float(mu)
        else:
            out = np.asarray(self.custom_fn(float(mu)), dtype=float)
            if out.shape != (self.T,):
                raise InvalidProfile(
                    f"custom profile returned shape {out.shape}, expected ({self.T},)")
        if np.any(out < -1e-12) or np.any(out > 1.0 + 1e-12):
            raise InvalidProfile(f"densities {out} left [0, 1] at mu={mu}")
        return np.clip(out, 0.0, 1.0)

    def total_density(self, mu: float) -> float:
        """rho = mean of the block densities (the overall non-zero fraction)."""
        return float(np.mean(self.rho(mu)))

    def weights(self, mu: float | None = None) -> np.ndarray:
        """Relative insertion probabilities rho_t / sum_s rho_s.

        Independent of mu for the built-in kinds; custom profiles are
        evaluated at the given mu (default: half of mu_max).
        """
        if self.kind == "uniform":
            return np.full(self.T, 1.0 / self.T)
        if self.kind == "localized":
            w = np.zeros(self.T)
            w[0] = 1.0
            return w
        mu = 0.5 * self.mu_max if mu is None else mu
        r = self.rho(mu)
        total = r.sum()
        if total <= 0:
            raise InvalidProfile(f"custom profile has zero total density at mu={mu}")
        return r / total
