"""Scalar kernels shared by every fixed-point and critical-point equation.

Everything here is a closed form built from the Gaussian tail function;
quadrature is used only as an independent oracle in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

_SQRT2 = np.sqrt(2.0)
_SQRT_2PI = np.sqrt(2.0 * np.pi)


def q_tail(x):
    """Upper tail of the standard Gaussian, P(Z > x).

    Evaluated through the complementary error function, which keeps full
    relative precision deep into the tail.
    """
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)


def gauss_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def overshoot_moment(x):
    """E[ max(sqrt(x) Z - 1, 0)^2 ] for standard normal Z, with x >= 0.

    Equals (x + 1) P(Z > x^{-1/2}) - sqrt(x) pdf(x^{-1/2}); continuous
    extension 0 at x = 0.  Scalars in, scalars out; arrays broadcast.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("overshoot_moment requires x >= 0")
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    inv_sqrt = 1.0 / np.sqrt(xp)
    out[pos] = (xp + 1.0) * q_tail(inv_sqrt) - np.sqrt(xp) * gauss_pdf(inv_sqrt)
    if out.ndim == 0:
        return float(out)
    return out


def soft_threshold(h, qhat):
    """Minimizer of qhat*x^2/2 - h*x + |x|: shrink h toward zero by 1, scale by 1/qhat.

    The closed branch at |h| = 1 returns 0.
    """
    if qhat <= 0:
        raise ValueError("soft_threshold requires qhat > 0")
    h = np.asarray(h, dtype=float)
    out = np.where(h > 1.0, (h - 1.0) / qhat, np.where(h < -1.0, (h + 1.0) / qhat, 0.0))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class BlockPrior:
    """Sparse prior of one block: (1 - rho) delta_0 + rho x (non-zero law).

    Only the standard Gaussian non-zero law ships (the threshold analysis
    needs just a unit second moment, and the experiments draw standard
    normals); the field is a hook for other unit-variance laws.
    """

    rho: float
    nonzero: str = "gaussian"

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.nonzero != "gaussian":
            raise NotImplementedError(
                f"only the gaussian non-zero law is implemented, got {self.nonzero!r}")


def prior_average(block: BlockPrior, chihat, mhat, qhat, which: str) -> float:
    """Gaussian-prior averages driving the order-parameter updates.

    The estimator applied to the local field h = sqrt(chihat) z + mhat x0 is
    the soft threshold X(h; qhat).  With z standard normal and x0 drawn from
    `block`, this returns

      which="q"   E[X^2]            (self-overlap update)
      which="chi" E[dX/dh]          (susceptibility update)
      which="m"   E[x0 X]           (signal-overlap update)

    All three reduce to tail/overshoot expressions because h is Gaussian with
    variance chihat for the zero mass and chihat + mhat^2 for the signal mass.
    """
    if qhat <= 0:
        raise ValueError("prior_average requires qhat > 0")
    if chihat < 0:
        raise ValueError("prior_average requires chihat >= 0")
    rho = block.rho
    s2 = chihat + mhat * mhat
    with np.errstate(divide="ignore"):
        tail_zero = float(q_tail(np.inf if chihat == 0 else chihat ** -0.5))
        tail_sig = float(q_tail(np.inf if s2 == 0 else s2 ** -0.5))
    if which == "q":
        return (2.0 * (1.0 - rho) * overshoot_moment(chihat)
                + 2.0 * rho * overshoot_moment(s2)) / qhat ** 2
    if which == "chi":
        return (2.0 * (1.0 - rho) * tail_zero + 2.0 * rho * tail_sig) / qhat
    if which == "m":
        return 2.0 * rho * mhat * tail_sig / qhat
    raise ValueError(f"unknown average {which!r}; expected 'q', 'chi' or 'm'")
