"""Characteristic exponent of the loop-closure probability.

For T independent isotropic M-vectors u_t with per-block squared-norm
densities v_t = |u_t|^2 / M, the probability that they close into a loop
(sum_t u_t = 0) decays like exp(M F({v_t})).  F is obtained by extremizing

    -log(sum_t 1/L_t)/2 - sum_t log(L_t)/2 + sum_t L_t v_t / 2
            - sum_t log(v_t)/2 - T/2

over positive multipliers L_t.  The extremizer satisfies v_t L_t = 1 - R_t
with shares R_t = L_t^{-1} / sum_s L_s^{-1}, which is the fixed point iterated
here.  First and second derivatives of F in v feed the saddle-point and
critical-point systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHessian, InfeasibleNorms, NonConvergence

_EQUALITY_RTOL = 1e-12


@dataclass(frozen=True)
class MultiplierSolution:
    """Extremizing multipliers for one norm vector.

    multipliers[t] * v[t] = 1 - shares[t] and shares sum to one; value is the
    extremized exponent F({v_t}).
    """

    multipliers: np.ndarray
    shares: np.ndarray
    value: float


def check_feasible(v: np.ndarray) -> None:
    """Raise InfeasibleNorms unless the closure constraints can hold.

    T = 2 requires v_1 = v_2; T >= 3 requires each v_t < sum of the others
    (the T = 3 case reduces to the triangle inequalities).
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or len(v) < 2:
        raise ValueError("need a 1-D vector of at least two block norms")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise InfeasibleNorms(f"block norms must be positive finite, got {v}")
    if len(v) == 2:
        if abs(v[0] - v[1]) > _EQUALITY_RTOL * max(v[0], v[1]):
            raise InfeasibleNorms(
                f"two blocks can only close a loop with equal norms, got {v}")
        return
    total = v.sum()
    if np.any(v >= total - v):
        raise InfeasibleNorms(f"one block norm dominates the rest: {v}")


def solve_multipliers(v, damping: float = 0.5, tol: float = 1e-12,
                      max_iter: int = 50_000) -> MultiplierSolution:
    """Damped fixed point for the extremizing multipliers of F({v_t}).

    Iterates L_t <- (1 - R_t(L)) / v_t from the uniform-exact initial guess
    L_t = (T-1)/(T v_t) until the update residual drops below `tol`.
    """
    v = np.asarray(v, dtype=float)
    check_feasible(v)
    T = len(v)

    if T == 2:
        # Degenerate direction: only L_1 + L_2 = 1/v is pinned.  Use the
        # symmetric member and the constrained-line value of F.
        vbar = 0.5 * (v[0] + v[1])
        lam = np.full(2, 0.5 / vbar)
        shares = np.full(2, 0.5)
        value = -0.5 * np.log(vbar) - 0.5
        return MultiplierSolution(lam, shares, value)

    lam = (T - 1.0) / (T * v)
    scale = np.max(lam)
    stall = 0
    best = np.inf
    for _ in range(max_iter):
        inv = 1.0 / lam
        shares = inv / inv.sum()
        target = (1.0 - shares) / v
        residual = np.max(np.abs(target - lam)) / scale
        if residual < best - 1e-18:
            best = residual
            stall = 0
        else:
            stall += 1
            if stall >= 50:
                if residual < 1e-9:  # stalled at the rounding floor, accept
                    break
                raise InfeasibleNorms(
                    f"multiplier iteration stalled at residual {residual:.2e} for v={v}")
        if residual < tol:
            break
        lam = (1.0 - damping) * lam + damping * target
        if np.any(lam <= 0):
            raise InfeasibleNorms(f"multiplier left the positive cone for v={v}")
        scale = np.max(lam)
    else:
        raise NonConvergence("multiplier fixed point did not converge", residual=best)

    inv = 1.0 / lam
    shares = inv / inv.sum()
    if np.any(shares <= 0.0) or np.any(shares >= 1.0):
        raise InfeasibleNorms(f"shares left (0, 1) for v={v}")
    value = float(
        -0.5 * np.log(inv.sum())
        - 0.5 * np.log(lam).sum()
        + 0.5 * (lam * v).sum()
        - 0.5 * np.log(v).sum()
        - 0.5 * T
    )
    return MultiplierSolution(lam, shares, value)


def free_energy_gradient(v, solution: MultiplierSolution | None = None) -> np.ndarray:
    """dF/dv_t = (L_t - 1/v_t)/2 by the envelope theorem.

    Equivalently -2 dF/dv_t = R_t / v_t.  For T = 2 the componentwise values
    are the symmetric split of the on-line derivative d/dv(-log(v)/2 - 1/2),
    i.e. -1/(4v) per component.
    """
    v = np.asarray(v, dtype=float)
    if solution is None:
        solution = solve_multipliers(v)
    return 0.5 * (solution.multipliers - 1.0 / v)


def free_energy_hessian(v, solution: MultiplierSolution | None = None) -> np.ndarray:
    """The matrix 2 d2F/dv_t dv_s, assembled from the multiplier solution.

    Uses the rank-structured inverse of dv/dL: with J = diag((1-2R)/L^2) and
    K the outer product (R R^T)/(L L^T), dL/dv = -(J + K)^{-1}, which factors
    as -T0 (I + M0)^{-1} T0 with T0 = diag(L/sqrt(1-2R)) and
    M0 = outer(R/sqrt(1-2R)).  Requires every share strictly below 1/2.
    """
    v = np.asarray(v, dtype=float)
    if len(v) == 2:
        raise DegenerateHessian("two blocks force shares of 1/2; curvature is constrained")
    if solution is None:
        solution = solve_multipliers(v)
    lam, shares = solution.multipliers, solution.shares
    if np.any(shares >= 0.5):
        raise DegenerateHessian(f"shares {shares} reach 1/2; factorization undefined")
    w = np.sqrt(1.0 - 2.0 * shares)
    tdiag = lam / w
    m0 = np.outer(shares / w, shares / w)
    T = len(v)
    inner = np.linalg.solve(np.eye(T) + m0, np.diag(tdiag))
    hess = -np.diag(tdiag) @ inner + np.diag(1.0 / v ** 2)
    return 0.5 * (hess + hess.T)


def _hessian_direct(v, solution: MultiplierSolution) -> np.ndarray:
    """Same matrix by direct inversion of J + K, valid even when a share
    crosses 1/2 (transient states of the fixed-point iteration get there)."""
    v = np.asarray(v, dtype=float)
    lam, shares = solution.multipliers, solution.shares
    jk = np.diag((1.0 - 2.0 * shares) / lam ** 2) + np.outer(shares / lam, shares / lam)
    try:
        inv = np.linalg.inv(jk)
    except np.linalg.LinAlgError as exc:
        raise DegenerateHessian(f"norm-response matrix is singular: {exc}")
    hess = -inv + np.diag(1.0 / v ** 2)
    return 0.5 * (hess + hess.T)
