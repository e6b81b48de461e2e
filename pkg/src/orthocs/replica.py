"""Replica-symmetric saddle-point and critical-threshold solvers.

Three solver families live here:

* `rs_fixed_point` iterates the full order-parameter equations at a given
  total density and converges either to the perfect-recovery state (all
  per-block errors collapse to zero) or to a finite-error state.
* `critical_point_uniform` / `critical_point_general` / `critical_point_T2`
  solve the marginal-stability systems that pin the threshold density
  directly.  Two blocks are special: the loop-closure constraint forces equal
  block norms, so the shares are fixed to 1/2 and a multiplier `eta` absorbs
  the transverse direction.
* `at_stability` evaluates the determinant governing local stability against
  one-step symmetry breaking; at a critical point it must carry an
  eigenvalue of exactly one along the direction (1 - R_t)^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfcinv

from .errors import NonConvergence
from .free_energy import _hessian_direct, solve_multipliers
from .kernels import overshoot_moment, q_tail
from .profiles import DensityProfile

# Below threshold all chi_t collapse to zero together; failure fixed points sit
# at chi = O(0.1).  Snap well above the float floor: the collapse direction is
# multiplicative, so rounding noise in the block ratios amplifies like 1/chi.
_SUCCESS_CHI = 1e-8


# ----------------------------------------------------------------------
# state containers
# ----------------------------------------------------------------------

@dataclass
class SaddleState:
    """Order parameters (q, chi, m) and their conjugates, one entry per block."""

    q: np.ndarray
    chi: np.ndarray
    m: np.ndarray
    q_hat: np.ndarray
    chi_hat: np.ndarray
    m_hat: np.ndarray
    rho: np.ndarray
    iterations: int = 0
    residual: float = np.nan
    phase: str = "unknown"  # "success" | "failure"
    diagnostics: dict = field(default_factory=dict)

    @property
    def mse(self) -> np.ndarray:
        """Per-block mean-squared error q - 2m + rho."""
        return self.q - 2.0 * self.m + self.rho


@dataclass
class CriticalPoint:
    """Converged critical data for one profile."""

    mu_star: float
    rho_c: float
    chihat: np.ndarray
    shares: np.ndarray
    eta: float | None = None
    at_eigen_gap: float | None = None
    diagnostics: dict = field(default_factory=dict)


# ----------------------------------------------------------------------
# shared scalar pieces
# ----------------------------------------------------------------------

def _w_term(rho, chihat):
    """2(1-rho) * overshoot + rho (chihat + 1): curvature source at criticality."""
    return 2.0 * (1.0 - rho) * overshoot_moment(chihat) + rho * (chihat + 1.0)


def _b_term(rho, chihat):
    """2(1-rho) Q(chihat^{-1/2}) + rho: stability load of one block."""
    chihat = np.asarray(chihat, dtype=float)
    with np.errstate(divide="ignore"):
        arg = np.where(chihat > 0, chihat ** -0.5, np.inf)
    return 2.0 * (1.0 - rho) * q_tail(arg) + rho


def _sp_updates(rho, chihat, mhat, qhat):
    """Right-hand sides of the three order-parameter equations (closed form)."""
    s2 = chihat + mhat * mhat
    with np.errstate(divide="ignore"):
        tail_zero = q_tail(np.where(chihat > 0, chihat ** -0.5, np.inf))
        tail_sig = q_tail(np.where(s2 > 0, s2 ** -0.5, np.inf))
    q_new = (2.0 * (1.0 - rho) * overshoot_moment(chihat)
             + 2.0 * rho * overshoot_moment(s2)) / qhat ** 2
    chi_new = (2.0 * (1.0 - rho) * tail_zero + 2.0 * rho * tail_sig) / qhat
    m_new = 2.0 * rho * mhat * tail_sig / qhat
    return q_new, chi_new, m_new


# ----------------------------------------------------------------------
# damped Newton with numeric Jacobian (systems here have <= 17 unknowns)
# ----------------------------------------------------------------------

def _newton(fun, x0, domain_ok, tol=1e-11, max_steps=200, fd_step=1e-7):
    x = np.asarray(x0, dtype=float).copy()
    f = np.asarray(fun(x), dtype=float)
    n = len(x)
    for step in range(max_steps):
        res = np.max(np.abs(f))
        if res <= tol:
            return x, res, step
        jac = np.empty((n, n))
        for j in range(n):
            h = fd_step * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += h
            jac[:, j] = (fun(xp) - f) / h
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(f"singular Jacobian: {exc}", residual=res)
        lam = 1.0
        for _ in range(30):
            xn = x + lam * dx
            if domain_ok(xn):
                fn = np.asarray(fun(xn), dtype=float)
                if np.all(np.isfinite(fn)) and np.max(np.abs(fn)) < res:
                    x, f = xn, fn
                    break
            lam *= 0.5
        else:
            raise NonConvergence("line search failed", residual=res)
    raise NonConvergence("Newton exceeded its step budget",
                         residual=float(np.max(np.abs(f))))


# ----------------------------------------------------------------------
# uniform profile: two scalar equations, any compression rate alpha = 1/T
# ----------------------------------------------------------------------

def critical_point_uniform(alpha: float, tol: float = 1e-13) -> CriticalPoint:
    """Threshold density for uniform block densities at compression rate alpha.

    Reduces to one scalar root-find: the tail equation pins rho in terms of
    the field variance, which is substituted into the curvature equation.
    This curve coincides with the rotation-invariant-ensemble threshold.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    T = 1.0 / alpha

    def rho_of(ch):
        tail2 = 2.0 * q_tail(ch ** -0.5)
        return (alpha - tail2) / (1.0 - tail2)

    def resid(ch):
        r = rho_of(ch)
        return ch - T * _w_term(r, ch)

    # rho(ch) stays in (0, alpha) only below ch_max where 2 Q(ch^-1/2) = alpha
    ch_max = float(np.sqrt(2.0) * erfcinv(alpha)) ** -2
    lo = 1e-8
    hi = min(ch_max * (1.0 - 1e-12), 1e6)
    if resid(lo) > 0 or resid(hi) < 0:
        raise NonConvergence(f"no uniform critical point brackets for alpha={alpha}")
    ch = brentq(resid, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=300)
    rho_c = float(rho_of(ch))

    T_int = round(T)
    if abs(T - T_int) < 1e-9 and T_int >= 2:
        chihat = np.full(T_int, ch)
        shares = np.full(T_int, alpha)
    else:
        chihat = np.array([ch])
        shares = np.array([alpha])
    return CriticalPoint(mu_star=rho_c, rho_c=rho_c, chihat=chihat, shares=shares,
                         diagnostics={"alpha": alpha, "residual": abs(resid(ch))})


# ----------------------------------------------------------------------
# general T >= 3 system: 2T+1 unknowns (mu, chihat_t, R_t)
# ----------------------------------------------------------------------

def _general_residual(z, T, rho_fn):
    mu = z[0]
    chihat = z[1:T + 1]
    shares = z[T + 1:]
    rho = rho_fn(mu)
    w = _w_term(rho, chihat)
    root = np.sqrt(1.0 - 2.0 * shares)
    m0 = np.outer(shares / root, shares / root)
    s_diag = 1.0 / (shares * root)
    sms = np.diag(s_diag) @ np.linalg.solve(np.eye(T) + m0, np.diag(s_diag))
    r_curv = chihat - w / shares ** 2 + sms @ ((1.0 - shares) ** 2 * w)
    r_tail = shares - _b_term(rho, chihat)
    return np.concatenate([[shares.sum() - 1.0], r_curv, r_tail])


def _general_domain(z, T, mu_max):
    mu = z[0]
    chihat = z[1:T + 1]
    shares = z[T + 1:]
    return (0.0 < mu < mu_max and np.all(chihat > 1e-12)
            and np.all(shares > 1e-9) and np.all(shares < 0.5 - 1e-12))


def critical_point_general(profile: DensityProfile, tol: float = 1e-11,
                           homotopy_steps: int = 10) -> CriticalPoint:
    """Critical point for an arbitrary profile with T >= 3 blocks.

    Newton on the 2T+1 system, warm-started from the uniform solution and
    continued through `homotopy_steps` blends between the uniform profile and
    the target profile (the branch connected to the symmetric solution).
    """
    T = profile.T
    if T < 3:
        raise ValueError("use critical_point_T2 for two blocks")
    base = critical_point_uniform(1.0 / T)
    z = np.concatenate([[base.mu_star], base.chihat, base.shares])

    if profile.kind == "uniform":
        blends = [1.0]
    else:
        blends = np.linspace(1.0 / homotopy_steps, 1.0, homotopy_steps)

    mu_cap = profile.mu_max
    for lam in blends:
        def rho_fn(mu, lam=lam):
            return (1.0 - lam) * np.full(T, mu) + lam * profile.rho(mu)

        z, res, _ = _newton(
            lambda zz: _general_residual(zz, T, rho_fn), z,
            lambda zz: _general_domain(zz, T, mu_cap), tol=tol)

    mu = float(z[0])
    return CriticalPoint(
        mu_star=mu, rho_c=profile.total_density(mu),
        chihat=z[1:T + 1].copy(), shares=z[T + 1:].copy(),
        diagnostics={"residual": res})


# ----------------------------------------------------------------------
# T = 2: shares pinned at 1/2, multiplier eta absorbs the difference
# ----------------------------------------------------------------------

def _t2_residual(z, rho_fn):
    mu, ch1, ch2, eta = z
    r1, r2 = rho_fn(mu)
    return np.array([
        ch1 - 2.0 * _w_term(r1, ch1) - eta,
        ch2 - 2.0 * _w_term(r2, ch2) + eta,
        _b_term(r1, ch1) - 0.5,
        _b_term(r2, ch2) - 0.5,
    ])


def critical_point_T2(profile: DensityProfile, tol: float = 1e-11,
                      homotopy_steps: int = 10) -> CriticalPoint:
    """Critical point for exactly two blocks.

    The equal-norm constraint fixes both shares to 1/2; the curvature
    equations hold per block up to one Lagrange multiplier eta, whose
    antisymmetric split is fixed here so that eta vanishes on symmetric
    profiles.  Each block separately satisfies the tail equation at load 1/2.
    """
    if profile.T != 2:
        raise ValueError("critical_point_T2 requires exactly two blocks")
    base = critical_point_uniform(0.5)
    z = np.array([base.mu_star, base.chihat[0], base.chihat[0], 0.0])

    if profile.kind == "uniform":
        blends = [1.0]
    else:
        blends = np.linspace(1.0 / homotopy_steps, 1.0, homotopy_steps)

    mu_cap = profile.mu_max
    for lam in blends:
        def rho_fn(mu, lam=lam):
            return (1.0 - lam) * np.full(2, mu) + lam * profile.rho(mu)

        def domain(zz):
            return (0.0 < zz[0] < mu_cap and zz[1] > 1e-12 and zz[2] > 1e-12)

        z, res, _ = _newton(lambda zz: _t2_residual(zz, rho_fn), z, domain, tol=tol)

    mu = float(z[0])
    return CriticalPoint(
        mu_star=mu, rho_c=profile.total_density(mu),
        chihat=z[1:3].copy(), shares=np.array([0.5, 0.5]), eta=float(z[3]),
        diagnostics={"residual": res})


def critical_point(profile: DensityProfile, **kwargs) -> CriticalPoint:
    """Dispatch on the number of blocks."""
    if profile.T == 2:
        return critical_point_T2(profile, **kwargs)
    return critical_point_general(profile, **kwargs)


# ----------------------------------------------------------------------
# stability against one-step symmetry breaking (AT determinant)
# ----------------------------------------------------------------------

def at_stability(cp: CriticalPoint, profile: DensityProfile,
                 mu_override: float | None = None) -> float:
    """det(I - H Hhat) at the perfect-recovery solution of a critical point.

    At the converged critical point the matrix has an eigenvalue of exactly
    one along (1 - R_t)^{-1}; the gap |lambda - 1| along that direction is
    stored in cp.at_eigen_gap.  Passing mu_override re-evaluates the density
    load at a different mu while keeping the saddle geometry (chihat, shares)
    frozen, which is how off-critical points are probed.

    Two blocks have no transverse curvature; the determinant is evaluated on
    the constrained manifold, with the curvature taken by central finite
    differences of the on-line exponent (documented approximation).
    """
    mu = cp.mu_star if mu_override is None else mu_override
    rho = profile.rho(mu)
    b = _b_term(rho, cp.chihat)

    if profile.T == 2:
        # curvature of F along chi_1 = chi_2 = chi by central differences,
        # evaluated at chi = 1 (the product H*Hhat is scale free); step
        # balances rounding against truncation for a second difference
        h = 2e-4
        f = lambda c: solve_multipliers(np.array([c, c])).value
        curv = (f(1.0 + h) - 2.0 * f(1.0) + f(1.0 - h)) / h ** 2
        # Hhat_tt = b_t / qhat^2 with qhat = 1/(2 chi); symmetric-mode average
        hhat_sym = 0.5 * np.sum(4.0 * b)
        lam = hhat_sym * curv
        det = 1.0 - lam
        cp.at_eigen_gap = abs(lam - 1.0)
        return float(det)

    shares = cp.shares
    root = np.sqrt(1.0 - 2.0 * shares)
    m0 = np.outer(shares / root, shares / root)
    inv = np.linalg.inv(np.eye(profile.T) + m0)
    hh = (np.diag(b / shares ** 2)
          - inv * np.outer(1.0 / (shares * root), (1.0 - shares) ** 2 * b / (shares * root)))
    det = float(np.linalg.det(np.eye(profile.T) - hh))
    v1 = 1.0 / (1.0 - shares)
    lam = float(v1 @ (hh @ v1) / (v1 @ v1))
    cp.at_eigen_gap = abs(lam - 1.0)
    return det


# ----------------------------------------------------------------------
# full RS fixed point at fixed mu
# ----------------------------------------------------------------------

def rs_fixed_point(profile: DensityProfile, mu: float,
                   init: SaddleState | None = None, damping: float = 0.5,
                   tol: float = 1e-9, max_iter: int = 20_000) -> SaddleState:
    """Damped iteration of the six order-parameter equation families.

    Below the threshold the iteration collapses onto the perfect-recovery
    state (chi -> 0, q = m = rho, conjugate curvatures diverge); the state is
    then snapped to it exactly and labeled phase="success".  Above threshold
    it settles on a finite-error state labeled phase="failure".
    """
    T = profile.T
    rho = profile.rho(mu)
    if np.all(rho == 0.0):
        zeros = np.zeros(T)
        return SaddleState(q=zeros.copy(), chi=zeros.copy(), m=zeros.copy(),
                           q_hat=np.full(T, np.inf), chi_hat=zeros.copy(),
                           m_hat=np.full(T, np.inf), rho=rho, iterations=0,
                           residual=0.0, phase="success")

    if init is not None:
        q, chi, m = init.q.copy(), init.chi.copy(), init.m.copy()
    else:
        q = np.ones(T)
        chi = np.ones(T)
        m = np.zeros(T)

    eta = 0.0
    fallback_count = 0
    for it in range(1, max_iter + 1):
        if T == 2:
            chi_bar = 0.5 * (chi[0] + chi[1])
            chi = np.full(2, chi_bar)
            sol = solve_multipliers(chi)
            shares = sol.shares
            qhat = shares / chi
            d = q - 2.0 * m + rho
            base = (d[0] + d[1]) / (4.0 * chi_bar ** 2)

            def gap(e):
                u1 = _sp_updates(rho[:1], np.array([base + e]), qhat[:1], qhat[:1])[1]
                u2 = _sp_updates(rho[1:], np.array([base - e]), qhat[1:], qhat[1:])[1]
                return float(u1[0] - u2[0])

            lim = base * (1.0 - 1e-9)
            try:
                if gap(-lim) * gap(lim) < 0:
                    eta = brentq(gap, -lim, lim, xtol=1e-14)
                else:
                    eta = 0.0
                    fallback_count += 1
            except ValueError:
                eta = 0.0
                fallback_count += 1
            chihat = np.array([base + eta, base - eta])
        else:
            sol = solve_multipliers(chi)
            shares = sol.shares
            qhat = shares / chi
            hess = _hessian_direct(chi, sol)
            d = q - 2.0 * m + rho
            chihat = np.maximum(hess @ d, 1e-300)

        q_new, chi_new, m_new = _sp_updates(rho, chihat, qhat, qhat)
        if T == 2:
            chi_new = np.full(2, 0.5 * (chi_new[0] + chi_new[1]))
        residual = float(max(np.max(np.abs(q_new - q)), np.max(np.abs(chi_new - chi)),
                             np.max(np.abs(m_new - m))))
        q = (1.0 - damping) * q_new + damping * q
        chi = (1.0 - damping) * chi_new + damping * chi
        m = (1.0 - damping) * m_new + damping * m

        collapsing = np.max(chi) < _SUCCESS_CHI or (
            np.max(chi) < 1e-6 and np.max(np.abs(q - 2.0 * m + rho)) < 1e-9)
        if collapsing:
            return SaddleState(q=rho.copy(), chi=np.zeros(T), m=rho.copy(),
                               q_hat=np.full(T, np.inf), chi_hat=chihat,
                               m_hat=np.full(T, np.inf), rho=rho, iterations=it,
                               residual=0.0, phase="success")
        if residual < tol:
            diag = {"eta": eta, "eta_fallbacks": fallback_count} if T == 2 else {}
            return SaddleState(q=q, chi=chi, m=m, q_hat=qhat, chi_hat=chihat,
                               m_hat=qhat.copy(), rho=rho, iterations=it,
                               residual=residual, phase="failure", diagnostics=diag)

    raise NonConvergence(f"RS fixed point did not settle at mu={mu}",
                         residual=residual)
