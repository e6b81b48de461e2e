"""Pure-NumPy basis-pursuit LP backend.

Solves  min sum|x|  subject to  D x = y  through the standard positive-part
split x = u - w, u, w >= 0, i.e. the LP  min 1'z  s.t. [D -D] z = y, z >= 0,
with a dense Mehrotra predictor-corrector.  The normal-equation matrix
[D -D] diag(theta) [D -D]' collapses to D diag(theta_u + theta_w) D', so every
iteration factors one M x M matrix.

Two safeguards handle the near-degenerate optima that the incremental
recovery experiments constantly produce (they sit exactly on the success/
failure boundary where the optimal face is nearly non-unique):

* the centering parameter is kept alive while the feasibility residuals
  exceed the complementarity gap, so the iterates cannot jam on the
  boundary with the gap collapsed far below the residual floor;
* if primal feasibility still stalls at the rounding floor of the scaled
  normal matrix, the iterate is projected onto the currently identified
  optimal face (exact primal repair through the large-theta columns plus a
  minimal dual correction) and the iteration restarts from the projected
  point, after which the ordinary criterion converges in a few steps.

The compiled extension (_bp_kernel) mirrors this routine step for step; keep
the two in sync.
"""

import numpy as np

STATUS_OPTIMAL = 0
STATUS_MAX_ITER = 1
STATUS_NUMERICAL = 2

_BOUNDARY_FRACTION = 0.99  # frozen: fraction of the step to the boundary
_SIGMA_FLOOR = 0.1
_STALL_LIMIT = 8
_MAX_POLISHES = 3


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return np.min(-v[neg] / dv[neg])


def solve(D, y, tol=1e-9, max_iter=100):
    """Returns (xhat, iterations, status, feas_gap, duality_gap)."""
    D = np.ascontiguousarray(D, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    M, N = D.shape

    if np.max(np.abs(y)) == 0.0:
        return np.zeros(N), 0, STATUS_OPTIMAL, 0.0, 0.0

    n = 2 * N

    def matvec_a(z):          # [D -D] z
        return D @ (z[:N] - z[N:])

    def matvec_at(lam):       # [D -D]' lam
        dt = D.T @ lam
        return np.concatenate([dt, -dt])

    # starting point (least-squares heuristic, shifted into the open orthant)
    aat = 2.0 * (D @ D.T)
    try:
        w_ls = np.linalg.solve(aat, y)
    except np.linalg.LinAlgError:
        return np.zeros(N), 0, STATUS_NUMERICAL, np.inf, np.inf
    z = matvec_at(w_ls)
    lam = np.zeros(M)         # A @ ones == 0, so the dual heuristic is zero
    s = np.ones(n)
    dz = max(-1.5 * z.min(), 0.0)
    z = z + dz
    cross = z @ s
    if cross <= 0.0:
        cross = 1.0
    zsum = z.sum()
    z = z + 0.5 * cross / s.sum()
    s = s + 0.5 * cross / zsum

    def _dual_fit(lam, mask):
        """Smallest multiplier change zeroing the reduced costs on `mask`.

        Least squares through the regularized normal equations of the masked
        signed columns (the mask never exceeds M by much, and the columns
        come from near-orthogonal blocks, so squaring the condition is safe).
        """
        red = 1.0 - matvec_at(lam)
        wm = mask[:N].astype(float) + mask[N:].astype(float)
        gm = D @ (wm[:, None] * D.T)
        rhs = D @ (np.where(mask[:N], red[:N], 0.0) - np.where(mask[N:], red[N:], 0.0))
        reg = 1e-13 * (1.0 + np.trace(gm) / M)
        try:
            lm = np.linalg.cholesky(gm + reg * np.eye(M))
        except np.linalg.LinAlgError:
            return None
        return lam + np.linalg.solve(lm.T, np.linalg.solve(lm, rhs))

    def face_crossover(z, lam, r_p, theta):
        """Terminal polish onto the optimal face (dual first, then primal).

        Near a degenerate optimum the scaled normal matrix pins both
        residuals at a rounding floor while complementarity collapses.  The
        clearly-basic columns identify the face: fit the multipliers to
        zero their reduced costs, re-read the face as every column whose
        reduced cost is then tiny (this recovers degenerate columns that
        straddle the ratio threshold), refit the duals on the full face,
        and repair the primal through the face columns.  Returns the
        polished triple or None when the face is inconsistent.
        """
        strict = theta >= 1e6
        if not np.any(strict):
            return None
        lam2 = _dual_fit(lam, strict)
        if lam2 is None:
            return None
        face = (1.0 - matvec_at(lam2)) <= 1e-6
        if not np.any(face):
            return None
        lam3 = _dual_fit(lam2, face)
        if lam3 is None:
            return None
        s3 = 1.0 - matvec_at(lam3)
        if np.min(s3) < -1e-10:
            return None
        s3 = np.maximum(s3, 0.0)
        # rebuild the primal directly on the face span from y itself: the
        # stalled iterate carries rounding noise outside the span that no
        # face-restricted correction can remove.  A degenerate vertex may
        # still need a few near-zero-cost columns beyond the detected face,
        # so the span widens over escalating cost cuts (their slacks are
        # tiny, so the widening cannot disturb the gap).
        for cut in (1e-6, 1e-4, 1e-2):
            span = s3 <= cut
            wb = span[:N].astype(float) + span[N:].astype(float)
            gb = D @ (wb[:, None] * D.T)
            reg = 1e-13 * (1.0 + np.trace(gb) / M)
            try:
                lb = np.linalg.cholesky(gb + reg * np.eye(M))
            except np.linalg.LinAlgError:
                continue
            h = np.linalg.solve(lb.T, np.linalg.solve(lb, y))
            dt = D.T @ h
            z2 = np.concatenate([np.where(span[:N], dt, 0.0),
                                 np.where(span[N:], -dt, 0.0)])
            if np.min(z2) < -1e-10:
                continue
            if np.max(np.abs(y - matvec_a(z2))) <= tol:
                return np.maximum(z2, 0.0), lam3, s3
        return None

    status = STATUS_MAX_ITER
    it = 0
    base_reg = 1e-14
    stall = 0
    best_feas = np.inf
    polishes = 0
    for it in range(1, max_iter + 1):
        r_p = y - matvec_a(z)
        r_d = 1.0 - matvec_at(lam) - s
        gap = z @ s
        feas_p = np.max(np.abs(r_p))
        feas_d = np.max(np.abs(r_d))
        if feas_p <= tol and feas_d <= tol and gap <= tol * (1.0 + z.sum()):
            status = STATUS_OPTIMAL
            break

        if feas_p > 0.5 * best_feas:
            stall += 1
        else:
            stall = 0
        best_feas = min(best_feas, feas_p)
        jammed = gap <= 0.01 * tol * (1.0 + z.sum()) and feas_p > tol
        if polishes < _MAX_POLISHES and (stall >= _STALL_LIMIT or jammed):
            polishes += 1
            stall = 0
            polished = face_crossover(z, lam, r_p, z / s)
            if polished is not None:
                z2, lam2, s2 = polished
                fp2 = np.max(np.abs(y - matvec_a(z2)))
                fd2 = np.max(np.abs(1.0 - matvec_at(lam2) - s2))
                gap2 = z2 @ s2
                if fp2 <= tol and fd2 <= tol and gap2 <= tol * (1.0 + z2.sum()):
                    z, lam, s = z2, lam2, s2
                    status = STATUS_OPTIMAL
                    break

        theta = z / s
        wsum = theta[:N] + theta[N:]
        g = D @ (wsum[:, None] * D.T)
        reg = base_reg * (1.0 + np.trace(g) / M)
        chol = None
        for _ in range(4):
            try:
                chol = np.linalg.cholesky(g + reg * np.eye(M))
                break
            except np.linalg.LinAlgError:
                reg *= 1000.0
        if chol is None:
            status = STATUS_NUMERICAL
            break

        def direction(rc):
            rhs = r_p + matvec_a(theta * (r_d - rc / z))
            dlam = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
            dz_ = theta * (matvec_at(dlam) - r_d + rc / z)
            ds_ = (rc - s * dz_) / z
            return dz_, dlam, ds_

        mu = gap / n
        dz_aff, _, ds_aff = direction(-z * s)
        a_p = min(1.0, _max_step(z, dz_aff))
        a_d = min(1.0, _max_step(s, ds_aff))
        mu_aff = ((z + a_p * dz_aff) @ (s + a_d * ds_aff)) / n
        sigma = (mu_aff / mu) ** 3
        # near-degenerate optima can crash complementarity far below the
        # feasibility residuals, jamming the iterates on the boundary; keep
        # some centering alive until feasibility catches up
        if max(feas_p, feas_d) > 10.0 * gap:
            sigma = max(sigma, _SIGMA_FLOOR)

        dz_c, dlam_c, ds_c = direction(sigma * mu - z * s - dz_aff * ds_aff)
        a_p = min(1.0, _BOUNDARY_FRACTION * _max_step(z, dz_c))
        a_d = min(1.0, _BOUNDARY_FRACTION * _max_step(s, ds_c))
        z = z + a_p * dz_c
        lam = lam + a_d * dlam_c
        s = s + a_d * ds_c

    xhat = z[:N] - z[N:]
    feas_gap = float(np.max(np.abs(D @ xhat - y)))
    duality_gap = float(z @ s)
    return xhat, it, status, feas_gap, duality_gap
