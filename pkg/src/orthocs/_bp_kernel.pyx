# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled basis-pursuit LP kernel.

Mirrors _bp_python.solve step for step: dense Mehrotra predictor-corrector on
min 1'z s.t. [D -D] z = y, z >= 0, with the normal equations reduced to one
M x M Cholesky per iteration, a centering floor while infeasibility exceeds
the complementarity gap, and a terminal projection onto the optimal face for
the near-degenerate instances that otherwise stall at the rounding floor.
Keep the two implementations in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

STATUS_OPTIMAL = 0
STATUS_MAX_ITER = 1
STATUS_NUMERICAL = 2

DEF BOUNDARY_FRACTION = 0.99
DEF SIGMA_FLOOR = 0.1
DEF STALL_LIMIT = 8
DEF MAX_POLISHES = 3


cdef int _cholesky(double[:, ::1] a, int m) noexcept nogil:
    """In-place lower-triangular factorization; nonzero return means failure."""
    cdef int i, j, k
    cdef double s
    for j in range(m):
        s = a[j, j]
        for k in range(j):
            s -= a[j, k] * a[j, k]
        if s <= 0.0:
            return 1
        a[j, j] = sqrt(s)
        for i in range(j + 1, m):
            s = a[i, j]
            for k in range(j):
                s -= a[i, k] * a[j, k]
            a[i, j] = s / a[j, j]
    return 0


cdef void _chol_solve(double[:, ::1] L, double[:] b, double[:] x, int m) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(m):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    for i in range(m - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, m):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]


cdef void _matvec_a(double[:, ::1] D, double[:] z, double[:] out,
                    int M, int N) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(M):
        s = 0.0
        for k in range(N):
            s += D[i, k] * (z[k] - z[N + k])
        out[i] = s


cdef void _matvec_at(double[:, ::1] D, double[:] lam, double[:] out,
                     int M, int N) noexcept nogil:
    cdef int i, k
    cdef double s
    for k in range(N):
        s = 0.0
        for i in range(M):
            s += D[i, k] * lam[i]
        out[k] = s
        out[N + k] = -s


cdef double _max_step(double[:] v, double[:] dv, int n) noexcept nogil:
    cdef double best = 1e300
    cdef double cand
    cdef int i
    for i in range(n):
        if dv[i] < 0.0:
            cand = -v[i] / dv[i]
            if cand < best:
                best = cand
    return best


cdef int _weighted_chol(double[:, ::1] D, double[:] wsum, double[:, ::1] chol,
                        double reg_scale, int M, int N) noexcept nogil:
    """chol <- factor of D diag(wsum) D' + reg, reg scaled from the trace."""
    cdef int i, j, k
    cdef double trace = 0.0, reg
    for i in range(M):
        for j in range(i, M):
            chol[i, j] = 0.0
            for k in range(N):
                chol[i, j] += wsum[k] * D[i, k] * D[j, k]
            chol[j, i] = chol[i, j]
        trace += chol[i, i]
    reg = reg_scale * (1.0 + trace / M)
    for i in range(M):
        chol[i, i] += reg
    return _cholesky(chol, M)


cdef void _direction(double[:, ::1] D, double[:, ::1] chol,
                     double[:] theta, double[:] z, double[:] s,
                     double[:] r_p, double[:] r_d, double[:] rc,
                     double[:] dz, double[:] dlam, double[:] ds,
                     double[:] tmp_n, double[:] tmp_m,
                     int M, int N) noexcept nogil:
    cdef int i, n = 2 * N
    for i in range(n):
        tmp_n[i] = theta[i] * (r_d[i] - rc[i] / z[i])
    _matvec_a(D, tmp_n, tmp_m, M, N)
    for i in range(M):
        tmp_m[i] += r_p[i]
    _chol_solve(chol, tmp_m, dlam, M)
    _matvec_at(D, dlam, tmp_n, M, N)
    for i in range(n):
        dz[i] = theta[i] * (tmp_n[i] - r_d[i] + rc[i] / z[i])
        ds[i] = (rc[i] - s[i] * dz[i]) / z[i]


cdef int _dual_fit(double[:, ::1] D, double[:] lam_in, double[:] lam_out,
                   double[:] mask, double[:] red, double[:] wsum,
                   double[:] rhs_m, double[:] dlam, double[:, ::1] cholwork,
                   int M, int N) noexcept nogil:
    """lam_out <- lam_in + smallest change zeroing reduced costs on the mask.

    Least squares through the regularized normal equations of the masked
    signed columns; red receives 1 - A' lam_in as a side effect.
    """
    cdef int i, k, n = 2 * N
    _matvec_at(D, lam_in, red, M, N)
    for i in range(n):
        red[i] = 1.0 - red[i]
    for k in range(N):
        wsum[k] = mask[k] + mask[N + k]
    for i in range(M):
        rhs_m[i] = 0.0
        for k in range(N):
            if mask[k] != 0.0:
                rhs_m[i] += D[i, k] * red[k]
            if mask[N + k] != 0.0:
                rhs_m[i] -= D[i, k] * red[N + k]
    if _weighted_chol(D, wsum, cholwork, 1e-13, M, N) != 0:
        return 1
    _chol_solve(cholwork, rhs_m, dlam, M)
    for i in range(M):
        lam_out[i] = lam_in[i] + dlam[i]
    return 0


cdef int _face_crossover(double[:, ::1] D, double[:] y,
                         double[:] z, double[:] lam, double[:] s,
                         double[:] r_p, double tol,
                         double[:] z2, double[:] lam2, double[:] s2,
                         double[:] mask, double[:] red, double[:] wsum,
                         double[:] rhs_m, double[:] dlam, double[:] tmp_m,
                         double[:, ::1] cholwork,
                         int M, int N) noexcept nogil:
    """Terminal polish onto the optimal face; 0 on success (fills z2/lam2/s2).

    Duals first: fit the multipliers to the clearly-basic columns, re-read
    the face as every column whose reduced cost is then tiny, refit on the
    full face.  Primal second: rebuild z directly on the face span from y
    (the stalled iterate carries rounding noise outside the span), widening
    the span over near-zero-cost columns when a degenerate vertex needs
    them (their slacks are tiny, so widening cannot disturb the gap).
    """
    cdef int i, k, cut_idx, n = 2 * N
    cdef int nonempty = 0
    cdef double cut, resid, mn

    for i in range(n):
        mask[i] = 1.0 if z[i] >= 1e6 * s[i] else 0.0
        if mask[i] != 0.0:
            nonempty = 1
    if not nonempty:
        return 1
    if _dual_fit(D, lam, lam2, mask, red, wsum, rhs_m, dlam, cholwork, M, N) != 0:
        return 1

    _matvec_at(D, lam2, red, M, N)
    nonempty = 0
    for i in range(n):
        mask[i] = 1.0 if 1.0 - red[i] <= 1e-6 else 0.0
        if mask[i] != 0.0:
            nonempty = 1
    if not nonempty:
        return 1
    if _dual_fit(D, lam2, lam2, mask, red, wsum, rhs_m, dlam, cholwork, M, N) != 0:
        return 1
    _matvec_at(D, lam2, s2, M, N)
    mn = 0.0
    for i in range(n):
        s2[i] = 1.0 - s2[i]
        if s2[i] < mn:
            mn = s2[i]
    if mn < -1e-10:
        return 1
    for i in range(n):
        if s2[i] < 0.0:
            s2[i] = 0.0

    for cut_idx in range(3):
        cut = 1e-6 if cut_idx == 0 else (1e-4 if cut_idx == 1 else 1e-2)
        for i in range(n):
            mask[i] = 1.0 if s2[i] <= cut else 0.0
        for k in range(N):
            wsum[k] = mask[k] + mask[N + k]
        if _weighted_chol(D, wsum, cholwork, 1e-13, M, N) != 0:
            continue
        _chol_solve(cholwork, y, tmp_m, M)
        mn = 0.0
        for k in range(N):
            resid = 0.0
            for i in range(M):
                resid += D[i, k] * tmp_m[i]
            z2[k] = resid if mask[k] != 0.0 else 0.0
            z2[N + k] = -resid if mask[N + k] != 0.0 else 0.0
            if z2[k] < mn:
                mn = z2[k]
            if z2[N + k] < mn:
                mn = z2[N + k]
        if mn < -1e-10:
            continue
        for i in range(n):
            if z2[i] < 0.0:
                z2[i] = 0.0
        _matvec_a(D, z2, rhs_m, M, N)
        mn = 0.0
        for i in range(M):
            if fabs(y[i] - rhs_m[i]) > mn:
                mn = fabs(y[i] - rhs_m[i])
        if mn <= tol:
            return 0
    return 1


def solve(double[:, ::1] D, double[:] y, double tol=1e-9, int max_iter=100):
    """Returns (xhat, iterations, status, feas_gap, duality_gap)."""
    cdef int M = D.shape[0]
    cdef int N = D.shape[1]
    cdef int n = 2 * N
    cdef int i, k, it, status
    cdef double ymax = 0.0

    for i in range(M):
        if fabs(y[i]) > ymax:
            ymax = fabs(y[i])
    xhat_arr = np.zeros(N)
    if ymax == 0.0:
        return xhat_arr, 0, STATUS_OPTIMAL, 0.0, 0.0

    z_arr = np.empty(n); s_arr = np.ones(n); lam_arr = np.zeros(M)
    cdef double[:] z = z_arr, s = s_arr, lam = lam_arr

    chol_arr = np.empty((M, M))
    cdef double[:, ::1] chol = chol_arr

    r_p_arr = np.empty(M); r_d_arr = np.empty(n)
    theta_arr = np.empty(n); wsum_arr = np.empty(N)
    rc_arr = np.empty(n)
    dz_arr = np.empty(n); dlam_arr = np.empty(M); ds_arr = np.empty(n)
    dz_aff_arr = np.empty(n); ds_aff_arr = np.empty(n)
    tmp_n_arr = np.empty(n); tmp_m_arr = np.empty(M)
    z2_arr = np.empty(n); lam2_arr = np.empty(M); s2_arr = np.empty(n)
    mask_arr = np.empty(n); red_arr = np.empty(n); rhs_m_arr = np.empty(M)
    cdef double[:] r_p = r_p_arr, r_d = r_d_arr, theta = theta_arr
    cdef double[:] wsum = wsum_arr, rc = rc_arr
    cdef double[:] dz = dz_arr, dlam = dlam_arr, ds = ds_arr
    cdef double[:] dz_aff = dz_aff_arr, ds_aff = ds_aff_arr
    cdef double[:] tmp_n = tmp_n_arr, tmp_m = tmp_m_arr
    cdef double[:] z2 = z2_arr, lam2 = lam2_arr, s2 = s2_arr
    cdef double[:] mask = mask_arr, red = red_arr, rhs_m = rhs_m_arr
    cdef double[:] xhat = xhat_arr

    # starting point: least-squares z, zero dual, unit slack, orthant shift
    for k in range(N):
        wsum[k] = 2.0
    if _weighted_chol(D, wsum, chol, 0.0, M, N) != 0:
        return xhat_arr, 0, STATUS_NUMERICAL, 1e300, 1e300
    _chol_solve(chol, y, rhs_m, M)
    _matvec_at(D, rhs_m, z, M, N)

    cdef double zmin = 0.0, cross = 0.0, zsum = 0.0
    for i in range(n):
        if z[i] < zmin:
            zmin = z[i]
    for i in range(n):
        z[i] += -1.5 * zmin
    for i in range(n):
        cross += z[i] * s[i]
        zsum += z[i]
    if cross <= 0.0:
        cross = 1.0
    for i in range(n):
        z[i] += 0.5 * cross / n      # sum(s) == n at this point
        s[i] += 0.5 * cross / zsum

    cdef double gap, feas_p, feas_d, zl1, mu, mu_aff, sigma
    cdef double a_p, a_d, fp2, fd2, gap2, acc
    cdef int stall = 0, polishes = 0, reject
    cdef double best_feas = 1e300
    status = STATUS_MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        _matvec_a(D, z, tmp_m, M, N)
        feas_p = 0.0
        for i in range(M):
            r_p[i] = y[i] - tmp_m[i]
            if fabs(r_p[i]) > feas_p:
                feas_p = fabs(r_p[i])
        _matvec_at(D, lam, tmp_n, M, N)
        feas_d = 0.0
        for i in range(n):
            r_d[i] = 1.0 - tmp_n[i] - s[i]
            if fabs(r_d[i]) > feas_d:
                feas_d = fabs(r_d[i])
        gap = 0.0
        zl1 = 0.0
        for i in range(n):
            gap += z[i] * s[i]
            zl1 += z[i]
        if feas_p <= tol and feas_d <= tol and gap <= tol * (1.0 + zl1):
            status = STATUS_OPTIMAL
            break

        if feas_p > 0.5 * best_feas:
            stall += 1
        else:
            stall = 0
        if feas_p < best_feas:
            best_feas = feas_p
        if polishes < MAX_POLISHES and (
                stall >= STALL_LIMIT
                or (gap <= 0.01 * tol * (1.0 + zl1) and feas_p > tol)):
            polishes += 1
            stall = 0
            reject = _face_crossover(D, y, z, lam, s, r_p, tol,
                                     z2, lam2, s2, mask, red, wsum,
                                     rhs_m, dlam, tmp_m, chol, M, N)
            if reject == 0:
                _matvec_a(D, z2, tmp_m, M, N)
                fp2 = 0.0
                for i in range(M):
                    if fabs(y[i] - tmp_m[i]) > fp2:
                        fp2 = fabs(y[i] - tmp_m[i])
                _matvec_at(D, lam2, tmp_n, M, N)
                fd2 = 0.0
                for i in range(n):
                    acc = fabs(1.0 - tmp_n[i] - s2[i])
                    if acc > fd2:
                        fd2 = acc
                gap2 = 0.0
                zl1 = 0.0
                for i in range(n):
                    gap2 += z2[i] * s2[i]
                    zl1 += z2[i]
                if fp2 <= tol and fd2 <= tol and gap2 <= tol * (1.0 + zl1):
                    for i in range(n):
                        z[i] = z2[i]
                        s[i] = s2[i]
                    for i in range(M):
                        lam[i] = lam2[i]
                    status = STATUS_OPTIMAL
                    break

        for i in range(n):
            theta[i] = z[i] / s[i]
        for k in range(N):
            wsum[k] = theta[k] + theta[N + k]
        reject = 1
        acc = 1e-14
        for i in range(4):
            if _weighted_chol(D, wsum, chol, acc, M, N) == 0:
                reject = 0
                break
            acc *= 1000.0
        if reject:
            status = STATUS_NUMERICAL
            break

        # affine predictor
        mu = gap / n
        for i in range(n):
            rc[i] = -z[i] * s[i]
        _direction(D, chol, theta, z, s, r_p, r_d, rc,
                   dz_aff, dlam, ds_aff, tmp_n, tmp_m, M, N)
        a_p = _max_step(z, dz_aff, n)
        a_d = _max_step(s, ds_aff, n)
        if a_p > 1.0: a_p = 1.0
        if a_d > 1.0: a_d = 1.0
        mu_aff = 0.0
        for i in range(n):
            mu_aff += (z[i] + a_p * dz_aff[i]) * (s[i] + a_d * ds_aff[i])
        mu_aff /= n
        sigma = (mu_aff / mu) ** 3
        # near-degenerate optima can crash complementarity far below the
        # feasibility residuals, jamming the iterates on the boundary; keep
        # some centering alive until feasibility catches up
        if (feas_p if feas_p > feas_d else feas_d) > 10.0 * gap and sigma < SIGMA_FLOOR:
            sigma = SIGMA_FLOOR

        # corrector
        for i in range(n):
            rc[i] = sigma * mu - z[i] * s[i] - dz_aff[i] * ds_aff[i]
        _direction(D, chol, theta, z, s, r_p, r_d, rc,
                   dz, dlam, ds, tmp_n, tmp_m, M, N)
        a_p = BOUNDARY_FRACTION * _max_step(z, dz, n)
        a_d = BOUNDARY_FRACTION * _max_step(s, ds, n)
        if a_p > 1.0: a_p = 1.0
        if a_d > 1.0: a_d = 1.0
        for i in range(n):
            z[i] += a_p * dz[i]
            s[i] += a_d * ds[i]
        for i in range(M):
            lam[i] += a_d * dlam[i]

    cdef double feas_gap = 0.0, duality_gap = 0.0, resid
    for k in range(N):
        xhat[k] = z[k] - z[N + k]
    for i in range(M):
        resid = -y[i]
        for k in range(N):
            resid += D[i, k] * xhat[k]
        if fabs(resid) > feas_gap:
            feas_gap = fabs(resid)
    for i in range(n):
        duality_gap += z[i] * s[i]
    return xhat_arr, it, status, feas_gap, duality_gap
