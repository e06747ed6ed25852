# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

The public functions here have pure-Python twins in :mod:`dpcr._pykernels`
with identical signatures; :mod:`dpcr.kernels` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, fabs, tanh, INFINITY, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double STEADY_TOL = 1e-13

cdef enum:
    MAXR = 8
    MAXK = 17
    MAXM = 36


cdef inline void _pacf_to_coef(const double* x, int k, double* out) noexcept nogil:
    cdef double tmp[MAXR]
    cdef double r
    cdef int i, j
    for j in range(k):
        r = tanh(x[j])
        for i in range(j):
            tmp[i] = out[i] - r * out[j - 1 - i]
        for i in range(j):
            out[i] = tmp[i]
        out[j] = r


cdef int _lyapunov(const double* ph, const double* rv, int r, double* P) noexcept nogil:
    # P = T P T' + R R' over the r(r+1)/2 upper-triangle unknowns; T is sparse
    # (first column ph, ones on the superdiagonal) so each row has <= 4 terms.
    cdef int m = r * (r + 1) // 2
    cdef double A[MAXM * MAXM]
    cdef double b[MAXM]
    cdef int idx[MAXR * MAXR]
    cdef int ks[2]
    cdef int ls[2]
    cdef double ts[2]
    cdef double us[2]
    cdef int i, j, k, l, row, col, piv, nk, nl, a_, b_, c
    cdef double best, f, tmp
    c = 0
    for i in range(r):
        for j in range(i, r):
            idx[i * r + j] = c
            idx[j * r + i] = c
            c += 1
    for k in range(m * m):
        A[k] = 0.0
    for i in range(r):
        for j in range(i, r):
            row = idx[i * r + j]
            b[row] = rv[i] * rv[j]
            A[row * m + row] += 1.0
            ks[0] = 0
            ts[0] = ph[i]
            nk = 1
            if i + 1 < r:
                ks[1] = i + 1
                ts[1] = 1.0
                nk = 2
            ls[0] = 0
            us[0] = ph[j]
            nl = 1
            if j + 1 < r:
                ls[1] = j + 1
                us[1] = 1.0
                nl = 2
            for a_ in range(nk):
                for b_ in range(nl):
                    col = idx[ks[a_] * r + ls[b_]]
                    A[row * m + col] -= ts[a_] * us[b_]
    for col in range(m):
        piv = col
        best = fabs(A[col * m + col])
        for row in range(col + 1, m):
            if fabs(A[row * m + col]) > best:
                best = fabs(A[row * m + col])
                piv = row
        if best < 1e-14:
            return -1
        if piv != col:
            for k in range(m):
                tmp = A[col * m + k]
                A[col * m + k] = A[piv * m + k]
                A[piv * m + k] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for row in range(col + 1, m):
            f = A[row * m + col] / A[col * m + col]
            if f != 0.0:
                for k in range(col, m):
                    A[row * m + k] -= f * A[col * m + k]
                b[row] -= f * b[col]
    for row in range(m - 1, -1, -1):
        f = b[row]
        for k in range(row + 1, m):
            f -= A[row * m + k] * b[k]
        b[row] = f / A[row * m + row]
    for k in range(r * r):
        P[k] = b[idx[k]]
    return 0


cdef int _kalman(const double* w, int n, const double* ph, const double* rv, int r,
                 double* sumsq, double* sumlog) noexcept nogil:
    # X is the filtered covariance padded with a zero row and column
    # (stride S) so the prediction step needs no bounds checks.
    cdef double P[MAXR * MAXR]
    cdef double X[(MAXR + 1) * (MAXR + 1)]
    cdef double a[MAXR + 1]
    cdef double pc[MAXR]
    cdef double F = 1.0, v, a0, f, g, delta
    cdef int t, i, j, steady
    cdef int S = MAXR + 1
    if _lyapunov(ph, rv, r, P) != 0:
        return -1
    for i in range(S * S):
        X[i] = 0.0
    for i in range(r + 1):
        a[i] = 0.0
    sumsq[0] = 0.0
    sumlog[0] = 0.0
    steady = 0
    for t in range(n):
        if not steady:
            F = P[0]
            if not F > 0.0:
                return -1
            for i in range(r):
                pc[i] = P[i * r]
        v = w[t] - a[0]
        sumsq[0] += v * v / F
        sumlog[0] += log(F)
        g = v / F
        for i in range(r):
            a[i] += pc[i] * g
        # one-step prediction; T has first column ph and ones on the superdiagonal
        a0 = a[0]
        for i in range(r):
            a[i] = ph[i] * a0 + a[i + 1]
        if steady:
            continue
        for i in range(r):
            for j in range(i, r):
                X[i * S + j] = P[i * r + j] - pc[i] * pc[j] / F
        delta = 0.0
        for i in range(r):
            for j in range(i, r):
                # X is symmetric: entries below the diagonal read from above it
                f = (ph[i] * ph[j] * X[0] + ph[i] * X[j + 1] + ph[j] * X[i + 1]
                     + X[(i + 1) * S + j + 1] + rv[i] * rv[j])
                if fabs(f - P[i * r + j]) > delta:
                    delta = fabs(f - P[i * r + j])
                P[i * r + j] = f
                P[j * r + i] = f
        # once the prediction covariance stops moving the gain is fixed
        if delta <= STEADY_TOL:
            steady = 1
            F = P[0]
            for i in range(r):
                pc[i] = P[i * r]
    return 0


cdef double _negloglik(const double* x, const double* w, double* buf, int n,
                       int p, int q, int has_mean) noexcept nogil:
    cdef double ph[MAXR]
    cdef double rv[MAXR]
    cdef double tmp[MAXR]
    cdef double mu = 0.0, sumsq, sumlog, s2
    cdef int r = p if p > q + 1 else q + 1
    cdef int i
    for i in range(MAXR):
        ph[i] = 0.0
        rv[i] = 0.0
    _pacf_to_coef(x, p, ph)
    _pacf_to_coef(x + p, q, tmp)
    rv[0] = 1.0
    for i in range(q):
        rv[i + 1] = -tmp[i]
    if has_mean:
        mu = x[p + q]
    for i in range(n):
        buf[i] = w[i] - mu
    if _kalman(buf, n, ph, rv, r, &sumsq, &sumlog) != 0:
        return INFINITY
    s2 = sumsq / n
    if not s2 > 0.0:
        return INFINITY
    return 0.5 * (n * log(2.0 * M_PI * s2) + sumlog + n)


def arma_negloglik(double[::1] x, double[::1] w, int p, int q, bint has_mean):
    """Concentrated negative Gaussian log-likelihood of an ARMA(p, q) series.

    ``x`` holds unconstrained parameters: ``p`` AR and ``q`` MA values mapped
    through tanh partial autocorrelations, then the mean if ``has_mean``.
    The innovation variance is profiled out.
    """
    cdef int n = w.shape[0]
    if p >= MAXR or q >= MAXR:
        raise ValueError("compiled kernel supports p, q < %d" % MAXR)
    cdef double* buf = <double*> malloc(max(n, 1) * sizeof(double))
    cdef double out
    try:
        out = _negloglik(&x[0] if x.shape[0] else NULL, &w[0], buf, n, p, q, has_mean)
    finally:
        free(buf)
    return out


cdef inline void _sort_simplex(double* sim, double* fsim, int k) noexcept nogil:
    # stable insertion sort of k+1 vertices by function value
    cdef int i, j, c
    cdef double f
    cdef double row[MAXK]
    for i in range(1, k + 1):
        f = fsim[i]
        for c in range(k):
            row[c] = sim[i * k + c]
        j = i - 1
        while j >= 0 and fsim[j] > f:
            fsim[j + 1] = fsim[j]
            for c in range(k):
                sim[(j + 1) * k + c] = sim[j * k + c]
            j -= 1
        fsim[j + 1] = f
        for c in range(k):
            sim[(j + 1) * k + c] = row[c]


def fit_arma(double[:, ::1] simplex, double[::1] w, int p, int q, bint has_mean,
             double xatol, double fatol, int maxiter):
    """Nelder-Mead minimization of :func:`arma_negloglik`.

    Follows the reflection/expansion/contraction/shrink sequence of
    ``scipy.optimize.minimize(method="Nelder-Mead")`` from the supplied
    initial simplex so both backends walk the same path.

    Returns ``(x, fval, nfev, converged)``.
    """
    cdef int k = simplex.shape[1]
    cdef int n = w.shape[0]
    if simplex.shape[0] != k + 1:
        raise ValueError("simplex must have k + 1 rows")
    if p >= MAXR or q >= MAXR or k >= MAXK:
        raise ValueError("model order too large for compiled kernel")
    cdef double sim[MAXK * MAXK]
    cdef double fsim[MAXK]
    cdef double xbar[MAXK]
    cdef double xr[MAXK]
    cdef double xe[MAXK]
    cdef double xc[MAXK]
    cdef double fxr, fxe, fxc, d, dmax, fmax
    cdef double* buf = <double*> malloc(max(n, 1) * sizeof(double))
    cdef int i, c, it = 0, nfev = 0, shrink, converged = 0
    cdef double rho = 1.0, chi = 2.0, psi = 0.5, sigma = 0.5
    try:
        if k == 0:
            fxr = _negloglik(NULL, &w[0], buf, n, p, q, has_mean)
            return np.empty(0), fxr, 1, True
        for i in range(k + 1):
            for c in range(k):
                sim[i * k + c] = simplex[i, c]
        with nogil:
            for i in range(k + 1):
                fsim[i] = _negloglik(&sim[i * k], &w[0], buf, n, p, q, has_mean)
            nfev = k + 1
            _sort_simplex(sim, fsim, k)
            while nfev < maxiter and it < maxiter:
                dmax = 0.0
                fmax = 0.0
                for i in range(1, k + 1):
                    for c in range(k):
                        d = fabs(sim[i * k + c] - sim[c])
                        if d > dmax:
                            dmax = d
                    d = fabs(fsim[0] - fsim[i])
                    if d > fmax or d != d:
                        fmax = d
                if dmax <= xatol and fmax <= fatol:
                    converged = 1
                    break
                for c in range(k):
                    xbar[c] = 0.0
                    for i in range(k):
                        xbar[c] += sim[i * k + c]
                    xbar[c] /= k
                for c in range(k):
                    xr[c] = (1 + rho) * xbar[c] - rho * sim[k * k + c]
                fxr = _negloglik(xr, &w[0], buf, n, p, q, has_mean)
                nfev += 1
                shrink = 0
                if fxr < fsim[0]:
                    for c in range(k):
                        xe[c] = (1 + rho * chi) * xbar[c] - rho * chi * sim[k * k + c]
                    fxe = _negloglik(xe, &w[0], buf, n, p, q, has_mean)
                    nfev += 1
                    if fxe < fxr:
                        for c in range(k):
                            sim[k * k + c] = xe[c]
                        fsim[k] = fxe
                    else:
                        for c in range(k):
                            sim[k * k + c] = xr[c]
                        fsim[k] = fxr
                elif fxr < fsim[k - 1]:
                    for c in range(k):
                        sim[k * k + c] = xr[c]
                    fsim[k] = fxr
                else:
                    if fxr < fsim[k]:
                        for c in range(k):
                            xc[c] = (1 + psi * rho) * xbar[c] - psi * rho * sim[k * k + c]
                        fxc = _negloglik(xc, &w[0], buf, n, p, q, has_mean)
                        nfev += 1
                        if fxc <= fxr:
                            for c in range(k):
                                sim[k * k + c] = xc[c]
                            fsim[k] = fxc
                        else:
                            shrink = 1
                    else:
                        for c in range(k):
                            xc[c] = (1 - psi) * xbar[c] + psi * sim[k * k + c]
                        fxc = _negloglik(xc, &w[0], buf, n, p, q, has_mean)
                        nfev += 1
                        if fxc < fsim[k]:
                            for c in range(k):
                                sim[k * k + c] = xc[c]
                            fsim[k] = fxc
                        else:
                            shrink = 1
                    if shrink:
                        for i in range(1, k + 1):
                            for c in range(k):
                                sim[i * k + c] = sim[c] + sigma * (sim[i * k + c] - sim[c])
                            fsim[i] = _negloglik(&sim[i * k], &w[0], buf, n, p, q, has_mean)
                        nfev += k
                it += 1
                _sort_simplex(sim, fsim, k)
        x = np.empty(k)
        for c in range(k):
            x[c] = sim[c]
        return x, fsim[0], nfev, bool(converged)
    finally:
        free(buf)


cdef void _banded_solve(double* d0, double* d1, double* d2, double* b, int m) noexcept nogil:
    # In-place LDL' solve of a symmetric pentadiagonal system.
    # d0: diagonal, d1[i] = A[i, i+1], d2[i] = A[i, i+2]; b is overwritten by x.
    cdef int i
    cdef double l1, l2
    # factor: after this d0 holds D, d1 holds L[i+1, i], d2 holds L[i+2, i]
    for i in range(m):
        if i >= 1:
            d0[i] -= d1[i - 1] * d1[i - 1] * d0[i - 1]
        if i >= 2:
            d0[i] -= d2[i - 2] * d2[i - 2] * d0[i - 2]
        if i + 1 < m:
            l1 = d1[i]
            if i >= 1:
                l1 -= d2[i - 1] * d1[i - 1] * d0[i - 1]
            d1[i] = l1 / d0[i]
        if i + 2 < m:
            d2[i] = d2[i] / d0[i]
    for i in range(m):
        if i >= 1:
            b[i] -= d1[i - 1] * b[i - 1]
        if i >= 2:
            b[i] -= d2[i - 2] * b[i - 2]
    for i in range(m):
        b[i] /= d0[i]
    for i in range(m - 1, -1, -1):
        if i + 1 < m:
            b[i] -= d1[i] * b[i + 1]
        if i + 2 < m:
            b[i] -= d2[i] * b[i + 2]


cdef inline void _at_times(const double* t, double* out, const double* om, const int* rows,
                           int nd, int m, double pc) noexcept nogil:
    # out = X' t for the stacked design [diag(om) rows; pc * D]
    cdef int l, j
    for j in range(m):
        out[j] = 0.0
    for l in range(nd):
        out[rows[l]] += om[l] * t[l]
    for j in range(m - 2):
        out[j] += pc * t[nd + j]
        out[j + 1] -= 2.0 * pc * t[nd + j]
        out[j + 2] += pc * t[nd + j]


cdef inline void _a_times(const double* v, double* out, const double* om, const int* rows,
                          int nd, int m, double pc) noexcept nogil:
    # out = X v
    cdef int l, j
    for l in range(nd):
        out[l] = om[l] * v[rows[l]]
    for j in range(m - 2):
        out[nd + j] = pc * (v[j] - 2.0 * v[j + 1] + v[j + 2])


cdef void _normal_solve(const double* g, const double* rhs, double* out, const double* om,
                        const int* rows, int nd, int m, double pc,
                        double* d0, double* d1, double* d2) noexcept nogil:
    # solve (X' diag(g) X) out = rhs; the normal matrix is pentadiagonal
    cdef int l, j
    cdef double gj
    for j in range(m):
        d0[j] = 0.0
        d1[j] = 0.0
        d2[j] = 0.0
        out[j] = rhs[j]
    for l in range(nd):
        d0[rows[l]] += om[l] * om[l] * g[l]
    for j in range(m - 2):
        gj = g[nd + j] * pc * pc
        d0[j] += gj
        d0[j + 1] += 4.0 * gj
        d0[j + 2] += gj
        d1[j] -= 2.0 * gj
        d1[j + 1] -= 2.0 * gj
        d2[j] += gj
    _banded_solve(d0, d1, d2, out, m)


cdef inline double _max_step(const double* v, const double* dv, int n) noexcept nogil:
    cdef double a = INFINITY
    cdef int i
    for i in range(n):
        if dv[i] < 0.0 and -v[i] / dv[i] < a:
            a = -v[i] / dv[i]
    return a


def l1_trend_filter(double[::1] y, double[::1] w, double lam, double dx,
                    double tol, int maxit):
    """Weighted L1 fit with an L1 penalty on scaled second differences.

    Minimizes ``sum(w * |y - theta|) + lam * sum(|D theta|)`` as a least
    absolute deviations problem on the stacked design ``[diag(w); lam * D]``,
    solved by a Mehrotra predictor-corrector primal-dual interior point
    method whose normal equations are pentadiagonal.  Cells with zero weight
    drop out of the data term.  Returns ``(theta, n_iter, converged)``.
    """
    cdef int m = y.shape[0]
    cdef int nd = 0
    cdef int i, l, it = 0, converged = 0, N, k = m - 2
    cdef double pc = lam / dx
    if m < 3 or not lam > 0.0:
        raise ValueError("need at least 3 grid points and lam > 0")
    for i in range(m):
        if w[i] > 0.0:
            nd += 1
    if nd == 0:
        raise ValueError("all weights are zero")
    N = nd + k
    theta_arr = np.empty(m)
    cdef double[::1] theta = theta_arr
    cdef int* rows = <int*> malloc(nd * sizeof(int))
    cdef double* buf = <double*> malloc((17 * N + 8 * m) * sizeof(double))
    cdef double* om = buf
    cdef double* c = om + N
    cdef double* x = c + N
    cdef double* s = x + N
    cdef double* z = s + N
    cdef double* wv = z + N
    cdef double* g = wv + N
    cdef double* rd = g + N
    cdef double* rhat = rd + N
    cdef double* dxv = rhat + N
    cdef double* dz = dxv + N
    cdef double* dw = dz + N
    cdef double* dxa = dw + N
    cdef double* dza = dxa + N
    cdef double* dwa = dza + N
    cdef double* tN = dwa + N
    cdef double* r1 = tN + N
    cdef double* yv = r1 + N
    cdef double* bvec = yv + m
    cdef double* rp = bvec + m
    cdef double* tm = rp + m
    cdef double* dy = tm + m
    cdef double* d0 = dy + m
    cdef double* d1 = d0 + m
    cdef double* d2 = d1 + m
    cdef double gap, mu, mu_aff, sigma, ap, ad, xi, pobj, t1, t2
    try:
        with nogil:
            l = 0
            for i in range(m):
                if w[i] > 0.0:
                    rows[l] = i
                    om[l] = w[i]
                    c[l] = -w[i] * y[i]
                    l += 1
            for i in range(k):
                c[nd + i] = 0.0
            for l in range(N):
                x[l] = 0.5
                s[l] = 0.5
                g[l] = 1.0
            _at_times(x, bvec, om, rows, nd, m, pc)
            # least-squares start for the dual, then split residual into z - w
            _at_times(c, tm, om, rows, nd, m, pc)
            _normal_solve(g, tm, yv, om, rows, nd, m, pc, d0, d1, d2)
            _a_times(yv, tN, om, rows, nd, m, pc)
            xi = 0.0
            for l in range(N):
                rd[l] = c[l] - tN[l]
                xi += fabs(rd[l])
            xi = xi / N + 1e-12
            for l in range(N):
                z[l] = (rd[l] if rd[l] > 0.0 else 0.0) + xi
                wv[l] = (-rd[l] if rd[l] < 0.0 else 0.0) + xi
            while it < maxit:
                gap = 0.0
                pobj = 0.0
                for l in range(N):
                    gap += x[l] * z[l] + s[l] * wv[l]
                    pobj += c[l] * x[l]
                _a_times(yv, tN, om, rows, nd, m, pc)
                for l in range(N):
                    rd[l] = c[l] - tN[l] - z[l] + wv[l]
                _at_times(x, tm, om, rows, nd, m, pc)
                for i in range(m):
                    rp[i] = bvec[i] - tm[i]
                if gap <= tol * (1.0 + fabs(pobj)):
                    converged = 1
                    break
                mu = gap / (2.0 * N)
                for l in range(N):
                    g[l] = 1.0 / (z[l] / x[l] + wv[l] / s[l])
                # predictor
                for l in range(N):
                    rhat[l] = rd[l] + z[l] - wv[l]
                    tN[l] = g[l] * rhat[l]
                _at_times(tN, tm, om, rows, nd, m, pc)
                for i in range(m):
                    tm[i] += rp[i]
                _normal_solve(g, tm, dy, om, rows, nd, m, pc, d0, d1, d2)
                _a_times(dy, tN, om, rows, nd, m, pc)
                for l in range(N):
                    dxa[l] = g[l] * (tN[l] - rhat[l])
                    dza[l] = (-x[l] * z[l] - z[l] * dxa[l]) / x[l]
                    dwa[l] = (-s[l] * wv[l] + wv[l] * dxa[l]) / s[l]
                    r1[l] = -dxa[l]
                ap = _max_step(x, dxa, N)
                t1 = _max_step(s, r1, N)
                if t1 < ap:
                    ap = t1
                ad = _max_step(z, dza, N)
                t2 = _max_step(wv, dwa, N)
                if t2 < ad:
                    ad = t2
                if ap > 1.0:
                    ap = 1.0
                if ad > 1.0:
                    ad = 1.0
                mu_aff = 0.0
                for l in range(N):
                    mu_aff += ((x[l] + ap * dxa[l]) * (z[l] + ad * dza[l])
                               + (s[l] - ap * dxa[l]) * (wv[l] + ad * dwa[l]))
                mu_aff /= 2.0 * N
                sigma = (mu_aff / mu) ** 3
                # corrector
                for l in range(N):
                    t1 = -x[l] * z[l] + sigma * mu - dxa[l] * dza[l]
                    t2 = -s[l] * wv[l] + sigma * mu + dxa[l] * dwa[l]
                    rhat[l] = rd[l] - t1 / x[l] + t2 / s[l]
                    dz[l] = t1
                    dw[l] = t2
                    tN[l] = g[l] * rhat[l]
                _at_times(tN, tm, om, rows, nd, m, pc)
                for i in range(m):
                    tm[i] += rp[i]
                _normal_solve(g, tm, dy, om, rows, nd, m, pc, d0, d1, d2)
                _a_times(dy, tN, om, rows, nd, m, pc)
                for l in range(N):
                    dxv[l] = g[l] * (tN[l] - rhat[l])
                    dz[l] = (dz[l] - z[l] * dxv[l]) / x[l]
                    dw[l] = (dw[l] + wv[l] * dxv[l]) / s[l]
                    r1[l] = -dxv[l]
                ap = _max_step(x, dxv, N)
                t1 = _max_step(s, r1, N)
                if t1 < ap:
                    ap = t1
                ad = _max_step(z, dz, N)
                t2 = _max_step(wv, dw, N)
                if t2 < ad:
                    ad = t2
                ap = 0.9995 * ap
                ad = 0.9995 * ad
                if ap > 1.0:
                    ap = 1.0
                if ad > 1.0:
                    ad = 1.0
                for l in range(N):
                    x[l] += ap * dxv[l]
                    s[l] -= ap * dxv[l]
                    z[l] += ad * dz[l]
                    wv[l] += ad * dw[l]
                for i in range(m):
                    yv[i] += ad * dy[i]
                it += 1
            for i in range(m):
                theta[i] = -yv[i]
        return theta_arr, it, bool(converged)
    finally:
        free(rows)
        free(buf)
