"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``.

Same signatures and return conventions; used when the extension is not
built or when ``DPCR_PURE_PYTHON=1`` is set.
"""
import math

import numpy as np
from scipy.linalg import solveh_banded
from scipy.optimize import minimize


def _pacf_to_coef(x):
    out = []
    for j, xj in enumerate(x):
        r = math.tanh(xj)
        out = [out[i] - r * out[j - 1 - i] for i in range(j)] + [r]
    return out


def _lyapunov(ph, rv):
    r = len(ph)
    T = np.zeros((r, r))
    T[:, 0] = ph
    T[np.arange(r - 1), np.arange(1, r)] = 1.0
    A = np.eye(r * r) - np.kron(T, T)
    b = np.outer(rv, rv).ravel()
    try:
        P = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return None
    return P.reshape(r, r).tolist()


def _kalman(w, ph, rv):
    r = len(ph)
    P = _lyapunov(ph, rv)
    if P is None:
        return None
    a = [0.0] * r
    sumsq = 0.0
    sumlog = 0.0
    for wt in w:
        F = P[0][0]
        if not F > 0.0:
            return None
        v = wt - a[0]
        sumsq += v * v / F
        sumlog += math.log(F)
        pc = [P[i][0] for i in range(r)]
        a = [a[i] + pc[i] * v / F for i in range(r)]
        P = [[P[i][j] - pc[i] * pc[j] / F for j in range(r)] for i in range(r)]
        a0 = a[0]
        a = [ph[i] * a0 + (a[i + 1] if i + 1 < r else 0.0) for i in range(r)]
        M = [[ph[i] * P[0][j] + (P[i + 1][j] if i + 1 < r else 0.0) for j in range(r)]
             for i in range(r)]
        P = [[ph[j] * M[i][0] + (M[i][j + 1] if j + 1 < r else 0.0) + rv[i] * rv[j]
              for j in range(r)] for i in range(r)]
    return sumsq, sumlog


def arma_negloglik(x, w, p, q, has_mean):
    """Concentrated negative Gaussian log-likelihood (pure Python)."""
    x = [float(v) for v in x]
    r = max(p, q + 1)
    ph = _pacf_to_coef(x[:p]) + [0.0] * (r - p)
    rv = [1.0] + [-c for c in _pacf_to_coef(x[p:p + q])] + [0.0] * (r - q - 1)
    mu = x[p + q] if has_mean else 0.0
    n = len(w)
    res = _kalman([float(v) - mu for v in w], ph, rv)
    if res is None:
        return math.inf
    sumsq, sumlog = res
    s2 = sumsq / n
    if not s2 > 0.0:
        return math.inf
    return 0.5 * (n * math.log(2.0 * math.pi * s2) + sumlog + n)


def fit_arma(simplex, w, p, q, has_mean, xatol, fatol, maxiter):
    """Nelder-Mead via scipy from the supplied initial simplex."""
    simplex = np.asarray(simplex, dtype=float)
    k = simplex.shape[1]
    if k == 0:
        return np.empty(0), arma_negloglik([], w, p, q, has_mean), 1, True
    res = minimize(
        arma_negloglik,
        simplex[0],
        args=(w, p, q, has_mean),
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": xatol, "fatol": fatol,
                 "maxiter": maxiter, "maxfev": maxiter},
    )
    return np.asarray(res.x), float(res.fun), int(res.nfev), bool(res.status == 0)


def _second_difference(m, dx):
    D = np.zeros((m - 2, m))
    idx = np.arange(m - 2)
    D[idx, idx] = 1.0
    D[idx, idx + 1] = -2.0
    D[idx, idx + 2] = 1.0
    return D / dx


def _normal_solve(X, g, rhs):
    # X' diag(g) X is pentadiagonal; pack it for solveh_banded
    M = X.T @ (g[:, None] * X)
    m = M.shape[0]
    ab = np.zeros((3, m))
    ab[2] = np.diag(M)
    ab[1, 1:] = np.diag(M, 1)
    ab[0, 2:] = np.diag(M, 2)
    return solveh_banded(ab, rhs)


def _max_step(v, dv):
    neg = dv < 0.0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def l1_trend_filter(y, w, lam, dx, tol, maxit):
    """Weighted L1 trend filter by a primal-dual interior point method (numpy)."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    m = y.shape[0]
    if m < 3 or not lam > 0.0:
        raise ValueError("need at least 3 grid points and lam > 0")
    rows = np.flatnonzero(w > 0.0)
    if rows.size == 0:
        raise ValueError("all weights are zero")
    data = np.zeros((rows.size, m))
    data[np.arange(rows.size), rows] = w[rows]
    X = np.vstack([data, lam * _second_difference(m, dx)])
    N = X.shape[0]
    c = np.concatenate([-w[rows] * y[rows], np.zeros(m - 2)])
    x = np.full(N, 0.5)
    s = np.full(N, 0.5)
    b = X.T @ x
    yv = _normal_solve(X, np.ones(N), X.T @ c)
    r = c - X @ yv
    xi = np.mean(np.abs(r)) + 1e-12
    z = np.maximum(r, 0.0) + xi
    wv = np.maximum(-r, 0.0) + xi
    it = 0
    converged = False
    while it < maxit:
        gap = float(x @ z + s @ wv)
        rd = c - X @ yv - z + wv
        rp = b - X.T @ x
        if gap <= tol * (1.0 + abs(float(c @ x))):
            converged = True
            break
        mu = gap / (2.0 * N)
        g = 1.0 / (z / x + wv / s)

        rhat = rd + z - wv
        dy = _normal_solve(X, g, rp + X.T @ (g * rhat))
        dxa = g * (X @ dy - rhat)
        dza = (-x * z - z * dxa) / x
        dwa = (-s * wv + wv * dxa) / s
        ap = min(1.0, _max_step(x, dxa), _max_step(s, -dxa))
        ad = min(1.0, _max_step(z, dza), _max_step(wv, dwa))
        mu_aff = float((x + ap * dxa) @ (z + ad * dza) + (s - ap * dxa) @ (wv + ad * dwa)) / (2.0 * N)
        sigma = (mu_aff / mu) ** 3

        t1 = -x * z + sigma * mu - dxa * dza
        t2 = -s * wv + sigma * mu + dxa * dwa
        rhat = rd - t1 / x + t2 / s
        dy = _normal_solve(X, g, rp + X.T @ (g * rhat))
        ddx = g * (X @ dy - rhat)
        dz = (t1 - z * ddx) / x
        dw = (t2 + wv * ddx) / s
        ap = min(1.0, 0.9995 * min(_max_step(x, ddx), _max_step(s, -ddx)))
        ad = min(1.0, 0.9995 * min(_max_step(z, dz), _max_step(wv, dw)))
        x = x + ap * ddx
        s = s - ap * ddx
        z = z + ad * dz
        wv = wv + ad * dw
        yv = yv + ad * dy
        it += 1
    return -yv, it, converged
