"""Univariate ARIMA: KPSS differencing choice, exact-likelihood fits, AICc search, forecasts.

Conventions. ``w`` is the ``d``-times differenced series. With a constant
``mu`` (a mean when ``d = 0``, a drift when ``d = 1``), ``w - mu`` follows

    phi(B) (w_t - mu) = theta(B) eps_t,
    phi(B) = 1 - phi_1 B - ... - phi_p B^p,
    theta(B) = 1 + theta_1 B + ... + theta_q B^q.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ArimaFitError, DomainError

KPSS_CRIT = {"level": 0.463, "trend": 0.146}
P_MAX = 5
Q_MAX = 5
D_MAX = 2
XATOL = 1e-8
FATOL = 1e-8
ROOT_TOL = 1e-6
_PACF_START_CAP = 0.95


# ----------------------------------------------------------------------------
# KPSS


@dataclass(frozen=True)
class KPSSResult:
    statistic: float
    reject: bool
    lags: int
    null: str
    critical: float


def kpss_lags(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** 0.25))


def kpss_test(series, null: str = "level", lags: int | None = None) -> KPSSResult:
    """KPSS stationarity test at the 5% level with a Bartlett long-run variance."""
    y = np.asarray(series, dtype=float)
    n = y.size
    if n < 10:
        raise DomainError("KPSS needs at least 10 observations")
    if null == "level":
        e = y - y.mean()
    elif null == "trend":
        t = np.arange(n, dtype=float)
        X = np.column_stack([np.ones(n), t])
        e = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
    else:
        raise DomainError(f"unknown null {null!r}")
    L = kpss_lags(n) if lags is None else int(lags)
    s2 = float(e @ e) / n
    for lag in range(1, L + 1):
        s2 += 2.0 * (1.0 - lag / (L + 1.0)) * float(e[lag:] @ e[:-lag]) / n
    S = np.cumsum(e)
    if not s2 > 1e-300 or not np.any(e):
        stat = 0.0
    else:
        stat = float(S @ S) / (n * n * s2)
    crit = KPSS_CRIT[null]
    return KPSSResult(stat, stat > crit, L, null, crit)


def select_d(series, d_max: int = D_MAX) -> int:
    """Smallest ``d`` whose differenced series is not rejected by the level KPSS test."""
    y = np.asarray(series, dtype=float)
    for d in range(d_max + 1):
        w = np.diff(y, d) if d else y
        if w.size < 10 or not kpss_test(w, "level").reject:
            return d
    return d_max


# ----------------------------------------------------------------------------
# parameter maps


def pacf_to_coef(r):
    """Durbin-Levinson map from partial autocorrelations in (-1, 1) to AR coefficients."""
    out = np.zeros(0)
    for j, rj in enumerate(np.asarray(r, dtype=float)):
        out = np.concatenate([out - rj * out[::-1], [rj]]) if j else np.array([rj])
    return out


def coef_to_pacf(c):
    """Inverse of :func:`pacf_to_coef`; ``None`` when the polynomial is not stationary."""
    a = np.asarray(c, dtype=float).copy()
    k = a.size
    r = np.zeros(k)
    for j in range(k - 1, -1, -1):
        rj = a[j]
        if not abs(rj) < 1.0:
            return None
        r[j] = rj
        if j:
            a = (a[:j] + rj * a[:j][::-1]) / (1.0 - rj * rj)
    return r


def _unpack(x, p, q, has_mean):
    x = np.asarray(x, dtype=float)
    ar = pacf_to_coef(np.tanh(x[:p])) if p else np.zeros(0)
    ma = -pacf_to_coef(np.tanh(x[p:p + q])) if q else np.zeros(0)
    mu = float(x[p + q]) if has_mean else 0.0
    return ar, ma, mu


# ----------------------------------------------------------------------------
# state space


def _system(ar, ma):
    p, q = len(ar), len(ma)
    r = max(p, q + 1)
    T = np.zeros((r, r))
    T[:p, 0] = ar
    T[np.arange(r - 1), np.arange(1, r)] = 1.0
    R = np.zeros(r)
    R[0] = 1.0
    R[1:q + 1] = ma
    return T, R


def _stationary_P(T, R):
    r = T.shape[0]
    A = np.eye(r * r) - np.kron(T, T)
    return np.linalg.solve(A, np.outer(R, R).ravel()).reshape(r, r)


def kalman_filter(w, ar, ma):
    """Innovations ``v``, their variances ``F`` (in units of sigma2) and the final predicted state."""
    T, R = _system(ar, ma)
    P = _stationary_P(T, R)
    a = np.zeros(T.shape[0])
    RR = np.outer(R, R)
    v = np.empty(len(w))
    F = np.empty(len(w))
    for t, wt in enumerate(w):
        F[t] = P[0, 0]
        v[t] = wt - a[0]
        K = P[:, 0] / F[t]
        a = T @ (a + K * v[t])
        P = T @ (P - np.outer(K, P[0])) @ T.T + RR
    return v, F, a, P


# ----------------------------------------------------------------------------
# models


@dataclass(frozen=True, eq=False)
class ArimaModel:
    """Fitted ARIMA(p, d, q). ``constant`` is the mean (d = 0) or drift (d = 1)."""

    p: int
    d: int
    q: int
    ar: np.ndarray
    ma: np.ndarray
    constant: float
    has_constant: bool
    sigma2: float
    loglik: float
    aicc: float
    nobs: int
    fitted_on: int
    converged: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def order(self) -> tuple[int, int, int]:
        return (self.p, self.d, self.q)

    @property
    def n_params(self) -> int:
        return self.p + self.q + int(self.has_constant) + 1


def aicc(loglik: float, k: int, n: int) -> float:
    if n - k - 1 <= 0:
        return math.inf
    return -2.0 * loglik + 2.0 * k * n / (n - k - 1)


def _start_values(w, p, q, has_mean):
    mu = float(w.mean()) if has_mean else 0.0
    x = np.zeros(p + q + int(has_mean))
    if p:
        wc = w - mu
        n = wc.size
        acov = np.array([wc[: n - k] @ wc[k:] / n for k in range(p + 1)])
        if acov[0] > 0:
            Rm = np.array([[acov[abs(i - j)] for j in range(p)] for i in range(p)])
            try:
                phi = np.linalg.solve(Rm, acov[1:])
                r = coef_to_pacf(phi)
            except np.linalg.LinAlgError:
                r = None
            if r is not None:
                x[:p] = np.arctanh(np.clip(r, -_PACF_START_CAP, _PACF_START_CAP))
    if has_mean:
        x[-1] = mu
    return x


def _simplex(x0, step=0.1):
    k = x0.size
    sim = np.tile(x0, (k + 1, 1))
    for i in range(k):
        sim[i + 1, i] += step if x0[i] == 0 else max(step, 0.05 * abs(x0[i])) * np.sign(x0[i])
    return np.ascontiguousarray(sim)


def _min_root_modulus(coefs, sign):
    # polynomial 1 + sign * (c_1 z + ... + c_k z^k)
    if len(coefs) == 0 or not np.any(coefs):
        return math.inf
    poly = np.concatenate([[1.0], sign * np.asarray(coefs)])
    while poly[-1] == 0:
        poly = poly[:-1]
    return float(np.min(np.abs(np.roots(poly[::-1]))))


def _difference(y, d):
    return np.diff(y, d) if d else y.copy()


def fit_arima(series, p: int, d: int, q: int, include_mean: bool = True, *,
              maxiter: int | None = None) -> ArimaModel:
    """Maximum likelihood ARIMA(p, d, q) by Nelder-Mead on a stationary/invertible parametrisation.

    The likelihood is exact Gaussian via the Kalman filter with sigma2
    profiled out. A constant is fitted when ``include_mean`` and ``d < 2``.

    Raises
    ------
    ArimaFitError
        Too few observations, optimizer failure, or roots on the unit circle.
    """
    y = np.asarray(series, dtype=float)
    w = _difference(y, d)
    n = w.size
    if not np.all(np.isfinite(w)):
        raise ArimaFitError((p, d, q), "series has missing values")
    if n - p - q - 2 <= 0 or n < 1:
        raise ArimaFitError((p, d, q), "too few observations")
    has_mean = bool(include_mean and d < 2)
    k = p + q + int(has_mean)
    # fit on a unit-scale copy; the likelihood shifts by n log(scale)
    scale = float(np.std(w))
    if not scale > 0:
        scale = max(abs(float(w[0])), 1.0)
    ws = np.ascontiguousarray(w / scale)
    maxiter = maxiter or 400 * (k + 1)
    x0 = _start_values(ws, p, q, has_mean)
    if k:
        x, fval, _, ok = kernels.fit_arma(_simplex(x0), ws, p, q, has_mean, XATOL, FATOL, maxiter)
        x, fval, _, ok = kernels.fit_arma(_simplex(np.asarray(x), 0.05), ws, p, q, has_mean,
                                          XATOL, FATOL, maxiter)
        x = np.asarray(x)
    else:
        x = np.zeros(0)
        fval, ok = kernels.arma_negloglik(x, ws, p, q, has_mean), True
    if not math.isfinite(fval):
        raise ArimaFitError((p, d, q), "likelihood not finite")
    if not ok:
        raise ArimaFitError((p, d, q), "optimizer did not converge")
    ar, ma, mu = _unpack(x, p, q, has_mean)
    if _min_root_modulus(ar, -1.0) <= 1.0 + ROOT_TOL:
        raise ArimaFitError((p, d, q), "AR root on the unit circle")
    if _min_root_modulus(ma, 1.0) <= 1.0 + ROOT_TOL:
        raise ArimaFitError((p, d, q), "MA root on the unit circle")
    mu *= scale
    v, F, _, _ = kalman_filter(w - mu, ar, ma)
    sigma2 = float(np.sum(v * v / F) / n)
    loglik = -0.5 * (n * math.log(2.0 * math.pi * sigma2) + float(np.sum(np.log(F))) + n)
    kk = p + q + int(has_mean) + 1
    return ArimaModel(p, d, q, ar, ma, mu, has_mean, sigma2, loglik, aicc(loglik, kk, n),
                      n, y.size, bool(ok))


def auto_arima(series, p_max: int = P_MAX, q_max: int = Q_MAX, d: int | None = None,
               d_max: int = D_MAX) -> ArimaModel:
    """Exhaustive AICc search over ``p <= p_max``, ``q <= q_max`` with ``d`` from :func:`select_d`.

    Candidates that fail to fit are skipped; ties within 1e-8 go to smaller
    ``p + q``, then smaller ``p``. Falls back to ``(0, d, 0)``.
    """
    y = np.asarray(series, dtype=float)
    if y.size < 15:
        raise DomainError("auto_arima needs at least 15 observations")
    d = select_d(y, d_max) if d is None else d
    fits = []
    for p in range(p_max + 1):
        for q in range(q_max + 1):
            try:
                fits.append(fit_arima(y, p, d, q, include_mean=True))
            except ArimaFitError:
                continue
    fits = [f for f in fits if math.isfinite(f.aicc)]
    if not fits:
        try:
            return fit_arima(y, 0, d, 0, include_mean=True)
        except ArimaFitError:
            return _fallback_model(y, d)
    best = min(f.aicc for f in fits)
    tol = 1e-8 * max(1.0, abs(best))
    near = [f for f in fits if f.aicc <= best + tol]
    return min(near, key=lambda f: (f.p + f.q, f.p))


def _fallback_model(y, d):
    w = _difference(y, d)
    has_mean = d < 2
    mu = float(w.mean()) if has_mean and w.size else 0.0
    sigma2 = float(np.mean((w - mu) ** 2)) if w.size else 0.0
    return ArimaModel(0, d, 0, np.zeros(0), np.zeros(0), mu, has_mean, sigma2, math.nan,
                      math.inf, w.size, y.size, False)


# ----------------------------------------------------------------------------
# forecasting


def psi_weights(model: ArimaModel, h: int) -> np.ndarray:
    """First ``h`` MA(infinity) weights of the undifferenced model."""
    phi = np.concatenate([[1.0], -np.asarray(model.ar)])
    for _ in range(model.d):
        phi = np.convolve(phi, [1.0, -1.0])
    theta = np.concatenate([[1.0], np.asarray(model.ma)])
    psi = np.zeros(h)
    for j in range(h):
        acc = theta[j] if j < theta.size else 0.0
        for i in range(1, min(j, phi.size - 1) + 1):
            acc -= phi[i] * psi[j - i]
        psi[j] = acc
    return psi


def _diff_forecast(model, w, h):
    mu = model.constant if model.has_constant else 0.0
    if w.size:
        _, _, a, _ = kalman_filter(w - mu, model.ar, model.ma)
    else:
        a = np.zeros(max(model.p, model.q + 1))
    T, _ = _system(model.ar, model.ma)
    out = np.empty(h)
    for s in range(h):
        out[s] = a[0] + mu
        a = T @ a
    return out


def _undifference(y, wf, d):
    """Cumulate differenced forecasts back to the level of ``y``."""
    if d == 0:
        return wf
    lasts = []
    cur = y
    for _ in range(d):
        lasts.append(float(cur[-1]) if cur.size else 0.0)
        cur = np.diff(cur)
    f = wf
    for k in range(d - 1, -1, -1):
        f = lasts[k] + np.cumsum(f)
    return f


def forecast(model: ArimaModel, series, h: int):
    """Point forecasts and standard errors for horizons ``1..h``.

    The series is filtered with the fitted parameters, forecasts are formed
    on the differenced scale and cumulated back.
    """
    if h < 1:
        raise DomainError("horizon must be at least 1")
    y = np.asarray(series, dtype=float)
    w = _difference(y, model.d)
    point = _undifference(y, _diff_forecast(model, w, h), model.d)
    psi = psi_weights(model, h)
    se = np.sqrt(model.sigma2 * np.cumsum(psi * psi))
    return point, se


def predict_from(model: ArimaModel, series, origin: int, h: int) -> float:
    """``h``-step prediction of ``series[origin + h - 1]`` from ``series[:origin]`` (fixed parameters)."""
    y = np.asarray(series, dtype=float)[:origin]
    w = _difference(y, model.d) if y.size > model.d else np.zeros(0)
    return float(_undifference(y, _diff_forecast(model, w, h), model.d)[-1])


def one_step_predictions(model: ArimaModel, series) -> np.ndarray:
    """In-sample one-step predictions for ``series[d:]``."""
    y = np.asarray(series, dtype=float)
    w = _difference(y, model.d)
    mu = model.constant if model.has_constant else 0.0
    v, _, _, _ = kalman_filter(w - mu, model.ar, model.ma)
    w_hat = w - v
    if model.d == 0:
        return w_hat
    # level prediction = prediction of the d-th difference plus the known lower-order terms
    base = y[model.d:] - w
    return base + w_hat
