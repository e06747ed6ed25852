"""Weighted L1 smoothing of log-mortality curves with a monotone upper tail."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression

from . import kernels
from .data import MortalityDataset
from .errors import ConvergenceError, DomainError

MONOTONE_FROM = 65
LAMBDA_GRID = np.logspace(-3, 2, 21)
N_FOLDS = 5
TOL = 1e-8
MAXIT = 500


@dataclass(frozen=True, eq=False)
class SmoothedCurveSet:
    """Smoothed log rates ``f`` (ages x years), noise sd ``sigma`` and the per-year ``lam``."""

    ages: np.ndarray
    years: np.ndarray
    f: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray

    @property
    def rates(self) -> np.ndarray:
        return np.exp(self.f)


def estimate_noise_sd(rates, exposures):
    """Noise sd of observed log rates, ``1 / (m E)``; missing where ``m E`` is not positive."""
    m = np.asarray(rates, dtype=float)
    e = np.asarray(exposures, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = m * e
        return np.where(np.isfinite(d) & (d > 0), 1.0 / d, np.nan)


def weights_from_sd(sigma):
    """``1 / sigma**2`` with missing cells mapped to weight 0."""
    sigma = np.asarray(sigma, dtype=float)
    ok = np.isfinite(sigma) & (sigma > 0)
    return np.where(ok, 1.0 / np.where(ok, sigma, 1.0) ** 2, 0.0)


def _prepare(y, weights):
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    if y.shape != w.shape or y.ndim != 1:
        raise DomainError("y and weights must be 1-d arrays of equal length")
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise DomainError("weights must be non-negative")
    w = np.where(np.isfinite(y), w, 0.0)
    if not np.any(w > 0):
        raise DomainError("all weights are zero")
    return np.where(w > 0, y, 0.0), w


def _monotone_tail(theta, ages, monotone_from):
    if monotone_from is None:
        return theta
    tail = ages >= monotone_from
    if tail.sum() > 1:
        theta = theta.copy()
        theta[tail] = isotonic_regression(theta[tail], increasing=True).x
    return theta


def smooth_curve(y, weights, lam, monotone_from=MONOTONE_FROM, *, ages=None,
                 tol=TOL, maxit=MAXIT):
    """Weighted L1 fit with an absolute second-difference penalty.

    Minimises ``sum_j w_j |y_j - theta_j| + lam * sum_j |theta'_{j+1} - theta'_j|``
    with ``theta'`` the forward difference over the grid spacing, then projects
    ages at or above ``monotone_from`` onto non-decreasing sequences.

    Parameters
    ----------
    y : array_like
        Log rates; NaN cells are treated as missing.
    weights : array_like
        Non-negative.
    lam : float
        Penalty level, ``>= 0``.
    monotone_from : float or None
        First age of the monotone region; ``None`` disables the projection.
    ages : array_like, optional
        Age grid, uniform. Defaults to ``0, 1, ...``.

    Raises
    ------
    DomainError
        All weights zero, or ``lam < 0``.
    ConvergenceError
        Interior point solver not converged in ``maxit`` iterations; ``last``
        holds the final iterate.
    """
    y0, w = _prepare(y, weights)
    m = y0.size
    ages = np.arange(m, dtype=float) if ages is None else np.asarray(ages, dtype=float)
    dx = float(ages[1] - ages[0]) if m > 1 else 1.0
    if not lam >= 0:
        raise DomainError("lambda must be non-negative")
    obs = w > 0
    if lam == 0 or m < 3:
        theta = np.interp(ages, ages[obs], y0[obs])
    else:
        # rescale weights and penalty together for conditioning; the minimiser is unchanged
        scale = w[obs].mean()
        theta, _, ok = kernels.l1_trend_filter(y0, w / scale, float(lam) / scale, dx, tol, maxit)
        theta = np.asarray(theta)
        if not ok:
            raise ConvergenceError(f"L1 smoother did not converge in {maxit} iterations",
                                   last=_monotone_tail(theta, ages, monotone_from))
    return _monotone_tail(theta, ages, monotone_from)


def cv_error(y, weights, lam, *, monotone_from=MONOTONE_FROM, ages=None, n_folds=N_FOLDS):
    """Weighted absolute held-out error of :func:`smooth_curve`, interleaved folds."""
    y0, w = _prepare(y, weights)
    idx = np.flatnonzero(w > 0)
    err = 0.0
    for k in range(n_folds):
        held = idx[k::n_folds]
        wk = w.copy()
        wk[held] = 0.0
        theta = smooth_curve(y0, wk, lam, monotone_from, ages=ages)
        err += float(np.sum(w[held] * np.abs(y0[held] - theta[held])))
    return err


def select_lambda(y, weights, *, grid=LAMBDA_GRID, monotone_from=MONOTONE_FROM, ages=None,
                  n_folds=N_FOLDS, return_errors=False):
    """Pick ``lam`` from ``grid`` by K-fold cross-validation; ties go to the smallest."""
    y0, w = _prepare(y, weights)
    if np.count_nonzero(w) < 10:
        raise DomainError("need at least 10 observed cells to select lambda")
    grid = np.sort(np.asarray(grid, dtype=float))
    errs = np.array([cv_error(y0, w, lam, monotone_from=monotone_from, ages=ages,
                              n_folds=n_folds) for lam in grid])
    best = errs.min()
    pick = int(np.flatnonzero(errs <= best + 1e-10 * max(1.0, abs(best)))[0])
    return (grid[pick], errs) if return_errors else grid[pick]


def smooth_rates(rates, exposures, *, ages=None, years=None, lam=None,
                 monotone_from=MONOTONE_FROM, workers=1) -> SmoothedCurveSet:
    """Smooth every year's log-rate curve; ``lam=None`` selects it per year."""
    m = np.asarray(rates, dtype=float)
    p, n = m.shape
    ages = np.arange(p) if ages is None else np.asarray(ages)
    years = np.arange(n) if years is None else np.asarray(years)
    sigma = estimate_noise_sd(m, exposures)
    w = weights_from_sd(sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(m > 0, np.log(m), np.nan)

    def one(t):
        lt = select_lambda(y[:, t], w[:, t], monotone_from=monotone_from, ages=ages) \
            if lam is None else float(lam)
        return smooth_curve(y[:, t], w[:, t], lt, monotone_from, ages=ages), lt

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(one, range(n)))
    else:
        out = [one(t) for t in range(n)]
    f = np.column_stack([o[0] for o in out])
    return SmoothedCurveSet(ages, years, f, sigma, np.array([o[1] for o in out]))


def smooth_dataset(ds: MortalityDataset, *, lam=None, monotone_from=MONOTONE_FROM,
                   sexes=None, workers=1):
    """Smooth each sex series. Returns the smoothed dataset and the curve sets by sex."""
    if not ds.exposures:
        raise DomainError("smoothing needs exposures to weight the fit")
    curves = {}
    for sex in sexes or ds.sexes:
        curves[sex] = smooth_rates(ds.rate(sex), ds.exposure(sex), ages=ds.ages, years=ds.years,
                                   lam=lam, monotone_from=monotone_from, workers=workers)
    out = MortalityDataset(ds.ages, ds.years, {s: c.rates for s, c in curves.items()},
                           {s: ds.exposures[s] for s in curves if s in ds.exposures},
                           name=ds.name, smoothed=True)
    return out, curves
