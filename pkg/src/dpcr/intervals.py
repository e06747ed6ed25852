"""Bootstrap prediction intervals from score-forecast errors and residual curves."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from os import PathLike

import numpy as np

from .arima import predict_from
from .data import back_transform, clamp_improvements
from .errors import DomainError, ImprovementClampWarning
from .forecasters import ModelFit, point_forecast, score_forecasts

ALPHA = 0.2
B_DEFAULT = 1000


@dataclass(frozen=True, eq=False)
class PredictionInterval:
    """Pointwise rate bounds at one horizon, plus the improvement-scale quantiles."""

    level: float
    lower: np.ndarray
    upper: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    samples_B: int
    seed: int | None
    horizon: int = 1
    clamped: int = 0


def insample_score_errors(fit: ModelFit, h: int = 1) -> np.ndarray:
    """``h``-step in-sample errors of each score model, shape ``(n - h, K)``.

    Row ``s`` is the error at time ``t = s + h`` (0-based) of the forecast made
    from the first ``t - h + 1`` scores, with the parameters fitted on all of them.
    """
    scores = fit.basis.scores
    n, K = scores.shape
    if n - h < 5:
        raise DomainError("insufficient history for in-sample score errors")
    out = np.empty((n - h, K))
    for k in range(K):
        model = fit.score_models[k]
        col = scores[:, k]
        for s in range(n - h):
            out[s, k] = col[s + h] - predict_from(model, col, s + 1, h)
    return out


def bootstrap_paths(fit: ModelFit, h: int = 1, B: int = B_DEFAULT, seed=None,
                    errors: np.ndarray | None = None) -> np.ndarray:
    """``B`` bootstrap improvement curves at horizon ``h``, shape ``(B, p)``.

    Score errors are drawn with replacement independently per component;
    residual curves are drawn whole.
    """
    xi = insample_score_errors(fit, h) if errors is None else np.asarray(errors, dtype=float)
    beta, _ = score_forecasts(fit, h)
    beta_h = beta[h - 1]
    rng = np.random.default_rng(seed)
    m, K = xi.shape
    pick = rng.integers(0, m, size=(B, K))
    beta_b = beta_h[None, :] + xi[pick, np.arange(K)[None, :]]
    resid = fit.basis.residuals
    rpick = rng.integers(0, resid.shape[1], size=B)
    return fit.basis.mean[None, :] + beta_b @ fit.basis.components.T + resid[:, rpick].T


def prediction_interval(paths, alpha: float = ALPHA, anchor=None, *, seed=None,
                        horizon: int = 1) -> PredictionInterval:
    """Pointwise ``alpha/2`` and ``1 - alpha/2`` quantiles, back-transformed from ``anchor``.

    The back-transform is decreasing in the improvement, so the upper
    improvement quantile gives the lower rate bound.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim != 2 or paths.shape[0] < 100:
        raise DomainError("need at least 100 bootstrap paths")
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    zl = np.quantile(paths, alpha / 2, axis=0, method="linear")
    zu = np.quantile(paths, 1 - alpha / 2, axis=0, method="linear")
    if anchor is None:
        return PredictionInterval(1 - alpha, zl, zu, zl, zu, paths.shape[0], seed, horizon)
    _, bad_l = clamp_improvements(zl)
    _, bad_u = clamp_improvements(zu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ImprovementClampWarning)
        lower = back_transform(zu, anchor)
        upper = back_transform(zl, anchor)
    n_bad = int(bad_l.sum() + bad_u.sum())
    if n_bad:
        warnings.warn(f"{n_bad} interval bound(s) outside (-2, 2) clamped",
                      ImprovementClampWarning, stacklevel=2)
    return PredictionInterval(1 - alpha, lower, upper, zl, zu, paths.shape[0], seed, horizon, n_bad)


def interval_forecast(fit: ModelFit, h: int = 1, B: int = B_DEFAULT, seed=None,
                      alpha: float = ALPHA) -> PredictionInterval:
    """Interval at horizon ``h``; for ``h > 1`` the anchor is the point forecast for ``h - 1``."""
    anchor = fit.anchor if h == 1 else point_forecast(fit, h - 1).rates[:, -1]
    paths = bootstrap_paths(fit, h, B, seed)
    return prediction_interval(paths, alpha, anchor, seed=seed, horizon=h)


def write_interval(pi: PredictionInterval, ages, dest, *, method="", mode="", sex="") -> None:
    """CSV rows (method, mode, sex, horizon, age, lower, upper, level)."""
    fh, close = (open(dest, "w", newline=""), True) if isinstance(dest, (str, PathLike)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "mode", "sex", "horizon", "age", "lower", "upper", "level"])
        for i, age in enumerate(ages):
            w.writerow([method, mode, sex, pi.horizon, int(age), repr(float(pi.lower[i])),
                        repr(float(pi.upper[i])), repr(float(pi.level))])
    finally:
        if close:
            fh.close()
