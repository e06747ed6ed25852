"""Lee-Carter and functional time-series forecasts of improvement curves and rates."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from os import PathLike

import numpy as np

from .arima import ArimaModel, auto_arima, forecast
from .data import ImprovementSeries, MortalityDataset, chain_back_transform, clamp_improvements, improvement_transform
from .decomposition import THRESHOLD, BasisDecomposition, decompose
from .errors import DomainError, ImprovementClampWarning
from .smoothing import smooth_dataset


@dataclass(frozen=True, eq=False)
class ModelFit:
    """A fitted LC or FTS model on one improvement series."""

    method: str
    mode: str
    basis: BasisDecomposition
    score_models: list[ArimaModel]
    anchor: np.ndarray
    years: np.ndarray
    centering: bool = True
    smoothing: str = "none"
    series: ImprovementSeries | None = None
    info: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.basis.K


@dataclass(frozen=True, eq=False)
class PointForecast:
    """Improvement and rate forecasts (ages x h) for years after the fit."""

    years: np.ndarray
    improvements: np.ndarray
    rates: np.ndarray
    scores: np.ndarray
    clamped: np.ndarray


def _series_matrix(Z):
    if isinstance(Z, ImprovementSeries):
        return Z, Z.z
    return None, np.asarray(Z, dtype=float)


def _fit_scores(scores, fitter):
    return [fitter(scores[:, k]) for k in range(scores.shape[1])]


def _lc_normalise(dec: BasisDecomposition, Z, centering: bool) -> BasisDecomposition:
    b_hat = dec.components[:, 0]
    kappa_hat = dec.scores[:, 0]
    c = float(b_hat.sum())
    if abs(c) < 1e-12 * max(1.0, float(np.abs(b_hat).sum())):
        raise DomainError("sum of the LC age profile is zero, so it cannot be rescaled; "
                          "use the FTS method instead")
    b = b_hat / c
    kappa = c * kappa_hat
    a = dec.mean.copy()
    if centering:
        shift = kappa.mean()
        kappa = kappa - shift
        a = a + shift * b
    resid = Z - a[:, None] - np.outer(b, kappa)
    return replace(dec, mean=a, components=b[:, None], scores=kappa[:, None], residuals=resid)


def fit_lc(Z, centering: bool = True, mode: str = "static", *, bandwidth="auto",
           anchor=None, years=None, arima=auto_arima, h1=None) -> ModelFit:
    """Adapted Lee-Carter: one component, normalised so ``sum b = 1`` and ``sum kappa = 0``.

    Without centering no mean is removed and kappa is not re-centred, so
    only ``sum b = 1`` holds.
    """
    series, Zm = _series_matrix(Z)
    if Zm.ndim != 2 or Zm.shape[1] < 10:
        raise DomainError("LC needs at least 10 years of improvement curves")
    if not np.all(np.isfinite(Zm)):
        raise DomainError("improvement curves contain missing cells")
    grid = series.ages if series is not None else None
    dec = decompose(Zm, mode, bandwidth, grid=grid, inner="dot", center=centering, K=1, h1=h1)
    dec = _lc_normalise(dec, Zm, centering)
    models = _fit_scores(dec.scores, arima)
    anchor = series.anchor if anchor is None and series is not None else anchor
    years = series.years if years is None and series is not None else years
    return ModelFit("LC", mode, dec, models, None if anchor is None else np.asarray(anchor),
                    np.arange(Zm.shape[1]) if years is None else np.asarray(years),
                    centering, "none", series)


def fit_fts_curves(Z, mode: str = "static", *, bandwidth="auto", anchor=None, years=None,
                   grid=None, arima=auto_arima, K=None, h1=None, smoothing="none",
                   threshold=THRESHOLD) -> ModelFit:
    """FTS on given improvement curves (no smoothing step): K by the 85% rule."""
    series, Zm = _series_matrix(Z)
    if Zm.ndim != 2 or Zm.shape[1] < 10:
        raise DomainError("FTS needs at least 10 years of improvement curves")
    if not np.all(np.isfinite(Zm)):
        raise DomainError("improvement curves contain missing cells")
    if grid is None and series is not None:
        grid = series.ages
    dec = decompose(Zm, mode, bandwidth, grid=grid, inner="trapezoid", K=K, h1=h1,
                    threshold=threshold)
    models = _fit_scores(dec.scores, arima)
    anchor = series.anchor if anchor is None and series is not None else anchor
    years = series.years if years is None and series is not None else years
    return ModelFit("FTS", mode, dec, models, None if anchor is None else np.asarray(anchor),
                    np.arange(Zm.shape[1]) if years is None else np.asarray(years),
                    True, smoothing, series)


def fit_fts(dataset: MortalityDataset, mode: str = "static", sex: str = "female", *,
            smooth: bool = True, lam=None, bandwidth="auto", arima=auto_arima, K=None,
            h1=None, smoothed: MortalityDataset | None = None,
            threshold=THRESHOLD) -> ModelFit:
    """Smooth, transform to improvements, decompose and fit one ARIMA per score.

    The anchor for forecasting is the last raw rate curve. Pass ``smoothed``
    to reuse an already smoothed copy of ``dataset``.
    """
    if smooth and not dataset.smoothed:
        smoothed = smoothed or smooth_dataset(dataset, lam=lam, sexes=[sex])[0]
        rates = smoothed.rate(sex)
        tag = "applied"
    else:
        rates = dataset.rate(sex)
        tag = "applied" if dataset.smoothed else "none"
    series = improvement_transform(rates, dataset.ages, dataset.years)
    raw_anchor = dataset.rate(sex)[:, -1]
    return fit_fts_curves(series, mode, bandwidth=bandwidth, anchor=raw_anchor, arima=arima,
                          K=K, h1=h1, smoothing=tag, threshold=threshold)


def score_forecasts(fit: ModelFit, h: int):
    """Score point forecasts (h x K) and standard errors (h x K)."""
    pts, ses = [], []
    for k, model in enumerate(fit.score_models):
        f, se = forecast(model, fit.basis.scores[:, k], h)
        pts.append(f)
        ses.append(se)
    return np.column_stack(pts), np.column_stack(ses)


def point_forecast(fit: ModelFit, h: int = 1, anchor=None) -> PointForecast:
    """Improvement forecasts ``a + sum_k beta_k phi_k`` chained from the anchor rates."""
    if h < 1:
        raise DomainError("horizon must be at least 1")
    anchor = fit.anchor if anchor is None else np.asarray(anchor, dtype=float)
    if anchor is None:
        raise DomainError("no anchor rate curve to back-transform from")
    beta, _ = score_forecasts(fit, h)
    z = fit.basis.fitted(beta)
    _, clamped = clamp_improvements(z)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ImprovementClampWarning)
        rates = chain_back_transform(z, anchor)
    if clamped.any():
        warnings.warn(f"{int(clamped.sum())} forecast improvement value(s) outside (-2, 2) clamped",
                      ImprovementClampWarning, stacklevel=2)
    y0 = int(fit.years[-1]) if len(fit.years) else 0
    return PointForecast(np.arange(y0 + 1, y0 + h + 1), z, rates, beta, clamped)


def write_forecast(fc: PointForecast, ages, dest, *, method="", mode="", sex="") -> None:
    """CSV keyed by (method, mode, sex, year, age) with improvement and rate."""
    fh, close = (open(dest, "w", newline=""), True) if isinstance(dest, (str, PathLike)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "mode", "sex", "year", "age", "improvement", "rate", "clamped"])
        for s, year in enumerate(fc.years):
            for i, age in enumerate(ages):
                w.writerow([method, mode, sex, int(year), int(age), repr(float(fc.improvements[i, s])),
                            repr(float(fc.rates[i, s])), int(fc.clamped[i, s])])
    finally:
        if close:
            fh.close()
