"""Expanding-window evaluation and point/interval forecast error criteria."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from .arima import auto_arima
from .data import MortalityDataset, improvement_transform
from .decomposition import THRESHOLD
from .errors import DomainError, DpcrError, ImprovementClampWarning
from .forecasters import fit_fts, fit_fts_curves, fit_lc, point_forecast
from .intervals import ALPHA, B_DEFAULT, interval_forecast

HOLDOUT = 30
SCALE = 100.0
CRITERIA = ("mafe", "rmsfe", "interval_score", "cpd")
SUMMARY_ROWS = ("min", "q1", "median", "mean", "q3", "max")


def _pair(forecasts, actuals):
    f = np.asarray(forecasts, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if f.shape != a.shape:
        raise DomainError(f"shape mismatch {f.shape} vs {a.shape}")
    if f.size == 0:
        raise DomainError("no forecasts to score")
    return f, a


def mafe(forecasts, actuals) -> float:
    """Mean absolute forecast error over all cells."""
    f, a = _pair(forecasts, actuals)
    return float(np.mean(np.abs(a - f)))


def rmsfe(forecasts, actuals, *, literal: bool = False) -> float:
    """Root mean squared forecast error.

    ``literal=True`` takes the square root per cell before averaging, which
    reduces to :func:`mafe`.
    """
    f, a = _pair(forecasts, actuals)
    if literal:
        return float(np.mean(np.sqrt((a - f) ** 2)))
    return float(np.sqrt(np.mean((a - f) ** 2)))


def cpd(lower, upper, actuals, alpha: float = ALPHA) -> float:
    """Absolute gap between the exceedance rate and ``alpha``."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    lo, a = _pair(lower, actuals)
    up, _ = _pair(upper, actuals)
    out = np.count_nonzero(a < lo) + np.count_nonzero(a > up)
    return float(abs(out / a.size - alpha))


def interval_score(lower, upper, actuals, alpha: float = ALPHA) -> float:
    """Mean interval score: width plus ``2/alpha`` times the miss distance."""
    lo, a = _pair(lower, actuals)
    up, _ = _pair(upper, actuals)
    s = (up - lo) + (2.0 / alpha) * np.where(a < lo, lo - a, 0.0) \
        + (2.0 / alpha) * np.where(a > up, a - up, 0.0)
    return float(np.mean(s))


def summarize(values) -> dict[str, float]:
    """Min, quartiles (linear interpolation), median, mean and max."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("nothing to summarise")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return {"min": float(v.min()), "q1": float(q1), "median": float(med),
            "mean": float(v.mean()), "q3": float(q3), "max": float(v.max())}


def usable_pairs(holdout: int, h: int) -> int:
    return max(holdout - h + 1, 0)


@dataclass(eq=False)
class WindowResult:
    origin_year: int
    target_year: int
    forecast: np.ndarray
    actual: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None


@dataclass(eq=False)
class EvaluationReport:
    """Per-window results and the four criteria for one (method, mode, sex, h) series."""

    method: str
    mode: str
    sex: str
    h: int
    name: str = ""
    windows: list[WindowResult] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    alpha: float = ALPHA
    literal_rmsfe: bool = False

    def _stack(self, attr):
        return np.column_stack([getattr(w, attr) for w in self.windows])

    @property
    def criteria(self) -> dict[str, float]:
        if not self.windows:
            return {c: float("nan") for c in CRITERIA}
        f, a = self._stack("forecast"), self._stack("actual")
        out = {"mafe": mafe(f, a), "rmsfe": rmsfe(f, a, literal=self.literal_rmsfe)}
        if self.windows[0].lower is not None:
            lo, up = self._stack("lower"), self._stack("upper")
            out["interval_score"] = interval_score(lo, up, a, self.alpha)
            out["cpd"] = cpd(lo, up, a, self.alpha)
        else:
            out["interval_score"] = out["cpd"] = float("nan")
        return out

    def window_errors(self, criterion: str) -> np.ndarray:
        """The criterion evaluated on each window separately."""
        vals = []
        for w in self.windows:
            if criterion == "mafe":
                vals.append(mafe(w.forecast, w.actual))
            elif criterion == "rmsfe":
                vals.append(rmsfe(w.forecast, w.actual, literal=self.literal_rmsfe))
            elif criterion == "interval_score":
                vals.append(interval_score(w.lower, w.upper, w.actual, self.alpha))
            elif criterion == "cpd":
                vals.append(cpd(w.lower, w.upper, w.actual, self.alpha))
            else:
                raise DomainError(f"unknown criterion {criterion!r}")
        return np.array(vals)


def _fit(method, train: MortalityDataset, raw_train: MortalityDataset, mode, sex, centering,
         arima, bandwidth, threshold=THRESHOLD):
    anchor = raw_train.rate(sex)[:, -1]
    if method == "lc":
        z = improvement_transform(raw_train.rate(sex), raw_train.ages, raw_train.years)
        return fit_lc(z, centering, mode, bandwidth=bandwidth, arima=arima)
    if method == "fts":
        return fit_fts(raw_train, mode, sex, smoothed=train, bandwidth=bandwidth, arima=arima,
                       threshold=threshold)
    if method == "fts_raw":
        z = improvement_transform(raw_train.rate(sex), raw_train.ages, raw_train.years)
        return fit_fts_curves(z, mode, bandwidth=bandwidth, anchor=anchor, arima=arima,
                              threshold=threshold)
    raise DomainError(f"unknown method {method!r}")


def expanding_window(dataset: MortalityDataset, method: str = "lc", mode: str = "static",
                     holdout: int = HOLDOUT, h: int = 1, *, sex: str = "female",
                     centering: bool = True, smoothed: MortalityDataset | None = None,
                     intervals: bool = True, alpha: float = ALPHA, B: int = B_DEFAULT,
                     seed: int = 0, arima=auto_arima, bandwidth="auto",
                     literal_rmsfe: bool = False, threshold: float = THRESHOLD) -> EvaluationReport:
    """Refit on a growing history and forecast ``h`` years ahead from each origin.

    Window ``w = 1..holdout`` trains on the first ``n - holdout + w - 1``
    years; only windows whose target year is observed are kept, giving
    ``holdout - h + 1`` pairs. ``smoothed`` supplies the smoothed copy of
    ``dataset`` used by the FTS method (each year is smoothed on its own, so
    slicing it introduces no look-ahead).
    """
    n = dataset.years.size
    if n <= holdout + 15:
        raise DomainError(f"need more than {holdout + 15} years, have {n}")
    if method == "fts" and smoothed is None:
        from .smoothing import smooth_dataset
        smoothed = smooth_dataset(dataset, sexes=[sex])[0]
    report = EvaluationReport(method, mode, sex, h, dataset.name, alpha=alpha,
                              literal_rmsfe=literal_rmsfe)
    actual_all = dataset.rate(sex)
    for w in range(1, usable_pairs(holdout, h) + 1):
        end = n - holdout + w - 1
        last_year = int(dataset.years[end - 1])
        raw_train = dataset.select_years(last=last_year)
        train = smoothed.select_years(last=last_year) if smoothed is not None else raw_train
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ImprovementClampWarning)
                fit = _fit(method, train, raw_train, mode, sex, centering, arima, bandwidth,
                           threshold)
                fc = point_forecast(fit, h).rates[:, -1]
                lo = up = None
                if intervals:
                    pi = interval_forecast(fit, h, B, seed + w, alpha)
                    lo, up = pi.lower, pi.upper
        except (DpcrError, np.linalg.LinAlgError) as exc:
            report.failures.append((last_year, str(exc)))
            continue
        report.windows.append(WindowResult(last_year, last_year + h, fc,
                                           actual_all[:, end + h - 1].copy(), lo, up))
    return report


def write_report(reports: list[EvaluationReport], dest, *, scale: float = SCALE) -> None:
    """Summary table: one row per (criterion, statistic), one column per (sex, mode).

    Statistics summarise the criterion across the series (e.g. countries)
    of each column. Values are multiplied by ``scale``.
    """
    cols = sorted({(r.method, r.sex, r.mode) for r in reports},
                  key=lambda c: (c[0], c[1], c[2] != "dynamic"))
    fh, close = (open(dest, "w", newline=""), True) if isinstance(dest, (str, PathLike)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["criterion", "statistic",
                    *(f"{m}_{s}_{'DPCA' if md == 'dynamic' else 'PCA'}" for m, s, md in cols)])
        for crit in CRITERIA:
            summaries = []
            for c in cols:
                vals = [r.criteria[crit] for r in reports if (r.method, r.sex, r.mode) == c]
                vals = [v for v in vals if np.isfinite(v)]
                summaries.append(summarize(vals) if vals else None)
            for stat in SUMMARY_ROWS:
                w.writerow([crit, stat, *("" if s is None else repr(scale * s[stat])
                                          for s in summaries)])
    finally:
        if close:
            fh.close()


def write_windows(reports: list[EvaluationReport], dest, *, scale: float = SCALE) -> None:
    """Per-window criteria for every report (values multiplied by ``scale``)."""
    fh, close = (open(dest, "w", newline=""), True) if isinstance(dest, (str, PathLike)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "method", "mode", "sex", "h", "origin_year", "target_year", *CRITERIA])
        for r in reports:
            has_int = bool(r.windows) and r.windows[0].lower is not None
            per = {c: r.window_errors(c) for c in CRITERIA if has_int or c in ("mafe", "rmsfe")}
            for i, win in enumerate(r.windows):
                w.writerow([r.name, r.method, r.mode, r.sex, r.h, win.origin_year, win.target_year,
                            *(repr(scale * float(per[c][i])) if c in per else "" for c in CRITERIA)])
    finally:
        if close:
            fh.close()
