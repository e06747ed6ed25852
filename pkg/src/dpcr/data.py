"""Mortality tables, the year-on-year improvement transform and its inverse.

Rates and exposures are held as age x year matrices (rows are ages,
columns are calendar years), one per sex series.  Missing cells are NaN.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from os import PathLike
from typing import IO, Iterable

import numpy as np

from .errors import DomainError, ImprovementClampWarning, ParseError

SEXES = ("female", "male", "total")
FIRST_YEAR = 1950
TOP_AGE = 100
CLAMP_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class MortalityDataset:
    """Age-specific rates and exposures for the three sex series.

    ``ages`` ends with ``TOP_AGE`` standing for the open group ``100+``.
    """

    ages: np.ndarray
    years: np.ndarray
    rates: dict[str, np.ndarray]
    exposures: dict[str, np.ndarray]
    name: str = ""
    smoothed: bool = field(default=False)

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=int)
        years = np.asarray(self.years, dtype=int)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "years", years)
        if ages.ndim != 1 or np.any(np.diff(ages) <= 0):
            raise DomainError("ages must be strictly increasing")
        if years.size == 0:
            raise DomainError("dataset has no years")
        if np.any(np.diff(years) != 1):
            raise DomainError("years must be consecutive")
        shape = (ages.size, years.size)
        for table in (self.rates, self.exposures):
            for sex, mat in table.items():
                if mat.shape != shape:
                    raise DomainError(f"{sex}: expected shape {shape}, got {mat.shape}")
        for sex, m in self.rates.items():
            if np.any(m[np.isfinite(m)] < 0):
                raise DomainError(f"{sex}: negative rates")

    @property
    def sexes(self) -> tuple[str, ...]:
        return tuple(s for s in SEXES if s in self.rates)

    def rate(self, sex: str) -> np.ndarray:
        try:
            return self.rates[sex]
        except KeyError:
            raise DomainError(f"no {sex!r} series in dataset") from None

    def exposure(self, sex: str) -> np.ndarray:
        if sex in self.exposures:
            return self.exposures[sex]
        return np.full((self.ages.size, self.years.size), np.nan)

    def select_years(self, first: int | None = None, last: int | None = None) -> "MortalityDataset":
        keep = np.ones(self.years.size, dtype=bool)
        if first is not None:
            keep &= self.years >= first
        if last is not None:
            keep &= self.years <= last
        if not keep.any():
            raise DomainError("year selection is empty")
        return MortalityDataset(
            self.ages, self.years[keep],
            {s: m[:, keep] for s, m in self.rates.items()},
            {s: e[:, keep] for s, e in self.exposures.items()},
            self.name, self.smoothed,
        )

    def equals(self, other: "MortalityDataset") -> bool:
        """Exact equality, treating NaN cells as equal."""
        if not (np.array_equal(self.ages, other.ages) and np.array_equal(self.years, other.years)):
            return False
        if set(self.rates) != set(other.rates) or set(self.exposures) != set(other.exposures):
            return False
        pairs = [(self.rates[s], other.rates[s]) for s in self.rates]
        pairs += [(self.exposures[s], other.exposures[s]) for s in self.exposures]
        return all(np.array_equal(a, b, equal_nan=True) for a, b in pairs)


@dataclass(frozen=True, eq=False)
class ImprovementSeries:
    """Improvement curves ``z`` (ages x years) with the rate curves needed to invert them.

    ``years`` starts one year after the source rates. ``anchor`` is the last
    rate curve and ``initial`` the first.
    """

    ages: np.ndarray
    years: np.ndarray
    z: np.ndarray
    anchor: np.ndarray
    initial: np.ndarray

    @property
    def n(self) -> int:
        return self.z.shape[1]

    def has_missing(self) -> bool:
        return not np.all(np.isfinite(self.z))


# ----------------------------------------------------------------------------
# parsing


def _open_text(source):
    if isinstance(source, (str, PathLike)):
        return open(source, newline=""), True
    return source, False


def _parse_value(token: str, lineno: int) -> float:
    if token in (".", "", "NA", "nan", "NaN"):
        return math.nan
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"cannot parse value {token!r}", lineno) from None


def _parse_age(token: str, lineno: int) -> tuple[int, bool]:
    label = token.strip()
    open_group = label.endswith("+")
    try:
        return int(label.rstrip("+")), open_group
    except ValueError:
        raise ParseError(f"cannot parse age {token!r}", lineno) from None


def _read_rows_hmd(fh) -> Iterable[tuple[int, list[str]]]:
    header_seen = False
    for lineno, line in enumerate(fh, start=1):
        parts = line.split()
        if not parts:
            continue
        if not header_seen:
            if parts[0] == "Year":
                if [p.lower() for p in parts[2:5]] != list(SEXES):
                    raise ParseError("expected columns Year Age Female Male Total", lineno)
                header_seen = True
            continue
        yield lineno, parts
    if not header_seen:
        raise ParseError("no 'Year Age Female Male Total' header found")


def _read_rows_csv(fh) -> Iterable[tuple[int, list[str]]]:
    reader = csv.reader(fh)
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty CSV", 1) from None
    need = ["year", "age", *SEXES]
    if header[:5] != need:
        raise ParseError(f"CSV header must start with {','.join(need)}", 1)
    extra = header[5:]
    yield 1, header
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        yield lineno, [c.strip() for c in row]
    del extra


def _read_table(source, fmt: str):
    """Parse one table into ``{(year, age): [values...]}`` plus column names."""
    fh, close = _open_text(source)
    try:
        cells: dict[tuple[int, int], list[float]] = {}
        opens: dict[int, bool] = {}
        reader = _read_rows_hmd(fh) if fmt == "hmd" else _read_rows_csv(fh)
        columns = list(SEXES)
        for lineno, parts in reader:
            if fmt == "csv" and lineno == 1:
                columns = parts[2:]
                continue
            if len(parts) != 2 + len(columns):
                raise ParseError(f"expected {2 + len(columns)} fields, got {len(parts)}", lineno)
            try:
                year = int(parts[0])
            except ValueError:
                raise ParseError(f"cannot parse year {parts[0]!r}", lineno) from None
            age, open_group = _parse_age(parts[1], lineno)
            opens[age] = opens.get(age, False) or open_group
            if (year, age) in cells:
                raise ParseError(f"duplicate row for year {year}, age {age}", lineno)
            cells[(year, age)] = [_parse_value(t, lineno) for t in parts[2:]]
        if not cells:
            raise ParseError("table has no data rows")
        return cells, columns, opens
    finally:
        if close:
            fh.close()


def _grid(cells, years, ages, col):
    out = np.full((len(ages), len(years)), np.nan)
    for j, y in enumerate(years):
        for i, a in enumerate(ages):
            v = cells.get((y, a))
            if v is not None:
                out[i, j] = v[col]
    return out


def load_hmd_table(source, format: str = "hmd", exposures=None, *, min_year: int = FIRST_YEAR,
                   top_age: int = TOP_AGE, name: str = "") -> MortalityDataset:
    """Read an HMD ``Mx_1x1``-style table (or its CSV equivalent).

    Parameters
    ----------
    source : path or text stream
        Rates table. In CSV form it may also carry ``exposure_<sex>`` columns,
        as written by :func:`write_dataset`.
    format : {"hmd", "csv"}
    exposures : path or text stream, optional
        Matching ``Exposures_1x1`` table, same format as ``source``.
    min_year : int
        Earlier years are dropped.
    top_age : int
        Ages at or above this are folded into one open group by summing
        deaths (rate x exposure) and exposures.

    Raises
    ------
    ParseError
        Malformed rows; the message carries the line number.
    DomainError
        No years left after intersecting tables with ``min_year``.
    """
    if format not in ("hmd", "csv"):
        raise ValueError(f"unknown format {format!r}")
    cells, columns, opens = _read_table(source, format)
    rate_cols = {s: columns.index(s) for s in SEXES}
    exp_cells = None
    exp_cols: dict[str, int] = {}
    if exposures is not None:
        exp_cells, ecols, _ = _read_table(exposures, format)
        exp_cols = {s: ecols.index(s) for s in SEXES}
    elif all(f"exposure_{s}" in columns for s in SEXES):
        exp_cells = cells
        exp_cols = {s: columns.index(f"exposure_{s}") for s in SEXES}
    smoothed = "smoothed" in columns and any(
        v[columns.index("smoothed")] == 1 for v in cells.values())

    years = {y for y, _ in cells}
    if exp_cells is not None:
        years &= {y for y, _ in exp_cells}
    years = sorted(y for y in years if y >= min_year)
    if not years:
        raise DomainError("no years in common at or after %d" % min_year)
    ages_all = sorted({a for _, a in cells})
    if ages_all[0] != 0 or ages_all != list(range(ages_all[-1] + 1)):
        raise DomainError("ages must run 0, 1, 2, ... without gaps")
    if ages_all[-1] < top_age:
        raise DomainError(f"table stops at age {ages_all[-1]}, below the {top_age}+ group")
    single = list(range(top_age))
    upper = [a for a in ages_all if a >= top_age]

    rates, exps = {}, {}
    for sex in SEXES:
        m_single = _grid(cells, years, single, rate_cols[sex])
        m_upper = _grid(cells, years, upper, rate_cols[sex])
        if exp_cells is not None:
            e_single = _grid(exp_cells, years, single, exp_cols[sex])
            e_upper = _grid(exp_cells, years, upper, exp_cols[sex])
            if len(upper) == 1:
                # already a single open group: keep the cell as is
                m_top, e_top = m_upper[0], e_upper[0]
            else:
                ok = np.isfinite(m_upper) & np.isfinite(e_upper) & (e_upper > 0)
                deaths = np.where(ok, m_upper * np.where(ok, e_upper, 0.0), 0.0).sum(axis=0)
                e_top = np.where(ok, e_upper, 0.0).sum(axis=0)
                with np.errstate(invalid="ignore", divide="ignore"):
                    m_top = np.where(e_top > 0, deaths / e_top, np.nan)
            exps[sex] = np.vstack([e_single, e_top])
            e_all = exps[sex]
            m_all = np.vstack([m_single, m_top])
            m_all[~(np.isfinite(e_all) & (e_all > 0))] = np.nan
        elif len(upper) == 1 and opens.get(top_age, False):
            m_all = np.vstack([m_single, m_upper])
        else:
            raise DomainError(f"exposures are required to fold ages {top_age}+ into one group")
        rates[sex] = m_all
    return MortalityDataset(np.arange(top_age + 1), np.asarray(years), rates, exps,
                            name=name, smoothed=smoothed)


def _fmt(v: float) -> str:
    return "." if not np.isfinite(v) else repr(float(v))


def write_dataset(ds: MortalityDataset, dest: IO[str] | str | PathLike) -> None:
    """Write ``ds`` as CSV, one row per (year, age), full precision.

    Exposure columns are written when the dataset has exposures.
    """
    fh, close = (open(dest, "w", newline=""), True) if isinstance(dest, (str, PathLike)) else (dest, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        with_exp = bool(ds.exposures)
        header = ["year", "age", *SEXES] + ([f"exposure_{s}" for s in SEXES] if with_exp else [])
        if ds.smoothed:
            header.append("smoothed")
        w.writerow(header)
        top = ds.ages[-1]
        for j, year in enumerate(ds.years):
            for i, age in enumerate(ds.ages):
                label = f"{age}+" if age == top else str(age)
                row = [str(year), label]
                row += [_fmt(ds.rates[s][i, j]) if s in ds.rates else "." for s in SEXES]
                if with_exp:
                    row += [_fmt(ds.exposures[s][i, j]) if s in ds.exposures else "." for s in SEXES]
                if ds.smoothed:
                    row.append("1")
                w.writerow(row)
    finally:
        if close:
            fh.close()


def dataset_to_string(ds: MortalityDataset) -> str:
    buf = io.StringIO()
    write_dataset(ds, buf)
    return buf.getvalue()


# ----------------------------------------------------------------------------
# improvement transform


def improvement_transform(rates: np.ndarray, ages=None, years=None) -> ImprovementSeries:
    """Year-on-year improvement ``z = 2 (m[t-1] - m[t]) / (m[t-1] + m[t])``.

    ``rates`` is ages x years. Cells touching a zero or missing rate are NaN.
    """
    m = np.asarray(rates, dtype=float)
    if m.ndim != 2 or m.shape[1] < 2:
        raise DomainError("need an ages x years matrix with at least 2 years")
    p, n = m.shape
    ages = np.arange(p) if ages is None else np.asarray(ages)
    years = np.arange(n) if years is None else np.asarray(years)
    m = np.where(m > 0, m, np.nan)
    prev, cur = m[:, :-1], m[:, 1:]
    with np.errstate(invalid="ignore"):
        z = 2.0 * (prev - cur) / (prev + cur)
    return ImprovementSeries(ages, years[1:], z, m[:, -1].copy(), m[:, 0].copy())


def clamp_improvements(z):
    """Clamp to ``[-2 + eps, 2 - eps]``; return the clamped values and a mask of clamped cells."""
    z = np.asarray(z, dtype=float)
    bad = np.abs(z) >= 2.0 - CLAMP_EPS
    return np.clip(z, -2.0 + CLAMP_EPS, 2.0 - CLAMP_EPS), bad


def back_transform(z, m_prev):
    """Invert one step: ``m = m_prev * (2 - z) / (2 + z)``.

    Improvements at or beyond +/-2 are clamped just inside the feasible range
    with an :class:`~dpcr.errors.ImprovementClampWarning`.
    """
    zc, bad = clamp_improvements(z)
    if np.any(bad):
        warnings.warn(f"{int(np.sum(bad))} improvement value(s) outside (-2, 2) clamped",
                      ImprovementClampWarning, stacklevel=2)
    return np.asarray(m_prev, dtype=float) * (2.0 - zc) / (2.0 + zc)


def chain_back_transform(z_path, anchor):
    """Rates for successive years from improvements ``z_path`` (ages x h)."""
    z_path = np.asarray(z_path, dtype=float)
    if z_path.ndim == 1:
        z_path = z_path[:, None]
    out = np.empty_like(z_path)
    m = np.asarray(anchor, dtype=float)
    for s in range(z_path.shape[1]):
        m = back_transform(z_path[:, s], m)
        out[:, s] = m
    return out


def reconstruct_rates(series: ImprovementSeries) -> np.ndarray:
    """Rebuild the full rate matrix from ``series.initial`` and its improvements."""
    return np.column_stack([series.initial, chain_back_transform(series.z, series.initial)])


def bundled_countries() -> list[str]:
    """Codes of the snapshots shipped in ``dpcr/datasets``."""
    from importlib import resources

    root = resources.files("dpcr") / "datasets"
    return sorted(p.name.split("_")[0] for p in root.iterdir() if p.name.endswith("_Mx_1x1.txt"))


def load_bundled(country: str = "USA", *, min_year: int = FIRST_YEAR) -> MortalityDataset:
    """Load a bundled rates/exposures snapshot by country code."""
    from importlib import resources

    root = resources.files("dpcr") / "datasets"
    mx = root / f"{country}_Mx_1x1.txt"
    if not mx.is_file():
        raise DomainError(f"no bundled data for {country!r}; available: {bundled_countries()}")
    with mx.open() as fm, (root / f"{country}_Exposures_1x1.txt").open() as fe:
        return load_hmd_table(fm, "hmd", fe, min_year=min_year, name=country)
