"""Command-line interface: ``dpcr <subcommand> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 input error.
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, parse_config
from .data import MortalityDataset, improvement_transform, load_bundled, load_hmd_table, write_dataset
from .decomposition import write_components, write_scores
from .errors import DomainError, DpcrError, ImprovementClampWarning, ParseError
from .evaluation import expanding_window, write_report, write_windows
from .forecasters import fit_fts, fit_fts_curves, fit_lc, point_forecast, write_forecast
from .intervals import interval_forecast, write_interval
from .longrun import BARTLETT, FLAT_TOP, empirical_autocov, longrun_cov, plugin_bandwidth, write_surface
from .smoothing import smooth_dataset


def fmt(x) -> str:
    """Six significant digits."""
    return f"{float(x):.6g}"


def thread_cap() -> int:
    raw = os.environ.get("DPCR_THREADS", "")
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise ParseError(f"DPCR_THREADS must be an integer, got {raw!r}") from None
    return max(1, cap)


# ----------------------------------------------------------------------------
# config plumbing


def _config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = cfg.merged(parse_config(Path(args.config).read_text()))
    flags = {k: getattr(args, k, None) for k in
             ("data", "sexes", "method", "centering", "mode", "bandwidth", "h1", "threshold",
              "lam", "alpha", "B", "seed", "holdout", "horizon", "out")}
    if flags.get("data") == []:
        flags["data"] = None
    return cfg.merged(flags)


def _load(source: str) -> MortalityDataset:
    if source.startswith("bundled:"):
        return load_bundled(source.split(":", 1)[1])
    path = Path(source)
    if not path.is_file():
        raise DomainError(f"no such dataset file: {source}")
    return load_hmd_table(path, "csv", name=path.stem)


def _lam(cfg):
    return None if cfg.lam == "auto" else float(cfg.lam)


def _bandwidth(cfg):
    return "auto" if cfg.bandwidth == "auto" else float(cfg.bandwidth)


def _h1(cfg):
    return None if cfg.h1 == "auto" else float(cfg.h1)


def _outdir(cfg) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _fit(cfg, ds, sex):
    if cfg.method == "lc":
        z = improvement_transform(ds.rate(sex), ds.ages, ds.years)
        return fit_lc(z, cfg.centering, cfg.mode, bandwidth=_bandwidth(cfg), h1=_h1(cfg))
    if cfg.method == "fts":
        return fit_fts(ds, cfg.mode, sex, lam=_lam(cfg), bandwidth=_bandwidth(cfg), h1=_h1(cfg),
                       threshold=cfg.threshold)
    if cfg.method == "fts_raw":
        z = improvement_transform(ds.rate(sex), ds.ages, ds.years)
        return fit_fts_curves(z, cfg.mode, bandwidth=_bandwidth(cfg), h1=_h1(cfg),
                              threshold=cfg.threshold)
    raise DomainError(f"unknown method {cfg.method!r}")


def _tag(cfg, ds, sex):
    return f"{ds.name or 'data'}_{sex}_{cfg.method}_{cfg.mode}"


# ----------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    paths = args.paths
    if len(paths) not in (1, 2):
        raise DomainError("ingest takes a rates table and optionally an exposures table")
    ds = load_hmd_table(paths[0], args.format, paths[1] if len(paths) > 1 else None,
                        min_year=args.min_year, name=Path(paths[0]).stem)
    out = Path(args.out) if args.out else Path(f"{Path(paths[0]).stem}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out)
    print(f"wrote {out}: {ds.ages.size} ages x {ds.years.size} years "
          f"({ds.years[0]}-{ds.years[-1]})")
    return 0


def cmd_smooth(args) -> int:
    cfg = _config(args)
    for src in cfg.data:
        ds = _load(src)
        sm, curves = smooth_dataset(ds, lam=_lam(cfg), sexes=cfg.sexes, workers=thread_cap())
        out = _outdir(cfg) / f"{ds.name or 'data'}_smoothed.csv"
        write_dataset(sm, out)
        for sex, c in curves.items():
            print(f"{ds.name} {sex}: median lambda {fmt(np.median(c.lam))}")
        print(f"wrote {out}")
    return 0


def cmd_cov(args) -> int:
    cfg = _config(args)
    for src in cfg.data:
        ds = _load(src)
        if args.smooth:
            ds = smooth_dataset(ds, lam=_lam(cfg), sexes=cfg.sexes)[0]
        for sex in cfg.sexes:
            z = improvement_transform(ds.rate(sex), ds.ages, ds.years)
            grid = ds.ages.astype(float)
            if args.kind == "variance":
                surface = empirical_autocov(z.z, 0, grid=grid)
                msg = "variance surface"
            else:
                h = plugin_bandwidth(z.z, FLAT_TOP, BARTLETT, _h1(cfg)) if cfg.bandwidth == "auto" \
                    else float(cfg.bandwidth)
                surface = longrun_cov(z.z, h, BARTLETT, grid=grid)
                msg = f"bandwidth {fmt(h)}"
            smooth_tag = "_smoothed" if args.smooth else ""
            out = _outdir(cfg) / f"{ds.name or 'data'}_{sex}_{args.kind}{smooth_tag}.csv"
            write_surface(surface, out)
            print(f"{ds.name} {sex}: {msg}" + (" (truncated at lag n-1)" if surface.truncated else ""))
    return 0


def cmd_fit(args) -> int:
    cfg = _config(args)
    for src in cfg.data:
        ds = _load(src)
        for sex in cfg.sexes:
            fit = _fit(cfg, ds, sex)
            dec = fit.basis
            tag = _tag(cfg, ds, sex)
            write_components(dec, _outdir(cfg) / f"{tag}_components.csv")
            write_scores(dec, fit.years, _outdir(cfg) / f"{tag}_scores.csv")
            orders = " ".join(f"ARIMA{m.order}" for m in fit.score_models)
            bw = f" bandwidth {fmt(dec.bandwidth)}" if dec.bandwidth is not None else ""
            print(f"{tag}: K={dec.K}{bw} eigenvalues "
                  f"{' '.join(fmt(v) for v in dec.eigenvalues)} scores {orders}")
    return 0


def cmd_forecast(args) -> int:
    cfg = _config(args)
    for src in cfg.data:
        ds = _load(src)
        for sex in cfg.sexes:
            fit = _fit(cfg, ds, sex)
            with warnings.catch_warnings(record=True):
                warnings.simplefilter("always", ImprovementClampWarning)
                fc = point_forecast(fit, cfg.horizon)
            out = _outdir(cfg) / f"{_tag(cfg, ds, sex)}_forecast.csv"
            write_forecast(fc, ds.ages, out, method=cfg.method, mode=cfg.mode, sex=sex)
            clamp = f", {int(fc.clamped.sum())} clamped" if fc.clamped.any() else ""
            print(f"wrote {out} (years {fc.years[0]}-{fc.years[-1]}{clamp})")
    return 0


def cmd_interval(args) -> int:
    cfg = _config(args)
    for src in cfg.data:
        ds = _load(src)
        for sex in cfg.sexes:
            fit = _fit(cfg, ds, sex)
            with warnings.catch_warnings(record=True):
                warnings.simplefilter("always", ImprovementClampWarning)
                pi = interval_forecast(fit, cfg.horizon, cfg.B, cfg.seed, cfg.alpha)
            out = _outdir(cfg) / f"{_tag(cfg, ds, sex)}_interval_h{cfg.horizon}.csv"
            write_interval(pi, ds.ages, out, method=cfg.method, mode=cfg.mode, sex=sex)
            print(f"wrote {out} (level {fmt(pi.level)}, B={pi.samples_B}"
                  + (f", {pi.clamped} clamped" if pi.clamped else "") + ")")
    return 0


def _evaluate(cfg, methods, modes):
    """Run every (dataset, sex, method, mode) series; results ordered by those keys."""
    datasets = [_load(src) for src in cfg.data]
    smoothed = {}
    if any(m[0] == "fts" for m in methods):
        for i, ds in enumerate(datasets):
            smoothed[i] = smooth_dataset(ds, lam=_lam(cfg), sexes=cfg.sexes)[0]
    jobs = [(i, sex, meth, cent, mode) for i in range(len(datasets)) for sex in cfg.sexes
            for meth, cent in methods for mode in modes]

    def run(job):
        i, sex, meth, cent, mode = job
        rep = expanding_window(datasets[i], meth, mode, cfg.holdout, cfg.horizon, sex=sex,
                               centering=cent, smoothed=smoothed.get(i), alpha=cfg.alpha, B=cfg.B,
                               seed=cfg.seed, bandwidth=_bandwidth(cfg), threshold=cfg.threshold)
        if meth == "lc" and not cent:
            rep.method = "lc_nocenter"
        return rep

    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(run, jobs))
    return [run(j) for j in jobs]


def _print_reports(reports):
    for r in reports:
        c = r.criteria
        fail = f" failures={len(r.failures)}" if r.failures else ""
        print(f"{r.name} {r.sex} {r.method} {r.mode}: windows={len(r.windows)}{fail} "
              + " ".join(f"{k}={fmt(100 * v)}" for k, v in c.items()))


def _write_reports(cfg, reports, stem):
    out = _outdir(cfg)
    write_report(reports, out / f"{stem}_report.csv")
    write_windows(reports, out / f"{stem}_windows.csv")
    print(f"wrote {out / f'{stem}_report.csv'} and {out / f'{stem}_windows.csv'}")


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    reports = _evaluate(cfg, [(cfg.method, cfg.centering)], ["dynamic", "static"])
    _print_reports(reports)
    _write_reports(cfg, reports, f"evaluate_{cfg.method}")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    methods = []
    for m in args.methods.split(","):
        m = m.strip()
        methods.append(("lc", False) if m == "lc_nocenter" else (m, True))
    reports = _evaluate(cfg, methods, ["dynamic", "static"])
    _print_reports(reports)
    print("median over series (x100), dynamic vs static:")
    keys = sorted({(r.method, r.sex) for r in reports})
    for meth, sex in keys:
        for crit in ("mafe", "rmsfe", "interval_score", "cpd"):
            med = {}
            for mode in ("dynamic", "static"):
                vals = [r.criteria[crit] for r in reports if (r.method, r.sex, r.mode) == (meth, sex, mode)]
                med[mode] = float(np.nanmedian(vals)) if vals else float("nan")
            print(f"  {meth} {sex} {crit}: dynamic {fmt(100 * med['dynamic'])} "
                  f"static {fmt(100 * med['static'])}")
    _write_reports(cfg, reports, "compare")
    return 0


# ----------------------------------------------------------------------------
# parser


def _add_common(p, *, data=True):
    p.add_argument("--config", help="key=value config file; flags override its values")
    if data:
        p.add_argument("data", nargs="*", default=None,
                       help="dataset CSVs or bundled:<CODE> (default bundled:USA)")
    p.add_argument("--sex", dest="sexes", help="comma-separated series (default female)")
    p.add_argument("--out", help="output directory (default dpcr_out)")


def _add_model(p):
    p.add_argument("--method", choices=["lc", "fts", "fts_raw"], help="model (default lc)")
    p.add_argument("--centering", dest="centering", action="store_const", const=True,
                   help="LC: remove the mean and centre kappa (default)")
    p.add_argument("--no-centering", dest="centering", action="store_const", const=False,
                   help="LC: skip mean removal and kappa centring")
    p.add_argument("--mode", choices=["static", "dynamic"], help="decomposition (default dynamic)")
    p.add_argument("--bandwidth", help="'auto' (plug-in) or a positive number")
    p.add_argument("--h1", help="plug-in pilot bandwidth, 'auto' = n**(1/5)")
    p.add_argument("--threshold", help="explained-share threshold for K (default 0.85)")
    p.add_argument("--lambda", dest="lam", help="smoothing penalty or 'auto' (default)")


def _add_interval(p):
    p.add_argument("--alpha", help="interval miss rate (default 0.2)")
    p.add_argument("-B", "--bootstrap", dest="B", help="bootstrap replications (default 1000)")
    p.add_argument("--seed", help="random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpcr", description="Mortality forecasting by static and dynamic principal "
        "component regression on improvement curves. Environment: DPCR_THREADS caps worker threads.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse HMD or CSV tables into a dataset CSV")
    p.add_argument("paths", nargs="+", help="rates table, then optional exposures table")
    p.add_argument("--format", choices=["hmd", "csv"], default="hmd")
    p.add_argument("--min-year", type=int, default=1950)
    p.add_argument("--out", help="output CSV path (default <rates stem>.csv)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("smooth", help="smooth log rates and write a dataset CSV with smoothed=1")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", help="smoothing penalty or 'auto' (default)")
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("cov", help="export a variance or long-run covariance surface")
    _add_common(p)
    p.add_argument("--kind", choices=["longrun", "variance"], default="longrun")
    p.add_argument("--bandwidth", help="'auto' (plug-in) or a positive number")
    p.add_argument("--h1", help="plug-in pilot bandwidth, 'auto' = n**(1/5)")
    p.add_argument("--smooth", action="store_true", help="use smoothed rates")
    p.add_argument("--lambda", dest="lam", help="smoothing penalty or 'auto' (default)")
    p.set_defaults(func=cmd_cov)

    for name, func, text in (("fit", cmd_fit, "fit a model; write components and scores"),
                             ("forecast", cmd_forecast, "point forecasts of rates"),
                             ("interval", cmd_interval, "bootstrap prediction intervals")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_model(p)
        if name != "fit":
            p.add_argument("--horizon", help="forecast horizon (default 1)")
        if name == "interval":
            _add_interval(p)
        p.set_defaults(func=func)

    for name, func, text in (("evaluate", cmd_evaluate, "expanding-window evaluation, dynamic vs static"),
                             ("compare", cmd_compare, "evaluate several methods side by side")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_model(p)
        _add_interval(p)
        p.add_argument("--holdout", help="number of evaluation windows (default 30)")
        p.add_argument("--horizon", help="forecast horizon (default 1)")
        if name == "compare":
            p.add_argument("--methods", default="lc,lc_nocenter,fts",
                           help="comma-separated methods (lc, lc_nocenter, fts, fts_raw)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, DomainError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"dpcr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DpcrError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"dpcr {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
