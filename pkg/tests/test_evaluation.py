import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpcr.arima import fit_arima
from dpcr.errors import DomainError
from dpcr.evaluation import (
    cpd,
    expanding_window,
    interval_score,
    mafe,
    rmsfe,
    summarize,
    usable_pairs,
    write_report,
    write_windows,
)


def mean_model(series):
    return fit_arima(series, 0, 0, 0)


finite = st.floats(-1.0, 1.0, allow_nan=False)


def test_mafe_examples():
    a = np.arange(6.0)
    assert mafe(a, a) == 0.0
    assert mafe([0.010], [0.014]) == pytest.approx(0.004)
    f = np.zeros((2, 2))
    assert mafe(f, [[0.01, 0.03], [0.0, 0.02]]) == pytest.approx(0.015)
    with pytest.raises(DomainError):
        mafe([], [])
    with pytest.raises(DomainError):
        mafe([1.0, 2.0], [1.0])


def test_rmsfe_examples():
    assert rmsfe([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmsfe([0.0, 0.0], [0.01, 0.03]) == pytest.approx(np.sqrt(0.0005))
    assert rmsfe([0.0, 0.0], [0.01, 0.03], literal=True) == pytest.approx(0.02)


@settings(max_examples=60)
@given(arrays(float, 12, elements=finite), arrays(float, 12, elements=finite))
def test_rmsfe_dominates_mafe(f, a):
    assert rmsfe(f, a) >= mafe(f, a) - 1e-15
    assert rmsfe(f, a, literal=True) == pytest.approx(mafe(f, a), abs=1e-15)


def test_cpd_examples():
    actual = np.arange(10.0)
    lo = np.full(10, 0.5)
    up = np.full(10, 7.5)
    assert cpd(lo, up, actual) == pytest.approx(0.1)
    assert cpd(np.full(10, -1.0), np.full(10, 100.0), actual) == pytest.approx(0.2)
    assert cpd(np.full(10, 1.0), np.full(10, 8.0), actual, 0.2) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        cpd(lo, up, actual, alpha=0.0)


@settings(max_examples=40)
@given(arrays(float, 8, elements=finite), st.floats(0.01, 0.99))
def test_cpd_clairvoyant_interval_is_alpha(a, alpha):
    assert cpd(a - 1.0, a + 1.0, a, alpha) == alpha


def test_interval_score_examples():
    assert interval_score([0.0], [1.0], [0.5]) == pytest.approx(1.0)
    assert interval_score([0.0], [1.0], [1.1], 0.2) == pytest.approx(2.0)
    assert interval_score([0.0], [1.0], [-0.1], 0.2) == pytest.approx(2.0)
    assert interval_score([0.1], [0.9], [0.5]) < interval_score([0.0], [1.0], [0.5])


def test_interval_score_quantile_interval_is_best():
    rng = np.random.default_rng(12)
    paths = rng.standard_normal(20000)
    actual = rng.standard_normal(20000)
    alpha = 0.2
    grid = np.linspace(0.02, 0.2, 10)
    scores = {}
    for lo_p in grid:
        for hi_p in 1 - grid:
            lo, hi = np.quantile(paths, [lo_p, hi_p])
            scores[(lo_p, hi_p)] = interval_score(np.full_like(actual, lo), np.full_like(actual, hi),
                                                  actual, alpha)
    best = min(scores.values())
    lo, hi = np.quantile(paths, [alpha / 2, 1 - alpha / 2])
    ours = interval_score(np.full_like(actual, lo), np.full_like(actual, hi), actual, alpha)
    assert ours <= 1.01 * best


def test_summarize():
    s = summarize([3.0])
    assert set(s.values()) == {3.0}
    s = summarize([1, 2, 3, 4])
    assert s["median"] == 2.5 and s["mean"] == 2.5
    assert s["q1"] == 1.75 and s["q3"] == 3.25
    with pytest.raises(DomainError):
        summarize([])


@settings(max_examples=40)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=20))
def test_summary_order_and_linearity(v):
    s = summarize(v)
    assert s["min"] <= s["q1"] <= s["median"] <= s["q3"] <= s["max"]
    s100 = summarize(np.asarray(v) * 100)
    for k in s:
        assert s100[k] == pytest.approx(100 * s[k], rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("holdout,h,pairs", [(30, 1, 30), (30, 5, 26), (1, 1, 1), (3, 4, 0)])
def test_usable_pairs(holdout, h, pairs):
    assert usable_pairs(holdout, h) == pairs


def test_single_window(us):
    r = expanding_window(us, "lc", "static", holdout=1, arima=mean_model, B=100)
    assert len(r.windows) == 1
    w = r.windows[0]
    assert w.origin_year == 2014 and w.target_year == 2015
    np.testing.assert_array_equal(w.actual, us.rate("female")[:, -1])


@pytest.mark.parametrize("h", [1, 2])
def test_window_bookkeeping(us, h):
    r = expanding_window(us, "lc", "dynamic", holdout=4, h=h, arima=mean_model, B=100)
    assert len(r.windows) + len(r.failures) == 4 - h + 1
    assert [w.target_year - w.origin_year for w in r.windows] == [h] * len(r.windows)
    c = r.criteria
    assert all(v >= 0 for v in c.values())
    assert c["cpd"] <= 0.8
    assert c["rmsfe"] >= c["mafe"]


def test_deterministic_given_seed(us):
    a = expanding_window(us, "lc", "static", holdout=2, arima=mean_model, B=100, seed=3)
    b = expanding_window(us, "lc", "static", holdout=2, arima=mean_model, B=100, seed=3)
    assert a.criteria == b.criteria


def test_needs_enough_years(us):
    short = us.select_years(last=1990)
    with pytest.raises(DomainError):
        expanding_window(short, holdout=30)


def test_failures_are_recorded(us):
    def broken(series):
        raise np.linalg.LinAlgError("boom")

    r = expanding_window(us, "lc", "static", holdout=2, arima=broken, intervals=False)
    assert not r.windows and len(r.failures) == 2
    assert np.isnan(r.criteria["mafe"])


def test_report_layout(us):
    reps = [expanding_window(us, "lc", m, holdout=2, arima=mean_model, B=100) for m in ("static", "dynamic")]
    buf = io.StringIO()
    write_report(reps, buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "criterion,statistic,lc_female_DPCA,lc_female_PCA"
    assert len(rows) == 1 + 4 * 6
    mafe_mean = float(rows[4].split(",")[3])
    assert rows[4].startswith("mafe,mean")
    assert mafe_mean == pytest.approx(100 * reps[0].criteria["mafe"])
    buf = io.StringIO()
    write_windows(reps, buf)
    assert len(buf.getvalue().splitlines()) == 1 + 4
