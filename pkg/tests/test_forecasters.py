import io
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ar1_panel
from dpcr.arima import ArimaModel, fit_arima
from dpcr.data import improvement_transform
from dpcr.decomposition import decompose, quadrature_weights
from dpcr.errors import DomainError
from dpcr.forecasters import (
    _lc_normalise,
    fit_fts,
    fit_fts_curves,
    fit_lc,
    point_forecast,
    write_forecast,
)


def zero_model(series):
    n = len(series)
    return ArimaModel(0, 0, 0, np.zeros(0), np.zeros(0), 0.0, False, 1.0, 0.0, 0.0, n, n)


def mean_model(series):
    return fit_arima(series, 0, 0, 0)


def ar1_nomean(series):
    return fit_arima(series, 1, 0, 0, include_mean=False)


def rank1_panel(rng, p=12, n=40):
    b = rng.uniform(0.5, 1.5, p)
    b /= b.sum()
    kappa = rng.standard_normal(n)
    kappa -= kappa.mean()
    a = rng.normal(0.02, 0.01, p)
    return a, b, kappa, a[:, None] + np.outer(b, kappa)


def test_lc_identifiability_on_data(us):
    z = improvement_transform(us.rate("female"), us.ages, us.years)
    fit = fit_lc(z, True, "static", arima=mean_model)
    assert abs(fit.basis.scores[:, 0].sum()) <= 1e-10
    assert abs(fit.basis.components[:, 0].sum() - 1) <= 1e-10


@pytest.mark.parametrize("mode", ["static", "dynamic"])
def test_lc_rank1_recovery(rng, mode):
    a, b, kappa, Z = rank1_panel(rng)
    fit = fit_lc(Z, True, mode, arima=mean_model, bandwidth=2.0)
    np.testing.assert_allclose(fit.basis.mean, a, atol=1e-8)
    np.testing.assert_allclose(fit.basis.components[:, 0], b, atol=1e-8)
    np.testing.assert_allclose(fit.basis.scores[:, 0], kappa, atol=1e-8)


def test_lc_zero_profile_sum_rejected():
    rng = np.random.default_rng(0)
    b = np.array([1.0, -1.0, 1.0, -1.0])
    Z = np.outer(b, rng.standard_normal(20))
    with pytest.raises(DomainError, match="FTS"):
        fit_lc(Z, True, "static", arima=mean_model)


def test_lc_constant_panel():
    Z = np.full((6, 20), 0.015)
    fit = fit_lc(Z, True, "static")
    np.testing.assert_array_equal(fit.basis.scores, 0.0)
    fc = point_forecast(fit, 3, anchor=np.full(6, 0.01))
    np.testing.assert_allclose(fc.improvements, 0.015)


def test_lc_residuals_orthogonal(rng):
    Z = rng.standard_normal((10, 30))
    dec = decompose(Z, "static", inner="dot", K=1)
    assert np.max(np.abs(dec.components[:, 0] @ dec.residuals)) <= 1e-10
    fit = fit_lc(Z, True, "static", arima=mean_model)
    # rescaling keeps the residuals in the complement of b
    assert np.max(np.abs(fit.basis.components[:, 0] @ fit.basis.residuals)) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.sampled_from([1.0, -1.0]), st.booleans())
def test_lc_rescaling_invariance(scale, sign, centering):
    rng = np.random.default_rng(5)
    Z = rng.normal(0.01, 0.02, (8, 25)) + np.outer(rng.uniform(0.5, 1, 8), rng.standard_normal(25))
    dec = decompose(Z, "static", inner="dot", center=centering, K=1)
    c = sign * scale
    flipped = replace(dec, components=dec.components * c, scores=dec.scores / c)
    ref = _lc_normalise(dec, Z, centering)
    alt = _lc_normalise(flipped, Z, centering)
    for attr in ("mean", "components", "scores", "residuals"):
        np.testing.assert_allclose(getattr(alt, attr), getattr(ref, attr), atol=1e-12)


def test_lc_without_centering(rng):
    _, _, _, Z = rank1_panel(rng)
    fit = fit_lc(Z, False, "static", arima=mean_model)
    np.testing.assert_array_equal(fit.basis.mean, 0.0)
    assert abs(fit.basis.components[:, 0].sum() - 1) <= 1e-10
    assert abs(fit.basis.scores[:, 0].sum()) > 1e-6
    assert not fit.centering


def test_lc_needs_ten_years():
    with pytest.raises(DomainError):
        fit_lc(np.ones((4, 9)))


def test_mode_coincidence_on_white_noise():
    rng = np.random.default_rng(11)
    p, n = 8, 500
    a = np.linspace(0.01, 0.03, p)
    Z = a[:, None] + 0.01 * rng.standard_normal((p, n))
    fs = point_forecast(fit_lc(Z, True, "static", arima=mean_model), 1, anchor=np.ones(p))
    fd = point_forecast(fit_lc(Z, True, "dynamic", arima=mean_model), 1, anchor=np.ones(p))
    scale = np.mean(np.abs(fs.improvements))
    assert np.mean(np.abs(fs.improvements - fd.improvements)) <= 0.1 * scale


def test_zero_score_forecast():
    rng = np.random.default_rng(2)
    Z = rng.normal(0.02, 0.01, (5, 30))
    fit = fit_fts_curves(Z, "static", arima=zero_model, anchor=np.full(5, 0.01))
    fc = point_forecast(fit, 2)
    a = fit.basis.mean
    np.testing.assert_allclose(fc.improvements[:, 0], a, atol=1e-15)
    r = (2 - a) / (2 + a)
    np.testing.assert_allclose(fc.rates[:, 0], 0.01 * r, rtol=1e-14)
    # two one-step inverses compose into a product of ratio factors
    np.testing.assert_allclose(fc.rates[:, 1], 0.01 * r * r, rtol=1e-14)


def test_ar1_pipeline_oracle():
    rng = np.random.default_rng(8)
    p, n, phi = 10, 200, 0.7
    b = rng.uniform(0.5, 1.5, p)
    b /= b.sum()
    kappa = np.zeros(n)
    for t in range(1, n):
        kappa[t] = phi * kappa[t - 1] + rng.standard_normal()
    Z = np.outer(b, kappa)
    anchor = np.full(p, 0.02)
    fit = fit_lc(Z, False, "static", arima=ar1_nomean, anchor=anchor)
    phi_hat = fit.score_models[0].ar[0]
    h = 4
    fc = point_forecast(fit, h)
    k_path = fit.basis.scores[-1, 0] * phi_hat ** np.arange(1, h + 1)
    z = np.outer(b, k_path)
    rates = anchor[:, None] * np.cumprod((2 - z) / (2 + z), axis=1)
    np.testing.assert_allclose(fc.improvements, z, atol=1e-6)
    np.testing.assert_allclose(fc.rates, rates, rtol=1e-6)
    np.testing.assert_allclose(fc.scores[:, 0], k_path, atol=1e-10)


def test_fts_two_factors_selected():
    hits = 0
    x = np.linspace(0, 1, 20)
    b1 = np.sqrt(2) * np.sin(np.pi * x)
    b2 = np.sqrt(2) * np.sin(2 * np.pi * x)
    for s in range(10):
        rng = np.random.default_rng(s)
        k1 = np.zeros(200)
        k2 = np.zeros(200)
        for t in range(1, 200):
            k1[t] = 0.6 * k1[t - 1] + 2.0 * rng.standard_normal()
            k2[t] = 0.3 * k2[t - 1] + 1.2 * rng.standard_normal()
        Z = np.outer(b1, k1) + np.outer(b2, k2) + 0.1 * rng.standard_normal((20, 200))
        fit = fit_fts_curves(Z, "static", grid=x, arima=mean_model)
        hits += fit.K == 2
    assert hits >= 9


def test_fts_noiseless_single_factor(rng):
    x = np.linspace(0, 1, 15)
    Z = np.outer(1 + x, rng.standard_normal(40))
    fit = fit_fts_curves(Z, "static", grid=x, arima=mean_model)
    assert fit.K == 1
    assert np.max(np.abs(fit.basis.residuals)) <= 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_fts_residuals_orthogonal_to_components(seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 1, 25)
    Z = ar1_panel(rng, 25, 40, 0.5, noise=0.3)
    fit = fit_fts_curves(Z, "static", grid=x, arima=mean_model)
    q = quadrature_weights(x)
    inner = fit.basis.components.T @ (q[:, None] * fit.basis.residuals)
    assert np.max(np.abs(inner)) <= 1e-8
    assert 1 <= fit.K <= 10


def test_fts_on_us_smoothed(us, us_smoothed):
    logm = np.log(us_smoothed.rate("female"))
    old = us.ages >= 65
    assert np.all(np.diff(logm[old], axis=0) >= -1e-12)
    sub = us.select_years(last=1990)
    fit = fit_fts(sub, "static", smoothed=us_smoothed.select_years(last=1990), arima=mean_model)
    assert fit.smoothing == "applied"
    # the rate anchor is the last raw curve, not the smoothed one
    np.testing.assert_array_equal(fit.anchor, sub.rate("female")[:, -1])
    share = fit.basis.eigenvalues.sum() / fit.basis.all_eigenvalues.clip(0).sum()
    assert share >= 0.85 or fit.K == 10


def test_forecast_horizon_and_csv(rng):
    _, _, _, Z = rank1_panel(rng)
    fit = fit_lc(Z, True, "static", arima=mean_model, anchor=np.full(12, 0.01), years=np.arange(40) + 1980)
    with pytest.raises(DomainError):
        point_forecast(fit, 0)
    fc = point_forecast(fit, 2)
    np.testing.assert_array_equal(fc.years, [2020, 2021])
    buf = io.StringIO()
    write_forecast(fc, np.arange(12), buf, method="LC", mode="static", sex="female")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "method,mode,sex,year,age,improvement,rate,clamped"
    assert len(lines) == 1 + 2 * 12
    assert lines[1].startswith("LC,static,female,2020,0,")


def test_forecast_flags_clamped_values():
    Z = np.full((3, 12), 1.99) + np.linspace(0, 0.1, 12)[None, :]
    fit = fit_fts_curves(Z, "static", arima=mean_model, anchor=np.ones(3))
    with pytest.warns(Warning, match="clamped"):
        fc = point_forecast(fit, 1, anchor=np.ones(3))
    assert fc.clamped.any()
    assert np.all(fc.rates > 0)
