import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from pvvolt.errors import DegenerateSample, DomainError, NonPositive
from pvvolt.gamma_mle import (
    GammaParams,
    digamma,
    fit_gamma,
    likelihood_expression,
    log_likelihood,
    minka_start,
    sample_gamma,
    stationarity_residuals,
    trigamma,
)

EULER = 0.57721566490153286


def test_digamma_constants():
    assert digamma(1.0) == pytest.approx(-EULER, abs=1e-12)
    assert digamma(0.5) == pytest.approx(-EULER - 2 * math.log(2), abs=1e-12)


@settings(max_examples=200)
@given(st.floats(1e-3, 1e3))
def test_digamma_recurrence(z):
    assert digamma(z + 1) - digamma(z) == pytest.approx(1 / z, abs=1e-10, rel=1e-12)


@settings(max_examples=200)
@given(st.floats(1e-2, 1e4))
def test_digamma_and_trigamma_match_scipy(z):
    assert digamma(z) == pytest.approx(float(special.digamma(z)), abs=1e-10)
    assert trigamma(z) == pytest.approx(float(special.polygamma(1, z)), rel=1e-10)


@settings(max_examples=100)
@given(st.floats(0.05, 50))
def test_digamma_duplication(z):
    # psi(2z) = (psi(z) + psi(z + 1/2)) / 2 + log 2
    assert digamma(2 * z) == pytest.approx(0.5 * (digamma(z) + digamma(z + 0.5)) + math.log(2), abs=1e-10)


@pytest.mark.parametrize("f", [digamma, trigamma])
@pytest.mark.parametrize("z", [0.0, -1.0, float("inf"), float("nan")])
def test_polygamma_domain(f, z):
    with pytest.raises(DomainError):
        f(z)


def test_likelihood_exponential_case():
    # shape 1, one sample at 1: the expression collapses to log(theta) - theta.
    for theta in (0.3, 1.0, 2.5):
        assert likelihood_expression([1.0], 1.0, theta) == pytest.approx(math.log(theta) - theta, abs=1e-15)
    assert log_likelihood([1.0], GammaParams(1.0, 1 / 2.5)) == pytest.approx(math.log(2.5) - 2.5)


def test_log_likelihood_matches_scipy(rng):
    w = rng.gamma(1.7, 0.4, 500)
    p = GammaParams(1.7, 0.4)
    oracle = math.fsum(stats.gamma.logpdf(w, a=1.7, scale=0.4))
    assert log_likelihood(w, p) == pytest.approx(oracle, rel=1e-12)


def test_fit_recovers_shape_two(rng):
    w = sample_gamma(GammaParams(2.0, 0.5), 10**5, seed=1)
    p = fit_gamma(w)
    assert 1.95 <= p.shape <= 2.05
    assert 0.4875 <= p.scale <= 0.5125


def test_fit_reproduces_mean_and_stationarity(rng):
    w = rng.gamma(1.4, 0.003, 20_000)
    p = fit_gamma(w)
    assert p.mean == pytest.approx(w.mean(), rel=1e-9)
    r_shape, r_scale = stationarity_residuals(w, p)
    assert abs(r_shape) < 1e-8 * w.size
    assert abs(r_scale) < 1e-8 * p.scale


def test_fit_is_local_maximum(rng):
    w = rng.gamma(0.8, 3.0, 5000)
    p = fit_gamma(w)
    best = log_likelihood(w, p)
    for ds in (0.99, 1.01):
        for dt in (0.99, 1.0, 1.01):
            assert log_likelihood(w, GammaParams(p.shape * ds, p.scale * dt)) <= best
    assert log_likelihood(w, GammaParams(p.shape, p.scale * 1.01)) <= best


def test_fit_agrees_with_scipy(rng):
    w = rng.gamma(3.3, 0.02, 4000)
    p = fit_gamma(w)
    a, _, scale = stats.gamma.fit(w, floc=0)
    assert p.shape == pytest.approx(a, rel=1e-4)
    assert p.scale == pytest.approx(scale, rel=1e-4)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 50), st.floats(1e-4, 1e3), st.integers(0, 2**32 - 1))
def test_fit_solves_the_shape_equation(shape, scale, seed):
    w = np.random.default_rng(seed).gamma(shape, scale, 300)
    if np.any(w <= 0) or np.all(w == w[0]):
        return
    p = fit_gamma(w)
    s = math.log(w.mean()) - np.log(w).mean()
    assert math.log(p.shape) - digamma(p.shape) == pytest.approx(s, rel=1e-9, abs=1e-12)


def test_minka_start_is_close():
    for a in (0.3, 1.0, 4.0, 40.0):
        s = math.log(a) - digamma(a)
        assert minka_start(s) == pytest.approx(a, rel=0.02)


def test_degenerate_samples():
    with pytest.raises(DegenerateSample):
        fit_gamma([2.0, 2.0, 2.0])
    with pytest.raises(DegenerateSample):
        fit_gamma([1.0])
    with pytest.raises(NonPositive):
        fit_gamma([1.0, 0.0, 2.0])


def test_params_validation():
    with pytest.raises(DomainError):
        GammaParams(0.0, 1.0)
    with pytest.raises(DomainError):
        GammaParams(1.0, float("inf"))
    p = GammaParams(2.0, 0.5)
    assert (p.mean, p.variance, p.rate) == (1.0, 0.5, 2.0)


def test_sampler_exponential_mean():
    w = sample_gamma(GammaParams(1.0, 0.7), 10**6, seed=3)
    assert w.mean() == pytest.approx(0.7, rel=0.005)


def test_sampler_deterministic():
    a = sample_gamma(GammaParams(1.5, 0.003), 100, seed=9)
    assert np.array_equal(a, sample_gamma(GammaParams(1.5, 0.003), 100, seed=9))
    with pytest.raises(ValueError):
        sample_gamma(GammaParams(1.0, 1.0), 0, seed=0)


def test_sampler_ks_table_scale():
    w = sample_gamma(GammaParams(2.0, 0.003), 10**5, seed=4)
    # Oracle CDF by numerical integration of the density.
    grid = np.linspace(0, w.max(), 200_001)
    pdf = grid * np.exp(-grid / 0.003) / 0.003**2
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    ws = np.sort(w)
    f = np.interp(ws, grid, cdf)
    n = ws.size
    d = max(np.max(np.arange(1, n + 1) / n - f), np.max(f - np.arange(n) / n))
    assert d < 0.01
