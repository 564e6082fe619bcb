import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from p2pscaling.synth import gen_fgn, gen_periodic, gen_poisson
from p2pscaling.timeseries import TimeSeries
from p2pscaling.wavelets import (LogscaleDiagram, SeriesTooShortError, WaveletScalingEstimator,
                                 daubechies_filter, default_fit_range, detect_features,
                                 dwt_details, estimate_scaling, log_bias, log_variance,
                                 logscale_diagram, required_length, wavelet_filter)


def test_db2_closed_form():
    s3 = math.sqrt(3)
    expected = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * math.sqrt(2))
    assert np.allclose(daubechies_filter(2), expected, atol=1e-12)


@pytest.mark.parametrize("n", range(1, 11))
def test_filter_orthonormality(n):
    h = np.asarray(daubechies_filter(n))
    g = wavelet_filter(n)
    assert len(h) == 2 * n
    assert h.sum() == pytest.approx(math.sqrt(2), abs=1e-10)
    for shift in range(0, len(h), 2):
        inner = np.dot(h[shift:], h[:len(h) - shift])
        assert inner == pytest.approx(1.0 if shift == 0 else 0.0, abs=1e-9)
        assert np.dot(h[shift:], g[:len(g) - shift]) == pytest.approx(0.0, abs=1e-9)
    # vanishing moments of the wavelet filter
    k = np.arange(len(g), dtype=float)
    for m in range(n):
        assert np.dot(k ** m, g) == pytest.approx(0.0, abs=1e-6 * max(1.0, len(g) ** m))


def test_constant_series_has_zero_details():
    d = dwt_details(np.full(4096, 7.0), 3)
    for coeffs in d.details:
        assert np.abs(coeffs).max() <= 1e-10
    ld = logscale_diagram(dwt_details(np.full(4096, 7), 3))
    assert np.isneginf(ld.y).all() or (ld.y < -30).all()


@pytest.mark.parametrize("n", [2, 3, 4])
def test_linear_ramp_has_zero_details(n):
    d = dwt_details(0.5 + 3.0 * np.arange(2000), n)
    for coeffs in d.details:
        assert np.abs(coeffs).max() <= 1e-7 * 3.0 * 2000


def test_impulse_cone_and_energy():
    n, p = 1024, 300
    x = np.zeros(n)
    x[p] = 1.0
    d = dwt_details(x, 3, mode="periodic")
    L = 6
    for j, coeffs in zip(d.octaves, d.details):
        step = 2 ** j
        reach = (L - 1) * (step - 1)
        k = np.arange(len(coeffs))
        inside = (p - step * k) % n <= reach
        assert np.all(coeffs[~inside] == 0)
    detail_energy = sum(float(c @ c) for c in d.details)
    assert detail_energy == pytest.approx(1.0 - float(d.approximation @ d.approximation), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 14), st.integers(1, 6), st.integers(0, 2**31))
def test_energy_conservation_power_of_two(log_n, n_vm, seed):
    x = np.random.default_rng(seed).standard_normal(2 ** log_n) * 10
    d = dwt_details(x, n_vm, mode="periodic")
    total = sum(math.fsum(c * c) for c in d.details) + math.fsum(d.approximation ** 2)
    assert abs(total - math.fsum(x * x)) <= 1e-9 * math.fsum(x * x)


def test_too_short_names_length():
    need = required_length(3)
    with pytest.raises(SeriesTooShortError, match=str(need)):
        dwt_details(np.ones(need - 1), 3)
    assert len(dwt_details(np.ones(need), 3)) >= 3


def test_valid_mode_coefficient_counts():
    n = 10000
    d = dwt_details(np.random.default_rng(0).standard_normal(n), 3)
    for j, c in zip(d.octaves, d.details):
        assert len(c) >= 4
        assert abs(len(c) - n / 2 ** j) <= 6


def test_octave_scale_labels():
    s = TimeSeries(0.02, 0.0, gen_poisson(2 ** 14, 5, 0))
    ld = logscale_diagram(dwt_details(s))
    assert ld.scale_seconds[ld.index(8)] == pytest.approx(5.12)
    assert ld.rows()[7]["scale_seconds"] == pytest.approx(5.12)


def test_bias_and_variance_against_monte_carlo():
    rng = np.random.default_rng(1)
    for n in (4, 16, 100):
        samples = np.log2((rng.standard_normal((200_000, n)) ** 2).mean(axis=1))
        assert samples.mean() == pytest.approx(float(log_bias(n)), abs=0.01)
        assert samples.var() == pytest.approx(float(log_variance(n)), rel=0.03)


def test_amplitude_scaling_shifts_y():
    x = np.random.default_rng(2).standard_normal(2 ** 14)
    a = logscale_diagram(dwt_details(x))
    for c in (0.5, 3.0, 1000.0):
        b = logscale_diagram(dwt_details(c * x))
        assert np.allclose(b.y - a.y, 2 * math.log2(c), atol=1e-9)


def test_white_noise_is_flat():
    alphas = []
    for seed in range(20):
        x = np.random.default_rng(seed).standard_normal(2 ** 16)
        ld = logscale_diagram(dwt_details(x))
        alphas.append(estimate_scaling(ld).alpha)
        # every octave within CI of the octave-1 level
        assert np.all(np.abs(ld.y - ld.y[0]) <= 2 * (ld.ci_half + ld.ci_half[0]))
    assert abs(np.mean(alphas)) <= 0.05


def test_linear_diagram_regression_identity():
    j = np.arange(1, 11)
    ld = LogscaleDiagram(0.02, j, 2 + 0.7 * j, np.full(10, 100), np.full(10, 0.1),
                         np.full(10, 0.01))
    est = estimate_scaling(ld, 1, 10)
    assert est.alpha == pytest.approx(0.7, abs=1e-12)
    assert est.intercept == pytest.approx(2.0, abs=1e-12)
    assert est.fit_quality == pytest.approx(1.0)
    assert est.hurst == (est.alpha + 1) / 2


def test_fit_range_errors():
    j = np.arange(1, 8)
    y = np.where(j == 4, -np.inf, 0.1 * j)
    ld = LogscaleDiagram(0.02, j, y, np.full(7, 100), np.full(7, 0.1), np.full(7, 0.01))
    with pytest.raises(ValueError, match="zero energy"):
        estimate_scaling(ld, 3, 6)
    with pytest.raises(ValueError):
        estimate_scaling(ld, 6, 5)
    with pytest.raises(ValueError):
        estimate_scaling(ld, 5, 6)
    with pytest.raises(ValueError):
        estimate_scaling(ld, 0, 6)
    assert estimate_scaling(ld, 5, 7).alpha == pytest.approx(0.1)


def test_fgn_hurst_fixed_range():
    est = estimate_scaling(logscale_diagram(dwt_details(gen_fgn(2 ** 16, 0.8, 11))), 3, 10)
    assert 0.75 <= est.hurst <= 0.85
    assert est.alpha == pytest.approx(0.6, abs=0.1)


def test_fgn_white_case():
    alphas = [estimate_scaling(logscale_diagram(dwt_details(gen_fgn(2 ** 16, 0.5, s))), 3, 10).alpha
              for s in range(10)]
    assert abs(np.mean(alphas)) <= 0.05


def test_default_fit_range_bounds():
    ld = logscale_diagram(dwt_details(gen_fgn(2 ** 16, 0.7, 0)))
    j1, j2 = default_fit_range(ld)
    assert 4 <= j1 < j2
    assert ld.n_coeffs[ld.index(j2)] >= 8
    assert j2 == max(ld.octaves[ld.n_coeffs >= 8])


def test_scale_covariance_under_dilation():
    x = gen_fgn(2 ** 15, 0.8, 1)
    a = logscale_diagram(dwt_details(x))
    b = logscale_diagram(dwt_details(np.repeat(x, 2)))
    for j in range(4, 11):
        assert abs(b.y[b.index(j + 1)] - a.y[a.index(j)] - 1) <= a.ci_half[a.index(j)]
    ea, eb = estimate_scaling(a, 4, 10), estimate_scaling(b, 5, 11)
    assert abs(ea.alpha - eb.alpha) <= ea.alpha_stderr


def test_features_fgn_poisson_periodic():
    assert detect_features(logscale_diagram(dwt_details(gen_fgn(2 ** 16, 0.8, 3)))).kind \
        == "LinearIncrease"
    assert detect_features(logscale_diagram(dwt_details(gen_poisson(2 ** 16, 5, 3)))).kind == "Flat"
    f = detect_features(logscale_diagram(dwt_details(gen_periodic(2 ** 16, 256, 5, 2, 3))))
    assert f.kind == "Bump" and abs(f.octave - 8) <= 1


def test_feature_precedence_and_too_few_octaves():
    j = np.arange(1, 9)
    flat = LogscaleDiagram(0.02, j, np.zeros(8), np.full(8, 1000), np.full(8, 0.05),
                           np.full(8, 0.001))
    assert detect_features(flat).kind == "Flat"
    bump_y = np.zeros(8)
    bump_y[4] = 3.0
    bump = LogscaleDiagram(0.02, j, bump_y, np.full(8, 1000), np.full(8, 0.05), np.full(8, 0.001))
    f = detect_features(bump)
    assert f.kind == "Bump" and f.octave == 5
    rising = LogscaleDiagram(0.02, j, 0.8 * j, np.full(8, 1000), np.full(8, 0.05),
                             np.full(8, 0.001))
    assert detect_features(rising).kind == "LinearIncrease"
    with pytest.raises(ValueError):
        detect_features(LogscaleDiagram(0.02, j[:4], np.zeros(4), np.full(4, 1000),
                                        np.full(4, 0.05), np.full(4, 0.001)))


@pytest.mark.parametrize("c", [0.01, 3.0, 1e4])
def test_features_amplitude_invariant(c):
    for x in (gen_fgn(2 ** 14, 0.8, 5), gen_poisson(2 ** 14, 5, 5).astype(float),
              gen_periodic(2 ** 14, 256, 5, 2, 5).astype(float)):
        a = detect_features(logscale_diagram(dwt_details(x)))
        b = detect_features(logscale_diagram(dwt_details(c * x)))
        assert (a.kind, a.octave) == (b.kind, b.octave)


def test_estimator_api():
    x = TimeSeries(0.02, 0.0, gen_fgn(2 ** 14, 0.8, 9))
    est = WaveletScalingEstimator().fit(x)
    assert est.hurst_ == est.estimate_.hurst
    assert est.diagram_.bin_width == 0.02
    assert est.transform(x).shape == est.diagram_.y.shape
    assert est.get_params()["vanishing_moments"] == 3
    fixed = WaveletScalingEstimator(j1=3, j2=10).fit(x)
    assert (fixed.estimate_.j1, fixed.estimate_.j2) == (3, 10)
