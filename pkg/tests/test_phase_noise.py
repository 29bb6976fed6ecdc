import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdx.phase_noise import (DegenerateVariance, LengthMismatch, OscillatorMode, PhaseNoiseSpec,
                             carrier_powers, circular_convolve, cpe_power_closed_form,
                             draw_link_phases, gen_wiener, lambda_common, lambda_I,
                             lambda_S, lambda_S_closed_form, lambda_separate, phase_to_spectrum,
                             spectrum_to_matrix)


def spec(N, s, mode="separate", alpha=0):
    return PhaseNoiseSpec(delta_f=0.0, N=N, sigma_theta2=s, oscillator_mode=mode, alpha_I=alpha)


def test_from_delta_f_per_sample_variance():
    s = PhaseNoiseSpec.from_delta_f(1e-4, 1024)
    assert s.sigma_theta2 == pytest.approx(4 * math.pi * 1e-4 / 1024)


def test_zero_variance_is_flat():
    assert np.all(gen_wiener(spec(64, 0.0), seed=1) == 0.0)


def test_wiener_starts_at_zero_and_increment_variance():
    th = gen_wiener(spec(1001, 0.02), seed=3, size=1000)
    assert np.all(th[:, 0] == 0.0)
    inc = np.diff(th, axis=-1)
    assert inc.size == 10 ** 6
    assert inc.var() == pytest.approx(2 * 0.02, rel=0.05)


def test_wiener_autocorrelation_at_lag_100():
    th = gen_wiener(spec(4096, 1e-5), seed=11, size=10_000)
    z = np.exp(1j * (th[:, 300] - th[:, 200]))
    se = z.real.std(ddof=1) / math.sqrt(z.size)
    assert abs(z.real.mean() - math.exp(-1e-3)) < 3 * se


def test_spectrum_flat_phase():
    j = phase_to_spectrum(np.zeros(8), np.zeros(8))
    np.testing.assert_allclose(j, np.eye(8)[0], atol=1e-15)


def test_spectrum_two_point():
    j = phase_to_spectrum(np.array([0.0, math.pi]), np.zeros(2))
    np.testing.assert_allclose(j, [0.0, 1.0], atol=1e-15)


def test_spectrum_matches_direct_dft():
    rng = np.random.default_rng(5)
    tx, rx = rng.normal(size=8), rng.normal(size=8)
    j = phase_to_spectrum(tx, rx)
    n = np.arange(8)
    direct = np.array([np.sum(np.exp(1j * (tx + rx)) * np.exp(-2j * math.pi * k * n / 8)) / 8
                       for k in range(8)])
    np.testing.assert_allclose(j, direct, atol=1e-12)
    assert np.sum(np.abs(j) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_spectrum_delay_and_length_check():
    tx = np.arange(10.0)
    j = phase_to_spectrum(tx, np.zeros(10), delay=2, N=8)
    np.testing.assert_allclose(j, np.fft.fft(np.exp(1j * tx[:8])) / 8)
    with pytest.raises(LengthMismatch):
        phase_to_spectrum(np.zeros(8), np.zeros(8), delay=1, N=8)


def test_circulant_structure():
    np.testing.assert_array_equal(spectrum_to_matrix(np.eye(5)[0]), np.eye(5))
    a, b, c = 1.0, 2.0, 3.0
    J = spectrum_to_matrix(np.array([a, b, c]))
    np.testing.assert_array_equal(J[0], [a, c, b])
    np.testing.assert_array_equal(J[1], [b, a, c])


def test_circulant_product_is_circular_convolution():
    rng = np.random.default_rng(2)
    j = rng.normal(size=12) + 1j * rng.normal(size=12)
    g = rng.normal(size=12) + 1j * rng.normal(size=12)
    direct = np.array([sum(j[(m - n) % 12] * g[n] for n in range(12)) for m in range(12)])
    np.testing.assert_allclose(spectrum_to_matrix(j) @ g, direct, atol=1e-12)
    np.testing.assert_allclose(circular_convolve(j, g), direct, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 256), scale=st.floats(0.0, 10.0), seed=st.integers(0, 2 ** 32 - 1))
def test_parseval(N, scale, seed):
    rng = np.random.default_rng(seed)
    j = phase_to_spectrum(rng.normal(size=N) * scale, rng.normal(size=N) * scale)
    assert np.sum(np.abs(j) ** 2) == pytest.approx(1.0, abs=1e-12)


def _double_sum_powers(N, s, exponent):
    """E|J[k]|^2 by the plain O(N^2) double sum over (p, q)."""
    p, q = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    R = np.exp(-s * exponent(np.abs(p - q)))
    k = np.arange(N)[:, None, None]
    return np.real(np.sum(R * np.exp(-2j * math.pi * k * (p - q) / N), axis=(1, 2))) / N ** 2


def test_separate_powers_match_double_sum():
    s = 3e-3
    np.testing.assert_allclose(carrier_powers(spec(32, s)), _double_sum_powers(32, s, lambda d: d),
                               atol=1e-14)


def test_common_powers_match_double_sum():
    s, a = 3e-3, 5
    ref = _double_sum_powers(32, s, lambda d: np.where(d < a, d, 2 * d - a))
    np.testing.assert_allclose(carrier_powers(spec(32, s, "common", a)), ref, atol=1e-14)


def test_lambda_zero_variance_and_full_K():
    assert lambda_separate(3, spec(16, 0.0)) == 0.0
    assert lambda_separate(16, spec(16, 0.01)) == pytest.approx(0.0, abs=1e-15)


def test_lambda_N2_hand_expansion():
    s = 0.3
    assert lambda_separate(1, spec(2, s)) == pytest.approx((1 - math.exp(-s)) / 2, rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(N=st.integers(2, 64), logs=st.floats(-8, 0), mode=st.sampled_from(["separate", "common"]),
       alpha=st.integers(0, 80))
def test_lambda_bounded_and_monotone(N, logs, mode, alpha):
    sp = spec(N, 10 ** logs, mode, alpha)
    lams = [lambda_I(K, sp) for K in range(1, N + 1)]
    assert all(0.0 <= v <= 1.0 for v in lams)
    assert all(b <= a + 1e-15 for a, b in zip(lams, lams[1:]))


def test_common_with_large_delay_equals_separate():
    s = 2e-3
    for K in (1, 4, 9):
        assert lambda_common(K, spec(32, s, "common", 32)) == pytest.approx(
            lambda_separate(K, spec(32, s)), abs=1e-12)
        assert lambda_common(K, spec(32, s, "common", 50)) == pytest.approx(
            lambda_separate(K, spec(32, s)), abs=1e-12)


def test_closed_form_cpe_power():
    s = 0.2
    raw = cpe_power_closed_form(2, s)
    assert raw == pytest.approx((1 + math.exp(-s)) / 2, rel=1e-13)
    lam, raw2 = lambda_S_closed_form(2, s)
    assert lam == pytest.approx(lambda_separate(1, spec(2, s)), rel=1e-12)
    assert raw2 == raw


def test_closed_form_against_high_precision():
    N, s = 1024, 4 * math.pi * 1e-4 / 1024
    mpmath.mp.dps = 60
    e = mpmath.e ** (-mpmath.mpf(s))
    ref = (2 * (e ** (N + 1) - (N + 1) * e + N) / (e - 1) ** 2 - N) / N ** 2
    assert cpe_power_closed_form(N, s) == pytest.approx(float(ref), rel=1e-12)
    assert lambda_S_closed_form(N, s)[0] == pytest.approx(lambda_separate(1, spec(N, s)), rel=1e-9)


def test_closed_form_small_variance_and_degenerate():
    assert lambda_S_closed_form(64, 1e-12)[0] < 1e-9
    with pytest.raises(DegenerateVariance):
        cpe_power_closed_form(64, 0.0)


def test_lambda_S_ignores_oscillator_mode():
    a = PhaseNoiseSpec.from_delta_f(1e-3, 64)
    b = PhaseNoiseSpec.from_delta_f(1e-3, 64, OscillatorMode.COMMON, 3)
    assert lambda_S(a) == lambda_S(b)


def test_draw_link_phases_shapes_and_parseval():
    sp = PhaseNoiseSpec.from_delta_f(1e-2, 16, OscillatorMode.COMMON, 4)
    J_I, J_S = draw_link_phases(sp, np.random.default_rng(0), size=10)
    assert J_I.shape == J_S.shape == (10, 16)
    np.testing.assert_allclose(np.sum(np.abs(J_I) ** 2, axis=-1), 1.0, atol=1e-12)


@pytest.mark.parametrize("mode,alpha", [("separate", 0), ("common", 0), ("common", 4)])
def test_carrier_powers_against_monte_carlo(mode, alpha):
    """Both links; threshold 4 SE keeps the family-wise false alarm rate near 0.2%."""
    sp = PhaseNoiseSpec.from_delta_f(1e-3, 16, OscillatorMode(mode), alpha)
    J_I, J_S = draw_link_phases(sp, np.random.default_rng(17), size=50_000)
    for J, ref in ((J_I, carrier_powers(sp)), (J_S, carrier_powers(sp, "separate"))):
        P = np.abs(J) ** 2
        se = P.std(axis=0, ddof=1) / math.sqrt(P.shape[0])
        assert np.all(np.abs(P.mean(axis=0) - ref) < 4 * se)
