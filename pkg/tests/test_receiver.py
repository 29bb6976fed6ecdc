import warnings

import numpy as np
import pytest

from fdx.air import crandn, freq_matrix, pilot_values, synthesize
from fdx.core import SystemParams, comb_layout, make_constellation
from fdx.phase_noise import PhaseNoiseSpec
from fdx.receiver import (SingularSystem, ZeroChannelWarning, cancel_si, detect_ml, lstsq,
                          run_receiver, si_design, stage1_estimate, stage2_iterate, initial_state,
                          unit_vector)


def _setup(N=64, M=8, L_I=4, L_S=2, snr=300.0, inr=300.0, df=0.0, const="BPSK"):
    p = SystemParams.from_db(N, M, L_I, L_S, snr, inr)
    lay = comb_layout(N, M)
    c = make_constellation(const, p.E_S, N)
    pn = PhaseNoiseSpec.from_delta_f(df, N)
    return p, lay, c, pn


def test_lstsq_rank_deficient():
    A = np.ones((5, 2), dtype=complex)
    with pytest.raises(SingularSystem):
        lstsq(A, np.ones(5))


def test_stage1_exact_without_impairments():
    p, lay, c, pn = _setup()
    link = synthesize(p, lay, c, pn, seed=3, all_pilots=True)
    for iters in (1, 3):
        st = stage1_estimate(link.y, link.x_I, link.x_S, p, iters)
        np.testing.assert_allclose(st.h_I_hat, link.h_I, atol=1e-8)
        np.testing.assert_allclose(st.h_D_hat, link.h_D, atol=1e-8)
        np.testing.assert_allclose(st.j_I_hat, unit_vector(p.K), atol=1e-8)


def test_stage1_mse_scales_with_noise():
    p0, lay, c, pn = _setup(inr=40.0)
    snrs = np.array([10.0, 20.0, 30.0, 40.0])
    mse = []
    for snr in snrs:
        p = SystemParams.from_db(64, 8, 4, 2, snr, 40.0 + snr - 10.0)
        errs = []
        for t in range(200):
            link = synthesize(p, lay, c, pn, seed=t, all_pilots=True)
            st = stage1_estimate(link.y, link.x_I, link.x_S, p, 3)
            errs.append(np.sum(np.abs(st.h_I_hat - link.h_I) ** 2))
        mse.append(np.mean(errs))
    # SI and SoI powers are held fixed while the noise power drops 10 dB per step
    slope = np.polyfit(-snrs / 10.0, np.log10(mse), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_stage1_residual_non_increasing():
    p, lay, c, pn = _setup(snr=20.0, inr=40.0, df=1e-4)
    link = synthesize(p, lay, c, pn, seed=8, all_pilots=True)
    res = []
    stage1_estimate(link.y, link.x_I, link.x_S, p, 6, residuals=res)
    assert len(res) == 12
    assert all(b <= a * (1 + 1e-9) for a, b in zip(res, res[1:]))


def test_stage1_scale_normalised():
    p, lay, c, pn = _setup(snr=20.0, inr=40.0, df=1e-3)
    link = synthesize(p, lay, c, pn, seed=2, all_pilots=True)
    st = stage1_estimate(link.y, link.x_I, link.x_S, p, 4)
    assert st.j_I_hat[0] == pytest.approx(1.0)


def test_cancel_si_perfect():
    p, lay, c, pn = _setup()
    link = synthesize(p, lay, c, pn, seed=4)
    r = cancel_si(link.y, link.h_I, link.x_I, unit_vector(p.K), lay)
    H_D = freq_matrix(p.N, p.L_S) @ link.h_D
    s = H_D[lay.data_indices] * c.points[link.data_symbols]
    np.testing.assert_allclose(r, s, atol=1e-9)


def test_cancel_si_with_zero_j_returns_data_carriers():
    p, lay, c, pn = _setup()
    link = synthesize(p, lay, c, pn, seed=4)
    r = cancel_si(link.y, link.h_I, link.x_I, np.zeros(p.K), lay)
    np.testing.assert_array_equal(r, link.y[lay.data_indices])


def test_cancel_si_term_by_term():
    rng = np.random.default_rng(7)
    p, lay, c, pn = _setup(N=8, M=4, L_I=2, L_S=2)
    y, x_I, h_I, j = crandn(rng, 8), crandn(rng, 8), crandn(rng, 2), crandn(rng, p.K)
    H = np.array([sum(h_I[l] * np.exp(-2j * np.pi * k * l / 8) for l in range(2)) for k in range(8)])
    si = np.array([sum(H[(m - k) % 8] * x_I[(m - k) % 8] * j[k] for k in range(p.K))
                   for m in range(8)])
    np.testing.assert_allclose(cancel_si(y, h_I, x_I, j, lay), (y - si)[lay.data_indices],
                               atol=1e-12)


def test_detect_exact_points():
    p, lay, c, pn = _setup(N=16, M=4, L_S=2, L_I=2, const="QPSK")
    h = np.array([0.7 - 0.2j, 0.3j])
    H = freq_matrix(16, 2) @ h
    idx = np.arange(lay.Q) % 4
    r = H[lay.data_indices] * c.points[idx]
    np.testing.assert_array_equal(detect_ml(r, h, lay, c), idx)


def test_detect_bpsk_sign_flip():
    p, lay, c, pn = _setup(N=8, M=4, L_S=1, L_I=1)
    h = np.array([1.0 + 0j])
    r = np.array([-0.1, 0.2, 0.3, 0.4]) * c.points[0]
    out = detect_ml(r, h, lay, c)
    assert out[0] == 1 and np.all(out[1:] == 0)


def test_detect_matches_brute_force():
    rng = np.random.default_rng(1)
    p, lay, c, pn = _setup(N=16, M=4, L_S=2, L_I=2, const="QPSK")
    h = crandn(rng, 2)
    r = crandn(rng, lay.Q)
    H = freq_matrix(16, 2) @ h
    expect = []
    for q, k in enumerate(lay.data_indices):
        best = min(range(4), key=lambda i: (abs(r[q] - H[k] * c.points[i]) ** 2, i))
        expect.append(best)
    np.testing.assert_array_equal(detect_ml(r, h, lay, c), expect)


def test_detect_warns_on_vanishing_channel():
    p, lay, c, pn = _setup(N=8, M=4, L_S=1, L_I=1)
    with pytest.warns(ZeroChannelWarning):
        detect_ml(np.ones(4), np.zeros(1), lay, c)


def test_noiseless_converges_in_one_iteration():
    p, lay, c, pn = _setup()
    link = synthesize(p, lay, c, pn, seed=6)
    tr = run_receiver(link.y, link.x_I, p, lay, c, 1, link.h_I, truth=link)
    assert len(tr) == 1
    assert tr[0].symbol_errors == 0
    assert tr[0].mse_j < 1e-20 and tr[0].mse_hD < 1e-20


def test_stage2_updates_state():
    p, lay, c, pn = _setup(snr=20.0, inr=40.0, df=1e-4)
    link = synthesize(p, lay, c, pn, seed=6)
    st0 = initial_state(link.y, link.h_I, link.x_I, p, lay)
    st1 = stage2_iterate(link.y, st0, link.x_I, p, lay, c)
    assert st1.x_d_idx.shape == (lay.Q,)
    assert set(np.unique(st1.x_d_hat(c))) <= set(c.points)
    assert st1.j_I_hat.shape == (p.K,) and st1.h_D_hat.shape == (p.L_S,)


def test_trace_deterministic():
    p, lay, c, pn = _setup(snr=15.0, inr=40.0, df=1e-3)
    runs = []
    for _ in range(2):
        link = synthesize(p, lay, c, pn, seed=99)
        tr = run_receiver(link.y, link.x_I, p, lay, c, 4, link.h_I, truth=link)
        runs.append(np.concatenate([tr.column("mse_j"), tr.column("d_n"), tr.column("bit_errors")]))
    np.testing.assert_array_equal(runs[0], runs[1])


def test_run_receiver_rejects_zero_iterations():
    p, lay, c, pn = _setup()
    with pytest.raises(ValueError):
        run_receiver(np.zeros(64), np.zeros(64), p, lay, c, 0, np.zeros(4))


def test_second_iteration_improves_ber():
    p, lay, c, pn = _setup(snr=15.0, inr=40.0, df=1e-4)
    errs = np.zeros(2)
    for t in range(1000):
        link = synthesize(p, lay, c, pn, seed=t)
        tr = run_receiver(link.y, link.x_I, p, lay, c, 2, link.h_I, truth=link)
        errs += tr.column("bit_errors")
    assert errs[1] < errs[0]


def test_residual_power_zero_with_perfect_estimates():
    p, lay, c, pn = _setup()
    link = synthesize(p, lay, c, pn, seed=10)
    tr = run_receiver(link.y, link.x_I, p, lay, c, 2, link.h_I, truth=link)
    assert tr[-1].residual_power < 1e-18
