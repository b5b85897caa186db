import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweezerkit.core import ParameterError
from tweezerkit.hologram import (FeedbackGains, PhaseHologram, TargetPattern, backward, checkerboard_wavelengths, closed_loop,
                                 diffraction_efficiency, forward, grid_target, illumination, load_matrix, loading_model,
                                 offaxis_peak, optimize_zernike, propagate_out_of_plane, relative_std, required_step,
                                 save_matrix, site_amplitudes, spot_intensities, update_weights, weights_from_heights,
                                 wgs_optimize, zernike, zernike_phase)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_forward_model_conserves_power(seed):
    gen = np.random.default_rng(seed)
    amp = illumination(64, "gaussian")
    phase = gen.uniform(0, 2 * np.pi, (64, 64))
    focal = forward(amp, phase)
    assert np.sum(np.abs(focal) ** 2) == pytest.approx(np.sum(amp**2), rel=1e-12)
    np.testing.assert_allclose(backward(focal), amp * np.exp(1j * phase), atol=1e-12)


def test_flat_phase_puts_all_power_in_zeroth_order():
    holo = PhaseHologram(np.zeros((128, 128)))
    target = TargetPattern(np.array([[0.0, 0.0]]))
    assert spot_intensities(holo, target)[0] == pytest.approx(1.0)


def test_pitch_and_window():
    holo = PhaseHologram(np.zeros((512, 512)))
    assert holo.window == pytest.approx(1.061 * 8.0e3 / 9.2)
    assert holo.focal_pitch == pytest.approx(1.061 * 8.0e3 / (512 * 9.2))


def test_diffraction_efficiency_envelope():
    a, lam, f = 9.2, 1.061, 8.0
    assert diffraction_efficiency(0.0, 0.0, a, lam, f) == 1.0
    x = 200.0
    u = math.pi * x * a / (lam * f * 1e3)
    assert diffraction_efficiency(x, 0.0, a, lam, f) == pytest.approx((math.sin(u) / u) ** 2)
    # the first zero sits at the edge of the addressable window
    assert diffraction_efficiency(lam * f * 1e3 / a, 0.0, a, lam, f) == pytest.approx(0.0, abs=1e-20)


def test_site_checks():
    holo = PhaseHologram(np.zeros((64, 64)))
    with pytest.raises(ParameterError):
        holo.site_pixels(np.array([[holo.window, 0.0]]))
    with pytest.raises(ParameterError):
        holo.site_pixels(np.array([[0.0, 0.0], [0.1 * holo.focal_pitch, 0.0]]))


def test_wgs_beats_plain_gs():
    target = grid_target(10, 10, 7.2)
    wgs = wgs_optimize(target, 30, 0, 256)
    gs = wgs_optimize(target, 30, 0, 256, weighted=False)
    assert wgs.uniformity < 0.02
    assert wgs.uniformity < gs.uniformity / 3
    assert wgs.intensities.sum() > 0.5


def test_wgs_follows_goal_weights():
    target = grid_target(4, 4, 7.2)
    w = np.ones(16)
    w[5] = 2.0
    res = wgs_optimize(TargetPattern(target.sites, w), 40, 1, 256)
    others = np.delete(res.intensities, 5)
    assert res.intensities[5] / others.mean() == pytest.approx(4.0, rel=0.02)


def test_target_weights_are_mean_normalized():
    t = TargetPattern(np.zeros((3, 2)) + np.arange(3)[:, None], weights=np.array([1.0, 2.0, 3.0]))
    assert t.weights.mean() == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        TargetPattern(np.zeros((2, 2)), weights=np.array([1.0, -1.0]))


def test_update_weights_hand_example():
    target = grid_target(1, 5, 7.2)
    p = np.array([0.4, 0.5, 0.5, 0.5, 0.6])
    new = update_weights(target, p)
    # H <- H [1 - g (1 - P / <P>)], with <P> = 0.5 and g = 0.6
    np.testing.assert_allclose(new.heights, [0.88, 1.0, 1.0, 1.0, 1.12])
    assert new.weights.mean() == pytest.approx(1.0)
    raw = 1 - 0.6 * (1 - np.sqrt(new.heights))
    np.testing.assert_allclose(new.weights, raw / raw.mean())
    np.testing.assert_allclose(weights_from_heights(new.heights, 0.6), new.weights)


def test_update_weights_caps_heights():
    target = TargetPattern(np.array([[0.0, 0.0], [7.2, 0.0]]), heights=np.array([3.9, 0.26]))
    new = update_weights(target, np.array([1.0, 0.0]), FeedbackGains(h_cap=4.0))
    assert new.heights.max() <= 4.0 and new.heights.min() >= 0.25


@pytest.mark.parametrize("bad", [np.array([0.5, 1.5]), np.array([0.0, 0.0]), np.array([0.5])])
def test_update_weights_rejects_bad_loading(bad):
    with pytest.raises(ParameterError):
        update_weights(grid_target(1, 2), bad)


def test_loading_model_shape():
    u = np.array([0.8, 1.0, 1.2])
    p = loading_model(u, 0.5, -1.0)
    assert p[0] > p[1] > p[2]
    assert p[1] == pytest.approx(0.5)
    assert np.all(loading_model(np.array([1e-6, 1.0]), 0.5) <= 1.0)


def test_closed_loop_contracts_loading_spread():
    gen = np.random.default_rng(3)
    target = grid_target(10, 10, 7.2)
    trans = np.exp(gen.normal(0, 0.1, target.n_sites))
    hist = closed_loop(target, trans, iterations=4, wgs_iters=20, rng=gen, n_pixels=256)
    s = hist.loading_std
    assert len(s) == 5
    assert all(b < a for a, b in zip(s, s[1:]))
    assert hist.converged_within(0.034, 4)


def test_zernike_low_orders():
    rho = np.array([0.0, 0.5, 1.0])
    th = np.zeros(3)
    np.testing.assert_allclose(zernike(2, 0, rho, th), 2 * rho**2 - 1)
    np.testing.assert_allclose(zernike(1, 1, rho, th), rho)
    assert zernike(2, 0, np.array([1.5]), np.zeros(1))[0] == 0.0
    with pytest.raises(ParameterError):
        zernike(2, 1, rho, th)


def test_zernike_modes_are_orthogonal():
    n = 256
    a = zernike_phase(n, {(2, 0): 1.0})
    b = zernike_phase(n, {(2, 2): 1.0})
    c = zernike_phase(n, {(3, -1): 1.0})
    assert abs(np.sum(a * b)) < 1e-3 * np.sum(a * a)
    assert abs(np.sum(a * c)) < 1e-3 * np.sum(a * a)


def test_zernike_optimizer_finds_minimum():
    truth = {(2, 0): 0.3, (2, 2): -0.2}
    obj = lambda c: sum((c[k] - v) ** 2 for k, v in truth.items())
    best, val = optimize_zernike(obj, list(truth), step=0.4, iters=100)
    assert val < 1e-8
    for k, v in truth.items():
        assert best[k] == pytest.approx(v, abs=1e-4)


def test_single_spot_axial_profile_is_lorentzian():
    w0, lam = 3.0, 1.061
    z = np.linspace(-60, 60, 41)
    slc = propagate_out_of_plane([[0.0, 0.0]], z, waist=w0, wavelength=lam, dx=0.25, margin=40.0)
    z_r = math.pi * w0**2 / lam
    np.testing.assert_allclose(slc.axial_profile(0.0), 1 / (1 + (z / z_r) ** 2), atol=0.01)


def test_propagation_rejects_coarse_grid():
    assert required_step(1.061, 0.65) == pytest.approx(1.061 / 1.3)
    with pytest.raises(ParameterError):
        propagate_out_of_plane([[0.0, 0.0]], [0.0], dx=1.0)


def test_checkerboard_colours_neighbours_differently():
    t = grid_target(5, 5, 5.0)
    lam = checkerboard_wavelengths(t.sites, 5.0)
    grid = lam.reshape(5, 5)
    assert np.all(grid[:, 1:] != grid[:, :-1]) and np.all(grid[1:] != grid[:-1])


def test_two_colour_suppresses_out_of_plane_revivals():
    gen = np.random.default_rng(0)
    t = grid_target(7, 15, 5.0)
    z = np.linspace(-60, 60, 61)
    amps = np.exp(2j * np.pi * gen.random(t.n_sites))
    one = propagate_out_of_plane(t.sites, z, amplitudes=amps)
    two = propagate_out_of_plane(t.sites, z, amplitudes=amps, wavelengths=checkerboard_wavelengths(t.sites, 5.0))
    assert offaxis_peak(two, 0.0, 12.0) < offaxis_peak(one, 0.0, 12.0)


def test_site_amplitudes_match_intensities():
    target = grid_target(3, 3, 7.2)
    res = wgs_optimize(target, 10, 0, 128)
    np.testing.assert_allclose(np.abs(site_amplitudes(res.hologram, target)) ** 2, res.intensities, rtol=1e-12)
    assert relative_std([1.0, 1.0]) == 0.0


def test_matrix_round_trip(tmp_path):
    m = np.random.default_rng(0).uniform(0, 2 * np.pi, (16, 24))
    save_matrix(tmp_path / "h.bin", m, 9.2)
    back, pitch = load_matrix(tmp_path / "h.bin")
    assert pitch == 9.2
    np.testing.assert_array_equal(back, m)
    raw = (tmp_path / "h.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-8])
    with pytest.raises(ParameterError):
        load_matrix(tmp_path / "t.bin")
    (tmp_path / "b.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ParameterError):
        load_matrix(tmp_path / "b.bin")
