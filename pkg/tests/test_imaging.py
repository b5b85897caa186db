import math
import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from tweezerkit.core import ParameterError
from tweezerkit.imaging import (BITSTRINGS, FitError, HistogramModel, atom_pmf, bitstring_probs, empty_pmf, fit_histogram,
                                fit_image_survival, fit_lifetime, frequencies_from_bits, kernel_fidelity, latent_paths,
                                lossy_poisson_pmf, model_fidelity, optimal_threshold, optimize_kernel, sample_histogram,
                                simulate_bitstring_counts, simulate_boxes, three_image_estimate)


def loss_oracle(n, lam0, lam1, L, trigger):
    """Exponential loss time, photons thinned to rate lam1 - L before the loss."""
    r = lam1 - L
    out = np.exp(-L) * stats.poisson.pmf(n, lam0 + r)
    bridge = [integrate.quad(lambda t: L * np.exp(-L * t) * stats.poisson.pmf(k - trigger, lam0 + r * t), 0, 1, epsabs=1e-13)[0] for k in n]
    return out + np.array(bridge)


@pytest.mark.parametrize("trigger", [True, False])
@pytest.mark.parametrize("lam0,lam1,L", [(2.0, 40.0, 0.3), (0.5, 15.0, 0.02), (5.0, 80.0, 2.0)])
def test_atom_pmf_matches_quadrature(lam0, lam1, L, trigger):
    n = np.arange(0, int(lam0 + lam1 + 8 * math.sqrt(lam0 + lam1)))
    np.testing.assert_allclose(atom_pmf(n, lam0, lam1, L, trigger_counted=trigger), loss_oracle(n, lam0, lam1, L, trigger), atol=1e-12)


def test_lossless_limits():
    n = np.arange(60)
    np.testing.assert_allclose(atom_pmf(n, 2.0, 30.0, 0.0), stats.poisson.pmf(n, 32.0), atol=1e-15)
    np.testing.assert_allclose(empty_pmf(n, 2.0), stats.poisson.pmf(n, 2.0), atol=1e-15)
    m = HistogramModel(0.3, 2.0, 30.0)
    np.testing.assert_allclose(lossy_poisson_pmf(m, n), 0.3 * stats.poisson.pmf(n, 32.0) + 0.7 * stats.poisson.pmf(n, 2.0), atol=1e-15)


@pytest.mark.parametrize("kw", [dict(F=1.2), dict(lam0=0.0), dict(r1=-1.0), dict(L=50.0)])
def test_model_validation(kw):
    base = dict(F=0.5, lam0=2.0, lam1=40.0)
    base.update(kw)
    with pytest.raises(ParameterError):
        HistogramModel(**base)


def test_optimal_threshold_beats_grid():
    m = HistogramModel(0.5, 2.0, 20.0, 1.0, 1.0, 0.05)
    thr, fid = optimal_threshold(m)
    grid = np.linspace(1, 20, 200)
    assert fid >= max(model_fidelity(m, t)[2] for t in grid) - 1e-9
    F0, F1, f = model_fidelity(m, thr.T)
    assert f == pytest.approx(0.5 * (F0 + F1))


def test_histogram_fit_recovers_parameters():
    truth = HistogramModel(0.5, 5.0, 60.0, 1.2, 1.5, 0.02)
    signals, _ = sample_histogram(truth, 200_000, 2)
    fit = fit_histogram(signals)
    err = fit.stderr()
    for name in ("F", "lam0", "lam1"):
        assert abs(getattr(fit.model, name) - getattr(truth, name)) < 5 * err[name] + 1e-3 * getattr(truth, name)
    assert not fit.degenerate


def test_histogram_fit_flags_single_peak():
    signals = np.random.default_rng(0).poisson(3.0, 20_000).astype(float)
    try:
        fit = fit_histogram(signals)
    except FitError:
        return
    assert fit.degenerate


def test_bitstring_probabilities_hand_values():
    F, S = 0.6, 0.9
    p = bitstring_probs(F, S, 1.0, 1.0)
    assert p.sum() == pytest.approx(1.0)
    assert p[BITSTRINGS.index("111")] == pytest.approx(F * S * S)
    assert p[BITSTRINGS.index("110")] == pytest.approx(F * S * (1 - S))
    assert p[BITSTRINGS.index("100")] == pytest.approx(F * (1 - S))
    assert p[BITSTRINGS.index("000")] == pytest.approx(1 - F)
    assert sum(latent_paths(F, S).values()) == pytest.approx(1.0)


@pytest.mark.parametrize("truth", [(0.5, 0.99, 0.999, 0.995), (0.512, 0.99986, 0.99994, 0.99994), (0.3, 0.95, 0.98, 0.97)])
def test_three_image_noiseless_inversion(truth):
    est = three_image_estimate(bitstring_probs(*truth))
    assert est.residual < 1e-10
    np.testing.assert_allclose([est.F, est.S, est.F0, est.F1], truth, atol=1e-9)


def test_three_image_from_raw_bits():
    gen = np.random.default_rng(5)
    counts = simulate_bitstring_counts(0.5, 0.98, 0.99, 0.995, 200_000, gen)
    idx = np.repeat(np.arange(8), counts)
    bits = np.array([[int(c) for c in BITSTRINGS[i]] for i in idx])
    f = frequencies_from_bits(bits)
    np.testing.assert_allclose(f * counts.sum(), counts)
    est = three_image_estimate(f, counts.sum())
    assert abs(est.S - 0.98) < 4 * est.stderr()["S"]


def test_decay_fits():
    t = np.linspace(0, 30, 16)
    p = 0.95 * np.exp(-t / 12.0)
    assert fit_lifetime(t, p).value == pytest.approx(12.0, rel=1e-6)
    n = np.arange(1, 20)
    assert fit_image_survival(n, 0.99 * 0.998**n).value == pytest.approx(0.998, rel=1e-9)


@pytest.mark.slow
def test_kernel_never_worse_than_plain_sum():
    train, _ = simulate_boxes(10_000, 1, photons=30.0, background=1.0)
    test, _ = simulate_boxes(10_000, 2, photons=30.0, background=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = optimize_kernel(train, test, rng=3, n_boot=200)
    assert res.fidelity >= res.baseline - 1e-12
    fid, _ = kernel_fidelity(res.kernel, test)
    assert fid > 0.99
    w = res.kernel.W
    np.testing.assert_allclose(w, w.T)
    np.testing.assert_allclose(w, w[::-1])
