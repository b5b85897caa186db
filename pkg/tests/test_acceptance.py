"""Acceptance criteria, one test per criterion.

Each test records a single ``[PASS]`` or ``[FAIL]`` line (shown in the
terminal summary) and then asserts. Seeds are fixed here so every number
below is reproducible.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from tweezerkit.core import TrapParams, make_circular_array, make_rng, mk_to_joule, partition_quadrants, sample_occupancy

pytestmark = pytest.mark.acceptance


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_time_budget():
    from tweezerkit.planner import TimingConfig, time_budget

    t0 = time.perf_counter()
    cfg = TimingConfig()
    par, seq = time_budget(cfg, "parallel"), time_budget(cfg, "sequential")
    wall = time.perf_counter() - t0
    # exact sums written out by hand from the operation table
    exact_par = (10_000 + 4 * 235 + 4 * 488 + 124 * (200 + 200 + 600)) / 1e3
    exact_seq = (10_000 + 235 + 488 + 4 * 124 * (200 + 200 + 600) + 3 * 5_000) / 1e3
    ok = (
        math.isclose(par, exact_par, abs_tol=1e-9)
        and math.isclose(seq, exact_seq, abs_tol=1e-9)
        and round(par) == 137
        and round(seq) == 522
        and wall < 1.0
    )
    verdict(1, ok, f"budget parallel {par:.3f} ms, sequential {seq:.3f} ms, {wall * 1e3:.1f} ms wall")


def test_criterion_02_tetris_statistics():
    from tweezerkit.rearrange import plan_stats, tetris_plan

    t0 = time.perf_counter()
    geom = make_circular_array()
    quads = partition_quadrants(geom)
    steps, atoms, longest, complete = [], [], [], []
    for seed in range(50):
        occ = sample_occupancy(geom, 0.5, seed)
        for q in quads:
            st = plan_stats(tetris_plan(occ, q, geom.spacing), occ, q)
            steps.append(st.n_steps)
            atoms.append(st.mean_atoms)
            longest.append(st.mean_longest)
            complete.append(st.filled == st.n_targets)
    wall = time.perf_counter() - t0
    s, a, d = np.mean(steps), np.mean(atoms), np.mean(longest)
    ok = (
        len(steps) >= 200
        and abs(s / 119 - 1) <= 0.15
        and abs(a / 23 - 1) <= 0.20
        and abs(d / 159 - 1) <= 0.15
        and wall < 300
    )
    verdict(2, ok, f"{len(steps)} quadrants: {s:.1f} steps, {a:.1f} atoms/step, longest {d:.1f} um, "
                   f"{np.mean(complete):.3f} complete, {wall:.0f} s")


def test_criterion_03_imaging_pmf_vs_sampler():
    from tweezerkit.imaging import HistogramModel, pmf_normalization, sample_photons, tv_distance_integer

    t0 = time.perf_counter()
    worst_tv, worst_norm = 0.0, 0.0
    gen = make_rng(3)
    for lam1 in (20.0, 40.0, 80.0):
        for L in (0.0, 0.02, 0.2):
            m = HistogramModel(0.5, 2.0, lam1, 1.0, 1.0, L)
            counts, _ = sample_photons(m, 10**6, gen)
            worst_tv = max(worst_tv, tv_distance_integer(m, counts))
            for given in ("atom", "empty"):
                worst_norm = max(worst_norm, abs(pmf_normalization(m, given) - 1))
    wall = time.perf_counter() - t0
    ok = worst_tv < 1e-2 and worst_norm < 1e-6 and wall < 120
    verdict(3, ok, f"max TV {worst_tv:.2e} over 9 points, max |norm - 1| {worst_norm:.1e}, {wall:.1f} s")


def test_criterion_04_three_image_estimator():
    from tweezerkit.imaging import bitstring_probs, simulate_bitstring_counts, three_image_estimate

    truth = {"F": 0.512, "S": 0.99986, "F0": 0.99994, "F1": 0.99994}
    exact = three_image_estimate(bitstring_probs(*truth.values()))
    exact_err = max(abs(getattr(exact, k) - v) for k, v in truth.items())
    n = 16_000 * 11_998
    counts = simulate_bitstring_counts(*truth.values(), n, make_rng(4))
    est = three_image_estimate(counts / counts.sum(), int(counts.sum()))
    err = est.stderr()
    z = {k: abs(getattr(est, k) - v) / err[k] for k, v in truth.items()}
    ok = exact.residual < 1e-10 and exact_err < 1e-10 and max(z.values()) <= 3
    zs = ", ".join(f"{k} {v:.2f}" for k, v in z.items())
    verdict(4, ok, f"noiseless residual {exact.residual:.1e}; |z| {zs}")


def test_criterion_05_heating_exponents():
    from tweezerkit.transport import LensingModel, heating_slope

    trap = TrapParams.from_mk(0.18, 1.17, 1061)
    lensing = LensingModel(suppressed=True)
    T = np.geomspace(150e-6, 600e-6, 6)
    sine, _ = heating_slope(lensing, trap, "sine", 5.0, T)
    jerk, _ = heating_slope(lensing, trap, "jerk", 5.0, T)
    ok = abs(sine + 6) <= 0.3 and abs(jerk + 4) <= 0.3
    verdict(5, ok, f"slopes sine {sine:.2f}, constant jerk {jerk:.2f}")


def test_criterion_06_lensing():
    from tweezerkit.transport import LensingModel, Trajectory, count_axial_minima, numeric_depth_reduction, simulate_move

    z_r = 1.0
    r = np.linspace(0.05, 1.95, 39)
    dev = max(abs(numeric_depth_reduction(x * z_r, z_r) - (1 + 0.25 * x**2)) for x in r)
    scan = np.arange(1.5, 2.5, 0.005)
    onset = next(x for x in scan if count_axial_minima(x * z_r, z_r) == 2)
    trap = TrapParams.from_mk(0.28, 1.17, 1061)
    lensing = LensingModel()
    pairs = []
    for T in (1.4e-3, 1.6e-3, 1.8e-3):
        s = simulate_move(lensing, trap, Trajectory("sine", 610.0, T, "x"), n_samples=1000, rng=1).survival
        d = simulate_move(lensing, trap, Trajectory("sine", 610.0, T, "diagonal"), n_samples=1000, rng=1).survival
        pairs.append((T, s, d))
    ok = dev < 1e-9 and abs(onset / 2 - 1) <= 0.05 and all(d >= s for _, s, d in pairs)
    surv = ", ".join(f"{T * 1e3:.1f} ms {s:.3f}/{d:.3f}" for T, s, d in pairs)
    verdict(6, ok, f"depth factor dev {dev:.1e}, two minima from {onset:.3f} z_R, straight/diagonal survival {surv}")


def test_criterion_07_rb_and_irb_recovery():
    from tweezerkit.qubit import (NoiseModel, clipped_boltzmann, fit_rb, irb_transfer_fit, irb_transport_fit, simulate_irb,
                                  simulate_rb, synthetic_transfer_data, transfer_fidelities)

    data = simulate_rb([2, 50, 100, 200, 400, 800], NoiseModel(depol_per_gate=3.32e-4), 1, 60, 100, "gate")
    rb = fit_rb(data.x, data.ret, data.sigma("ret"))
    rb_ok = abs(rb.fidelity - 0.999834) <= 3 * rb.fidelity_err

    gen = make_rng(2)
    noise = NoiseModel(move_depol=9.4e-4, move_survival=clipped_boltzmann(0.0, 0.004))
    d = simulate_irb([0, 5, 10, 20, 30, 40, 60, 80], noise, gen)
    tr = irb_transport_fit(d.x, d.survival, d.ret, d.sigma("survival"), d.sigma("ret"), rng=gen)
    tr_ok = tr.contains(0.99953)

    gen = make_rng(1)
    sp, dp = (0.998, 0.9986, 0.004), (0.995, 0.9995, 0.002)
    d = synthetic_transfer_data([1, 2, 5, 10, 20, 40, 60, 80, 100, 140, 200], *sp, *dp, gen, 72, 100)
    xf = irb_transfer_fit(d.x, d.survival, d.ret, 7200, rng=gen)
    cons, dep = transfer_fidelities(1, sp, dp)
    dep_lo, dep_hi = xf.extra["depolarizing_lo"][0], xf.extra["depolarizing_hi"][0]
    xf_ok = round(cons, 4) == 0.9981 and round(dep, 4) == 0.9988 and xf.contains(cons) and dep_lo <= dep <= dep_hi

    verdict(7, rb_ok and tr_ok and xf_ok,
            f"F_c {rb.fidelity:.6f} +- {rb.fidelity_err:.1e}; transport F_1 CI [{tr.lo[0]:.5f}, {tr.hi[0]:.5f}]; "
            f"transfer CI [{xf.lo[0]:.5f}, {xf.hi[0]:.5f}] vs {cons:.5f}, depolarizing [{dep_lo:.5f}, {dep_hi:.5f}] vs {dep:.5f}")


def test_criterion_08_scrofulous():
    from tweezerkit.qubit import Pulse, average_gate_fidelity, mean_clifford_area, rot, scrofulous, sequence_unitary

    area = mean_clifford_area() / math.pi
    target = rot(math.pi, 0.0)
    comp = 1 - average_gate_fidelity(target, sequence_unitary(scrofulous(math.pi, 0.0), rabi_error=0.01))
    bare = 1 - average_gate_fidelity(target, sequence_unitary([Pulse(math.pi, 0.0)], rabi_error=0.01))
    ok = abs(area - 2.02) <= 0.02 and bare >= 10 * comp
    verdict(8, ok, f"mean Clifford area {area:.4f} pi; pi-pulse infidelity bare {bare:.2e}, composite {comp:.2e}")


def test_criterion_09_coherence_formulas():
    from tweezerkit.qubit import t2star_inhomogeneous, temperature_from_t2star

    T = temperature_from_t2star(1.3e-4, 25.5e-3)
    t2 = t2star_inhomogeneous(1.5e-4, 0.114 * mk_to_joule(0.18))
    t_ok = abs(T / 4.3e-6 - 1) <= 0.05
    t2_ok = 0.5 <= t2 / 14e-3 <= 2
    verdict(9, t_ok and t2_ok, f"T = {T * 1e6:.3f} uK (4.3 +- 5%), T2*_inh = {t2 * 1e3:.3f} ms (7 to 28 ms band)")


def test_criterion_10_waveform():
    from tweezerkit.waveform import ToneSegment, benchmark_chunk, chain_phases, synthesize_chunk, synthesize_reference

    fs = 201.6e6
    gen = make_rng(10)
    segs = []
    for k in range(8):
        f0, f1 = 55e6 + 4e6 * k, 85e6 - 3e6 * k
        tone = [
            ToneSegment(0, 30_000, f0, amp_start=0.0, amp_end=0.1, amp_kind="quadratic", phase=gen.random()),
            ToneSegment(30_000, 120_000, f0, f1, "jerk", 0.1),
            ToneSegment(150_000, 50_000, f1, f1 + 1e6, "linear", 0.1),
            ToneSegment(200_000, 400_000, f1 + 1e6, amp_start=0.1),
        ]
        chain_phases(tone, fs)
        segs += tone
    n, cs = 600_000, 65_536
    ref = synthesize_reference(segs, 0, n, fs)
    parts = [synthesize_chunk(segs, s, min(cs, n - s), fs, 1.0).samples for s in range(0, n, cs)]
    agree = float(np.abs(np.concatenate(parts) - ref).max())
    bench = benchmark_chunk(64, 524_288, fs, repeats=10, kind="jerk", rng=0)
    ok = agree < 1e-6 and bench.mean_us <= 5_000
    verdict(10, ok, f"re-synthesis max dev {agree:.1e}; 64-tone chunk mean {bench.mean_us / 1e3:.2f} ms "
                    f"(limit 5 ms, deadline {bench.deadline_us / 1e3:.2f} ms, real-time factor {bench.realtime_factor:.2f}, "
                    f"deadlines met {bench.all_met})")


def test_criterion_11_wgs_closed_loop():
    from tweezerkit.hologram import FeedbackGains, closed_loop, grid_target

    gen = make_rng(11)
    target = grid_target(20, 20, 7.2)
    trans = np.exp(gen.normal(0.0, 0.1, target.n_sites))
    hist = closed_loop(target, trans, FeedbackGains(), iterations=5, wgs_iters=20, rng=gen)
    ok = target.n_sites == 400 and hist.converged_within(0.034, 5)
    steps = ", ".join(f"{100 * s:.2f}%" for s in hist.loading_std)
    verdict(11, ok, f"loading rel. std per iteration {steps}")
