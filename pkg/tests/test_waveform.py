import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweezerkit.core import ParameterError, make_circular_array, partition_quadrants, sample_occupancy
from tweezerkit.rearrange import tetris_plan
from tweezerkit.waveform import (ANCHOR, RawWriter, ToneSegment, chain_phases, frequency_map, plan_segments,
                                 quadrant_frequency_maps, read_raw, stream_scale, stream_segments, synthesize_chunk,
                                 synthesize_reference)

FS = 201.6e6


def tone_set(seed=0, n_tones=5):
    gen = np.random.default_rng(seed)
    segs = []
    for k in range(n_tones):
        f0, f1 = gen.uniform(50e6, 90e6, 2)
        tone = [
            ToneSegment(0, 20_000, f0, amp_start=0.0, amp_end=0.15, amp_kind="quadratic", phase=gen.random()),
            ToneSegment(20_000, 90_000, f0, f1, "jerk", 0.15),
            ToneSegment(110_000, 30_000, f1, f1 - 2e6, "linear", 0.15, 0.05, "cubic", ((0.3, 0.1), (0.7, 0.02))),
            ToneSegment(140_000, 100_000, f1 - 2e6, amp_start=0.05),
        ]
        chain_phases(tone, FS)
        segs += tone
    return segs


def test_constant_tone_hand_formula():
    seg = ToneSegment(0, 5000, 70e6, amp_start=0.4, phase=0.125)
    n = np.arange(5000)
    expect = 0.4 * np.sin(2 * np.pi * (0.125 + 70e6 / FS * n))
    np.testing.assert_allclose(synthesize_chunk([seg], 0, 5000, FS, 1.0).samples, expect, atol=1e-9)


def test_jerk_chirp_instantaneous_frequency():
    n = 40_000
    seg = ToneSegment(0, n, 60e6, 80e6, "jerk")
    c = seg.phase_coeffs(FS)
    # derivative of the phase polynomial in cycles per sample
    nu = lambda u: c[1] + 2 * c[2] * u + 3 * c[3] * u**2 + 4 * c[4] * u**3
    assert nu(0) * FS == pytest.approx(60e6)
    assert nu(n) * FS == pytest.approx(80e6)
    assert nu(n / 2) * FS == pytest.approx(70e6)
    # zero sweep rate at both ends
    assert abs(2 * c[2] + 6 * c[3] * n + 12 * c[4] * n**2) < 1e-18


@pytest.mark.parametrize("chunk", [4096, 65_536, ANCHOR + 17, 100_003])
def test_chunked_synthesis_matches_reference(chunk):
    segs = tone_set()
    total = 240_000
    ref = synthesize_reference(segs, 0, total, FS)
    parts = [synthesize_chunk(segs, s, min(chunk, total - s), FS, 1.0).samples for s in range(0, total, chunk)]
    assert np.abs(np.concatenate(parts) - ref).max() < 1e-6


def test_chained_tone_is_continuous():
    segs = tone_set(n_tones=1)
    x = synthesize_reference(segs, 0, 240_000, FS)
    # no sample-to-sample jump larger than the largest frequency allows
    assert np.abs(np.diff(x)).max() < 0.15 * 2 * math.pi * 92e6 / FS
    with pytest.raises(ParameterError):
        chain_phases([ToneSegment(0, 10, 60e6), ToneSegment(11, 10, 60e6)], FS)


@given(st.integers(0, 200_000), st.integers(1, 3000))
@settings(max_examples=30, deadline=None)
def test_any_window_matches_reference(start, n):
    segs = tone_set(1, 3)
    got = synthesize_chunk(segs, start, n, FS, 1.0).samples
    assert np.abs(got - synthesize_reference(segs, start, n, FS)).max() < 1e-6


def test_sweep_guard():
    with pytest.raises(ParameterError, match="too fast"):
        synthesize_chunk([ToneSegment(0, 100, 50e6, 90e6, "linear")], 0, 100, FS)


def test_segment_validation():
    with pytest.raises(ParameterError):
        ToneSegment(0, 0, 60e6)
    with pytest.raises(ParameterError):
        ToneSegment(0, 10, 60e6, amp_start=1.5)
    with pytest.raises(ParameterError):
        ToneSegment(0, 10, 60e6, ramp="cubic")


def test_overrange_is_scaled_down():
    segs = [ToneSegment(0, 1000, 60e6 + k * 1e6, amp_start=0.5) for k in range(4)]
    with pytest.warns(RuntimeWarning):
        s = stream_scale(segs)
    assert s == pytest.approx(0.5)


def test_stream_delivers_every_sample_in_order(tmp_path):
    segs = tone_set(2, 3)
    path = tmp_path / "w.raw"
    with RawWriter(path, FS, 50_000) as sink:
        stats = stream_segments(segs, FS, 50_000, sink)
    head, data = read_raw(path)
    assert head["sample_rate"] == FS and head["chunk_size"] == 50_000
    assert stats.n_chunks == 5 and data.size == 250_000
    ref = synthesize_reference(segs, 0, 250_000, FS)
    assert np.abs(data - ref).max() < 1e-6  # float32 storage
    assert stats.deadline_us == pytest.approx(50_000 / FS * 1e6)


def test_read_raw_rejects_other_files(tmp_path):
    p = tmp_path / "x.raw"
    p.write_bytes(b"\0" * 64)
    with pytest.raises(ParameterError):
        read_raw(p)


def test_frequency_map_round_trip():
    m = frequency_map((0.0, 400.0))
    f = m.frequency([0.0, 200.0, 400.0])
    assert 45e6 <= f.min() and f.max() <= 95e6
    assert f[1] == pytest.approx(70e6)
    assert f[2] - f[0] == pytest.approx(400 / 12 * 1e6)
    np.testing.assert_allclose(m.position(f), [0, 200, 400], atol=1e-9)


def test_plan_segments_follow_atoms():
    g = make_circular_array()
    q = partition_quadrants(g)[0]
    occ = sample_occupancy(g, 0.512, 0)
    plan = tetris_plan(occ, q, g.spacing)[:3]
    maps = quadrant_frequency_maps(g, q)
    segs = plan_segments(plan, g, maps, FS)
    assert segs
    for s in segs:
        for f in (s.f_start, s.f_end):
            assert 45e6 <= f <= 95e6
    assert max(s.end for s in segs) > 0
