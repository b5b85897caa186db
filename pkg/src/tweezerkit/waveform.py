"""Phase-continuous multi-tone AOD waveform synthesis and chunked streaming.

Phases are kept in cycles. Each tone segment has a polynomial phase (up to
quartic, from a cubic frequency ramp) and a polynomial amplitude (up to
cubic). The renderer advances ``exp(2 pi i phase)`` with forward-difference
recurrences, looping over tones in the inner loop so the work vectorizes,
and re-anchors exactly every ``ANCHOR`` samples so rounding never has time
to grow.
"""

from __future__ import annotations

import csv
import math
import queue
import struct
import threading
import time
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline

from .core import ArrayGeometry, ParameterError, Quadrant

ANCHOR = 32768
# largest per-sample change of the phase step, in cycles
MAX_STEP_CHANGE = 1e-3
SAMPLE_RATE = 201.6e6
CHUNK_SIZE = 524_288
RAW_MAGIC = b"TWKW"
RAW_VERSION = 1

RAMPS = ("const", "linear", "jerk")
AMP_KINDS = ("const", "quadratic", "cubic")


@dataclass
class ToneSegment:
    """One tone over ``length`` samples starting at global sample ``start``.

    ``ramp`` shapes the frequency sweep from ``f_start`` to ``f_end``:
    constant, linear, or the constant-jerk cubic 3x^2 - 2x^3. The amplitude
    goes from ``amp_start`` to ``amp_end`` as a constant, a quadratic
    ``a0 + (a1 - a0) x^2``, or a clamped cubic spline through
    ``amp_control`` (x, amplitude) pairs. ``phase`` is in cycles.
    """

    start: int
    length: int
    f_start: float
    f_end: float | None = None
    ramp: str = "const"
    amp_start: float = 1.0
    amp_end: float | None = None
    amp_kind: str = "const"
    amp_control: tuple = ()
    phase: float = 0.0

    def __post_init__(self):
        self.f_end = self.f_start if self.f_end is None else self.f_end
        self.amp_end = self.amp_start if self.amp_end is None else self.amp_end
        if self.ramp not in RAMPS or self.amp_kind not in AMP_KINDS:
            raise ParameterError("unknown ramp or amplitude kind")
        if self.length <= 0 or self.start < 0:
            raise ParameterError("segment must have positive length and non-negative start")
        for a in (self.amp_start, self.amp_end, *(c[1] for c in self.amp_control)):
            if not 0.0 <= a <= 1.0:
                raise ParameterError("amplitudes must lie in [0, 1]")

    @property
    def end(self) -> int:
        return self.start + self.length

    def phase_coeffs(self, fs: float) -> np.ndarray:
        """Phase polynomial (cycles) in the local sample index u."""
        n = float(self.length)
        nu0 = self.f_start / fs
        dnu = (self.f_end - self.f_start) / fs
        c = np.zeros(5)
        c[0] = self.phase
        c[1] = nu0
        if self.ramp == "linear":
            c[2] = dnu / (2 * n)
        elif self.ramp == "jerk":
            c[3] = dnu / n**2
            c[4] = -dnu / (2 * n**3)
        return c

    def phase_at_end(self, fs: float) -> float:
        return float(np.polyval(self.phase_coeffs(fs)[::-1], float(self.length)) % 1.0)

    def amp_pieces(self) -> list[tuple[int, int, np.ndarray]]:
        """(u0, u1, coefficients in u - u0) for each polynomial amplitude piece."""
        n = float(self.length)
        a0, a1 = self.amp_start, self.amp_end
        if self.amp_kind == "const":
            return [(0, self.length, np.array([a0, 0, 0, 0.0]))]
        if self.amp_kind == "quadratic":
            return [(0, self.length, np.array([a0, 0, (a1 - a0) / n**2, 0.0]))]
        pts = sorted(tuple(map(float, p)) for p in self.amp_control)
        knots = [0] + [int(round(x * n)) for x, _ in pts] + [self.length]
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ParameterError("amplitude control points too close together")
        spline = CubicSpline(knots, [a0] + [a for _, a in pts] + [a1], bc_type="clamped")
        out = []
        for i in range(len(knots) - 1):
            c = spline.c[:, i][::-1].copy()
            out.append((knots[i], knots[i + 1], c))
        return out


def chain_phases(segments: Sequence[ToneSegment], fs: float) -> None:
    """Set each segment's start phase so the tone stays continuous."""
    for prev, nxt in zip(segments, segments[1:]):
        if nxt.start != prev.end:
            raise ParameterError("segments of one tone must be contiguous")
        nxt.phase = prev.phase_at_end(fs)


def _shift(c: np.ndarray, s: float) -> np.ndarray:
    # sum_m c_m (s+v)^m, collected by powers of v
    deg = len(c) - 1
    out = np.zeros(deg + 1)
    for m in range(deg + 1):
        if c[m] == 0.0:
            continue
        for k in range(m + 1):
            out[k] += c[m] * math.comb(m, k) * s ** (m - k)
    return out


# -- numba kernel ---------------------------------------------------------------


@njit(cache=True, nogil=True)
def _diffs(c, v, out):
    # forward differences of P(v + i) at i = 0, from the Taylor shift of P
    d = np.zeros(5)
    for k in range(5):
        acc = 0.0
        binom = 1.0
        for m in range(k, 5):
            if m > k:
                binom = binom * m / (m - k)
            acc += c[m] * binom * v ** (m - k)
        d[k] = acc
    out[0] = d[0]
    out[1] = d[1] + d[2] + d[3] + d[4]
    out[2] = 2 * d[2] + 6 * d[3] + 14 * d[4]
    out[3] = 6 * d[3] + 36 * d[4]
    out[4] = 24 * d[4]


@njit(cache=True, nogil=True)
def _wrap(x):
    # nearest-integer reduction keeps tiny increments exact
    return x - math.floor(x + 0.5)


@njit(cache=True, nogil=True, fastmath=True)
def _static_block(out, e0, e1, zr, zi, wr, wi, amp, scale):
    for i in range(e0, e1):
        acc = 0.0
        for k in range(zr.shape[0]):
            acc += amp[k] * zi[k]
            t = zr[k] * wr[k] - zi[k] * wi[k]
            zi[k] = zr[k] * wi[k] + zi[k] * wr[k]
            zr[k] = t
        out[i] += acc * scale


@njit(cache=True, nogil=True, fastmath=True)
def _dynamic_block(out, e0, e1, zr, zi, wr, wi, d2, d3, d4, a0, a1, a2, a3, scale):
    for i in range(e0, e1):
        acc = 0.0
        for k in range(zr.shape[0]):
            acc += a0[k] * zi[k]
            t = zr[k] * wr[k] - zi[k] * wi[k]
            zi[k] = zr[k] * wi[k] + zi[k] * wr[k]
            zr[k] = t
            th = d2[k]
            th2 = th * th
            cr = 1.0 - th2 * (0.5 - th2 * (1.0 / 24.0))
            ci = th * (1.0 - th2 * (1.0 / 6.0 - th2 * (1.0 / 120.0)))
            t = wr[k] * cr - wi[k] * ci
            wi[k] = wr[k] * ci + wi[k] * cr
            wr[k] = t
            d2[k] += d3[k]
            d3[k] += d4[k]
            a0[k] += a1[k]
            a1[k] += a2[k]
            a2[k] += a3[k]
        out[i] += acc * scale


@njit(cache=True, nogil=True, fastmath=True)
def _render(out, pstart, pend, dynamic, pc, ac, scale, anchor):
    """Sum all pieces into ``out``.

    The chunk is cut into epochs at piece boundaries and every ``anchor``
    samples. At each epoch start the recurrences are set from the exact
    polynomials; inside, the loop runs over tones for each sample so it
    vectorizes across tones. Static tones rotate by a fixed step. Dynamic
    tones carry the second phase difference as a real number and turn it
    into a rotation with a short Taylor series, which is exact to double
    precision for the tiny angles involved.
    """
    n = out.shape[0]
    npieces = pstart.shape[0]
    edges = [0, n]
    for e in range(anchor, n, anchor):
        edges.append(e)
    for p in range(npieces):
        if 0 < pstart[p] < n:
            edges.append(pstart[p])
        if 0 < pend[p] < n:
            edges.append(pend[p])
    edges = sorted(set(edges))
    two_pi = 2 * math.pi
    szr = np.empty(npieces)
    szi = np.empty(npieces)
    swr = np.empty(npieces)
    swi = np.empty(npieces)
    sa = np.empty(npieces)
    zr = np.empty(npieces)
    zi = np.empty(npieces)
    wr = np.empty(npieces)
    wi = np.empty(npieces)
    d2 = np.empty(npieces)
    d3 = np.empty(npieces)
    d4 = np.empty(npieces)
    a0 = np.empty(npieces)
    a1 = np.empty(npieces)
    a2 = np.empty(npieces)
    a3 = np.empty(npieces)
    df = np.zeros(5)
    for ei in range(len(edges) - 1):
        e0 = edges[ei]
        e1 = edges[ei + 1]
        ns = 0
        nd = 0
        for p in range(npieces):
            if pstart[p] <= e0 and e0 < pend[p]:
                v = float(e0 - pstart[p])
                _diffs(pc[p], v, df)
                ph = two_pi * _wrap(df[0])
                st = two_pi * _wrap(df[1])
                if dynamic[p]:
                    zr[nd] = math.cos(ph)
                    zi[nd] = math.sin(ph)
                    wr[nd] = math.cos(st)
                    wi[nd] = math.sin(st)
                    d2[nd] = two_pi * df[2]
                    d3[nd] = two_pi * df[3]
                    d4[nd] = two_pi * df[4]
                    _diffs(ac[p], v, df)
                    a0[nd] = df[0]
                    a1[nd] = df[1]
                    a2[nd] = df[2]
                    a3[nd] = df[3]
                    nd += 1
                else:
                    szr[ns] = math.cos(ph)
                    szi[ns] = math.sin(ph)
                    swr[ns] = math.cos(st)
                    swi[ns] = math.sin(st)
                    sa[ns] = ac[p, 0]
                    ns += 1
        if ns:
            _static_block(out, e0, e1, szr[:ns], szi[:ns], swr[:ns], swi[:ns], sa[:ns], scale)
        if nd:
            _dynamic_block(out, e0, e1, zr[:nd], zi[:nd], wr[:nd], wi[:nd], d2[:nd], d3[:nd], d4[:nd], a0[:nd], a1[:nd], a2[:nd], a3[:nd], scale)


# -- chunk synthesis ------------------------------------------------------------


def _degree(c: np.ndarray) -> int:
    nz = np.nonzero(c)[0]
    return int(nz[-1]) if nz.size else 0


def _pieces(segments: Iterable[ToneSegment], c0: int, n: int, fs: float):
    starts, ends, dyn, pcs, acs = [], [], [], [], []
    for seg in segments:
        lo, hi = max(seg.start, c0), min(seg.end, c0 + n)
        if lo >= hi:
            continue
        pc_seg = seg.phase_coeffs(fs)
        for u0, u1, a in seg.amp_pieces():
            plo, phi = max(lo, seg.start + u0), min(hi, seg.start + u1)
            if plo >= phi:
                continue
            pc = _shift(pc_seg, float(plo - seg.start))
            pc[0] %= 1.0
            ac = _shift(a, float(plo - seg.start - u0))
            span = float(phi - plo)
            bound = 2 * abs(pc[2]) + 6 * abs(pc[3]) * (span + 2) + 12 * abs(pc[4]) * (span + 2) ** 2
            if bound > MAX_STEP_CHANGE:
                raise ParameterError("frequency sweep too fast to render")
            starts.append(plo - c0)
            ends.append(phi - c0)
            dyn.append(_degree(pc[1:]) > 0 or _degree(ac) > 0)
            pcs.append(pc)
            acs.append(ac)
    return (
        np.array(starts, dtype=np.int64),
        np.array(ends, dtype=np.int64),
        np.array(dyn, dtype=np.bool_),
        np.array(pcs, dtype=float).reshape(-1, 5),
        np.array([np.pad(a, (0, 5 - len(a))) for a in acs], dtype=float).reshape(-1, 5),
    )


def amplitude_bound(segments: Sequence[ToneSegment], n_grid: int = 64) -> float:
    """Largest summed amplitude over time, sampled on each segment."""
    if not segments:
        return 0.0
    edges = sorted({s.start for s in segments} | {s.end for s in segments})
    worst = 0.0
    for a, b in zip(edges, edges[1:]):
        t = np.linspace(a, b - 1, n_grid)
        tot = np.zeros_like(t)
        for s in segments:
            if s.start < b and s.end > a:
                tot += _amp_values(s, t - s.start)
        worst = max(worst, float(tot.max()))
    return worst


def _amp_values(seg: ToneSegment, u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u, dtype=float)
    for u0, u1, c in seg.amp_pieces():
        m = (u >= u0) & (u < u1)
        out[m] = np.polyval(c[::-1], u[m] - u0)
    return out


def stream_scale(segments: Sequence[ToneSegment], warn: bool = True) -> float:
    """Gain that keeps |sample| <= 1; below one only when the tones overrange."""
    bound = amplitude_bound(segments)
    if bound <= 1.0:
        return 1.0
    if warn:
        warnings.warn(f"summed tone amplitude {bound:.3g} exceeds 1; normalizing", RuntimeWarning, stacklevel=3)
    return 1.0 / bound


@dataclass
class Chunk:
    samples: np.ndarray
    sample_rate: float
    index: int
    chunk_size: int


def synthesize_chunk(segments: Sequence[ToneSegment], start: int, n: int, fs: float = SAMPLE_RATE, scale: float | None = None, index: int = 0) -> Chunk:
    """Render samples [start, start + n) of the sum of ``segments``.

    ``scale`` defaults to :func:`stream_scale` of the segments, which is the
    same for every chunk of a stream.
    """
    if start < 0 or n <= 0:
        raise ParameterError("chunk must have non-negative start and positive size")
    for seg in segments:
        if seg.f_start >= fs / 2 or seg.f_end >= fs / 2 or seg.f_start < 0 or seg.f_end < 0:
            raise ParameterError("tone frequency outside [0, fs/2)")
    scale = stream_scale(segments) if scale is None else scale
    out = np.zeros(n)
    pieces = _pieces(segments, start, n, fs)
    if pieces[0].size:
        _render(out, *pieces, scale, ANCHOR)
    return Chunk(out.astype(np.float32), fs, index, n)


def synthesize_reference(segments: Sequence[ToneSegment], start: int, n: int, fs: float = SAMPLE_RATE, scale: float = 1.0) -> np.ndarray:
    """Direct per-sample evaluation with numpy; slow, used as the oracle."""
    out = np.zeros(n)
    idx = np.arange(start, start + n)
    for seg in segments:
        m = (idx >= seg.start) & (idx < seg.end)
        if not m.any():
            continue
        u = (idx[m] - seg.start).astype(float)
        ph = np.polyval(seg.phase_coeffs(fs)[::-1], u)
        out[m] += _amp_values(seg, u) * np.sin(2 * np.pi * (ph % 1.0))
    return out * scale


# -- mapping and plans ------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyMap:
    """Affine map between a site coordinate (micrometres) and AOD frequency."""

    f_center: float
    x_center: float
    um_per_hz: float
    band: tuple[float, float]

    def frequency(self, x):
        return self.f_center + (np.asarray(x, dtype=float) - self.x_center) / self.um_per_hz

    def position(self, f):
        return self.x_center + (np.asarray(f, dtype=float) - self.f_center) * self.um_per_hz


def frequency_map(extent: tuple[float, float], band: tuple[float, float] = (45e6, 95e6), um_per_mhz: float = 12.0) -> FrequencyMap:
    """Centre the coordinate range ``extent`` (micrometres) in the AOD band.

    The defaults give 600 um of reach per axis, below the 100.8 MHz Nyquist
    limit at the default sample rate.
    """
    lo, hi = min(extent), max(extent)
    f_lo, f_hi = band
    if not 0 < f_lo < f_hi:
        raise ParameterError("band must be an increasing pair of positive frequencies")
    um_per_hz = um_per_mhz * 1e-6
    if (hi - lo) > (f_hi - f_lo) * um_per_hz * (1 + 1e-12):
        raise ParameterError(f"extent of {hi - lo:.1f} um exceeds the {(f_hi - f_lo) * um_per_hz:.1f} um reach of the band")
    return FrequencyMap((f_lo + f_hi) / 2, (lo + hi) / 2, um_per_hz, (f_lo, f_hi))


def quadrant_frequency_maps(geometry: ArrayGeometry, quadrant: Quadrant, **kw) -> dict[str, FrequencyMap]:
    """Row and column maps covering one quadrant's sites."""
    sites = quadrant.sites
    return {
        "x": frequency_map((float(geometry.x[sites].min()), float(geometry.x[sites].max())), **kw),
        "y": frequency_map((float(geometry.y[sites].min()), float(geometry.y[sites].max())), **kw),
    }


@dataclass(frozen=True)
class StepTiming:
    """Per-step timeline in seconds: ramp-up, settle, move, settle, ramp-down."""

    pickup: float = 100e-6
    settle_in: float = 100e-6
    move: float = 600e-6
    settle_out: float = 100e-6
    dropoff: float = 100e-6

    @property
    def total(self) -> float:
        return self.pickup + self.settle_in + self.move + self.settle_out + self.dropoff


def _samples(t: float, fs: float) -> int:
    return max(1, int(round(t * fs)))


def plan_segments(plan, geometry: ArrayGeometry, maps: dict[str, FrequencyMap], fs: float = SAMPLE_RATE, timing: StepTiming = StepTiming(), amplitude: float | None = None) -> list[ToneSegment]:
    """Tone segments on the moving AOD channel for a sequence of steps.

    A row step moves atoms along x, so its tones live on the x channel map;
    column steps use the y map. Each atom gets a quadratic ramp-up, a hold,
    a constant-jerk sweep, a hold and a quadratic ramp-down. Tone amplitude
    defaults to 1/64.
    """
    amp = 1.0 / 64 if amplitude is None else amplitude
    durs = [_samples(x, fs) for x in (timing.pickup, timing.settle_in, timing.move, timing.settle_out, timing.dropoff)]
    segs: list[ToneSegment] = []
    t = 0
    for step in plan:
        coord = geometry.x if step.axis == "row" else geometry.y
        fmap = maps["x" if step.axis == "row" else "y"]
        for k, (src, dst) in enumerate(zip(step.sources, step.destinations)):
            f0 = float(fmap.frequency(coord[src]))
            f1 = float(fmap.frequency(coord[dst]))
            for f in (f0, f1):
                if not fmap.band[0] - 1 <= f <= fmap.band[1] + 1:
                    raise ParameterError("site outside the AOD band")
            s = t
            tone = [
                ToneSegment(s, durs[0], f0, amp_start=0.0, amp_end=amp, amp_kind="quadratic", phase=(0.618034 * k) % 1.0),
                ToneSegment(s + durs[0], durs[1], f0, amp_start=amp),
                ToneSegment(s + sum(durs[:2]), durs[2], f0, f1, "jerk", amp_start=amp),
                ToneSegment(s + sum(durs[:3]), durs[3], f1, amp_start=amp),
                ToneSegment(s + sum(durs[:4]), durs[4], f1, amp_start=amp, amp_end=0.0, amp_kind="quadratic"),
            ]
            chain_phases(tone, fs)
            segs += tone
        t += sum(durs)
    return segs


# -- streaming ----------------------------------------------------------------------


@dataclass
class StreamStats:
    gen_times_us: list[float]
    deadline_us: float
    chunk_size: int
    sample_rate: float
    n_samples: int = 0
    overflows: int = 0

    @property
    def n_chunks(self) -> int:
        return len(self.gen_times_us)

    @property
    def latency_us(self) -> float:
        return self.gen_times_us[0] if self.gen_times_us else 0.0

    @property
    def mean_us(self) -> float:
        return float(np.mean(self.gen_times_us)) if self.gen_times_us else 0.0

    @property
    def realtime_factor(self) -> float:
        return self.deadline_us / self.mean_us if self.gen_times_us else float("inf")

    @property
    def all_met(self) -> bool:
        return all(t <= self.deadline_us for t in self.gen_times_us)

    def summary(self) -> dict:
        return {
            "n_chunks": self.n_chunks,
            "chunk_size": self.chunk_size,
            "sample_rate": self.sample_rate,
            "deadline_us": self.deadline_us,
            "latency_us": self.latency_us,
            "mean_us": self.mean_us,
            "max_us": max(self.gen_times_us, default=0.0),
            "realtime_factor": self.realtime_factor,
            "all_deadlines_met": self.all_met,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chunk", "generation_us", "deadline_us", "met"])
            for i, t in enumerate(self.gen_times_us):
                w.writerow([i, f"{t:.3f}", f"{self.deadline_us:.3f}", int(t <= self.deadline_us)])


def null_sink(chunk: Chunk) -> None:
    return None


def stream_segments(
    segments: Sequence[ToneSegment],
    fs: float = SAMPLE_RATE,
    chunk_size: int = CHUNK_SIZE,
    sink: Callable[[Chunk], None] = null_sink,
    total: int | None = None,
) -> StreamStats:
    """Generate every chunk in order on a worker thread.

    Chunks pass to ``sink`` through a queue of depth two, so chunk k + 1 is
    synthesized while chunk k is being consumed. Generation time excludes
    waiting on the queue.
    """
    if chunk_size <= 0:
        raise ParameterError("chunk size must be positive")
    total = max((s.end for s in segments), default=0) if total is None else total
    n_chunks = -(-total // chunk_size)
    scale = stream_scale(segments)
    deadline = chunk_size / fs * 1e6
    times: list[float] = []
    q: queue.Queue = queue.Queue(maxsize=2)
    err: list[BaseException] = []
    order = sorted(segments, key=lambda s: s.start)

    def produce():
        try:
            lo = 0
            for k in range(n_chunks):
                c0 = k * chunk_size
                while lo < len(order) and order[lo].end <= c0:
                    lo += 1
                active = [s for s in order[lo:] if s.start < c0 + chunk_size]
                t = time.perf_counter()
                chunk = synthesize_chunk(active, c0, chunk_size, fs, scale, k)
                times.append((time.perf_counter() - t) * 1e6)
                q.put(chunk)
        except BaseException as exc:  # surfaced in the caller
            err.append(exc)
        finally:
            q.put(None)

    worker = threading.Thread(target=produce, daemon=True)
    worker.start()
    while (chunk := q.get()) is not None:
        sink(chunk)
    worker.join()
    if err:
        raise err[0]
    return StreamStats(times, deadline, chunk_size, fs, n_chunks * chunk_size)


def stream_plan(plan, geometry: ArrayGeometry, maps: dict[str, FrequencyMap], chunk_size: int = CHUNK_SIZE, fs: float = SAMPLE_RATE, sink: Callable[[Chunk], None] = null_sink, timing: StepTiming = StepTiming()) -> StreamStats:
    """Stream the moving-AOD waveform of a rearrangement plan."""
    if not plan:
        return StreamStats([], chunk_size / fs * 1e6, chunk_size, fs)
    segs = plan_segments(plan, geometry, maps, fs, timing)
    return stream_segments(segs, fs, chunk_size, sink)


def benchmark_chunk(n_tones: int = 64, chunk_size: int = CHUNK_SIZE, fs: float = SAMPLE_RATE, repeats: int = 10, kind: str = "jerk", rng=0) -> StreamStats:
    """Time the synthesis of one chunk with ``n_tones`` moving tones."""
    gen = np.random.default_rng(rng)
    f0 = gen.uniform(50e6, 90e6, n_tones)
    f1 = gen.uniform(50e6, 90e6, n_tones)
    ramp = {"const": "const", "linear": "linear", "jerk": "jerk"}[kind]
    segs = [ToneSegment(0, chunk_size, a, b if ramp != "const" else a, ramp, 1.0 / n_tones, phase=gen.random()) for a, b in zip(f0, f1)]
    synthesize_chunk(segs, 0, 1024, fs)  # compile
    times = []
    for k in range(repeats):
        t = time.perf_counter()
        synthesize_chunk(segs, 0, chunk_size, fs, 1.0, k)
        times.append((time.perf_counter() - t) * 1e6)
    return StreamStats(times, chunk_size / fs * 1e6, chunk_size, fs, chunk_size * repeats)


# -- raw format ---------------------------------------------------------------------

_HEADER = struct.Struct("<4sHHdI")


class RawWriter:
    """Sink writing chunks to the raw format.

    Header: magic ``TWKW``, version (u16), channel count (u16), sample rate
    (f64), chunk size (u32); then little-endian float32 samples.
    """

    def __init__(self, path, sample_rate: float, chunk_size: int, channels: int = 1):
        self.fh = open(path, "wb")
        self.fh.write(_HEADER.pack(RAW_MAGIC, RAW_VERSION, channels, sample_rate, chunk_size))

    def __call__(self, chunk: Chunk) -> None:
        self.fh.write(np.asarray(chunk.samples, dtype="<f4").tobytes())

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_raw(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, channels, fs, chunk = _HEADER.unpack(head)
        if magic != RAW_MAGIC:
            raise ParameterError("not a raw waveform file")
        data = np.frombuffer(fh.read(), dtype="<f4")
    return {"version": version, "channels": channels, "sample_rate": fs, "chunk_size": chunk}, data


__all__ = [
    "ANCHOR",
    "SAMPLE_RATE",
    "CHUNK_SIZE",
    "ToneSegment",
    "chain_phases",
    "Chunk",
    "synthesize_chunk",
    "synthesize_reference",
    "amplitude_bound",
    "stream_scale",
    "FrequencyMap",
    "frequency_map",
    "quadrant_frequency_maps",
    "StepTiming",
    "plan_segments",
    "StreamStats",
    "null_sink",
    "stream_segments",
    "stream_plan",
    "benchmark_chunk",
    "RawWriter",
    "read_raw",
]
