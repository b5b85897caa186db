"""Weighted Gerchberg-Saxton holograms, loading feedback and out-of-plane propagation.

The forward model is scalar Fourier optics: a unitary FFT maps the SLM field
(illumination amplitude times ``exp(i phase)``) onto the focal plane, whose
pixel pitch is ``wavelength * focal_length / (N * pixel_size)``. Tweezer
sites snap to the nearest focal-plane pixel. Lengths are in micrometres
except the focal length, which is in millimetres.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import ParameterError, make_rng

MATRIX_MAGIC = b"TWKM"
MATRIX_VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sHIId")


@dataclass(frozen=True)
class FeedbackGains:
    G: float = 0.6
    g: float = 0.6
    h_cap: float = 4.0

    def __post_init__(self):
        if not (0 < self.G <= 1 and 0 < self.g <= 1):
            raise ParameterError("gains must lie in (0, 1]")
        if self.h_cap <= 1:
            raise ParameterError("h_cap must exceed 1")


@dataclass
class TargetPattern:
    """Focal-plane sites (µm) with WGS goal weights ``W`` and feedback heights ``H``."""

    sites: np.ndarray
    weights: np.ndarray | None = None
    heights: np.ndarray | None = None

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        n = len(self.sites)
        self.weights = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float)
        self.heights = np.ones(n) if self.heights is None else np.asarray(self.heights, dtype=float)
        if self.weights.shape != (n,) or self.heights.shape != (n,):
            raise ParameterError("weights and heights need one entry per site")
        if np.any(self.weights <= 0) or np.any(self.heights <= 0):
            raise ParameterError("weights and heights must be positive")
        self.weights = self.weights / self.weights.mean()

    @property
    def n_sites(self) -> int:
        return len(self.sites)


def grid_target(n_rows: int, n_cols: int, spacing: float = 7.2, center=(0.0, 0.0)) -> TargetPattern:
    y, x = np.mgrid[:n_rows, :n_cols]
    x = (x - (n_cols - 1) / 2) * spacing + center[0]
    y = (y - (n_rows - 1) / 2) * spacing + center[1]
    return TargetPattern(np.column_stack([x.ravel(), y.ravel()]))


@dataclass
class PhaseHologram:
    """Phase pattern (radians, wrapped to [0, 2 pi)) on a square SLM grid.

    ``illumination`` is ``"flat"`` or ``"gaussian"``; the Gaussian beam has
    its 1/e^2 radius at ``beam_fraction`` of the half-width.
    """

    phase: np.ndarray
    pixel_size: float = 9.2
    focal_length: float = 8.0
    wavelength: float = 1.061
    illumination: str = "flat"
    beam_fraction: float = 0.8

    def __post_init__(self):
        self.phase = np.mod(np.asarray(self.phase, dtype=float), 2 * np.pi)
        if self.phase.ndim != 2 or self.phase.shape[0] != self.phase.shape[1]:
            raise ParameterError("hologram phase must be a square matrix")
        if min(self.pixel_size, self.focal_length, self.wavelength) <= 0:
            raise ParameterError("pixel size, focal length and wavelength must be positive")
        if self.illumination not in ("flat", "gaussian"):
            raise ParameterError("illumination must be 'flat' or 'gaussian'")

    @property
    def n(self) -> int:
        return self.phase.shape[0]

    @property
    def window(self) -> float:
        """Full width of the addressable focal-plane window, µm."""
        return self.wavelength * self.focal_length * 1e3 / self.pixel_size

    @property
    def focal_pitch(self) -> float:
        return self.window / self.n

    def amplitude(self) -> np.ndarray:
        return illumination(self.n, self.illumination, self.beam_fraction)

    def with_zernike(self, coeffs: dict[tuple[int, int], float]) -> "PhaseHologram":
        return replace(self, phase=self.phase + zernike_phase(self.n, coeffs))

    def focal_field(self) -> np.ndarray:
        return forward(self.amplitude(), self.phase)

    def site_pixels(self, sites: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Focal-plane pixel (row, col) of each site; rejects unreachable sites."""
        sites = np.atleast_2d(sites)
        half = self.window / 2
        if np.any(np.abs(sites) >= half):
            raise ParameterError(f"sites must lie within +-{half:.1f} µm of the zeroth order")
        ix = self.n // 2 + np.rint(sites[:, 0] / self.focal_pitch).astype(int)
        iy = self.n // 2 + np.rint(sites[:, 1] / self.focal_pitch).astype(int)
        if np.any((ix < 0) | (ix >= self.n) | (iy < 0) | (iy >= self.n)):
            raise ParameterError("site falls outside the simulated focal grid")
        if len(np.unique(iy * self.n + ix)) != len(ix):
            raise ParameterError("two sites share a focal-plane pixel; use a finer grid")
        return iy, ix


def illumination(n: int, kind: str = "flat", beam_fraction: float = 0.8) -> np.ndarray:
    """SLM amplitude normalized to unit total power."""
    if kind == "flat":
        a = np.ones((n, n))
    else:
        c = (np.arange(n) - n / 2) / (n / 2)
        r2 = c[None, :] ** 2 + c[:, None] ** 2
        a = np.exp(-r2 / beam_fraction**2)
    return a / np.sqrt(np.sum(a**2))


def forward(amplitude: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """SLM field to focal field with the zeroth order at the centre pixel."""
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(amplitude * np.exp(1j * phase)), norm="ortho"))


def backward(focal: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(focal), norm="ortho"))


def diffraction_efficiency(x, y, pixel_size: float, wavelength: float, focal_length: float):
    """sinc^2 pixel envelope; ``x``, ``y`` and ``pixel_size`` in µm, λ in µm, f in mm."""
    if min(pixel_size, wavelength, focal_length) <= 0:
        raise ParameterError("pixel size, wavelength and focal length must be positive")
    scale = pixel_size / (wavelength * focal_length * 1e3)
    # np.sinc(u) = sin(pi u) / (pi u)
    return np.sinc(np.asarray(x) * scale) ** 2 * np.sinc(np.asarray(y) * scale) ** 2


def _efficiency(holo: PhaseHologram, sites: np.ndarray) -> np.ndarray:
    return diffraction_efficiency(sites[:, 0], sites[:, 1], holo.pixel_size, holo.wavelength, holo.focal_length)


def spot_intensities(holo: PhaseHologram, target: TargetPattern) -> np.ndarray:
    """Per-site power fraction, including the pixel diffraction efficiency."""
    iy, ix = holo.site_pixels(target.sites)
    field_ = holo.focal_field()
    return np.abs(field_[iy, ix]) ** 2 * _efficiency(holo, target.sites)


def relative_std(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.std() / values.mean())


@dataclass
class WGSResult:
    hologram: PhaseHologram
    intensities: np.ndarray
    history: list[float]
    spot_weights: np.ndarray

    @property
    def uniformity(self) -> float:
        """Relative std of intensity divided by the goal W^2."""
        return self.history[-1]


def wgs_optimize(
    target: TargetPattern,
    iters: int = 30,
    rng=None,
    n_pixels: int = 512,
    weighted: bool = True,
    template: PhaseHologram | None = None,
    spot_weights: np.ndarray | None = None,
) -> WGSResult:
    """Weighted Gerchberg-Saxton phase retrieval.

    Each site aims at amplitude ``W / sqrt(DE)`` so that, after the pixel
    envelope, its intensity follows ``W^2``. With ``weighted=False`` this is
    plain Gerchberg-Saxton. ``template`` supplies the SLM parameters and a
    warm-start phase; ``spot_weights`` continues a previous run.
    """
    if iters < 1:
        raise ParameterError("iters must be at least 1")
    gen = make_rng(rng)
    if template is None:
        holo = PhaseHologram(gen.uniform(0, 2 * np.pi, (n_pixels, n_pixels)))
    else:
        holo = replace(template)
    iy, ix = holo.site_pixels(target.sites)
    de = _efficiency(holo, target.sites)
    goal = target.weights / np.sqrt(de)
    goal = goal / np.sqrt(np.mean(goal**2))
    amp = holo.amplitude()
    w = np.ones(target.n_sites) if spot_weights is None else np.asarray(spot_weights, dtype=float).copy()
    ideal = target.weights**2
    phase = holo.phase
    history = []
    for _ in range(iters):
        focal = forward(amp, phase)
        e = focal[iy, ix]
        mag = np.abs(e)
        history.append(relative_std(mag**2 * de / ideal))
        if weighted:
            ratio = mag / goal
            w *= ratio.mean() / ratio
        drive = np.zeros_like(focal)
        drive[iy, ix] = w * goal * np.exp(1j * np.angle(e))
        phase = np.angle(backward(drive))
    holo = replace(holo, phase=phase)
    inten = spot_intensities(holo, target)
    history.append(relative_std(inten / ideal))
    return WGSResult(holo, inten, history, w)


def weights_from_heights(heights: np.ndarray, G: float) -> np.ndarray:
    w = 1 - G * (1 - np.sqrt(heights))
    return w / w.mean()


def update_weights(target: TargetPattern, loading, gains: FeedbackGains = FeedbackGains()) -> TargetPattern:
    """One loading-feedback step on heights and goal weights.

    ``H <- H [1 - g (1 - P / <P>)]``, clipped to [1/h_cap, h_cap], then
    ``W = 1 - G (1 - sqrt(H))`` normalized to unit mean.
    """
    p = np.asarray(loading, dtype=float)
    if p.shape != (target.n_sites,):
        raise ParameterError("need one loading probability per site")
    if np.any((p < 0) | (p > 1)):
        raise ParameterError("loading probabilities must lie in [0, 1]")
    if p.mean() <= 0:
        raise ParameterError("feedback undefined for all-zero loading")
    h = target.heights * (1 - gains.g * (1 - p / p.mean()))
    h = np.clip(h, 1 / gains.h_cap, gains.h_cap)
    return TargetPattern(target.sites, weights_from_heights(h, gains.G), h)


def loading_model(depth, mean_loading: float = 0.512, kappa: float = -1.0) -> np.ndarray:
    """Stand-in loading curve ``clip(mean_loading (U / <U>)^kappa, 0, 1)``."""
    u = np.asarray(depth, dtype=float)
    return np.clip(mean_loading * (u / u.mean()) ** kappa, 0.0, 1.0)


@dataclass
class LoopHistory:
    loading_std: list[float] = field(default_factory=list)
    loading: list[np.ndarray] = field(default_factory=list)
    targets: list[TargetPattern] = field(default_factory=list)
    hologram: PhaseHologram | None = None

    def converged_within(self, threshold: float, iterations: int) -> bool:
        return any(s < threshold for s in self.loading_std[1 : iterations + 1])


def closed_loop(
    target: TargetPattern,
    transmission,
    gains: FeedbackGains = FeedbackGains(),
    iterations: int = 5,
    wgs_iters: int = 20,
    rng=None,
    n_pixels: int = 256,
    kappa: float = -1.0,
    mean_loading: float = 0.512,
    shots: int | None = None,
) -> LoopHistory:
    """Simulate loading-based feedback on top of WGS.

    ``transmission`` is a per-site factor unknown to the hologram model
    (aberrations, angle-dependent optics). Depth is the simulated spot
    intensity times that factor. The first record is before any feedback.
    With ``shots``, the measured loading is a binomial estimate; the
    recorded std always refers to the true loading probability.
    """
    gen = make_rng(rng)
    t = np.asarray(transmission, dtype=float)
    hist = LoopHistory()
    res = wgs_optimize(target, wgs_iters, gen, n_pixels)
    for k in range(iterations + 1):
        depth = res.intensities * t
        p = loading_model(depth, mean_loading, kappa)
        hist.loading.append(p)
        hist.loading_std.append(relative_std(p))
        hist.targets.append(target)
        if k == iterations:
            break
        measured = p if shots is None else gen.binomial(shots, p) / shots
        target = update_weights(target, measured, gains)
        res = wgs_optimize(target, wgs_iters, gen, template=res.hologram, spot_weights=res.spot_weights)
    hist.hologram = res.hologram
    return hist


# -- aberration hooks ---------------------------------------------------------


def zernike(n: int, m: int, rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Unnormalized Zernike polynomial Z_n^m on the unit disc (zero outside)."""
    if n < 0 or abs(m) > n or (n - abs(m)) % 2:
        raise ParameterError(f"invalid Zernike indices ({n}, {m})")
    am = abs(m)
    r = np.zeros_like(rho)
    for k in range((n - am) // 2 + 1):
        c = (-1) ** k * math.factorial(n - k) / (math.factorial(k) * math.factorial((n + am) // 2 - k) * math.factorial((n - am) // 2 - k))
        r = r + c * rho ** (n - 2 * k)
    ang = np.cos(am * theta) if m >= 0 else np.sin(am * theta)
    return np.where(rho <= 1, r * ang, 0.0)


def zernike_phase(n_pixels: int, coeffs: dict[tuple[int, int], float]) -> np.ndarray:
    c = (np.arange(n_pixels) - n_pixels / 2 + 0.5) / (n_pixels / 2)
    x, y = np.meshgrid(c, c)
    rho, theta = np.hypot(x, y), np.arctan2(y, x)
    out = np.zeros((n_pixels, n_pixels))
    for (n, m), value in coeffs.items():
        out += value * zernike(n, m, rho, theta)
    return out


def optimize_zernike(
    objective: Callable[[dict], float],
    modes: Sequence[tuple[int, int]],
    start: dict | None = None,
    step: float = 0.1,
    iters: int = 50,
    h: float = 1e-3,
) -> tuple[dict, float]:
    """Minimize a scalar objective of Zernike coefficients by gradient descent.

    The objective is a black box (a measured signal on hardware, a
    simulated one here); gradients come from central differences and the
    step halves whenever it fails to improve.
    """
    c = np.array([0.0 if start is None else start.get(mode, 0.0) for mode in modes])

    def f(v):
        return float(objective(dict(zip(modes, v))))

    best = f(c)
    for _ in range(iters):
        grad = np.array([(f(c + h * e) - f(c - h * e)) / (2 * h) for e in np.eye(len(c))])
        trial = c - step * grad
        val = f(trial)
        if val < best:
            c, best = trial, val
        else:
            step /= 2
            if step < 1e-9:
                break
    return dict(zip(modes, c)), best


# -- out-of-plane propagation -----------------------------------------------------


@dataclass
class FieldSlice:
    """Intensity on the (tweezer axis x, propagation axis z) plane, max = 1."""

    intensity: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def axial_profile(self, x0: float) -> np.ndarray:
        return self.intensity[:, int(np.argmin(np.abs(self.x - x0)))]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z_um", "x_um", "intensity"])
            for i, z in enumerate(self.z):
                for j, x in enumerate(self.x):
                    w.writerow([f"{z:.6g}", f"{x:.6g}", f"{self.intensity[i, j]:.6g}"])


def required_step(wavelength: float, na: float) -> float:
    """Largest grid step that samples every propagating component up to ``na``."""
    return wavelength / (2 * na)


def propagate_out_of_plane(
    sites,
    z,
    amplitudes=None,
    wavelengths=None,
    waist: float = 1.17,
    wavelength: float = 1.061,
    dx: float = 0.25,
    na: float = 0.65,
    margin: float = 20.0,
    slice_y: float = 0.0,
) -> FieldSlice:
    """Angular-spectrum propagation of Gaussian spots placed at ``sites``.

    Sites with different entries in ``wavelengths`` are mutually incoherent:
    each colour is propagated on its own and the intensities add.
    ``amplitudes`` carries the complex spot amplitudes (for example from
    :func:`site_amplitudes`).
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    amps = np.ones(len(sites), complex) if amplitudes is None else np.asarray(amplitudes, complex)
    lams = np.full(len(sites), wavelength) if wavelengths is None else np.asarray(wavelengths, float)
    need = min(required_step(lams.min(), na), waist / 3)
    if dx > need:
        raise ParameterError(f"grid step {dx} µm under-samples the field; need dx <= {need:.3g} µm")
    lo = sites.min(axis=0) - margin
    hi = sites.max(axis=0) + margin
    nx = int(2 ** math.ceil(math.log2((hi[0] - lo[0]) / dx)))
    ny = int(2 ** math.ceil(math.log2(max(hi[1] - lo[1], 2 * margin) / dx)))
    x = lo[0] + dx * np.arange(nx)
    y = 0.5 * (lo[1] + hi[1]) + dx * (np.arange(ny) - ny // 2)
    row = int(np.argmin(np.abs(y - slice_y)))
    kx = 2 * np.pi * np.fft.fftfreq(nx, dx)
    ky = 2 * np.pi * np.fft.fftfreq(ny, dx)
    k2 = kx[None, :] ** 2 + ky[:, None] ** 2
    out = np.zeros((len(z), nx))
    for lam in np.unique(lams):
        sel = lams == lam
        e0 = np.zeros((ny, nx), complex)
        for (sx, sy), a in zip(sites[sel], amps[sel]):
            gx = np.exp(-((x - sx) ** 2) / waist**2)
            gy = np.exp(-((y - sy) ** 2) / waist**2)
            e0 += a * gy[:, None] * gx[None, :]
        k = 2 * np.pi / lam
        kz = np.sqrt(np.maximum(k**2 - k2, 0.0))
        band = k2 <= (k * na) ** 2
        spec = np.fft.fft2(e0) * band
        for i, zi in enumerate(z):
            e = np.fft.ifft2(spec * np.exp(1j * kz * zi))
            out[i] += np.abs(e[row]) ** 2
    return FieldSlice(out / out.max(), x, z)


def checkerboard_wavelengths(sites, spacing: float, pair=(1.061, 1.055)) -> np.ndarray:
    """Alternate two wavelengths so that nearest neighbours never share one."""
    ij = np.rint(np.atleast_2d(sites) / spacing).astype(int)
    return np.where((ij[:, 0] + ij[:, 1]) % 2 == 0, pair[0], pair[1])


def site_amplitudes(holo: PhaseHologram, target: TargetPattern) -> np.ndarray:
    """Complex focal-plane amplitude of each site from the forward model."""
    iy, ix = holo.site_pixels(target.sites)
    return holo.focal_field()[iy, ix] * np.sqrt(_efficiency(holo, target.sites))


def offaxis_peak(slc: FieldSlice, x0: float, z_min: float) -> float:
    """Largest intensity on the axis through ``x0`` beyond ``|z| >= z_min``."""
    prof = slc.axial_profile(x0)
    far = np.abs(slc.z) >= z_min
    return float(prof[far].max() / prof.max()) if far.any() else 0.0


# -- binary export ----------------------------------------------------------------


def save_matrix(path, matrix: np.ndarray, pitch: float) -> None:
    """Little-endian float64 matrix with a (magic, version, rows, cols, pitch) header."""
    m = np.asarray(matrix, dtype="<f8")
    if m.ndim != 2:
        raise ParameterError("expected a 2D matrix")
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, m.shape[0], m.shape[1], float(pitch)))
        fh.write(m.tobytes())


def load_matrix(path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        magic, version, rows, cols, pitch = _MATRIX_HEADER.unpack(fh.read(_MATRIX_HEADER.size))
        if magic != MATRIX_MAGIC or version != MATRIX_VERSION:
            raise ParameterError("not a matrix file of a supported version")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ParameterError("matrix file is truncated")
    return data.reshape(rows, cols).copy(), pitch


__all__ = [
    "FeedbackGains",
    "TargetPattern",
    "grid_target",
    "PhaseHologram",
    "illumination",
    "forward",
    "backward",
    "diffraction_efficiency",
    "spot_intensities",
    "relative_std",
    "WGSResult",
    "wgs_optimize",
    "weights_from_heights",
    "update_weights",
    "loading_model",
    "LoopHistory",
    "closed_loop",
    "zernike",
    "zernike_phase",
    "optimize_zernike",
    "FieldSlice",
    "required_step",
    "propagate_out_of_plane",
    "checkerboard_wavelengths",
    "site_amplitudes",
    "offaxis_peak",
    "save_matrix",
    "load_matrix",
]
