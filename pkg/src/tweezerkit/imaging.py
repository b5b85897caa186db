"""Photon-count model for single-atom fluorescence imaging.

The atom branch follows a loss-rate picture: photons are collected as a
unit-time Poisson process with mean ``lam1`` and every collection event
loses the atom with probability ``L / lam1``. Integrating that process
gives a reduced-rate Poisson peak plus an incomplete-gamma "bridge" from
atoms lost part way through the exposure.

Alongside the generative model this module carries the model-free
three-image estimator, the pixel weight-kernel optimizer and the simple
exponential decay fits used for lifetime and repeated-imaging data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize, special

from .core import ParameterError, make_rng

# bitstrings y1y2y3 are indexed with y1 as the most significant bit
BITSTRINGS = ("000", "001", "010", "011", "100", "101", "110", "111")
ANOMALOUS = ("001", "010", "011", "101")


class FitError(RuntimeError):
    """A fit did not converge or the data cannot identify the parameters."""


@dataclass(frozen=True)
class HistogramModel:
    """Parameters of the two-branch photon distribution.

    ``F`` is the filling before the first image, ``lam0``/``lam1`` the mean
    background and atom photon numbers, ``r0``/``r1`` the broadening factors
    and ``L`` the pseudo-loss rate. The real loss probability is
    ``1 - exp(-L)``.
    """

    F: float
    lam0: float
    lam1: float
    r0: float = 1.0
    r1: float = 1.0
    L: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.F <= 1.0:
            raise ParameterError(f"F must lie in [0, 1], got {self.F!r}")
        if self.lam0 <= 0 or self.lam1 <= 0:
            raise ParameterError("lam0 and lam1 must be positive")
        if self.r0 <= 0 or self.r1 <= 0:
            raise ParameterError("broadening factors must be positive")
        if not 0.0 <= self.L < self.lam1:
            raise ParameterError(f"need 0 <= L < lam1, got L={self.L!r}, lam1={self.lam1!r}")

    @property
    def true_loss(self) -> float:
        return -math.expm1(-self.L)

    @property
    def survival(self) -> float:
        return math.exp(-self.L)


def _log_poisson(n, lam):
    return n * np.log(lam) - lam - special.gammaln(n + 1.0)


def _bridge(n, lam0, lam1, L):
    """Density of counts from atoms lost during the exposure."""
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    if L == 0:
        return out
    ell = L / lam1
    a = lam0 / (1.0 - ell)
    b = lam1 + a
    pos = n > 0
    npos = n[pos]
    with np.errstate(divide="ignore", invalid="ignore", under="ignore", over="ignore"):
        # Q(n, a) - Q(n, b) equals [Gamma(n, a) - Gamma(n, b)] / (n - 1)!
        diff = special.gammaincc(npos, a) - special.gammaincc(npos, b)
        logv = math.log(ell) + lam0 * L / (lam1 - L) + (npos - 1.0) * math.log1p(-ell)
        out[pos] = np.where(diff > 0, np.exp(logv + np.log(np.where(diff > 0, diff, 1.0))), 0.0)
    return out


def atom_pmf(n, lam0: float, lam1: float, L: float = 0.0, trigger_counted: bool = True) -> np.ndarray:
    """Unbroadened photon distribution for a site that starts with an atom.

    With ``trigger_counted`` the photon whose scattering event removes the
    atom is part of the count, which is the convention the closed form
    describes. Otherwise the bridge term is the same function shifted by
    one photon.
    """
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", under="ignore"):
        first = np.exp(n * np.log(lam0 + lam1 - L) - (lam0 + lam1) - special.gammaln(n + 1.0))
    first = np.where(n >= 0, first, 0.0)
    shift = 0.0 if trigger_counted else 1.0
    return first + _bridge(n + shift, lam0, lam1, L) * (n >= 0)


def empty_pmf(n, lam0: float) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", under="ignore"):
        return np.where(n >= 0, np.exp(_log_poisson(n, lam0)), 0.0)


def lossy_poisson_pmf(model: HistogramModel, n, given: str = "mixture", trigger_counted: bool = True) -> np.ndarray:
    """Photon-count density for ``given`` in {"atom", "empty", "mixture"}.

    Broadening enters as ``P(n / r) / r``, and ``n`` may be non-integer
    because factorials are evaluated through the gamma function.
    """
    n = np.asarray(n, dtype=float)
    p1 = atom_pmf(n / model.r1, model.lam0, model.lam1, model.L, trigger_counted) / model.r1
    p0 = empty_pmf(n / model.r0, model.lam0) / model.r0
    if given == "atom":
        return p1
    if given == "empty":
        return p0
    if given == "mixture":
        return model.F * p1 + (1.0 - model.F) * p0
    raise ParameterError(f"given must be 'atom', 'empty' or 'mixture', got {given!r}")


def pmf_normalization(model: HistogramModel, given: str = "atom", continuous: bool = False) -> float:
    """Sum (or integral) of the density over all counts."""
    r = model.r1 if given == "atom" else model.r0
    top = model.lam0 + model.lam1 + 20.0 * math.sqrt(model.lam0 + model.lam1) + 50.0
    if continuous:
        f = lambda u: float(lossy_poisson_pmf(model, u * r, given) * r)
        return integrate.quad(f, 0.0, top, limit=400, points=[model.lam0, model.lam0 + model.lam1])[0]
    k = np.arange(0, int(top) + 1)
    return float(np.sum(lossy_poisson_pmf(model, k * r, given) * r))


def sample_photons(model: HistogramModel, size: int, rng=None, atom: bool = True, trigger_counted: bool = True):
    """Monte Carlo photon counts for ``size`` sites.

    For the atom branch scattering events arrive as a Poisson process with
    unit-time mean ``lam1``; the index of the first loss-triggering event is
    geometric with success probability ``L / lam1``. Returns the (broadened)
    counts and a boolean survival flag.
    """
    gen = make_rng(rng)
    bg = gen.poisson(model.lam0, size)
    if not atom:
        return bg * model.r0, np.zeros(size, dtype=bool)
    events = gen.poisson(model.lam1, size)
    if model.L > 0:
        first_loss = gen.geometric(model.L / model.lam1, size)
    else:
        first_loss = np.full(size, np.iinfo(np.int64).max)
    survived = first_loss > events
    lost_counts = first_loss if trigger_counted else first_loss - 1
    atom_counts = np.where(survived, events, lost_counts)
    return (bg + atom_counts) * model.r1, survived


def sample_histogram(model: HistogramModel, size: int, rng=None):
    """Counts for a partially filled array; returns (counts, initially_filled)."""
    gen = make_rng(rng)
    filled = gen.random(size) < model.F
    counts = np.empty(size, dtype=float)
    n1 = int(filled.sum())
    counts[filled] = sample_photons(model, n1, gen, atom=True)[0]
    counts[~filled] = sample_photons(model, size - n1, gen, atom=False)[0]
    return counts, filled


def tv_distance_integer(model: HistogramModel, counts, given: str = "atom") -> float:
    """Total-variation distance between integer counts and the model pmf."""
    counts = np.asarray(counts)
    top = int(max(counts.max(), model.lam0 + model.lam1 + 20 * math.sqrt(model.lam0 + model.lam1)))
    k = np.arange(top + 1)
    emp = np.bincount(counts.astype(np.int64), minlength=top + 1)[: top + 1] / counts.size
    pmf = lossy_poisson_pmf(model, k, given)
    return 0.5 * float(np.abs(emp - pmf).sum() + max(0.0, 1.0 - pmf.sum()))


# -- fidelity from the model --------------------------------------------------


def _branch_cdf(model: HistogramModel, given: str, n_grid: int = 20001):
    """Normalized continuous CDF of a branch in the unbroadened variable."""
    top = model.lam0 + model.lam1 + 20.0 * math.sqrt(model.lam0 + model.lam1) + 50.0
    u = np.linspace(0.0, top, n_grid)
    if given == "atom":
        dens = atom_pmf(u, model.lam0, model.lam1, model.L)
    else:
        dens = empty_pmf(u, model.lam0)
    cdf = integrate.cumulative_simpson(dens, x=u, initial=0.0)
    cdf = np.maximum.accumulate(cdf)
    return u, cdf / cdf[-1]


@dataclass
class Threshold:
    T: float
    per_site: np.ndarray | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ParameterError("threshold must be positive")


class _FidelityEvaluator:
    def __init__(self, model: HistogramModel):
        self.model = model
        self.u0, self.c0 = _branch_cdf(model, "empty")
        self.u1, self.c1 = _branch_cdf(model, "atom")

    def __call__(self, T):
        m = self.model
        f0 = np.interp(np.asarray(T) / m.r0, self.u0, self.c0)
        f1 = 1.0 - np.interp(np.asarray(T) / m.r1, self.u1, self.c1)
        return f0, f1, m.F * f1 + (1.0 - m.F) * f0


def model_fidelity(model: HistogramModel, T):
    """(F0, F1, fidelity) for threshold ``T``; counts above ``T`` read as atom.

    Continuous-count densities are not exactly normalized when ``lam0`` is
    small, so both branches are normalized over the half line first.
    """
    return _FidelityEvaluator(model)(T)


def optimal_threshold(model: HistogramModel) -> tuple[Threshold, float]:
    """Threshold between the two peaks that maximises the model fidelity."""
    ev = _FidelityEvaluator(model)
    lo = model.r0 * model.lam0
    hi = model.r1 * (model.lam0 + model.lam1 - model.L)
    if hi <= lo:
        raise FitError("atom peak does not lie above the background peak")
    grid = np.linspace(lo, hi, 401)
    fid = ev(grid)[2]
    i = int(np.argmax(fid))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda t: -float(ev(t)[2]), bounds=(a, b), method="bounded", options={"xatol": 1e-6})
    T = float(res.x) if -res.fun >= fid[i] else float(grid[i])
    return Threshold(T), float(ev(T)[2])


def fidelity_vs_offset(model: HistogramModel, offsets) -> np.ndarray:
    """Fidelity as the threshold is displaced from its optimum."""
    thr, _ = optimal_threshold(model)
    return np.asarray(model_fidelity(model, thr.T + np.asarray(offsets, dtype=float))[2])


# -- histogram fitting ---------------------------------------------------------


@dataclass
class HistogramFit:
    model: HistogramModel
    covariance: np.ndarray
    names: tuple[str, ...]
    chi2: float
    dof: int
    degenerate: bool = False
    message: str = ""

    def stderr(self) -> dict[str, float]:
        return dict(zip(self.names, np.sqrt(np.clip(np.diag(self.covariance), 0, None))))

    def to_dict(self) -> dict:
        return {
            "model": self.model.__dict__,
            "stderr": self.stderr(),
            "covariance": self.covariance.tolist(),
            "chi2": self.chi2,
            "dof": self.dof,
            "degenerate": self.degenerate,
            "message": self.message,
        }


def _two_means(x: np.ndarray, iters: int = 50) -> float:
    """1-D two-cluster split point (Lloyd iterations)."""
    lo, hi = np.percentile(x, [5, 95])
    t = 0.5 * (lo + hi)
    for _ in range(iters):
        a, b = x[x <= t], x[x > t]
        if a.size == 0 or b.size == 0:
            break
        nt = 0.5 * (a.mean() + b.mean())
        if abs(nt - t) < 1e-9:
            break
        t = nt
    return t


def _expected_bins(model: HistogramModel, edges: np.ndarray, integer: bool) -> np.ndarray:
    if integer:
        # integer counts: sum the pmf at the integers inside each bin
        k = np.arange(math.ceil(edges[0]), math.floor(edges[-1]) + 1)
        p = lossy_poisson_pmf(model, k)
        idx = np.clip(np.searchsorted(edges, k, side="right") - 1, 0, edges.size - 2)
        return np.bincount(idx, weights=p, minlength=edges.size - 1)
    sub = 8
    out = np.empty(edges.size - 1)
    x = np.linspace(edges[0], edges[-1], (edges.size - 1) * sub + 1)
    dens = lossy_poisson_pmf(model, x)
    cum = integrate.cumulative_trapezoid(dens, x, initial=0.0)
    out[:] = np.diff(cum[::sub])
    # renormalize each branch over the half line so the continuous form sums to one
    n0 = pmf_normalization(replace(model, F=0.0), "empty", continuous=True)
    n1 = pmf_normalization(model, "atom", continuous=True)
    scale = model.F / n1 + (1.0 - model.F) / n0 if 0 < model.F < 1 else (1.0 / n1 if model.F == 1 else 1.0 / n0)
    return out * scale


def fit_histogram(signals, survival: float | None = None, bins: np.ndarray | int | None = None) -> HistogramFit:
    """Least-squares fit of the mixture density to binned signals.

    Bins default to the Freedman-Diaconis width (integer-aligned for integer
    data) and residuals are weighted by Poisson bin errors. Passing a
    model-free ``survival`` pins ``L = -ln(survival)`` and leaves five free
    parameters.
    """
    x = np.asarray(signals, dtype=float)
    if x.size < 100:
        raise FitError("too few samples to fit a histogram")
    integer = bool(np.all(x == np.round(x)))
    if bins is None or isinstance(bins, int):
        if bins is None:
            q75, q25 = np.percentile(x, [75, 25])
            width = 2 * (q75 - q25) / x.size ** (1 / 3)
            width = max(width, 1.0 if integer else 1e-6)
        else:
            width = (x.max() - x.min()) / bins
        if integer:
            width = max(1, round(width))
            edges = np.arange(x.min() - 0.5, x.max() + width + 0.5, width)
        else:
            edges = np.arange(x.min(), x.max() + width, width)
    else:
        edges = np.asarray(bins, dtype=float)
    hist, _ = np.histogram(x, edges)
    sigma = np.sqrt(np.maximum(hist, 1.0))

    t = _two_means(x)
    lowc, highc = x[x <= t], x[x > t]
    F0 = highc.size / x.size
    diag_msg = ""
    if lowc.size < 10 or highc.size < 10 or F0 < 1e-3 or F0 > 1 - 1e-3:
        diag_msg = "data look single-peaked; filling and atom parameters are unconstrained"
    m0 = max(lowc.mean(), 1e-3) if lowc.size else max(x.mean(), 1e-3)
    r0 = max(lowc.var() / m0, 0.3) if lowc.size > 1 else 1.0
    m1 = highc.mean() if highc.size else 2 * m0
    r1 = max(highc.var() / m1, 0.3) if highc.size > 1 else 1.0
    lam0 = m0 / r0
    lam1 = max(m1 / r1 - lam0, 1e-2)

    pinned = survival is not None
    if pinned:
        if not 0 < survival <= 1:
            raise ParameterError("survival must lie in (0, 1]")
        L_fixed = -math.log(survival)
    names = ("F", "lam0", "lam1", "r0", "r1") + (() if pinned else ("L",))

    def build(p):
        F, l0, l1, a0, a1 = p[:5]
        L = L_fixed if pinned else p[5]
        L = min(L, 0.999 * l1)
        return HistogramModel(F, l0, l1, a0, a1, L)

    n = x.size

    def resid(p):
        r = (hist - n * _expected_bins(build(p), edges, integer)) / sigma
        return np.where(np.isfinite(r), r, 1e6)

    p0 = [F0, lam0, lam1, r0, r1] + ([] if pinned else [0.01 * lam1])
    lb = [0.0, 1e-3, 1e-3, 0.05, 0.05] + ([] if pinned else [0.0])
    ub = [1.0, np.inf, np.inf, 50.0, 50.0] + ([] if pinned else [np.inf])
    p0 = np.clip(p0, np.array(lb) + 1e-9, np.array(ub) - 1e-9)
    if not pinned:
        ub[5] = max(lam1, 1.0) * 10
    res = optimize.least_squares(resid, p0, bounds=(lb, ub), x_scale="jac", xtol=1e-10, ftol=1e-10)
    if not res.success:
        raise FitError(f"histogram fit failed: {res.message}")
    J = res.jac
    try:
        cov = np.linalg.pinv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((len(names), len(names)), np.nan)
    dof = max(hist.size - len(names), 1)
    chi2 = float(np.sum(res.fun**2))
    cov = cov * max(chi2 / dof, 1.0)
    model = build(res.x)
    separation = model.r1 * (model.lam0 + model.lam1 - model.L) - model.r0 * model.lam0
    if not diag_msg and separation < 3.0 * model.r0 * math.sqrt(model.lam0):
        diag_msg = "atom peak is not resolved from the background peak"
    degenerate = bool(diag_msg) or model.F < 1e-3 or model.F > 1 - 1e-3
    if degenerate:
        diag_msg = diag_msg or "fitted filling at a boundary; bimodal fit is degenerate"
        warnings.warn(diag_msg, stacklevel=2)
    return HistogramFit(model, cov, names, chi2, dof, degenerate, diag_msg)


# -- three-image model-free estimator ----------------------------------------


def latent_paths(F: float, S: float) -> dict[str, float]:
    """Probabilities of true presence across three images."""
    return {"111": S * S * F, "110": (1 - S) * S * F, "100": (1 - S) * F, "000": 1 - F}


def bitstring_probs(F: float, S: float, F0: float, F1: float) -> np.ndarray:
    """Detection probabilities of the 8 bitstrings ``y1y2y3``."""
    # rows: true state x, cols: detected y
    cond = np.array([[F0, 1 - F0], [1 - F1, F1]])
    out = np.zeros(8)
    for path, p in latent_paths(F, S).items():
        xs = [int(c) for c in path]
        for idx, y in enumerate(BITSTRINGS):
            ys = [int(c) for c in y]
            out[idx] += p * cond[xs[0], ys[0]] * cond[xs[1], ys[1]] * cond[xs[2], ys[2]]
    return out


@dataclass
class ThreeImageEstimate:
    F: float
    S: float
    F0: float
    F1: float
    covariance: np.ndarray = field(repr=False)
    n_samples: int | None = None
    residual: float = 0.0

    @property
    def fidelity(self) -> float:
        return self.F * self.F1 + (1 - self.F) * self.F0

    def stderr(self) -> dict[str, float]:
        s = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        return dict(zip(("F", "S", "F0", "F1"), s))

    @property
    def fidelity_err(self) -> float:
        g = np.array([self.F1 - self.F0, 0.0, 1 - self.F, self.F])
        return float(np.sqrt(max(g @ self.covariance @ g, 0.0)))


def frequencies_from_bits(bits: np.ndarray) -> np.ndarray:
    """Bitstring frequencies from an (n, 3) array of 0/1 detections."""
    b = np.asarray(bits, dtype=np.int64)
    idx = b[:, 0] * 4 + b[:, 1] * 2 + b[:, 2]
    return np.bincount(idx, minlength=8) / b.shape[0]


def three_image_estimate(freqs, n_samples: int | None = None) -> ThreeImageEstimate:
    """Least-squares inversion of bitstring frequencies to (F, S, F0, F1).

    With ``n_samples`` the covariance is the sandwich estimate for
    multinomial sampling noise; without it the covariance is zero.
    """
    f = np.asarray(freqs, dtype=float)
    if f.shape != (8,):
        raise ParameterError("expected 8 bitstring frequencies ordered 000..111")
    if np.any(f < 0) or abs(f.sum() - 1.0) > 1e-6:
        raise ParameterError("frequencies must be non-negative and sum to 1")
    if np.count_nonzero(f) < 2:
        raise FitError("all mass on one bitstring; parameters are unidentifiable")

    def resid(p):
        return bitstring_probs(*p) - f

    # start from the naive reading: perfect detection
    F_init = f[4:].sum()
    S_init = f[7] / max(f[6] + f[7], 1e-12)
    x0 = np.clip([F_init, S_init, 0.999, 0.999], 1e-6, 1 - 1e-6)
    best = None
    for start in (x0, np.array([0.5, 0.9, 0.9, 0.9])):
        r = optimize.least_squares(resid, start, bounds=([0] * 4, [1] * 4), xtol=1e-15, ftol=1e-15, gtol=1e-15, method="trf")
        if best is None or r.cost < best.cost:
            best = r
    J = best.jac
    if np.linalg.matrix_rank(J, tol=1e-10) < 4:
        raise FitError("bitstring frequencies do not identify all four parameters")
    if n_samples:
        Sigma = (np.diag(f) - np.outer(f, f)) / n_samples
        A = np.linalg.inv(J.T @ J)
        cov = A @ J.T @ Sigma @ J @ A
    else:
        cov = np.zeros((4, 4))
    F, S, F0, F1 = (float(v) for v in best.x)
    return ThreeImageEstimate(F, S, F0, F1, cov, n_samples, float(np.sqrt(2 * best.cost)))


def simulate_bitstring_counts(F: float, S: float, F0: float, F1: float, n: int, rng=None) -> np.ndarray:
    """Bitstring counts for ``n`` independent three-image sequences.

    Sites are drawn onto latent presence paths and each image is then
    misread independently; counts are aggregated per path, which is exact
    and avoids materializing every shot.
    """
    gen = make_rng(rng)
    paths = latent_paths(F, S)
    keys = list(paths)
    per_path = gen.multinomial(n, [paths[k] for k in keys])
    cond = np.array([[F0, 1 - F0], [1 - F1, F1]])
    counts = np.zeros(8, dtype=np.int64)
    for key, m in zip(keys, per_path):
        xs = [int(c) for c in key]
        p = np.array([cond[xs[0], int(y[0])] * cond[xs[1], int(y[1])] * cond[xs[2], int(y[2])] for y in BITSTRINGS])
        counts += gen.multinomial(m, p / p.sum())
    return counts


# -- pixel weight kernel --------------------------------------------------------


def _d4_orbits(size: int = 7) -> np.ndarray:
    """Orbit label of each pixel under the square's symmetry group."""
    c = size // 2
    lab = -np.ones((size, size), dtype=np.int64)
    keys: dict[tuple[int, int], int] = {}
    for i in range(size):
        for j in range(size):
            a, b = sorted((abs(i - c), abs(j - c)))
            lab[i, j] = keys.setdefault((a, b), len(keys))
    return lab


@dataclass
class WeightKernel:
    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or not np.all(np.isfinite(W)):
            raise ParameterError("kernel must be a finite 2-D array")
        m = np.abs(W).max()
        if m == 0:
            raise ParameterError("kernel is identically zero")
        self.W = W / m

    @classmethod
    def uniform(cls, size: int = 7) -> "WeightKernel":
        return cls(np.ones((size, size)))

    def apply(self, boxes: np.ndarray) -> np.ndarray:
        """Weighted signal for boxes of shape (..., k, k)."""
        return np.tensordot(boxes, self.W, axes=([-2, -1], [0, 1]))


def simulate_boxes(
    n_sites: int,
    rng=None,
    F: float = 0.5,
    S: float = 0.999,
    photons: float = 40.0,
    background: float = 0.5,
    waist: float = 1.7,
    size: int = 7,
    n_images: int = 3,
):
    """Camera boxes around each site for repeated images.

    Atoms emit Poisson(``photons``) photons spread over a Gaussian spot of
    1/e^2 radius ``waist`` pixels; every pixel adds Poisson(``background``).
    An atom lost during an image emits a uniform random fraction of its
    photons and is absent afterwards. Returns ``(boxes, presence)`` with
    boxes of shape (n_images, n_sites, size, size).
    """
    gen = make_rng(rng)
    c = (size - 1) / 2
    yy, xx = np.mgrid[0:size, 0:size]
    # integrate the spot over each pixel by 4x4 supersampling
    sub = (np.arange(4) + 0.5) / 4 - 0.5
    psf = np.zeros((size, size))
    for dy in sub:
        for dx in sub:
            psf += np.exp(-2 * ((xx + dx - c) ** 2 + (yy + dy - c) ** 2) / waist**2)
    psf /= psf.sum()
    present = gen.random(n_sites) < F
    boxes = np.empty((n_images, n_sites, size, size))
    presence = np.zeros((n_images, n_sites), dtype=bool)
    for k in range(n_images):
        presence[k] = present
        lost = present & (gen.random(n_sites) > S)
        frac = np.where(lost, gen.random(n_sites), 1.0) * present
        n_ph = gen.poisson(photons * frac)
        img = gen.multinomial(n_ph, psf.ravel()).reshape(n_sites, size, size) if n_sites else np.zeros((0, size, size))
        boxes[k] = img + gen.poisson(background, (n_sites, size, size))
        present = present & ~lost
    return boxes, presence


def anomaly_rate(bits: np.ndarray) -> float:
    """Fraction of sequences whose detections no loss history explains."""
    f = frequencies_from_bits(bits)
    return float(sum(f[BITSTRINGS.index(s)] for s in ANOMALOUS))


def best_threshold(signals: np.ndarray, n_grid: int = 200) -> float:
    """Threshold minimising the hard anomaly rate over three images.

    ``signals`` has shape (3, n_sites).
    """
    flat = signals.ravel()
    t = _two_means(flat)
    lo, hi = flat[flat <= t].mean(), flat[flat > t].mean() if np.any(flat > t) else flat.max()
    grid = np.linspace(lo, hi, n_grid)
    rates = [anomaly_rate((signals > g).T) for g in grid]
    best = np.flatnonzero(np.isclose(rates, min(rates), rtol=0, atol=1e-15))
    # centre of the flat optimum
    return float(grid[best[len(best) // 2]])


def kernel_fidelity(kernel: WeightKernel, boxes: np.ndarray, threshold: float | None = None) -> tuple[float, float]:
    """Three-image fidelity of a kernel on boxes; returns (fidelity, threshold)."""
    sig = kernel.apply(boxes)
    thr = best_threshold(sig) if threshold is None else threshold
    bits = (sig > thr).T
    freqs = frequencies_from_bits(bits)
    try:
        est = three_image_estimate(freqs)
        return est.fidelity, thr
    except FitError:
        return 1.0 - anomaly_rate(bits), thr


@dataclass
class KernelResult:
    kernel: WeightKernel
    fidelity: float
    baseline: float
    improved: bool
    diff_ci: tuple[float, float] | None = None


def _soft_error(params, orbit, bright, dark, tau=0.05):
    w = params[:-1][orbit]
    sb = np.tensordot(bright, w, axes=([-2, -1], [0, 1]))
    sd = np.tensordot(dark, w, axes=([-2, -1], [0, 1]))
    # fix the scale: unit gap between the mean bright and mean dark signal
    gap = sb.mean() - sd.mean()
    if gap <= 0:
        return 1.0 + abs(gap)
    sb, sd = (sb - sd.mean()) / gap, (sd - sd.mean()) / gap
    T = params[-1]
    return float(0.5 * (special.expit((T - sb) / tau).mean() + special.expit((sd - T) / tau).mean()))


def optimize_kernel(train_boxes: np.ndarray, test_boxes: np.ndarray | None = None, rng=None, n_boot: int = 500) -> KernelResult:
    """Fit a symmetric 7x7 pixel kernel that maximises three-image fidelity.

    The kernel is shared across the orbits of the square's symmetry group
    (10 free weights for 7x7). Sites that the plain sum reads identically in
    all three images serve as labelled bright and dark examples, and the
    kernel minimises a logistic (smoothed) misclassification rate on them
    with L-BFGS-B, started from both the flat kernel and the mean spot. The fitted kernel is compared to the plain sum on the
    held-out boxes (the training boxes if none are given) with the real
    estimator and a paired bootstrap over sites. If it does not beat the
    plain sum the uniform kernel is returned with a warning.
    """
    gen = make_rng(rng)
    size = train_boxes.shape[-1]
    orbit = _d4_orbits(size)
    n_orb = int(orbit.max()) + 1
    uniform = WeightKernel.uniform(size)
    sig_u = uniform.apply(train_boxes)
    T0 = best_threshold(sig_u)
    # training labels: sites the plain sum reads as 111 or 000
    bits = sig_u > T0
    sure1 = bits.all(axis=0)
    sure0 = (~bits).all(axis=0)
    bright = train_boxes[:, sure1].reshape(-1, size, size)
    dark = train_boxes[:, sure0].reshape(-1, size, size)
    if bright.shape[0] < 10 or dark.shape[0] < 10:
        warnings.warn("too few unambiguous sites to fit a kernel; returning uniform kernel", stacklevel=2)
        fid_u, _ = kernel_fidelity(uniform, train_boxes if test_boxes is None else test_boxes, T0)
        return KernelResult(uniform, fid_u, fid_u, False)
    profile = bright.mean(axis=0) - dark.mean(axis=0)
    prof_orb = np.array([profile[orbit == k].mean() for k in range(n_orb)])
    prof_orb = np.clip(prof_orb / prof_orb.max(), 0.02, None)
    res = None
    for w0 in (np.ones(n_orb), prof_orb):
        r = optimize.minimize(
            _soft_error, np.concatenate([w0, [0.5]]), args=(orbit, bright, dark), method="L-BFGS-B", options={"maxiter": 300}
        )
        if res is None or r.fun < res.fun:
            res = r
    w = res.x[:-1][orbit]
    test = train_boxes if test_boxes is None else test_boxes
    try:
        cand = WeightKernel(w)
    except ParameterError:
        cand = uniform
    thr_c = best_threshold(cand.apply(train_boxes))
    thr_u = best_threshold(sig_u)
    fid_c, _ = kernel_fidelity(cand, test, thr_c)
    fid_u, _ = kernel_fidelity(uniform, test, thr_u)

    bits_c = (cand.apply(test) > thr_c).T
    bits_u = (uniform.apply(test) > thr_u).T
    n = bits_c.shape[0]
    diffs = np.empty(n_boot)
    for i in range(n_boot):
        idx = gen.integers(0, n, n)
        diffs[i] = anomaly_rate(bits_u[idx]) - anomaly_rate(bits_c[idx])
    ci = (float(np.percentile(diffs, 2.5)), float(np.percentile(diffs, 97.5)))
    improved = fid_c > fid_u and ci[1] > 0
    if not improved:
        warnings.warn("kernel optimization did not improve on the plain sum; returning uniform kernel", stacklevel=2)
        return KernelResult(uniform, fid_u, fid_u, False, ci)
    return KernelResult(cand, fid_c, fid_u, True, ci)


# -- decay fits ---------------------------------------------------------------


@dataclass
class DecayFit:
    value: float
    stderr: float
    amplitude: float
    covariance: np.ndarray = field(repr=False)


def _exp_fit(x, y, sigma):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise FitError("need at least two points")
    slope = np.polyfit(x, np.log(np.clip(y, 1e-300, None)), 1)[0]
    if slope > 0:
        warnings.warn("series increases; decay fit is not meaningful", stacklevel=3)
    k0 = max(-slope, 0.0)
    A0 = float(y[np.argmin(x)]) * math.exp(k0 * x.min())
    f = lambda t, A, k: A * np.exp(-k * t)
    popt, pcov = optimize.curve_fit(
        f, x, y, p0=[A0, k0], sigma=sigma, absolute_sigma=sigma is not None, bounds=([0, 0], [np.inf, np.inf])
    )
    return popt, pcov


def fit_lifetime(t, p, sigma=None) -> DecayFit:
    """Fit ``p(t) = A exp(-t / tau)``; returns tau in the units of ``t``."""
    (A, k), cov = _exp_fit(t, p, sigma)
    if k == 0:
        return DecayFit(math.inf, math.inf, float(A), cov)
    tau = 1.0 / k
    return DecayFit(tau, float(math.sqrt(max(cov[1, 1], 0.0)) / k**2), float(A), cov)


def fit_image_survival(n_images, p, sigma=None) -> DecayFit:
    """Fit ``p(N) = A p1**N``; returns the per-image survival p1."""
    (A, k), cov = _exp_fit(n_images, p, sigma)
    p1 = math.exp(-k)
    return DecayFit(p1, float(p1 * math.sqrt(max(cov[1, 1], 0.0))), float(A), cov)


__all__ = [
    "HistogramModel",
    "FitError",
    "lossy_poisson_pmf",
    "atom_pmf",
    "empty_pmf",
    "pmf_normalization",
    "sample_photons",
    "sample_histogram",
    "tv_distance_integer",
    "model_fidelity",
    "optimal_threshold",
    "fidelity_vs_offset",
    "Threshold",
    "fit_histogram",
    "HistogramFit",
    "bitstring_probs",
    "latent_paths",
    "three_image_estimate",
    "ThreeImageEstimate",
    "frequencies_from_bits",
    "simulate_bitstring_counts",
    "WeightKernel",
    "simulate_boxes",
    "optimize_kernel",
    "kernel_fidelity",
    "best_threshold",
    "anomaly_rate",
    "KernelResult",
    "fit_lifetime",
    "fit_image_survival",
    "DecayFit",
]
