"""Fits for randomized benchmarking, interleaved move benchmarking and coherence."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from ..core import HBAR, K_B, ParameterError, make_rng


class FitError(RuntimeError):
    """A fit failed to converge or produced an unusable covariance."""


def _curve_fit(f, x, y, p0, sigma=None, bounds=(-np.inf, np.inf), what="fit"):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p, cov = curve_fit(f, x, y, p0=p0, sigma=sigma, absolute_sigma=sigma is not None, bounds=bounds, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"{what} did not converge: {exc}") from exc
    if not np.all(np.isfinite(cov)):
        raise FitError(f"{what}: covariance is not finite; the data do not constrain every parameter")
    return p, cov


def _require_decay(x, y, what):
    slope = np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)[0]
    if not slope < 0:
        raise FitError(f"{what} does not decay with n (slope {slope:.3g}); nothing to fit")


# -- randomized benchmarking ----------------------------------------------------


def rb_model(n, d0, d):
    return 0.5 + 0.5 * (1 - d0) * (1 - d) ** np.asarray(n, dtype=float)


@dataclass
class RBFit:
    d0: float
    d: float
    covariance: np.ndarray = field(repr=False)

    @property
    def fidelity(self) -> float:
        """Average fidelity per step, 1 - d/2."""
        return 1 - self.d / 2

    @property
    def fidelity_err(self) -> float:
        return math.sqrt(self.covariance[1, 1]) / 2

    def __call__(self, n):
        return rb_model(n, self.d0, self.d)


def fit_rb(lengths, probs, sigma=None) -> RBFit:
    """Fit P(n) = 1/2 + 1/2 (1 - d0)(1 - d)^n."""
    n = np.asarray(lengths, dtype=float)
    p = np.asarray(probs, dtype=float)
    if n.size < 3:
        raise FitError("need at least three lengths")
    par, cov = _curve_fit(rb_model, n, p, [0.01, 1e-3], sigma, ([-1.0, 0.0], [1.0, 1.0]), "RB fit")
    return RBFit(float(par[0]), float(par[1]), cov)


# -- interleaved benchmarking of moves --------------------------------------------


def clipped_survival(n, a, b):
    """S_n = 1 - exp(-1 / (a + b n)); S_0 = 1 when a = 0."""
    x = a + b * np.asarray(n, dtype=float)
    with np.errstate(divide="ignore"):
        return 1.0 - np.exp(-1.0 / x)


@dataclass
class InterleavedFit:
    """Per-move fidelity curve with a bootstrap confidence band.

    ``fidelity`` holds the point estimate at each move number in ``n``;
    ``lo`` and ``hi`` bound the central 68% interval. ``params`` maps
    parameter names to best-fit values.
    """

    n: np.ndarray
    fidelity: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    params: dict
    extra: dict = field(default_factory=dict)

    def contains(self, value: float, index: int = 0) -> bool:
        return bool(self.lo[index] <= value <= self.hi[index])


def _mvn(gen, mean, cov, size):
    cov = 0.5 * (cov + cov.T)
    return gen.multivariate_normal(mean, cov, size=size, check_valid="ignore")


def irb_transport_fit(moves, survival, ret, sigma_s=None, sigma_r=None, n_eval=None, rng=None, n_boot=10000) -> InterleavedFit:
    """Fidelity per move from interleaved transport benchmarking.

    Survival is fitted to a clipped Boltzmann form. The return probability
    is then fitted to ``S_n (1/2 + 1/2 (1 - d0)(1 - d)^n)`` with the survival
    parameters held fixed. The fidelity of move n is
    ``F_n = (1 - d/2) S_{n+1} / S_n``; the band comes from a parametric
    bootstrap over both fits.
    """
    m = np.asarray(moves, dtype=float)
    s = np.asarray(survival, dtype=float)
    r = np.asarray(ret, dtype=float)
    _require_decay(m, r, "return series")
    (a, b), cov_s = _curve_fit(clipped_survival, m, s, [0.05, 0.005], sigma_s, ([0.0, 0.0], [10.0, 10.0]), "survival fit")

    def ret_model(n, d0, d):
        return clipped_survival(n, a, b) * rb_model(n, d0, d)

    (d0, d), cov_r = _curve_fit(ret_model, m, r, [0.01, 1e-3], sigma_r, ([-1.0, 0.0], [1.0, 1.0]), "return fit")
    n_eval = np.arange(1, int(m.max()) + 1) if n_eval is None else np.asarray(n_eval, dtype=float)

    def fid(a_, b_, d_):
        with np.errstate(invalid="ignore", divide="ignore"):
            return (1 - d_ / 2) * clipped_survival(n_eval + 1, a_, b_) / clipped_survival(n_eval, a_, b_)

    gen = make_rng(rng)
    ab = np.clip(_mvn(gen, [a, b], cov_s, n_boot), 0, None)
    dd = _mvn(gen, [d0, d], cov_r, n_boot)[:, 1]
    samples = fid(ab[:, :1], ab[:, 1:], dd[:, None])
    samples = samples[np.all(np.isfinite(samples), axis=1)]
    lo, hi = np.percentile(samples, [16, 84], axis=0)
    return InterleavedFit(n_eval, fid(a, b, d), lo, hi, {"a": a, "b": b, "d0": d0, "d": d}, {"cov_s": cov_s, "cov_r": cov_r})


def early_exponential_fit(moves, ret, n_max: int, sigma=None) -> tuple[float, float]:
    """Plain exponential A p^n over the first moves; returns (p, err).

    Used as a cross-check: while n d is small, 1/2 + 1/2 (1 - d)^n is close
    to (1 - d/2)^n, so p estimates the early per-move fidelity with loss
    counted against it.
    """
    m = np.asarray(moves, dtype=float)
    sel = m <= n_max
    sig = None if sigma is None else np.asarray(sigma)[sel]
    (A, p), cov = _curve_fit(lambda n, A, p: A * p**n, m[sel], np.asarray(ret)[sel], [1.0, 0.999], sig, what="early fit")
    return float(p), math.sqrt(cov[1, 1])


def transfer_survival(n, p0, p, b):
    """S_n = p0 p^n (1 - exp(-1 / (b n)))."""
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore"):
        return p0 * p**n * (1.0 - np.exp(-1.0 / (b * n)))


def transfer_fidelities(n, survival_params, depol_params):
    """(conservative, depolarizing) fidelity of transfer n from S and D parameters."""
    n = np.asarray(n, dtype=float)
    sr = transfer_survival(n + 1, *survival_params) / transfer_survival(n, *survival_params)
    dr = transfer_survival(n + 1, *depol_params) / transfer_survival(n, *depol_params)
    return sr * dr, (0.5 + 0.5 * sr) * dr


def _binomial_sigma(p, shots):
    q = (np.asarray(p) * shots + 1) / (shots + 2)
    return np.sqrt(q * (1 - q) / shots)


def irb_transfer_fit(transfers, survival, ret, shots: int | None = None, sigma_s=None, sigma_r=None, n_eval=None, rng=None, n_outer=200, n_inner=20) -> InterleavedFit:
    """Fidelity per transfer from interleaved transfer benchmarking.

    Survival ``S_n`` and the depolarizing factor ``D_n`` (with ``R_n =
    S_n D_n``) share the same functional form. Two estimates are returned:
    the conservative ``(S_{n+1}/S_n)(D_{n+1}/D_n)`` in ``fidelity`` and the
    depolarizing one ``(1/2 + S_{n+1}/(2 S_n))(D_{n+1}/D_n)`` in
    ``extra["depolarizing"]``.

    The band is a nested bootstrap. With ``shots`` (total shots per point)
    the outer level redraws survivor counts from the fitted S and refits S,
    and the inner level redraws return counts among those survivors and
    refits D. Without it, parameter draws from the fit covariances are used
    instead, which runs faster but gave narrower-than-nominal bands in
    coverage tests.
    """
    m = np.asarray(transfers, dtype=float)
    if np.any(m <= 0):
        raise ParameterError("transfer counts must be positive")
    s = np.asarray(survival, dtype=float)
    r = np.asarray(ret, dtype=float)
    _require_decay(m, r, "return series")
    if shots is not None:
        sigma_s = _binomial_sigma(s, shots) if sigma_s is None else sigma_s
        sigma_r = _binomial_sigma(r, shots) if sigma_r is None else sigma_r
    bounds = ([0.0, 0.0, 1e-6], [1.5, 1.0, 10.0])
    start = [1.0, 0.999, 0.01]

    def fit_s(data, sig):
        return _curve_fit(transfer_survival, m, data, start, sig, bounds, "survival fit")

    def fit_d(sp, data, sig):
        model = lambda n, q0, q, c: transfer_survival(n, *sp) * transfer_survival(n, q0, q, c)  # noqa: E731
        return _curve_fit(model, m, data, start, sig, bounds, "return fit")

    ps, cov_s = fit_s(s, sigma_s)
    pd, cov_d = fit_d(ps, r, sigma_r)
    n_eval = np.arange(1, int(m.max())) if n_eval is None else np.asarray(n_eval, dtype=float)

    def both(sp, dp):
        return transfer_fidelities(n_eval, sp, dp)

    cons, depol = both(ps, pd)
    gen = make_rng(rng)
    out_c, out_d = [], []
    if shots is not None:
        S = np.clip(transfer_survival(m, *ps), 0, 1)
        D = np.clip(transfer_survival(m, *pd), 0, 1)
        for _ in range(n_outer):
            alive = gen.binomial(shots, S)
            s_b = alive / shots
            try:
                sp, _ = fit_s(s_b, _binomial_sigma(s_b, shots))
            except FitError:
                continue
            for _ in range(n_inner):
                r_b = gen.binomial(alive, D) / shots
                try:
                    dp, _ = fit_d(sp, r_b, _binomial_sigma(r_b, shots))
                except FitError:
                    continue
                c, d = both(sp, dp)
                out_c.append(c)
                out_d.append(d)
    else:
        for sp in _mvn(gen, ps, cov_s, n_outer):
            sp = np.clip(sp, bounds[0], bounds[1])
            try:
                dp_fit, dcov = fit_d(sp, r, sigma_r)
            except FitError:
                continue
            for dp in _mvn(gen, dp_fit, dcov, n_inner):
                c, d = both(sp, np.clip(dp, bounds[0], bounds[1]))
                out_c.append(c)
                out_d.append(d)
    if not out_c:
        raise FitError("every bootstrap refit failed")
    out_c, out_d = np.array(out_c), np.array(out_d)
    lo, hi = np.nanpercentile(out_c, [16, 84], axis=0)
    dlo, dhi = np.nanpercentile(out_d, [16, 84], axis=0)
    return InterleavedFit(
        n_eval,
        cons,
        lo,
        hi,
        {"p0": ps[0], "p": ps[1], "b": ps[2], "q0": pd[0], "q": pd[1], "c": pd[2]},
        {"depolarizing": depol, "depolarizing_lo": dlo, "depolarizing_hi": dhi, "n_boot": len(out_c)},
    )


# -- coherence --------------------------------------------------------------------


def t2star_inhomogeneous(eta: float, depth_spread: float) -> float:
    """T2* = sqrt(2) hbar / (eta dU) for a Gaussian spread dU (J) of trap depths."""
    if eta <= 0 or depth_spread <= 0:
        raise ParameterError("eta and depth spread must be positive")
    return math.sqrt(2) * HBAR / (eta * depth_spread)


def temperature_from_t2star(eta: float, t2star: float) -> float:
    """Atom temperature (K) implied by a thermal-motion T2* in one trap."""
    if eta <= 0 or t2star <= 0:
        raise ParameterError("eta and T2* must be positive")
    return math.sqrt(math.exp(2 / 3) - 1) * 2 * HBAR / (eta * K_B * t2star)


def max_rb_fidelity(step_time, t2star: float):
    """Upper bound on RB fidelity per step of duration t set by thermal dephasing."""
    t = np.asarray(step_time, dtype=float)
    return 0.75 + 0.25 * (1 + 0.95 * (t / t2star) ** 2) ** -1.5


def ramsey_model(t, amp, t2, freq, phase, offset):
    return offset + 0.5 * amp * np.exp(-((t / t2) ** 2)) * np.cos(2 * np.pi * freq * t + phase)


@dataclass
class RamseyFit:
    t2star: float
    t2star_err: float
    freq: float
    params: np.ndarray = field(repr=False)


def fit_ramsey(t, p1, freq_guess: float, t2_guess: float) -> RamseyFit:
    """Fit fringes with a Gaussian envelope and return T2*."""
    t = np.asarray(t, dtype=float)
    p = np.asarray(p1, dtype=float)
    best = None
    for ph in (0.0, np.pi / 2, np.pi, 3 * np.pi / 2):
        try:
            par, cov = _curve_fit(ramsey_model, t, p, [1.0, t2_guess, freq_guess, ph, 0.5], what="Ramsey fit")
        except FitError:
            continue
        res = np.sum((ramsey_model(t, *par) - p) ** 2)
        if best is None or res < best[0]:
            best = (res, par, cov)
    if best is None:
        raise FitError("Ramsey fit failed from every start")
    _, par, cov = best
    return RamseyFit(abs(par[1]), math.sqrt(cov[1, 1]), par[2], par)


def echo_line_phase_oracle(line_phase, amp: float, freq: float = 60.0):
    """P(|1>) after a spin echo with tau = half a line period, ideal pulses.

    The two free-evolution halves pick up phases of opposite sign, so the
    residual phase is 4 A cos(phi) / (2 pi f).
    """
    w = 2 * np.pi * freq
    resid = 4 * amp * np.cos(np.asarray(line_phase, dtype=float)) / w
    return 0.5 * (1 - np.cos(resid))


__all__ = [
    "FitError",
    "rb_model",
    "RBFit",
    "fit_rb",
    "clipped_survival",
    "InterleavedFit",
    "irb_transport_fit",
    "early_exponential_fit",
    "transfer_survival",
    "transfer_fidelities",
    "irb_transfer_fit",
    "t2star_inhomogeneous",
    "temperature_from_t2star",
    "max_rb_fidelity",
    "ramsey_model",
    "RamseyFit",
    "fit_ramsey",
    "echo_line_phase_oracle",
]
