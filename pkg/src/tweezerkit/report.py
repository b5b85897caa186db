"""Report figures; each function writes one PNG and returns its path."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loading_feedback(history, path, threshold: float | None = None) -> Path:
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
    a.plot(np.arange(len(history.loading_std)), 100 * np.asarray(history.loading_std), "o-")
    if threshold is not None:
        a.axhline(100 * threshold, color="k", ls="--", lw=1)
    a.set_xlabel("feedback iteration")
    a.set_ylabel("loading rel. std (%)")
    b.hist(history.loading[0], bins=30, alpha=0.5, label="before")
    b.hist(history.loading[-1], bins=30, alpha=0.7, label="after")
    b.set_xlabel("loading probability")
    b.legend()
    return _save(fig, path)


def plot_field_slice(slc, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.pcolormesh(slc.x, slc.z, slc.intensity, shading="auto", cmap="magma")
    fig.colorbar(im, ax=ax, label="intensity (norm.)")
    ax.set_xlabel("x (µm)")
    ax.set_ylabel("z (µm)")
    ax.set_title(title)
    return _save(fig, path)


def plot_histogram(signals, fit, path, threshold: float | None = None) -> Path:
    from .imaging import lossy_poisson_pmf

    signals = np.asarray(signals)
    fig, ax = plt.subplots(figsize=(6, 4))
    top = int(np.percentile(signals, 99.9)) + 5
    edges = np.arange(-0.5, top + 1.5)
    ax.hist(signals, bins=edges, density=True, alpha=0.6, label="data")
    n = np.arange(0, top + 1)
    ax.plot(n, lossy_poisson_pmf(fit.model, n), "k-", lw=1, label="fit")
    if threshold is not None:
        ax.axvline(threshold, color="r", ls="--", lw=1, label="threshold")
    ax.set_yscale("log")
    ax.set_ylim(1e-6, None)
    ax.set_xlabel("photons")
    ax.set_ylabel("probability")
    ax.legend()
    return _save(fig, path)


def plot_survival_curve(curve, path, target: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(curve.durations * 1e6, curve.survival, curve.errors, fmt="o-", capsize=2)
    if target is not None:
        ax.axhline(target, color="k", ls="--", lw=1)
    ax.set_xlabel("move duration (µs)")
    ax.set_ylabel("survival")
    return _save(fig, path)


def plot_rb(data, fit, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(data.x, data.ret, data.sigma("ret"), fmt="o", capsize=2, label="simulated")
    n = np.linspace(0, max(data.x), 200)
    ax.plot(n, fit(n), "k-", label=f"F = {fit.fidelity:.6f}")
    ax.set_xlabel("Clifford gates")
    ax.set_ylabel("return probability")
    ax.legend()
    return _save(fig, path)


def plot_irb(data, fit, path, truth: float | None = None) -> Path:
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
    a.errorbar(data.x, data.survival, data.sigma("survival"), fmt="s", ms=3, label="survival")
    a.errorbar(data.x, data.ret, data.sigma("ret"), fmt="o", ms=3, label="return")
    a.set_xlabel("operations")
    a.legend()
    b.fill_between(fit.n, fit.lo, fit.hi, alpha=0.3)
    b.plot(fit.n, fit.fidelity, "k-")
    if truth is not None:
        b.axhline(truth, color="r", ls="--", lw=1)
    b.set_xlabel("operation index n")
    b.set_ylabel("F_n")
    return _save(fig, path)


def plot_stream(stats, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    t = np.asarray(stats.gen_times_us)
    ax.hist(t / 1e3, bins=min(30, max(5, t.size)))
    ax.axvline(stats.deadline_us / 1e3, color="r", ls="--", lw=1, label="deadline")
    ax.set_xlabel("chunk generation time (ms)")
    ax.set_ylabel("chunks")
    ax.legend()
    return _save(fig, path)


def plot_plan_stats(stats_list, path) -> Path:
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
    a.hist([s.n_steps for s in stats_list], bins=20)
    a.set_xlabel("steps per quadrant")
    b.hist(np.concatenate([s.longest_per_step for s in stats_list]), bins=30)
    b.set_xlabel("longest move per step (µm)")
    return _save(fig, path)


__all__ = [
    "plot_loading_feedback",
    "plot_field_slice",
    "plot_histogram",
    "plot_survival_curve",
    "plot_rb",
    "plot_irb",
    "plot_stream",
    "plot_plan_stats",
]
