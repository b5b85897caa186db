"""Command-line front end.

Every subcommand takes ``--config``, ``--seed``, ``--out`` and ``--mode``,
writes its outputs plus ``manifest.json`` into ``--out`` and exits with 0
only when the checks of that pipeline pass.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .core import ParameterError, TrapParams, config_hash, json_dump, make_rng

COMMANDS = ("wgs", "image-sim", "image-fit", "transport", "plan", "waveform-bench", "rb", "irb", "budget")


class Run:
    """Collects outputs and the pass/fail verdict of one invocation."""

    def __init__(self, args, cfg: dict):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.checks: dict[str, bool] = {}
        self.summary: dict = {}
        self.lines: list[str] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(str(p))
        return p

    def check(self, name: str, ok: bool) -> None:
        self.checks[name] = bool(ok)

    def say(self, line: str) -> None:
        self.lines.append(line)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    try:
        out["tweezerkit"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["tweezerkit"] = None
    return out


# -- subcommands ------------------------------------------------------------------


def cmd_wgs(run: Run) -> None:
    from . import hologram as hg
    from .report import plot_loading_feedback

    c = run.cfg["wgs"]
    gen = make_rng(run.args.seed)
    target = hg.grid_target(c["rows"], c["cols"], c["spacing_um"])
    trans = np.exp(gen.normal(0.0, c["transmission_std"], target.n_sites))
    gains = hg.FeedbackGains(c["G"], c["g"], c["h_cap"])
    hist = hg.closed_loop(target, trans, gains, c["feedback_iterations"], c["wgs_iters"], gen, c["n_pixels"], c["kappa"], c["mean_loading"])
    hg.save_matrix(run.path("hologram.bin"), hist.hologram.phase, hist.hologram.pixel_size)
    with open(run.path("loading.csv"), "w") as fh:
        fh.write("iteration,site,loading\n")
        for k, p in enumerate(hist.loading):
            fh.writelines(f"{k},{i},{v:.6g}\n" for i, v in enumerate(p))
    plot_loading_feedback(hist, run.path("loading_feedback.png"), c["max_loading_std"])
    run.summary = {"loading_rel_std": hist.loading_std, "n_sites": target.n_sites}
    run.check("loading_uniformity", hist.converged_within(c["max_loading_std"], c["feedback_iterations"]))
    run.say("loading rel. std per iteration: " + ", ".join(f"{100 * s:.2f}%" for s in hist.loading_std))


def _histogram_model(c):
    from .imaging import HistogramModel

    return HistogramModel(c["F"], c["lam0"], c["lam1"], c["r0"], c["r1"], c["L"])


def cmd_image_sim(run: Run) -> None:
    from .imaging import BITSTRINGS, sample_histogram, simulate_bitstring_counts

    c = run.cfg["imaging"]
    gen = make_rng(run.args.seed)
    counts, filled = sample_histogram(_histogram_model(c), c["n_sites"], gen)
    np.savetxt(run.path("signals.csv"), np.column_stack([counts, filled]), fmt=["%.6g", "%d"], delimiter=",", header="signal,filled", comments="")
    bits = simulate_bitstring_counts(c["F"], c["survival"], c["fidelity0"], c["fidelity1"], c["n_sites"], gen)
    json_dump(dict(zip(BITSTRINGS, bits.tolist())), run.path("bitstrings.json"))
    run.summary = {"n_sites": c["n_sites"], "filled_fraction": float(filled.mean())}
    run.check("generated", counts.size == c["n_sites"])
    run.say(f"simulated {counts.size} sites, filling {filled.mean():.4f}")


def cmd_image_fit(run: Run) -> None:
    from .imaging import BITSTRINGS, fit_histogram, optimal_threshold, sample_histogram, simulate_bitstring_counts, three_image_estimate
    from .report import plot_histogram

    c = run.cfg["imaging"]
    gen = make_rng(run.args.seed)
    if run.args.input:
        signals = np.loadtxt(run.args.input, delimiter=",", skiprows=1, ndmin=2)[:, 0]
    else:
        signals = sample_histogram(_histogram_model(c), c["n_sites"], gen)[0]
    if run.args.bits:
        with open(run.args.bits) as fh:
            raw = json.load(fh)
        bits = np.array([raw[b] for b in BITSTRINGS], dtype=float)
    else:
        bits = simulate_bitstring_counts(c["F"], c["survival"], c["fidelity0"], c["fidelity1"], c["n_sites"], gen).astype(float)
    fit = fit_histogram(signals)
    thr, fid = optimal_threshold(fit.model)
    est = three_image_estimate(bits / bits.sum(), int(bits.sum()))
    plot_histogram(signals, fit, run.path("histogram.png"), thr.T)
    run.summary = {
        "histogram_fit": fit.to_dict(),
        "threshold": thr.T,
        "model_fidelity": fid,
        "three_image": {"F": est.F, "S": est.S, "F0": est.F0, "F1": est.F1, "fidelity": est.fidelity, "fidelity_err": est.fidelity_err, "stderr": est.stderr()},
    }
    json_dump(run.summary, run.path("fit.json"))
    run.check("fit_not_degenerate", not fit.degenerate)
    run.check("model_fidelity", fid >= c["min_fidelity"])
    run.say(f"threshold {thr.T:.2f}, model fidelity {fid:.6f}, three-image fidelity {est.fidelity:.6f} +- {est.fidelity_err:.1e}")


def cmd_transport(run: Run) -> None:
    from .report import plot_survival_curve
    from .transport import LensingModel, survival_curve

    c = run.cfg["transport"]
    t = run.cfg["trap"]
    kind = run.args.mode or c["kind"]
    trap = TrapParams.from_mk(c["depth_mk"], t["waist_um"], t["wavelength_nm"])
    lensing = LensingModel(waist=trap.waist, wavelength=trap.wavelength)
    durations = np.asarray(c["durations_us"], float) * 1e-6
    curve = survival_curve(lensing, trap, c["distance_um"], durations, kind, c["axis"], c["temperature_uk"] * 1e-6, c["n_samples"], run.args.seed)
    curve.to_csv(run.path("survival.csv"))
    plot_survival_curve(curve, run.path("survival.png"), c["survival_target"])
    run.summary = {"durations_s": curve.durations, "survival": curve.survival, "kind": kind}
    run.check("target_reached", curve.survival.max() >= c["survival_target"])
    for T, s in zip(curve.durations, curve.survival):
        run.say(f"T = {T * 1e6:7.1f} us  survival {s:.4f}")


def _quadrants(run: Run):
    from .core import make_circular_array, partition_quadrants

    g = run.cfg["geometry"]
    geom = make_circular_array(g["spacing_um"], g["radius_um"], g["n_rows"])
    quads = partition_quadrants(geom, target_shape=(g["target_rows"], g["target_cols"]))
    return geom, quads


def cmd_plan(run: Run) -> None:
    from .core import sample_occupancy
    from .rearrange import assign_durations, plan_stats, plan_to_text, tetris_plan
    from .report import plot_plan_stats

    c = run.cfg["plan"]
    fill = run.args.fill if run.args.fill is not None else c["fill"]
    geom, quads = _quadrants(run)
    occ = sample_occupancy(geom, fill, run.args.seed)
    if c["quadrant"] != "all":
        quads = [q for q in quads if q.name == c["quadrant"]]
        if not quads:
            raise ParameterError(f"no quadrant named {c['quadrant']!r}")
    stats = {}
    all_stats = []
    t0 = time.perf_counter()
    for q in quads:
        plan = tetris_plan(occ, q, geom.spacing)
        assign_durations(plan)
        run.path(f"plan_{q.name}.txt").write_text(plan_to_text(plan))
        st = plan_stats(plan, occ, q)
        all_stats.append(st)
        stats[q.name] = {"steps": st.n_steps, "mean_atoms": st.mean_atoms, "mean_longest_um": st.mean_longest, "filled": st.filled, "targets": st.n_targets}
        run.check(f"filled_{q.name}", st.filled == st.n_targets)
        run.say(f"{q.name}: {st.n_steps} steps, {st.mean_atoms:.1f} atoms/step, longest {st.mean_longest:.1f} um, filled {st.filled}/{st.n_targets}")
    run.summary = {"fill": fill, "quadrants": stats, "compute_s": time.perf_counter() - t0}
    json_dump(run.summary, run.path("plan_stats.json"))
    plot_plan_stats(all_stats, run.path("plan_stats.png"))


def cmd_waveform_bench(run: Run) -> None:
    from .core import sample_occupancy
    from .rearrange import plan_from_text, tetris_plan
    from .report import plot_stream
    from .waveform import benchmark_chunk, quadrant_frequency_maps, stream_plan

    c = run.cfg["waveform"]
    geom, quads = _quadrants(run)
    q = quads[c["quadrant"]]
    if run.args.input:
        plan = plan_from_text(Path(run.args.input).read_text())
    else:
        occ = sample_occupancy(geom, run.cfg["plan"]["fill"], run.args.seed)
        plan = tetris_plan(occ, q, geom.spacing)
    maps = quadrant_frequency_maps(geom, q)
    stream = stream_plan(plan, geom, maps, c["chunk_size"])
    bench = benchmark_chunk(c["n_tones"], c["chunk_size"], repeats=c["repeats"], kind=run.args.mode or c["kind"], rng=run.args.seed)
    stream.to_csv(run.path("stream.csv"))
    bench.to_csv(run.path("bench.csv"))
    plot_stream(stream, run.path("stream.png"))
    run.summary = {"stream": stream.summary(), "benchmark": bench.summary(), "n_steps": len(plan)}
    run.check("stream_deadlines", stream.all_met)
    run.check("chunk_time", bench.mean_us <= c["max_chunk_ms"] * 1e3)
    run.say(f"stream: {stream.n_chunks} chunks, latency {stream.latency_us / 1e3:.2f} ms, real-time factor {stream.realtime_factor:.2f}")
    run.say(f"{c['n_tones']}-tone chunk: mean {bench.mean_us / 1e3:.2f} ms (limit {c['max_chunk_ms']} ms), deadline {bench.deadline_us / 1e3:.2f} ms")


def cmd_rb(run: Run) -> None:
    from .qubit import NoiseModel, fit_rb, simulate_rb
    from .report import plot_rb

    c = run.cfg["rb"]
    noise = NoiseModel(depol_per_gate=c["depol_per_gate"])
    data = simulate_rb(c["lengths"], noise, run.args.seed, c["n_strings"], c["shots"], c["level"])
    fit = fit_rb(data.x, data.ret, data.sigma("ret"))
    expected = 1 - c["depol_per_gate"] / 2
    err = fit.fidelity_err
    plot_rb(data, fit, run.path("rb.png"))
    run.summary = {"fidelity": fit.fidelity, "fidelity_err": err, "expected": expected, "d0": fit.d0, "d": fit.d}
    json_dump(run.summary, run.path("rb.json"))
    run.check("recovered", abs(fit.fidelity - expected) <= max(3 * err, 1e-9))
    run.say(f"F_c = {fit.fidelity:.7f} +- {err:.1e} (expected {expected:.7f})")


def cmd_irb(run: Run) -> None:
    from .qubit import (NoiseModel, clipped_boltzmann, irb_transfer_fit, irb_transport_fit, simulate_irb,
                        synthetic_transfer_data, transfer_fidelities)
    from .report import plot_irb

    c = run.cfg["irb"]
    mode = run.args.mode or "transport"
    gen = make_rng(run.args.seed)
    if mode == "transport":
        noise = NoiseModel(move_depol=c["move_depol"], move_survival=clipped_boltzmann(c["survival_a"], c["survival_b"]))
        data = simulate_irb(c["moves"], noise, gen, n_strings=c["n_strings"], shots=c["shots"])
        fit = irb_transport_fit(data.x, data.survival, data.ret, data.sigma("survival"), data.sigma("ret"), rng=gen)
        truth = {"fidelity": 1 - c["move_depol"] / 2}
        run.check("contains_truth", fit.contains(truth["fidelity"]))
    elif mode == "transfer":
        sp = (c["transfer_p0"], c["transfer_p"], c["transfer_b"])
        dp = (c["transfer_q0"], c["transfer_q"], c["transfer_c"])
        data = synthetic_transfer_data(c["transfers"], *sp, *dp, gen, c["n_strings"], c["shots"])
        fit = irb_transfer_fit(data.x, data.survival, data.ret, c["n_strings"] * c["shots"], rng=gen)
        cons, dep = transfer_fidelities(1, sp, dp)
        truth = {"fidelity": float(cons), "depolarizing": float(dep)}
        run.check("contains_conservative", fit.contains(truth["fidelity"]))
        run.check("contains_depolarizing", fit.extra["depolarizing_lo"][0] <= dep <= fit.extra["depolarizing_hi"][0])
    else:
        raise ParameterError("irb mode must be 'transport' or 'transfer'")
    plot_irb(data, fit, run.path("irb.png"), truth["fidelity"])
    run.summary = {"mode": mode, "F_1": float(fit.fidelity[0]), "ci": [float(fit.lo[0]), float(fit.hi[0])], "truth": truth, "params": fit.params}
    json_dump(run.summary, run.path("irb.json"))
    run.say(f"{mode}: F_1 = {fit.fidelity[0]:.6f}, 68% CI [{fit.lo[0]:.6f}, {fit.hi[0]:.6f}], truth {truth['fidelity']:.6f}")


def cmd_budget(run: Run) -> None:
    from .planner import TimingConfig, budget_csv, budget_table, time_budget

    c = dict(run.cfg["budget"])
    expect = {"parallel": c.pop("expected_parallel_ms"), "sequential": c.pop("expected_sequential_ms")}
    tol = c.pop("tolerance_ms")
    cfg = TimingConfig(**c)
    modes = ("parallel", "sequential") if run.args.mode in (None, "both") else (run.args.mode,)
    totals = {m: time_budget(cfg, m) for m in modes}
    run.path("budget.csv").write_text(budget_csv(cfg))
    run.summary = {"totals_ms": totals}
    run.say(budget_table(cfg))
    for m, v in totals.items():
        run.say(f"{m}: total {v:.3f} ms (~{v:.0f} ms)")
        run.check(m, abs(v - expect[m]) <= tol)


HANDLERS = {
    "wgs": cmd_wgs,
    "image-sim": cmd_image_sim,
    "image-fit": cmd_image_fit,
    "transport": cmd_transport,
    "plan": cmd_plan,
    "waveform-bench": cmd_waveform_bench,
    "rb": cmd_rb,
    "irb": cmd_irb,
    "budget": cmd_budget,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file overriding the shipped defaults")
    common.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    common.add_argument("--out", default="tweezerkit-out", help="output directory")
    common.add_argument("--mode", help="command variant (budget: parallel|sequential|both; irb: transport|transfer; transport: sine|jerk|cubic; waveform-bench: const|linear|jerk)")
    p = argparse.ArgumentParser(prog="tweezerkit", description="Control-plane simulations for large tweezer arrays.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "plan":
            sp.add_argument("--fill", type=float, help="loading probability per site")
        if name in ("image-fit", "waveform-bench"):
            sp.add_argument("--input", help="signals CSV (image-fit) or plan file (waveform-bench)")
        if name == "image-fit":
            sp.add_argument("--bits", help="bitstring counts JSON from image-sim")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for attr in ("fill", "input", "bits"):
        if not hasattr(args, attr):
            setattr(args, attr, None)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    run = Run(args, cfg)
    t0 = time.perf_counter()
    try:
        HANDLERS[args.command](run)
    except (ParameterError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    wall = time.perf_counter() - t0
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:] if argv is None else list(argv),
        "config_path": args.config,
        "config_hash": config_hash(cfg),
        "config": cfg,
        "seed": args.seed,
        "mode": args.mode,
        "versions": _versions(),
        "outputs": run.outputs,
        "wall_time_s": wall,
        "checks": run.checks,
        "passed": run.passed,
        "summary": run.summary,
    }
    json_dump(manifest, run.out / "manifest.json")
    for line in run.lines:
        print(line)
    for name, ok in run.checks.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    print(f"wall time {wall:.2f} s; outputs in {run.out}")
    return 0 if run.passed else 1


if __name__ == "__main__":
    sys.exit(main())
