"""Density-matrix simulation of pulse sequences with quasi-static noise.

Shots differ in their quasi-static detuning, Rabi error and (optionally)
the phase of the mains line noise; all shots are propagated together as a
stack of 2x2 density matrices. Depolarization is applied as the exact
channel ``rho -> (1 - d) rho + d tr(rho) I / 2`` so no Pauli sampling is
needed. Loss at a move marker only scales the survival weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core import HBAR, ParameterError, make_rng
from .gates import I2, Marker, Pulse, Wait, X, Y, Z, clifford_group, compile_gates

_PAULI = np.stack([X, Y, Z])


@dataclass
class NoiseModel:
    """Noise sources acting on the qubit.

    Detunings are angular frequencies (rad/s). ``line_phase=None`` draws a
    random phase of the 60 Hz term for every shot, as for an experiment not
    triggered on the mains.
    """

    detuning: float = 0.0
    detuning_std: float = 0.0
    rabi_std: float = 0.0
    rabi_offset: float = 0.0
    line_amp: float = 0.0
    line_freq: float = 60.0
    line_phase: float | None = None
    depol_per_pulse: float = 0.0
    depol_per_gate: float = 0.0
    move_depol: float = 0.0
    move_survival: Callable[[int], float] | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("depol_per_pulse", "depol_per_gate", "move_depol"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")
        if self.detuning_std < 0 or self.rabi_std < 0:
            raise ParameterError("standard deviations must be non-negative")

    @classmethod
    def from_depth_spread(cls, eta: float, depth_std: float, **kw) -> "NoiseModel":
        """Quasi-static detuning from a Gaussian spread of trap depths (J)."""
        return cls(detuning_std=eta * depth_std / HBAR, **kw)


def clipped_boltzmann(a: float, b: float) -> Callable[[int], float]:
    """Conditional survival of the k-th move for S_n = 1 - exp(-1/(a + b n))."""

    def surv(n):
        with np.errstate(divide="ignore"):
            return 1.0 - np.exp(-1.0 / (a + b * np.asarray(n, dtype=float)))

    return lambda k: float(surv(k) / surv(k - 1)) if surv(k - 1) > 0 else 0.0


@dataclass
class SimResult:
    p1: float
    p0: float
    survival: float
    per_shot_p1: np.ndarray = field(repr=False)


def _su2_stack(theta_axis: np.ndarray) -> np.ndarray:
    """exp(-i/2 * v . sigma) for a stack of rotation vectors v (n, 3)."""
    ang = np.linalg.norm(theta_axis, axis=1)
    safe = np.where(ang > 0, ang, 1.0)
    n = theta_axis / safe[:, None]
    c = np.cos(ang / 2)[:, None, None]
    s = np.sin(ang / 2)[:, None, None]
    gen = np.einsum("ni,ijk->njk", n, _PAULI)
    return c * I2[None] - 1j * s * gen


def _line_integral(noise: NoiseModel, phase: np.ndarray, t0: float, t1: float) -> np.ndarray:
    if noise.line_amp == 0:
        return 0.0
    w = 2 * math.pi * noise.line_freq
    return noise.line_amp / w * (np.cos(w * t0 + phase) - np.cos(w * t1 + phase))


def _depolarize(rho: np.ndarray, d: float) -> np.ndarray:
    if d == 0:
        return rho
    tr = np.trace(rho, axis1=1, axis2=2)
    return (1 - d) * rho + d * tr[:, None, None] * I2[None] / 2


def simulate_sequence(
    seq: Sequence,
    noise: NoiseModel | None = None,
    rng=None,
    omega: float = 2 * math.pi * 24.611e3,
    n_shots: int = 1,
    t0: float = 0.0,
    initial: int = 0,
) -> SimResult:
    """Propagate ``seq`` from |initial> and return populations and survival.

    Items: :class:`Pulse` (duration ``theta / omega``), :class:`Wait`,
    :class:`Marker` (``"gate"`` applies per-gate depolarization,
    ``"move"`` applies the move channel) and bare 2x2 arrays, applied as
    instantaneous ideal unitaries.
    """
    noise = NoiseModel() if noise is None else noise
    gen = make_rng(rng)
    n = int(n_shots)
    static = noise.detuning + (gen.normal(0.0, noise.detuning_std, n) if noise.detuning_std else np.zeros(n))
    rabi = 1.0 + noise.rabi_offset + (gen.normal(0.0, noise.rabi_std, n) if noise.rabi_std else np.zeros(n))
    if noise.line_phase is None:
        phase = gen.uniform(0, 2 * math.pi, n) if noise.line_amp else np.zeros(n)
    else:
        phase = np.full(n, float(noise.line_phase))
    rho = np.zeros((n, 2, 2), dtype=complex)
    rho[:, initial, initial] = 1.0
    alive = np.ones(n)
    t = t0
    moves = 0
    for item in seq:
        if isinstance(item, Pulse):
            dt = item.theta / omega
            # average detuning over the pulse, exact for the static part
            if noise.line_amp:
                delta = static + _line_integral(noise, phase, t, t + dt) / dt
            else:
                delta = static
            v = np.empty((n, 3))
            v[:, 0] = rabi * omega * math.cos(item.phi) * dt
            v[:, 1] = rabi * omega * math.sin(item.phi) * dt
            v[:, 2] = delta * dt
            U = _su2_stack(v)
            rho = U @ rho @ U.conj().transpose(0, 2, 1)
            rho = _depolarize(rho, noise.depol_per_pulse)
            t += dt
        elif isinstance(item, Wait):
            dt = item.duration
            phi = static * dt + _line_integral(noise, phase, t, t + dt)
            e = np.exp(-0.5j * phi)
            # rz(phi) rho rz(phi)^dag only changes the coherence
            rho = rho.copy()
            rho[:, 0, 1] *= e * e
            rho[:, 1, 0] *= np.conj(e * e)
            t += dt
        elif isinstance(item, Marker):
            if item.name == "gate":
                rho = _depolarize(rho, noise.depol_per_gate)
            elif item.name == "move":
                moves += 1
                rho = _depolarize(rho, noise.move_depol)
                if noise.move_survival is not None:
                    alive = alive * noise.move_survival(moves)
        elif isinstance(item, np.ndarray):
            rho = item[None] @ rho @ item.conj().T[None]
        else:
            raise ParameterError(f"unknown sequence item {item!r}")
    p1 = rho[:, 1, 1].real
    return SimResult(float(p1.mean()), float(1 - p1.mean()), float(alive.mean()), p1)


# -- sequence builders -----------------------------------------------------------


def random_clifford_string(length: int, rng) -> list[int]:
    gen = make_rng(rng)
    return gen.integers(0, 24, length).tolist()


def _inverse_of(indices: Sequence[int], group) -> np.ndarray:
    u = I2.copy()
    for i in indices:
        u = group[i] @ u
    return u.conj().T


def rb_sequence(indices: Sequence[int], level: str = "pulse", composite: bool = True, group=None, moves: int = 0, dd: Sequence | None = None) -> list:
    """Clifford string followed by its inverse.

    ``moves`` inserts a move marker after each of the first ``moves`` gates
    (interleaved benchmarking); ``dd`` is an optional pulse block played
    around each marker. At the pulse level gates are compiled to SCROFULOUS
    pulses with virtual Z rotations and a gate marker follows each gate.
    """
    group = clifford_group() if group is None else group
    gates = [group[i] for i in indices] + [_inverse_of(indices, group)]
    seq: list = []
    zeta = 0.0
    for k, g in enumerate(gates):
        if level == "gate":
            seq.append(g)
        elif level == "pulse":
            pulses, zeta = compile_gates([g], composite, zeta)
            seq += pulses
        else:
            raise ParameterError("level must be 'gate' or 'pulse'")
        seq.append(Marker("gate"))
        if k < moves:
            if dd is not None:
                seq += list(dd)
            seq.append(Marker("move"))
    return seq


@dataclass
class BenchmarkData:
    """Shot-sampled benchmarking data at each length (or move count)."""

    x: np.ndarray
    ret: np.ndarray
    survival: np.ndarray
    shots: int
    per_string: np.ndarray = field(repr=False)

    def sigma(self, which: str = "ret") -> np.ndarray:
        """Binomial standard error with a Laplace-smoothed p, so that points
        at exactly 0 or 1 do not get zero weight-denominators."""
        p = self.ret if which == "ret" else self.survival
        n = self.shots * self.per_string.shape[1]
        q = (p * n + 1) / (n + 2)
        return np.sqrt(q * (1 - q) / n)


def simulate_rb(
    lengths: Sequence[int],
    noise: NoiseModel | None = None,
    rng=None,
    n_strings: int = 60,
    shots: int = 100,
    level: str = "gate",
    omega: float = 2 * math.pi * 24.611e3,
    n_noise_samples: int = 1,
) -> BenchmarkData:
    """Randomized benchmarking: return probability of the initial state."""
    gen = make_rng(rng)
    group = clifford_group()
    lengths = np.asarray(lengths, dtype=int)
    per = np.empty((lengths.size, n_strings))
    for i, m in enumerate(lengths):
        for j in range(n_strings):
            idx = random_clifford_string(int(m), gen)
            res = simulate_sequence(rb_sequence(idx, level, group=group), noise, gen, omega, n_noise_samples)
            per[i, j] = gen.binomial(shots, min(max(res.p0, 0.0), 1.0)) / shots if shots else res.p0
    return BenchmarkData(lengths, per.mean(axis=1), np.ones(lengths.size), shots, per)


def simulate_irb(
    move_counts: Sequence[int],
    noise: NoiseModel,
    rng=None,
    n_total: int = 80,
    n_strings: int = 72,
    shots: int = 100,
) -> BenchmarkData:
    """Interleaved benchmarking of a move channel at the gate level.

    ``n_total`` Cliffords are applied with a move after each of the first
    M of them; survival and return (survived and back in the initial
    state) are shot-sampled.
    """
    gen = make_rng(rng)
    group = clifford_group()
    counts = np.asarray(move_counts, dtype=int)
    if np.any(counts > n_total):
        raise ParameterError("more moves than gates")
    ret = np.empty((counts.size, n_strings))
    surv = np.empty((counts.size, n_strings))
    for i, m in enumerate(counts):
        for j in range(n_strings):
            idx = random_clifford_string(n_total, gen)
            res = simulate_sequence(rb_sequence(idx, "gate", group=group, moves=int(m)), noise, gen)
            alive = gen.binomial(shots, min(max(res.survival, 0.0), 1.0))
            back = gen.binomial(alive, min(max(res.p0, 0.0), 1.0)) if alive else 0
            surv[i, j] = alive / shots
            ret[i, j] = back / shots
    return BenchmarkData(counts, ret.mean(axis=1), surv.mean(axis=1), shots, ret)


def synthetic_transfer_data(transfers, p0, p, b, q0, q, c, rng=None, n_strings: int = 72, shots: int = 100) -> BenchmarkData:
    """Shot-sampled transfer benchmarking data drawn from the survival model
    ``S_n = p0 p^n (1 - exp(-1/(b n)))`` and depolarizing factor ``D_n`` of the
    same form with (q0, q, c)."""
    gen = make_rng(rng)
    n = np.asarray(transfers, dtype=float)
    boltz = lambda k, x: 1.0 - np.exp(-1.0 / (x * k))  # noqa: E731
    S = np.clip(p0 * p**n * boltz(n, b), 0, 1)
    D = np.clip(q0 * q**n * boltz(n, c), 0, 1)
    total = n_strings * shots
    alive = gen.binomial(total, S)
    back = gen.binomial(alive, D)
    per = np.repeat((back / total)[:, None], n_strings, axis=1)
    return BenchmarkData(n.astype(int), back / total, alive / total, shots, per)


def ramsey_sequence(t: float) -> list:
    return [Pulse(math.pi / 2, 0.0), Wait(t), Pulse(math.pi / 2, 0.0)]


def echo_sequence(tau: float) -> list:
    return [Pulse(math.pi / 2, 0.0), Wait(tau), Pulse(math.pi, 0.0), Wait(tau), Pulse(math.pi / 2, 0.0)]


def simulate_ramsey(times: Sequence[float], noise: NoiseModel, rng=None, n_shots: int = 2000, omega: float = 2 * math.pi * 24.611e3) -> np.ndarray:
    """P(|1>) after a Ramsey sequence; the same shots are used at every time."""
    seed = make_rng(rng).integers(2**63)
    return np.array([simulate_sequence(ramsey_sequence(t), noise, np.random.default_rng(seed), omega, n_shots).p1 for t in times])


__all__ = [
    "NoiseModel",
    "SimResult",
    "BenchmarkData",
    "clipped_boltzmann",
    "simulate_sequence",
    "rb_sequence",
    "random_clifford_string",
    "simulate_rb",
    "simulate_irb",
    "synthetic_transfer_data",
    "ramsey_sequence",
    "echo_sequence",
    "simulate_ramsey",
]
