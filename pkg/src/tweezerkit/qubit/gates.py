"""Single-qubit gates, the Clifford group and composite-pulse compilation.

Conventions: ``R_phi(theta) = exp(-i theta/2 (cos(phi) X + sin(phi) Y))`` and
``Rz(alpha) = exp(-i alpha Z / 2)``. A pulse sequence is a list of
:class:`Pulse` and :class:`Wait` items applied left to right in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import ParameterError

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = (X + Z) / math.sqrt(2)
S = np.array([[1, 0], [0, 1j]], dtype=complex)
PAULIS = {"X": X, "Y": Y, "Z": Z}


def rot(theta: float, phi: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s * np.exp(-1j * phi)], [-1j * s * np.exp(1j * phi), c]], dtype=complex)


def rz(alpha: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * alpha), np.exp(0.5j * alpha)])


def ry(beta: float) -> np.ndarray:
    return rot(beta, math.pi / 2)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> bool:
    return abs(abs(np.trace(a.conj().T @ b)) - a.shape[0]) < tol * a.shape[0]


def average_gate_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Average fidelity between two unitaries, (|tr U^dag V|^2 + d) / (d (d + 1))."""
    d = u.shape[0]
    return float((abs(np.trace(u.conj().T @ v)) ** 2 + d) / (d * (d + 1)))


def _canonical(u: np.ndarray) -> tuple:
    # remove global phase using the first non-negligible entry
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-9))
    v = u * abs(flat[k]) / flat[k]
    return tuple(np.round(v.ravel(), 9).tolist())


def clifford_group() -> list[np.ndarray]:
    """The 24 single-qubit Cliffords, breadth-first from {H, S} words.

    Index 0 is the identity; the order is the breadth-first discovery order
    with H tried before S, which fixes the indexing across runs.
    """
    found = {_canonical(I2): I2}
    order = [I2]
    frontier = [I2]
    while frontier:
        nxt = []
        for g in frontier:
            for gen in (H, S):
                u = gen @ g
                key = _canonical(u)
                if key not in found:
                    found[key] = u
                    order.append(u)
                    nxt.append(u)
        frontier = nxt
    if len(order) != 24:
        raise RuntimeError("Clifford enumeration failed")
    # fix the determinant to 1 so compiled phases are well defined
    return [u / np.sqrt(np.linalg.det(u)) for u in order]


def clifford_index(u: np.ndarray, group: list[np.ndarray] | None = None) -> int:
    group = clifford_group() if group is None else group
    for i, g in enumerate(group):
        if equal_up_to_phase(g, u, 1e-8):
            return i
    raise ParameterError("unitary is not a Clifford")


def decompose_zyz(u: np.ndarray) -> tuple[float, float, float]:
    """Angles with ``u = e^{i g} Rz(alpha) Ry(beta) Rz(gamma)``, beta in [0, pi]."""
    u = np.asarray(u, dtype=complex)
    v = u / np.sqrt(np.linalg.det(u))
    beta = 2 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    if abs(v[0, 0]) > 1e-12 and abs(v[1, 0]) > 1e-12:
        s = -np.angle(v[0, 0]) * 2  # alpha + gamma
        d = np.angle(v[1, 0]) * 2  # alpha - gamma
        alpha, gamma = (s + d) / 2, (s - d) / 2
    elif abs(v[1, 0]) <= 1e-12:
        alpha, gamma = -2 * np.angle(v[0, 0]), 0.0
    else:
        alpha, gamma = 2 * np.angle(v[1, 0]), 0.0
    recon = rz(alpha) @ ry(beta) @ rz(gamma)
    if not equal_up_to_phase(recon, u, 1e-8):
        # the branch choice of the square root can flip a sign; shift alpha by 2 pi
        alpha += 2 * math.pi
    return float(alpha), float(beta), float(gamma)


@dataclass(frozen=True)
class Pulse:
    """Resonant rotation of area ``theta`` about the equatorial axis ``phi``."""

    theta: float
    phi: float

    def unitary(self) -> np.ndarray:
        return rot(self.theta, self.phi)

    def duration(self, omega: float) -> float:
        return self.theta / omega


@dataclass(frozen=True)
class Wait:
    duration: float
    tag: str = ""


@dataclass(frozen=True)
class Marker:
    """Zero-duration slot where a channel (transport move, transfer) acts."""

    name: str = "move"


def arcsinc(y: float, tol: float = 1e-12) -> float:
    """Inverse of sin(x)/x on (0, pi] by bisection."""
    if not 0.0 <= y <= 1.0:
        raise ParameterError("arcsinc argument must lie in [0, 1]")
    if y == 1.0:
        return 0.0
    lo, hi = 0.0, math.pi
    f = lambda x: (math.sin(x) / x if x else 1.0) - y
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scrofulous(theta: float, phi: float = 0.0) -> list[Pulse]:
    """Three-pulse composite rotation robust to pulse-area errors."""
    if theta < 0 or theta > math.pi + 1e-12:
        raise ParameterError("SCROFULOUS needs 0 <= theta <= pi")
    if theta == 0:
        return []
    t1 = arcsinc(2 * math.cos(theta / 2) / math.pi)
    arg = -math.pi * math.cos(t1) / (2 * t1 * math.sin(theta / 2))
    p1 = phi + math.acos(max(-1.0, min(1.0, arg)))
    p2 = p1 - math.acos(-math.pi / (2 * t1))
    return [Pulse(t1, p1), Pulse(math.pi, p2), Pulse(t1, p1)]


def compile_gates(gates: list[np.ndarray], composite: bool = True, frame: float = 0.0) -> tuple[list[Pulse], float]:
    """Compile unitaries (in time order) to physical pulses with virtual Z.

    Each gate is split into zyz angles; the z parts only shift the phase of
    subsequent pulses. Returns the pulses and the final frame angle; the
    product of the pulses equals ``Rz(-frame) @ (gates[-1] ... gates[0])``
    up to phase.
    """
    pulses: list[Pulse] = []
    zeta = frame
    for u in gates:
        alpha, beta, gamma = decompose_zyz(u)
        zeta += gamma
        if beta > 1e-12:
            phi = math.pi / 2 - zeta
            pulses += scrofulous(beta, phi) if composite else [Pulse(beta, phi)]
        zeta += alpha
    return pulses, zeta


def sequence_unitary(seq, omega: float | None = None, detuning: float = 0.0, rabi_error: float = 0.0) -> np.ndarray:
    """Unitary of a pulse sequence with static detuning and Rabi error."""
    u = I2.copy()
    for item in seq:
        if isinstance(item, Pulse):
            if detuning == 0.0:
                step = rot(item.theta * (1 + rabi_error), item.phi)
            else:
                if omega is None:
                    raise ParameterError("omega is required with detuning")
                step = _driven(item.theta / omega, omega * (1 + rabi_error), item.phi, detuning)
            u = step @ u
        elif isinstance(item, Wait):
            u = rz(detuning * item.duration) @ u
        elif isinstance(item, np.ndarray):
            u = item @ u
    return u


def _driven(t: float, omega: float, phi: float, delta: float) -> np.ndarray:
    # H = delta/2 Z + omega/2 (cos phi X + sin phi Y)
    w = math.hypot(omega, delta)
    if w == 0:
        return I2.copy()
    n = np.array([omega * math.cos(phi), omega * math.sin(phi), delta]) / w
    c, s = math.cos(w * t / 2), math.sin(w * t / 2)
    return c * I2 - 1j * s * (n[0] * X + n[1] * Y + n[2] * Z)


# -- dynamical decoupling -------------------------------------------------------

_AXIS_PHASE = {"X": 0.0, "Y": math.pi / 2, "-X": math.pi, "-Y": 3 * math.pi / 2}
_XY8 = ["X", "Y", "X", "Y", "Y", "X", "Y", "X"]


def dd_axes(kind: str) -> list[str]:
    if kind == "XY4":
        return ["X", "Y", "X", "Y"]
    if kind == "XY8":
        return list(_XY8)
    if kind == "XY16":
        return _XY8 + ["-" + a for a in _XY8]
    raise ParameterError(f"unknown decoupling sequence {kind!r}")


def dd_sequence(kind: str, tau: float, axes: list[str] | None = None) -> list:
    """Symmetric decoupling block: tau/2, pi, tau, pi, ..., pi, tau/2."""
    if tau < 0:
        raise ParameterError("tau must be non-negative")
    axes = dd_axes(kind) if axes is None else axes
    seq: list = [Wait(tau / 2)]
    for i, a in enumerate(axes):
        seq.append(Pulse(math.pi, _AXIS_PHASE[a]))
        seq.append(Wait(tau if i < len(axes) - 1 else tau / 2))
    return seq


def _pauli_of(m: np.ndarray) -> tuple[str, int]:
    for name, p in PAULIS.items():
        ov = np.trace(p @ m) / 2
        if abs(abs(ov) - 1) < 1e-9:
            return name, int(np.sign(ov.real)) if abs(ov.imag) < 1e-9 else 0
    raise ParameterError("matrix is not a signed Pauli operator")


def _basis_fix(names: set[str]) -> np.ndarray:
    if "Z" not in names:
        return I2
    if "Y" in names:
        return H  # exchanges X and Z, Y -> -Y
    return (Y + Z) / math.sqrt(2)  # exchanges Y and Z


def transformed_frame(seq, u: np.ndarray) -> tuple[list, np.ndarray]:
    """Rewrite the pi pulses of ``seq`` in the frame of Clifford ``u``.

    Every pulse axis P becomes ``u^dag P u``. If Z appears among the
    conjugated axes, all axes are further conjugated by the basis change
    that maps them back onto X and Y. Returns the new sequence and the
    overall frame unitary ``W``; the pulse-only unitary of the new sequence
    equals ``W^dag S W`` up to phase.
    """
    clifford_index(u)
    axes = []
    for item in seq:
        if isinstance(item, Pulse):
            if abs(item.theta - math.pi) > 1e-9:
                raise ParameterError("frame transformation expects pi pulses")
            axes.append(math.cos(item.phi) * X + math.sin(item.phi) * Y)
    conj = [_pauli_of(u.conj().T @ a @ u) for a in axes]
    v = _basis_fix({n for n, _ in conj})
    w = u @ v
    out = []
    for item in seq:
        if isinstance(item, Pulse):
            a = math.cos(item.phi) * X + math.sin(item.phi) * Y
            name, sign = _pauli_of(w.conj().T @ a @ w)
            if name == "Z":
                raise RuntimeError("basis change failed to remove Z")
            phase = 0.0 if name == "X" else math.pi / 2
            if sign < 0:
                phase += math.pi
            out.append(Pulse(math.pi, phase))
        else:
            out.append(item)
    return out, w


def mean_clifford_area(composite: bool = True) -> float:
    """Average physical pulse area per Clifford after compilation."""
    total = 0.0
    for g in clifford_group():
        pulses, _ = compile_gates([g], composite)
        total += sum(p.theta for p in pulses)
    return total / 24


__all__ = [
    "I2",
    "X",
    "Y",
    "Z",
    "H",
    "S",
    "rot",
    "rz",
    "ry",
    "equal_up_to_phase",
    "average_gate_fidelity",
    "clifford_group",
    "clifford_index",
    "decompose_zyz",
    "Pulse",
    "Wait",
    "Marker",
    "arcsinc",
    "scrofulous",
    "compile_gates",
    "sequence_unitary",
    "dd_axes",
    "dd_sequence",
    "transformed_frame",
    "mean_clifford_area",
]
