"""Tweezer move trajectories, AOD cylindrical lensing and thermal-atom dynamics.

Units inside the integrator are SI. Public helpers take distances in
micrometres and durations in seconds unless the argument name says
otherwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .core import HBAR, K_B, ParameterError, TrapParams, make_rng

KINDS = ("sine", "jerk", "cubic")
AXES = ("x", "y", "diagonal")


@dataclass
class Trajectory:
    """Point-to-point move of a tweezer.

    ``kind`` is ``"sine"`` (x = sin(pi s)/pi + s on s in [-1, 1]),
    ``"jerk"`` (the cubic 3 tau^2 - 2 tau^3, whose third derivative is a
    constant) or ``"cubic"`` (a clamped spline through ``control`` points
    given as (tau, fraction) pairs with 0 < tau < 1).
    """

    kind: str
    distance: float  # micrometres
    duration: float  # seconds
    axis: str = "x"
    control: tuple = ()
    _spline: CubicSpline | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown trajectory kind {self.kind!r}")
        if self.axis not in AXES:
            raise ParameterError(f"unknown axis {self.axis!r}")
        if self.duration <= 0:
            raise ParameterError("duration must be positive")
        if self.kind == "cubic":
            pts = sorted(tuple(map(float, p)) for p in self.control)
            taus = [0.0] + [p[0] for p in pts] + [1.0]
            if any(b <= a for a, b in zip(taus, taus[1:])):
                raise ParameterError("control times must lie strictly inside (0, 1) and be distinct")
            vals = [0.0] + [p[1] for p in pts] + [1.0]
            self._spline = CubicSpline(taus, vals, bc_type=((1, 0.0), (1, 0.0)))

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-15) or np.any(t > self.duration * (1 + 1e-12)):
            raise ParameterError("t outside [0, T]")
        return np.clip(t / self.duration, 0.0, 1.0)

    def _unit(self, tau, order):
        """Derivative ``order`` of the normalized profile with respect to tau."""
        if self.kind == "sine":
            s = 2 * tau - 1
            if order == 0:
                return (np.sin(np.pi * s) / np.pi + s + 1) / 2
            if order == 1:
                return 1 + np.cos(np.pi * s)
            return -2 * np.pi * np.sin(np.pi * s)
        if self.kind == "jerk":
            if order == 0:
                return 3 * tau**2 - 2 * tau**3
            if order == 1:
                return 6 * tau - 6 * tau**2
            return 6 - 12 * tau
        return self._spline(tau, order)

    def position(self, t):
        """Displacement along the move (micrometres)."""
        return self.distance * self._unit(self._check(t), 0)

    def velocity(self, t):
        """Speed along the move (micrometres per second)."""
        return self.distance * self._unit(self._check(t), 1) / self.duration

    def acceleration(self, t):
        return self.distance * self._unit(self._check(t), 2) / self.duration**2

    @property
    def direction(self) -> np.ndarray:
        return {"x": np.array([1.0, 0.0]), "y": np.array([0.0, 1.0]), "diagonal": np.array([1.0, 1.0]) / math.sqrt(2)}[self.axis]

    def to_csv(self, path, n: int = 1001) -> None:
        t = np.linspace(0, self.duration, n)
        xy = np.outer(self.position(t), self.direction)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "x_um", "y_um"])
            w.writerows(zip(t, xy[:, 0], xy[:, 1]))


@dataclass(frozen=True)
class LensingModel:
    """AOD cylindrical-lensing parameters.

    Defaults are an assumption: V = 650 m/s (TeO2 shear mode) and a 15 mm
    aperture (T_a = 23 us), with f chosen so that v_s T_a / w0 is about 7.5.
    ``suppressed=True`` zeroes the focal shift, as for a counter-propagating
    AOD pair.
    """

    focal_length: float = 13.9e-3
    acoustic_velocity: float = 650.0
    waist: float = 1.17e-6
    wavelength: float = 1061e-9
    aperture: float = 15e-3
    suppressed: bool = False

    def __post_init__(self):
        for name in ("focal_length", "acoustic_velocity", "waist", "wavelength", "aperture"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.waist**2 / self.wavelength

    @property
    def access_time(self) -> float:
        return self.aperture / self.acoustic_velocity

    def focal_shift(self, velocity):
        """z_s = f v / V for a tweezer velocity in m/s."""
        if self.suppressed:
            return np.zeros_like(np.asarray(velocity, dtype=float))
        return self.focal_length * np.asarray(velocity, dtype=float) / self.acoustic_velocity


def focal_shift(lensing: LensingModel, traj: Trajectory, t) -> np.ndarray:
    """Per-axis focal shifts (z_x, z_y) in metres at times t.

    A diagonal move shifts both foci by the same amount, which moves the
    focus as a whole instead of making the spot astigmatic.
    """
    v = traj.velocity(t) * 1e-6
    d = traj.direction
    return np.stack([lensing.focal_shift(v * d[0]), lensing.focal_shift(v * d[1])])


def depth_factor(z, zx: float, zy: float, z_r: float):
    """On-axis U(z)/U for per-axis focal shifts."""
    z = np.asarray(z, dtype=float)
    return 1.0 / np.sqrt((1 + ((z - zx) / z_r) ** 2) * (1 + ((z - zy) / z_r) ** 2))


def moving_potential(lensing: LensingModel, trap: TrapParams, x, y, z, zx: float = 0.0, zy: float = 0.0):
    """Potential energy (J) at trap-frame position (m) for focal shifts zx, zy."""
    z_r = lensing.rayleigh_range
    w = lensing.waist
    bx = 1 + ((np.asarray(z) - zx) / z_r) ** 2
    by = 1 + ((np.asarray(z) - zy) / z_r) ** 2
    ux = np.exp(-2 * np.asarray(x) ** 2 / (w**2 * bx)) / np.sqrt(bx)
    uy = np.exp(-2 * np.asarray(y) ** 2 / (w**2 * by)) / np.sqrt(by)
    return -trap.depth * ux * uy


def depth_reduction(z_s: float, z_r: float) -> float:
    """Depth reduction for a one-axis shift: the on-axis maximum at z = z_s/2."""
    return 1 + 0.25 * (z_s / z_r) ** 2


def count_axial_minima(z_s: float, z_r: float, n: int = 4001) -> int:
    """Number of local minima of the on-axis potential for a one-axis shift."""
    span = 4 * max(abs(z_s), z_r)
    z = np.linspace(-span, span, n) + z_s / 2
    u = -depth_factor(z, z_s, 0.0, z_r)
    inner = u[1:-1]
    return int(np.sum((inner < u[:-2]) & (inner < u[2:])))


def numeric_depth_reduction(z_s: float, z_r: float) -> float:
    """U / max_z U(z) found by a bounded scalar search, for cross-checking."""
    res = minimize_scalar(lambda z: -depth_factor(z, z_s, 0.0, z_r), bounds=(min(0, z_s), max(0, z_s) + 1e-30), method="bounded", options={"xatol": 1e-14 * z_r})
    return float(1.0 / -res.fun)


def characteristic_velocity(lensing: LensingModel) -> tuple[float, float]:
    """(exact, approximate) shift velocities in m/s.

    exact = 2 pi V w0^2 / (f lambda); approximate = 5.3 w0 / T_a.
    """
    exact = 2 * math.pi * lensing.acoustic_velocity * lensing.waist**2 / (lensing.focal_length * lensing.wavelength)
    approx = 5.3 * lensing.waist / lensing.access_time
    return exact, approx


# -- dynamics -----------------------------------------------------------------------


@njit(cache=True)
def _accel(x, y, z, zx, zy, u_m, w2, z_r):
    bx = 1.0 + ((z - zx) / z_r) ** 2
    by = 1.0 + ((z - zy) / z_r) ** 2
    ex = math.exp(-2.0 * x * x / (w2 * bx)) / math.sqrt(bx)
    ey = math.exp(-2.0 * y * y / (w2 * by)) / math.sqrt(by)
    p = u_m * ex * ey  # -U/m, positive
    ax = -p * 4.0 * x / (w2 * bx)
    ay = -p * 4.0 * y / (w2 * by)
    dlx = -(z - zx) / (z_r * z_r * bx) + 4.0 * x * x * (z - zx) / (w2 * z_r * z_r * bx * bx)
    dly = -(z - zy) / (z_r * z_r * by) + 4.0 * y * y * (z - zy) / (w2 * z_r * z_r * by * by)
    az = p * (dlx + dly)
    return ax, ay, az, -p


@njit(cache=True)
def _integrate(pos, vel, cx, cy, cvx, cvy, zx, zy, dt, u_m, w2, z_r, trace):
    n = pos.shape[0]
    k_steps = cx.shape[0] - 1
    alive = np.ones(n, dtype=np.bool_)
    for i in range(n):
        x, y, z = pos[i, 0], pos[i, 1], pos[i, 2]
        vx, vy, vz = vel[i, 0], vel[i, 1], vel[i, 2]
        ax, ay, az, pe = _accel(x - cx[0], y - cy[0], z, zx[0], zy[0], u_m, w2, z_r)
        for k in range(k_steps):
            vx += 0.5 * dt * ax
            vy += 0.5 * dt * ay
            vz += 0.5 * dt * az
            x += dt * vx
            y += dt * vy
            z += dt * vz
            ax, ay, az, pe = _accel(x - cx[k + 1], y - cy[k + 1], z, zx[k + 1], zy[k + 1], u_m, w2, z_r)
            vx += 0.5 * dt * ax
            vy += 0.5 * dt * ay
            vz += 0.5 * dt * az
            rvx = vx - cvx[k + 1]
            rvy = vy - cvy[k + 1]
            e = 0.5 * (rvx * rvx + rvy * rvy + vz * vz) + pe
            if i == 0 and trace.shape[0] > 0:
                trace[k + 1] = e
            if e > 0.0:
                alive[i] = False
                break
        pos[i, 0], pos[i, 1], pos[i, 2] = x, y, z
        vel[i, 0], vel[i, 1], vel[i, 2] = vx, vy, vz
    return alive


def thermal_sample(trap: TrapParams, temperature: float, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Boltzmann positions and velocities (SI) in the harmonic approximation.

    ``temperature = 0`` returns atoms at rest at the trap centre.
    """
    if temperature < 0:
        raise ParameterError("temperature must be non-negative")
    gen = make_rng(rng)
    m = trap.mass
    if temperature == 0:
        return np.zeros((n, 3)), np.zeros((n, 3))
    kt = K_B * temperature
    sig_x = math.sqrt(kt / m) / np.array([trap.omega_radial, trap.omega_radial, trap.omega_axial])
    pos = gen.normal(size=(n, 3)) * sig_x
    vel = gen.normal(size=(n, 3)) * math.sqrt(kt / m)
    return pos, vel


def radial_quanta(trap: TrapParams, pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """Harmonic radial action (x and y) in units of the trap quantum."""
    w = trap.omega_radial
    e = 0.5 * trap.mass * (np.sum(vel[:, :2] ** 2, axis=1) + w**2 * np.sum(pos[:, :2] ** 2, axis=1))
    return e / (HBAR * w)


@dataclass
class MoveResult:
    survival: float
    delta_n: float
    n_initial: float
    n_samples: int
    alive: np.ndarray = field(repr=False)

    @property
    def survival_err(self) -> float:
        p = self.survival
        return math.sqrt(max(p * (1 - p), 1.0 / self.n_samples) / self.n_samples)


def _check_optics(lensing: LensingModel, trap: TrapParams) -> None:
    if not (math.isclose(lensing.waist, trap.waist, rel_tol=1e-9) and math.isclose(lensing.wavelength, trap.wavelength, rel_tol=1e-9)):
        raise ParameterError("lensing model and trap disagree on waist or wavelength")


def default_step(trap: TrapParams) -> float:
    return 1.0 / (50 * trap.omega_radial / (2 * math.pi))


def simulate_move(
    lensing: LensingModel,
    trap: TrapParams,
    traj: Trajectory,
    temperature: float = 4.3e-6,
    n_samples: int = 1000,
    rng=None,
    dt: float | None = None,
) -> MoveResult:
    """Integrate thermal atoms through a move and report survival and heating.

    An atom is lost as soon as its trap-frame energy becomes positive. The
    trap depth is held constant (ideal RF compensation) apart from the
    lensing reduction. ``delta_n`` is the mean change of radial quanta among
    survivors, measured once the trap has stopped.
    """
    _check_optics(lensing, trap)
    dt_max = default_step(trap)
    dt = dt_max if dt is None else dt
    if dt > dt_max * (1 + 1e-12):
        raise ParameterError("step must resolve the radial period (at most 1/50 of it)")
    steps = max(1, int(math.ceil(traj.duration / dt)))
    dt = traj.duration / steps
    t = np.linspace(0.0, traj.duration, steps + 1)
    s = traj.position(t) * 1e-6
    v = traj.velocity(t) * 1e-6
    d = traj.direction
    zs = focal_shift(lensing, traj, t)
    pos, vel = thermal_sample(trap, temperature, n_samples, rng)
    n0 = radial_quanta(trap, pos, vel)
    alive = _integrate(
        pos, vel, s * d[0], s * d[1], v * d[0], v * d[1], zs[0], zs[1], dt, trap.depth / trap.mass, lensing.waist**2, lensing.rayleigh_range, np.empty(0)
    )
    end = np.array([s[-1] * d[0], s[-1] * d[1], 0.0])
    rel_v = vel - np.array([v[-1] * d[0], v[-1] * d[1], 0.0])
    n1 = radial_quanta(trap, pos - end, rel_v)
    dn = float(np.mean(n1[alive] - n0[alive])) if alive.any() else float("nan")
    return MoveResult(float(alive.mean()), dn, float(n0.mean()), n_samples, alive)


def static_energy_trace(lensing: LensingModel, trap: TrapParams, pos0, vel0, n_periods: float, dt: float | None = None) -> tuple[np.ndarray, float]:
    """Trap-frame energy per unit mass of one atom in a static trap, and the step used."""
    _check_optics(lensing, trap)
    dt = default_step(trap) if dt is None else dt
    steps = int(math.ceil(n_periods * 2 * math.pi / trap.omega_radial / dt))
    zeros = np.zeros(steps + 1)
    pos = np.array([pos0], dtype=float)
    vel = np.array([vel0], dtype=float)
    trace = np.empty(steps + 1)
    pe = moving_potential(lensing, trap, *pos[0]) / trap.mass
    trace[0] = 0.5 * np.sum(vel**2) + pe
    _integrate(pos, vel, zeros, zeros, zeros, zeros, zeros, zeros, dt, trap.depth / trap.mass, lensing.waist**2, lensing.rayleigh_range, trace)
    return trace, dt


def heating_slope(lensing: LensingModel, trap: TrapParams, kind: str, distance: float, durations, window_points: int = 9, temperature: float = 0.0) -> tuple[float, np.ndarray]:
    """Log-log slope of delta N against duration.

    For each duration the heating is averaged over ``window_points`` moves
    spread across one radial period, which removes the interference
    fringes of the excitation spectrum and leaves the envelope.
    """
    period = 2 * math.pi / trap.omega_radial
    means = []
    for T in durations:
        offs = np.linspace(-period / 2, period / 2, window_points)
        vals = [simulate_move(lensing, trap, Trajectory(kind, distance, T + o), temperature, 1, 0).delta_n for o in offs]
        means.append(np.mean(vals))
    means = np.array(means)
    slope = np.polyfit(np.log(durations), np.log(means), 1)[0]
    return float(slope), means


def min_move_time(
    lensing: LensingModel,
    trap: TrapParams,
    distance: float,
    survival_target: float,
    kind: str = "sine",
    axis: str = "x",
    temperature: float = 4.3e-6,
    n_samples: int = 2000,
    rng=0,
    t_start: float = 20e-6,
    t_max: float = 100e-3,
    rel_tol: float = 0.02,
) -> float:
    """Shortest duration whose simulated survival reaches the target.

    Doubles T from ``t_start`` until the target is met, then bisects. Every
    evaluation reuses the same thermal sample (common random numbers), so
    the result is a deterministic function of ``rng``.
    """
    if not 0 < survival_target < 1:
        raise ParameterError("survival target must lie in (0, 1)")
    seed = int(make_rng(rng).integers(2**63))

    def ok(T):
        res = simulate_move(lensing, trap, Trajectory(kind, distance, T, axis), temperature, n_samples, np.random.default_rng(seed))
        return res.survival >= survival_target

    lo, hi = None, t_start
    while not ok(hi):
        lo = hi
        hi *= 2
        if hi > t_max:
            if ok(t_max):
                hi = t_max
                break
            raise ParameterError(f"survival target {survival_target} unreachable within {t_max * 1e3:.0f} ms")
    if lo is None:
        return hi
    while hi / lo - 1 > rel_tol:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class SurvivalCurve:
    durations: np.ndarray
    survival: np.ndarray
    errors: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["duration_s", "survival", "error"])
            w.writerows(zip(self.durations, self.survival, self.errors))


def survival_curve(lensing, trap, distance, durations, kind="sine", axis="x", temperature=4.3e-6, n_samples=1000, rng=0) -> SurvivalCurve:
    seed = int(make_rng(rng).integers(2**63))
    res = [simulate_move(lensing, trap, Trajectory(kind, distance, T, axis), temperature, n_samples, np.random.default_rng(seed)) for T in durations]
    return SurvivalCurve(np.asarray(durations, float), np.array([r.survival for r in res]), np.array([r.survival_err for r in res]))


__all__ = [
    "Trajectory",
    "LensingModel",
    "focal_shift",
    "depth_factor",
    "moving_potential",
    "depth_reduction",
    "numeric_depth_reduction",
    "count_axial_minima",
    "characteristic_velocity",
    "thermal_sample",
    "radial_quanta",
    "MoveResult",
    "simulate_move",
    "static_energy_trace",
    "heating_slope",
    "min_move_time",
    "SurvivalCurve",
    "survival_curve",
]
