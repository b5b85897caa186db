"""Rearrangement time budget, zone reach checks and Rydberg drive estimates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .core import ParameterError

MODES = ("parallel", "sequential")


@dataclass(frozen=True)
class TimingConfig:
    """Per-operation times (µs) and how often each counts in each mode.

    Pick-up/drop-off, splitting/merging and movement happen once per row and
    once per column, so their row totals are ``(n_rows + n_cols) * time``.
    """

    image_processing_us: float = 10_000.0
    tetris_compute_us: float = 235.0
    waveform_latency_us: float = 488.0
    pickup_dropoff_us: float = 200.0
    split_merge_us: float = 200.0
    move_us: float = 600.0
    fsm_switch_us: float = 5_000.0
    n_rows: int = 62
    n_cols: int = 62
    parallel: dict = field(default_factory=lambda: {
        "image": 1, "tetris": 4, "waveform": 4, "pickup": 1, "split": 1, "move": 1, "fsm": 0,
    })
    sequential: dict = field(default_factory=lambda: {
        "image": 1, "tetris": 1, "waveform": 1, "pickup": 4, "split": 4, "move": 4, "fsm": 3,
    })

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and v < 0:
                raise ParameterError(f"{f.name} must be non-negative")
        for mode in MODES:
            mult = getattr(self, mode)
            if set(mult) != set(ROW_KEYS):
                raise ParameterError(f"{mode} multiplicities need exactly the keys {sorted(ROW_KEYS)}")
            if any(m < 0 for m in mult.values()):
                raise ParameterError("multiplicities must be non-negative")

    def row_times_us(self) -> dict[str, float]:
        lines = self.n_rows + self.n_cols
        return {
            "image": self.image_processing_us,
            "tetris": self.tetris_compute_us,
            "waveform": self.waveform_latency_us,
            "pickup": lines * self.pickup_dropoff_us,
            "split": lines * self.split_merge_us,
            "move": lines * self.move_us,
            "fsm": self.fsm_switch_us,
        }

    @classmethod
    def zero(cls) -> "TimingConfig":
        return cls(*(0.0,) * 7, 0, 0)


ROW_KEYS = {
    "image": "Image transfer and processing",
    "tetris": "Tetris algorithm computation",
    "waveform": "Waveform streaming latency",
    "pickup": "Pick-up & drop-off",
    "split": "Tweezer splitting & merging",
    "move": "Movement",
    "fsm": "Fast-steering mirror switching",
}


def time_budget(config: TimingConfig = TimingConfig(), mode: str = "parallel") -> float:
    """Total rearrangement time in ms."""
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    mult = getattr(config, mode)
    return sum(t * mult[k] for k, t in config.row_times_us().items()) / 1e3


def budget_rows(config: TimingConfig = TimingConfig()) -> list[dict]:
    rows = []
    for key, t in config.row_times_us().items():
        rows.append({"operation": ROW_KEYS[key], "time_ms": t / 1e3, "parallel": config.parallel[key], "sequential": config.sequential[key]})
    return rows


def _fmt_time(ms: float) -> str:
    return f"{ms * 1e3:.0f} us" if ms < 1 else f"{ms:.4g} ms"


def budget_table(config: TimingConfig = TimingConfig()) -> str:
    rows = budget_rows(config)
    width = max(len(r["operation"]) for r in rows) + 2
    out = [f"{'Operation':<{width}}{'Time':>10}{'Parallel':>10}{'Sequential':>12}"]
    out.append("-" * len(out[0]))
    for r in rows:
        out.append(f"{r['operation']:<{width}}{_fmt_time(r['time_ms']):>10}{'x' + str(r['parallel']):>10}{'x' + str(r['sequential']):>12}")
    out.append("-" * len(out[0]))
    par, seq = time_budget(config, "parallel"), time_budget(config, "sequential")
    out.append(f"{'Total':<{width}}{'':>10}{par:>8.1f}ms{seq:>10.1f}ms")
    return "\n".join(out)


def budget_csv(config: TimingConfig = TimingConfig()) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["operation", "time_ms", "parallel", "sequential"])
    w.writeheader()
    w.writerows(budget_rows(config))
    w.writerow({"operation": "Total", "time_ms": "", "parallel": time_budget(config, "parallel"), "sequential": time_budget(config, "sequential")})
    return buf.getvalue()


# -- zones ----------------------------------------------------------------------


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ParameterError("rectangle corners out of order")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def corners(self) -> np.ndarray:
        return np.array([[self.x0, self.y0], [self.x1, self.y0], [self.x0, self.y1], [self.x1, self.y1]])

    def overlaps(self, other: "Rect") -> bool:
        return self.x0 < other.x1 and other.x0 < self.x1 and self.y0 < other.y1 and other.y0 < self.y1

    def distance_to(self, p: np.ndarray) -> np.ndarray:
        dx = np.maximum(np.maximum(self.x0 - p[:, 0], 0), p[:, 0] - self.x1)
        dy = np.maximum(np.maximum(self.y0 - p[:, 1], 0), p[:, 1] - self.y1)
        return np.hypot(dx, dy)


@dataclass(frozen=True)
class ZoneLayout:
    """Storage, interaction and readout rectangles (µm) around the array centre."""

    storage: Rect = Rect(-420, -190, 420, 190)
    interaction: Rect = Rect(-450, 230, 450, 340)
    readout: Rect = Rect(-450, -340, 450, -230)
    array_radius: float = 444.5
    aod_fov: float = 500.0
    n_aod_pairs: int = 4

    def __post_init__(self):
        zones = [self.storage, self.interaction, self.readout]
        for i, a in enumerate(zones):
            for b in zones[i + 1 :]:
                if a.overlaps(b):
                    raise ParameterError("zones overlap")
        for z in zones:
            # zones are clipped by the circular array; require the extent to fit the bounding square
            if np.abs(z.corners()).max() > self.array_radius * 1.1:
                raise ParameterError("zone extends beyond the array")


@dataclass
class ReachReport:
    max_distance: dict[str, float]
    aod_pairs_needed: int
    passed: bool
    message: str


def zone_reach(layout: ZoneLayout = ZoneLayout()) -> ReachReport:
    """Worst storage-to-zone distance for each zone, judged against the AOD field of view.

    The farthest storage atom from a convex zone is always a storage corner.
    """
    s = layout.storage
    if s.width == 0 and s.height == 0:
        return ReachReport({"interaction": 0.0, "readout": 0.0}, 0, True, "empty storage zone")
    corners = s.corners()
    dist = {name: float(getattr(layout, name).distance_to(corners).max()) for name in ("interaction", "readout")}
    needed = math.ceil(s.width / layout.aod_fov) * math.ceil(s.height / layout.aod_fov)
    reach_ok = all(d <= layout.aod_fov for d in dist.values())
    cover_ok = needed <= layout.n_aod_pairs
    msgs = []
    if not reach_ok:
        msgs.append("a zone lies beyond the AOD field of view from part of the storage zone")
    if not cover_ok:
        msgs.append(f"storage zone needs {needed} AOD pairs (quadrants) but {layout.n_aod_pairs} available")
    return ReachReport(dist, needed, reach_ok and cover_ok, "; ".join(msgs) or "all zones within reach")


# -- Rydberg drive ------------------------------------------------------------------


@dataclass(frozen=True)
class RydbergBudget:
    """Amplitude-modulated two-photon drive; rates in rad/s, lengths in µm.

    ``c6`` (rad/s µm^6) is user supplied; no Rydberg tables ship here.
    """

    omega: float
    delta: float
    eta1: float = 0.58
    c6: float | None = None
    pair_spacing: float = 2.5
    neighbor_spacing: float = 11.4

    def __post_init__(self):
        if not 0 < self.eta1 <= 0.58:
            raise ParameterError("eta1 must lie in (0, 0.58]")
        if self.delta == 0:
            raise ParameterError("intermediate detuning must be non-zero")


@dataclass
class RydbergReport:
    omega_eff: float
    pair_shift: float | None = None
    residual: float | None = None

    @property
    def blockade_ratio(self) -> float | None:
        return None if self.pair_shift is None else self.pair_shift / self.omega_eff

    @property
    def residual_ratio(self) -> float | None:
        return None if self.residual is None else self.residual / self.omega_eff


def effective_rabi(omega: float, delta: float, eta1: float = 0.58) -> float:
    if delta == 0:
        raise ParameterError("intermediate detuning must be non-zero")
    return eta1 * abs(omega) ** 2 / (2 * abs(delta))


def single_photon_rabi(omega_eff: float, delta: float, eta1: float = 0.58) -> float:
    """Invert :func:`effective_rabi` for the single-photon Rabi frequency."""
    return math.sqrt(2 * abs(delta) * omega_eff / eta1)


def rydberg_budget(budget: RydbergBudget) -> RydbergReport:
    rep = RydbergReport(effective_rabi(budget.omega, budget.delta, budget.eta1))
    if budget.c6 is not None:
        rep.pair_shift = budget.c6 / budget.pair_spacing**6
        rep.residual = budget.c6 / budget.neighbor_spacing**6
    return rep


def c6_from_shift(shift: float, spacing: float) -> float:
    return shift * spacing**6


__all__ = [
    "MODES",
    "TimingConfig",
    "time_budget",
    "budget_rows",
    "budget_table",
    "budget_csv",
    "Rect",
    "ZoneLayout",
    "ReachReport",
    "zone_reach",
    "RydbergBudget",
    "RydbergReport",
    "effective_rabi",
    "single_photon_rabi",
    "rydberg_budget",
    "c6_from_shift",
]
