"""Shared physical constants, trap parameters and array geometry."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import constants as sc

K_B = sc.k
HBAR = sc.hbar
H_PLANCK = sc.h
AMU = sc.physical_constants["atomic mass constant"][0]
M_CS = 132.905451961 * AMU
F_CLOCK = 9_192_631_770.0  # Cs hyperfine splitting, Hz


class ParameterError(ValueError):
    """Raised when a physical parameter is outside its valid range."""


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Return a numpy Generator; every stochastic routine takes one of these."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def mk_to_joule(t_mk: float) -> float:
    return K_B * t_mk * 1e-3


@dataclass(frozen=True)
class TrapParams:
    """Gaussian tweezer trap.

    Args:
        depth: trap depth U in joules (positive number).
        waist: 1/e^2 intensity radius w0 in metres.
        wavelength: trapping wavelength in metres.
        mass: atomic mass in kg.
    """

    depth: float
    waist: float
    wavelength: float
    mass: float = M_CS

    def __post_init__(self):
        for name in ("depth", "waist", "wavelength", "mass"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ParameterError(f"{name} must be positive and finite, got {value!r}")

    @classmethod
    def from_mk(cls, depth_mk: float, waist_um: float, wavelength_nm: float, mass: float = M_CS) -> "TrapParams":
        if depth_mk <= 0:
            raise ParameterError(f"depth must be positive, got {depth_mk!r} mK")
        return cls(mk_to_joule(depth_mk), waist_um * 1e-6, wavelength_nm * 1e-9, mass)

    @property
    def rayleigh_range(self) -> float:
        return np.pi * self.waist**2 / self.wavelength

    @property
    def omega_radial(self) -> float:
        return float(np.sqrt(4.0 * self.depth / (self.mass * self.waist**2)))

    @property
    def omega_axial(self) -> float:
        return float(np.sqrt(2.0 * self.depth / (self.mass * self.rayleigh_range**2)))

    def scaled(self, depth: float) -> "TrapParams":
        return TrapParams(depth, self.waist, self.wavelength, self.mass)


def trap_frequencies(params: TrapParams) -> tuple[float, float]:
    """Radial and axial angular trap frequencies (rad/s) in the harmonic approximation."""
    return params.omega_radial, params.omega_axial


@dataclass
class ArrayGeometry:
    """Square lattice of tweezer sites clipped by a mask.

    Sites are stored in row-major order of the underlying grid. ``rows`` and
    ``cols`` give the grid indices of each retained site; ``x`` and ``y`` are the
    positions in micrometres relative to the array centre.
    """

    spacing: float
    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    x: np.ndarray
    y: np.ndarray
    radius: float | None = None

    @property
    def n_sites(self) -> int:
        return int(self.rows.size)

    def index_grid(self) -> np.ndarray:
        """Grid of site indices with -1 where the mask removed a site."""
        grid = -np.ones((self.n_rows, self.n_cols), dtype=np.int64)
        grid[self.rows, self.cols] = np.arange(self.n_sites)
        return grid

    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


def _grid(spacing: float, n_rows: int, n_cols: int):
    if spacing <= 0:
        raise ParameterError("spacing must be positive")
    if n_rows <= 0 or n_cols <= 0:
        raise ParameterError("grid must have at least one row and column")
    r, c = np.meshgrid(np.arange(n_rows), np.arange(n_cols), indexing="ij")
    x = (c - (n_cols - 1) / 2.0) * spacing
    y = (r - (n_rows - 1) / 2.0) * spacing
    return r.ravel(), c.ravel(), x.ravel(), y.ravel()


def make_circular_array(spacing: float = 7.2, radius: float = 444.5, n_rows: int = 124, n_cols: int | None = None) -> ArrayGeometry:
    """Lattice clipped to a disc of ``radius`` micrometres.

    The grid is centred between sites so that the four quadrants split
    cleanly along the axes.
    """
    n_cols = n_rows if n_cols is None else n_cols
    if radius <= 0:
        raise ParameterError("radius must be positive")
    r, c, x, y = _grid(spacing, n_rows, n_cols)
    keep = np.hypot(x, y) <= radius
    if not keep.any():
        raise ParameterError("mask removes every site")
    return ArrayGeometry(spacing, n_rows, n_cols, r[keep], c[keep], x[keep], y[keep], radius)


def make_rect_array(n_rows: int, n_cols: int, spacing: float = 7.2) -> ArrayGeometry:
    r, c, x, y = _grid(spacing, n_rows, n_cols)
    return ArrayGeometry(spacing, n_rows, n_cols, r, c, x, y)


@dataclass
class Occupancy:
    """Boolean occupancy vector over the sites of a geometry."""

    filled: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.filled = np.asarray(self.filled, dtype=bool)

    @property
    def count(self) -> int:
        return int(self.filled.sum())

    def copy(self) -> "Occupancy":
        return Occupancy(self.filled.copy(), self.seed)


def sample_occupancy(geometry: ArrayGeometry, fill: float, rng) -> Occupancy:
    """Independent Bernoulli loading of every site."""
    if not 0.0 <= fill <= 1.0:
        raise ParameterError(f"fill fraction must lie in [0, 1], got {fill!r}")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = make_rng(rng)
    return Occupancy(gen.random(geometry.n_sites) < fill, seed)


@dataclass
class Quadrant:
    """One independently rearranged part of the array.

    ``grid`` holds global site indices in a canonical orientation where the
    target block sits at the low row/column corner, ``-1`` marks holes.
    ``target`` is a boolean mask over the same grid.
    """

    name: str
    grid: np.ndarray
    target: np.ndarray

    @property
    def sites(self) -> np.ndarray:
        return self.grid[self.grid >= 0]

    @property
    def target_sites(self) -> np.ndarray:
        return self.grid[self.target & (self.grid >= 0)]

    @property
    def n_targets(self) -> int:
        return int((self.target & (self.grid >= 0)).sum())


def target_block(shape: tuple[int, int], n_rows: int, n_cols: int) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask[:n_rows, :n_cols] = True
    return mask


def partition_quadrants(geometry: ArrayGeometry, overlap: float = 0.0, target_shape: tuple[int, int] = (25, 58)) -> list[Quadrant]:
    """Split the array into four quadrants around its centre.

    ``overlap`` (micrometres) lets each quadrant extend past the axes so that
    atoms near the seams can be used by either side; with zero overlap the
    quadrants cover every site exactly once. Each quadrant is flipped so the
    array centre sits at grid index (0, 0), and the default target block is
    the ``target_shape`` corner next to the centre.
    """
    if overlap < 0:
        raise ParameterError("overlap must be non-negative")
    full = geometry.index_grid()
    xs = (np.arange(geometry.n_cols) - (geometry.n_cols - 1) / 2.0) * geometry.spacing
    ys = (np.arange(geometry.n_rows) - (geometry.n_rows - 1) / 2.0) * geometry.spacing
    quads = []
    for name, sx, sy in (("NE", 1, 1), ("NW", -1, 1), ("SW", -1, -1), ("SE", 1, -1)):
        col_sel = np.nonzero(sx * xs > -overlap)[0]
        row_sel = np.nonzero(sy * ys > -overlap)[0]
        # order indices so that index 0 is nearest the centre line
        col_sel = col_sel[np.argsort(sx * xs[col_sel])]
        row_sel = row_sel[np.argsort(sy * ys[row_sel])]
        grid = full[np.ix_(row_sel, col_sel)]
        quads.append(Quadrant(name, grid, target_block(grid.shape, *target_shape)))
    return quads


def config_hash(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, default=_json_default).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def json_dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)


__all__ = [
    "K_B",
    "HBAR",
    "H_PLANCK",
    "M_CS",
    "F_CLOCK",
    "ParameterError",
    "TrapParams",
    "trap_frequencies",
    "ArrayGeometry",
    "make_circular_array",
    "make_rect_array",
    "Occupancy",
    "sample_occupancy",
    "Quadrant",
    "partition_quadrants",
    "target_block",
    "make_rng",
    "mk_to_joule",
    "config_hash",
    "json_dump",
]
