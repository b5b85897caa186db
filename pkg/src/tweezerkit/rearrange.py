"""Parallel row/column rearrangement ("Tetris") and plan execution.

A plan is a list of :class:`MoveStep`. Each step moves atoms along a single
row or a single column of a quadrant with one AOD tone per atom. Moves within
a step preserve the order of the atoms, so the tones never cross.
"""

from __future__ import annotations

import heapq
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ArrayGeometry, Occupancy, ParameterError, Quadrant, make_rng


class PlanError(RuntimeError):
    """A plan violates a structural invariant."""


@dataclass
class MoveStep:
    """One parallel AOD move.

    Args:
        axis: ``"row"`` (atoms move horizontally) or ``"col"``.
        line: grid index of the row or column inside the quadrant.
        sources: global site indices picked up, in order along the line.
        destinations: global site indices the atoms are dropped at.
        distances: displacement of each atom in micrometres.
        duration: step duration in seconds.
    """

    axis: str
    line: int
    sources: list[int]
    destinations: list[int]
    distances: list[float] = field(default_factory=list)
    duration: float = 1.0e-3
    quadrant: str = ""

    @property
    def n_atoms(self) -> int:
        return len(self.sources)

    @property
    def longest(self) -> float:
        return max(self.distances) if self.distances else 0.0

    def validate(self) -> None:
        if len(self.sources) != len(self.destinations):
            raise PlanError("sources and destinations differ in length")
        if len(set(self.sources)) != len(self.sources):
            raise PlanError("duplicate source in step")
        if len(set(self.destinations)) != len(self.destinations):
            raise PlanError("duplicate destination in step")


@dataclass
class PlanStats:
    n_steps: int
    atoms_per_step: np.ndarray
    longest_per_step: np.ndarray
    filled: int
    n_targets: int
    duration: float

    @property
    def mean_atoms(self) -> float:
        return float(self.atoms_per_step.mean()) if self.n_steps else 0.0

    @property
    def mean_longest(self) -> float:
        return float(self.longest_per_step.mean()) if self.n_steps else 0.0


# -- line assignment ---------------------------------------------------------


def _assign_line(atoms: np.ndarray, slots: np.ndarray, required: np.ndarray) -> np.ndarray | None:
    """Order-preserving placement of ``atoms`` onto ``slots``.

    ``atoms`` are sorted positions along the line, ``slots`` the sorted valid
    positions and ``required`` a boolean mask over ``slots`` that must all be
    occupied afterwards. Minimises the summed displacement by dynamic
    programming; returns the chosen slot position per atom, or ``None`` if
    infeasible.
    """
    k, n = atoms.size, slots.size
    if k > n or required.sum() > k:
        return None
    inf = np.inf
    # cost[i, j]: first i atoms placed within first j slots
    cost = np.full((k + 1, n + 1), inf)
    cost[0, 0] = 0.0
    req_prefix = np.concatenate([[0], np.cumsum(required)])
    for j in range(1, n + 1):
        # slot j-1 left empty is allowed only if not required
        cost[0, j] = 0.0 if req_prefix[j] == 0 else inf
    take = np.zeros((k + 1, n + 1), dtype=bool)
    for i in range(1, k + 1):
        a = atoms[i - 1]
        for j in range(i, n + 1):
            use = cost[i - 1, j - 1] + abs(a - slots[j - 1])
            skip = cost[i, j - 1] if not required[j - 1] else inf
            if use <= skip:
                cost[i, j] = use
                take[i, j] = True
            else:
                cost[i, j] = skip
    if not np.isfinite(cost[k, n]):
        return None
    out = np.empty(k, dtype=slots.dtype)
    i, j = k, n
    while i > 0:
        if take[i, j]:
            out[i - 1] = slots[j - 1]
            i -= 1
        j -= 1
    return out


def _line_step(grid, occ, axis, line, required_pos, spacing, quadrant_name) -> MoveStep | None:
    """Rearrange one line so that ``required_pos`` end up occupied."""
    ids = grid[line, :] if axis == "row" else grid[:, line]
    valid = np.nonzero(ids >= 0)[0]
    if valid.size == 0:
        return None
    filled_pos = valid[occ[ids[valid]]]
    if filled_pos.size == 0:
        return None
    required = np.isin(valid, required_pos)
    final = _assign_line(filled_pos, valid, required)
    if final is None:
        return None
    moving = final != filled_pos
    if not moving.any():
        return None
    src = ids[filled_pos[moving]]
    dst = ids[final[moving]]
    dist = np.abs(final[moving] - filled_pos[moving]) * spacing
    return MoveStep(axis, int(line), src.tolist(), dst.tolist(), dist.tolist(), quadrant=quadrant_name)


def _apply(step: MoveStep, occ: np.ndarray) -> None:
    src = np.asarray(step.sources, dtype=np.int64)
    dst = np.asarray(step.destinations, dtype=np.int64)
    occ[src] = False
    if occ[dst].any():
        raise PlanError("destination already occupied")
    occ[dst] = True


def _column_counts(grid, occ) -> np.ndarray:
    valid = grid >= 0
    return (valid & occ[np.where(valid, grid, 0)]).sum(axis=0)


def _columns_supplied(grid, occ, quota, t_cols) -> bool:
    for c in t_cols:
        ids = grid[:, c]
        if occ[ids[ids >= 0]].sum() < quota[c]:
            return False
    return True


def _row_phase(grid, occ, target, spacing, name, row_order, early_stop=True, rank="need") -> list[MoveStep]:
    t_cols = np.nonzero(target.any(axis=0))[0]
    quota = target.sum(axis=0)
    # atoms committed to each target column by the rows already visited
    got = np.zeros(grid.shape[1], dtype=np.int64)
    steps = []
    rows = range(grid.shape[0] - 1, -1, -1) if row_order == "far" else range(grid.shape[0])
    for r in rows:
        ids = grid[r]
        valid = np.nonzero(ids >= 0)[0]
        k = int(occ[ids[valid]].sum()) if valid.size else 0
        if k == 0:
            continue
        if early_stop and _columns_supplied(grid, occ, quota, t_cols):
            break
        need = quota - got
        cand = [c for c in t_cols if ids[c] >= 0 and need[c] > 0]
        if rank == "short":
            # prefer columns that are short of atoms across the whole quadrant
            short = quota - _column_counts(grid, occ)
            cand.sort(key=lambda c: (-need[c], -int(short[c] > 0), c))
        else:
            cand.sort(key=lambda c: (-need[c], c))
        chosen = np.sort(np.array(cand[:k], dtype=np.int64))
        step = _line_step(grid, occ, "row", r, chosen, spacing, name)
        if step is not None:
            _apply(step, occ)
            steps.append(step)
        here = valid[occ[ids[valid]]]
        got[here] += 1
    return steps


def _column_phase(grid, occ, target, spacing, name) -> list[MoveStep]:
    steps = []
    for c in np.nonzero(target.any(axis=0))[0]:
        ids = grid[:, c]
        rows_here = np.nonzero(target[:, c])[0]
        if occ[ids[rows_here]].all():
            continue
        k = int(occ[ids[ids >= 0]].sum())
        step = _line_step(grid, occ, "col", int(c), rows_here[: min(k, rows_here.size)], spacing, name)
        if step is not None:
            _apply(step, occ)
            steps.append(step)
    return steps


def tetris_plan(
    occupancy: Occupancy | np.ndarray,
    quadrant: Quadrant,
    spacing: float = 7.2,
    row_order: str = "far",
    max_rounds: int = 3,
    early_stop: bool = True,
) -> list[MoveStep]:
    """Plan a parallel row-then-column compression into the quadrant's target block.

    Phase one sorts the rows. Rows are visited from the far edge of the
    quadrant toward the target block (``row_order="near"`` reverses this)
    and each row moves its atoms, order preserved, onto the target columns
    that the rows visited so far have supplied least. Starting at the edge
    lets the short outer rows feed the columns they can reach before the
    long inner rows are spent. Phase two compresses every target column so
    its atoms fill the target rows nearest the centre. Lines that need no
    motion produce no step.

    A single pass can strand atoms when a row holds more atoms than there
    are target columns, so the two phases are repeated on the new
    configuration (up to ``max_rounds``) while targets stay empty and the
    previous round made progress.

    Two column rankings are tried for the row phase: by supply from the
    visited rows alone, and the same with columns short across the whole
    quadrant served first on ties. The shorter plan wins; the first ranking
    wins ties.
    """
    if row_order not in ("far", "near"):
        raise ParameterError(f"unknown row order {row_order!r}")
    occ = np.array(occupancy.filled if isinstance(occupancy, Occupancy) else occupancy, dtype=bool)
    grid = quadrant.grid
    target = quadrant.target & (grid >= 0)
    best = None
    for rank in ("need", "short"):
        plan = _rounds(grid, np.array(occ), target, spacing, quadrant.name, row_order, max_rounds, early_stop, rank)
        if best is None or len(plan) < len(best):
            best = plan
    return best


def _rounds(grid, occ, target, spacing, name, row_order, max_rounds, early_stop, rank) -> list[MoveStep]:
    tsites = grid[target]
    plan: list[MoveStep] = []
    for _ in range(max_rounds):
        if tsites.size == 0 or occ[tsites].all():
            break
        before = int(occ[tsites].sum())
        new = _row_phase(grid, occ, target, spacing, name, row_order, early_stop, rank)
        new += _column_phase(grid, occ, target, spacing, name)
        plan += new
        if not new or int(occ[tsites].sum()) <= before:
            break
    return plan


def execute_plan(occupancy: Occupancy | np.ndarray, plan: Sequence[MoveStep]) -> np.ndarray:
    """Replay a plan on an occupancy vector, checking every invariant."""
    occ = np.array(occupancy.filled if isinstance(occupancy, Occupancy) else occupancy, dtype=bool)
    for step in plan:
        step.validate()
        if not occ[np.asarray(step.sources, dtype=np.int64)].all():
            raise PlanError("step picks up an empty site")
        _apply(step, occ)
    return occ


def plan_stats(plan: Sequence[MoveStep], occupancy, quadrant: Quadrant) -> PlanStats:
    final = execute_plan(occupancy, plan)
    tsites = quadrant.target_sites
    return PlanStats(
        n_steps=len(plan),
        atoms_per_step=np.array([s.n_atoms for s in plan], dtype=float),
        longest_per_step=np.array([s.longest for s in plan], dtype=float),
        filled=int(final[tsites].sum()),
        n_targets=int(tsites.size),
        duration=float(sum(s.duration for s in plan)),
    )


def check_non_crossing(step: MoveStep, geometry: ArrayGeometry) -> bool:
    """True if atoms keep their order along the move axis."""
    coord = geometry.x if step.axis == "row" else geometry.y
    s = coord[np.asarray(step.sources)]
    d = coord[np.asarray(step.destinations)]
    order = np.argsort(s)
    return bool(np.all(np.diff(d[order]) > 0))


def assign_durations(plan: Sequence[MoveStep], move_time: float = 600e-6, pickup_dropoff: float = 200e-6, split_merge: float = 200e-6) -> None:
    for step in plan:
        step.duration = move_time + pickup_dropoff + split_merge


# -- exact reference for small grids -----------------------------------------


def _line_configs(n: int) -> dict[int, list[int]]:
    """All n-bit masks grouped by popcount."""
    out: dict[int, list[int]] = {}
    for m in range(1 << n):
        out.setdefault(bin(m).count("1"), []).append(m)
    return out


def oracle_min_steps(occupancy: np.ndarray, target: np.ndarray, max_steps: int = 12) -> int:
    """Minimum number of single-line order-preserving steps to fill ``target``.

    Works on a full rectangular grid (``occupancy`` and ``target`` are 2-D
    boolean arrays, at most 6x6). A step replaces the atoms of one row or one
    column by any configuration with the same number of atoms, which is
    exactly the set of moves reachable with non-crossing tones. The search is
    A* with an admissible bound on the row and column steps still required.
    """
    occ = np.asarray(occupancy, dtype=bool)
    tgt = np.asarray(target, dtype=bool)
    nr, nc = occ.shape
    if nr > 6 or nc > 6:
        raise ParameterError("oracle limited to grids up to 6x6")
    if occ.sum() < tgt.sum():
        raise ParameterError("fewer atoms than targets")
    bit = lambda r, c: 1 << (r * nc + c)
    start = sum(bit(r, c) for r in range(nr) for c in range(nc) if occ[r, c])
    goal = sum(bit(r, c) for r in range(nr) for c in range(nc) if tgt[r, c])
    row_cfg = _line_configs(nc)
    col_cfg = _line_configs(nr)
    row_mask = [sum(bit(r, c) for c in range(nc)) for r in range(nr)]
    col_mask = [sum(bit(r, c) for r in range(nr)) for c in range(nc)]
    t_col_need = [int(tgt[:, c].sum()) for c in range(nc)]
    t_row_need = [int(tgt[r, :].sum()) for r in range(nr)]

    def row_bits(s, r):
        return (s >> (r * nc)) & ((1 << nc) - 1)

    def col_bits(s, c):
        v = 0
        for r in range(nr):
            if s >> (r * nc + c) & 1:
                v |= 1 << r
        return v

    def set_col(s, c, v):
        s &= ~col_mask[c]
        for r in range(nr):
            if v >> r & 1:
                s |= bit(r, c)
        return s

    def h(s):
        if s & goal == goal:
            return 0
        # each row step adds at most one atom to a column, and vice versa
        rs = max(max(0, t_col_need[c] - bin(s & col_mask[c]).count("1")) for c in range(nc))
        cs = max(max(0, t_row_need[r] - bin(s & row_mask[r]).count("1")) for r in range(nr))
        return max(1, rs + cs)

    frontier = [(h(start), 0, start)]
    best = {start: 0}
    while frontier:
        f, g, s = heapq.heappop(frontier)
        if s & goal == goal:
            return g
        if g > best.get(s, 1 << 30) or g >= max_steps:
            continue
        succ = []
        for r in range(nr):
            cur = row_bits(s, r)
            base = s & ~row_mask[r]
            for m in row_cfg[bin(cur).count("1")]:
                if m != cur:
                    succ.append(base | (m << (r * nc)))
        for c in range(nc):
            cur = col_bits(s, c)
            for m in col_cfg[bin(cur).count("1")]:
                if m != cur:
                    succ.append(set_col(s, c, m))
        for t in succ:
            if g + 1 < best.get(t, 1 << 30):
                best[t] = g + 1
                heapq.heappush(frontier, (g + 1 + h(t), g + 1, t))
    raise PlanError(f"no plan within {max_steps} steps")


def rect_quadrant(n_rows: int, n_cols: int, t_rows: int, t_cols: int, name: str = "R") -> Quadrant:
    grid = np.arange(n_rows * n_cols, dtype=np.int64).reshape(n_rows, n_cols)
    tgt = np.zeros_like(grid, dtype=bool)
    tgt[:t_rows, :t_cols] = True
    return Quadrant(name, grid, tgt)


# -- execution with losses ---------------------------------------------------


@dataclass
class ExecutionOutcome:
    filled: np.ndarray
    n_targets: int
    defect_free: float

    @property
    def mean_filled(self) -> float:
        return float(self.filled.mean())


def simulate_execution(
    plan: Sequence[MoveStep],
    occupancy,
    target_sites: np.ndarray,
    transfer_survival: float = 1.0,
    vacuum_lifetime: float = math.inf,
    move_survival: Callable[[float], float] | None = None,
    rng=None,
    n_trials: int = 1000,
) -> ExecutionOutcome:
    """Monte Carlo replay of a plan with per-atom losses.

    Each moved atom passes two one-way tweezer transfers (pick-up and
    drop-off) and optionally a distance dependent move survival. Every atom
    present suffers vacuum loss at rate ``1/vacuum_lifetime`` for the whole
    plan duration. A lost atom leaves its tone empty, so later moves of
    that atom deliver nothing.
    """
    if not 0 <= transfer_survival <= 1:
        raise ParameterError("transfer survival must lie in [0, 1]")
    if vacuum_lifetime <= 0:
        raise ParameterError("vacuum lifetime must be positive")
    gen = make_rng(rng)
    occ0 = np.array(occupancy.filled if isinstance(occupancy, Occupancy) else occupancy, dtype=bool)
    target_sites = np.asarray(target_sites, dtype=np.int64)
    total = sum(s.duration for s in plan)
    p_vac = math.exp(-total / vacuum_lifetime) if math.isfinite(vacuum_lifetime) else 1.0
    filled = np.empty(n_trials, dtype=np.int64)
    n_atoms = occ0.size
    for t in range(n_trials):
        occ = occ0.copy()
        for step in plan:
            src = np.asarray(step.sources, dtype=np.int64)
            dst = np.asarray(step.destinations, dtype=np.int64)
            carried = occ[src]
            p = transfer_survival**2
            if move_survival is not None:
                p = p * np.array([move_survival(d) for d in step.distances])
            carried &= gen.random(src.size) < p
            occ[src] = False
            occ[dst] |= carried
        if p_vac < 1.0:
            occ &= gen.random(n_atoms) < p_vac
        filled[t] = occ[target_sites].sum()
    return ExecutionOutcome(filled, int(target_sites.size), float(np.mean(filled == target_sites.size)))


# -- text format ---------------------------------------------------------------


def plan_to_text(plan: Sequence[MoveStep]) -> str:
    """One line per step: ``axis line duration_us q src>dst src>dst ...``."""
    buf = io.StringIO()
    for s in plan:
        pairs = " ".join(f"{a}>{b}" for a, b in zip(s.sources, s.destinations))
        dists = ",".join(f"{d:.4f}" for d in s.distances)
        buf.write(f"{s.axis} {s.line} {s.duration * 1e6:.3f} {s.quadrant or '-'} [{dists}] {pairs}\n")
    return buf.getvalue()


def plan_from_text(text: str) -> list[MoveStep]:
    plan = []
    for ln, raw in enumerate(text.splitlines(), 1):
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        parts = raw.split()
        try:
            axis, line, dur, quad, dists = parts[:5]
            if axis not in ("row", "col"):
                raise ValueError(f"bad axis {axis!r}")
            dists = dists.strip("[]")
            dist = [float(v) for v in dists.split(",")] if dists else []
            src, dst = [], []
            for p in parts[5:]:
                a, b = p.split(">")
                src.append(int(a))
                dst.append(int(b))
        except ValueError as exc:
            raise PlanError(f"line {ln}: {exc}") from None
        plan.append(MoveStep(axis, int(line), src, dst, dist, float(dur) * 1e-6, "" if quad == "-" else quad))
    return plan


def plan_array(occupancy: Occupancy, quadrants: Sequence[Quadrant], spacing: float = 7.2) -> dict[str, list[MoveStep]]:
    """Independent plans for each quadrant; quadrants must not share sites."""
    seen: set[int] = set()
    for q in quadrants:
        s = set(q.sites.tolist())
        if seen & s:
            warnings.warn("quadrants overlap; plans may contend for atoms", stacklevel=2)
        seen |= s
    return {q.name: tetris_plan(occupancy, q, spacing) for q in quadrants}


__all__ = [
    "MoveStep",
    "PlanStats",
    "PlanError",
    "tetris_plan",
    "execute_plan",
    "plan_stats",
    "check_non_crossing",
    "assign_durations",
    "oracle_min_steps",
    "rect_quadrant",
    "simulate_execution",
    "ExecutionOutcome",
    "plan_to_text",
    "plan_from_text",
    "plan_array",
]
