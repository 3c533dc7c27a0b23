"""End-to-end solvers for rotated-only (type 3) and shifted-and-rotated (type 2) puzzles."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .congraph import ConnectionGraph, build_type2_graph, build_type3_graph, connect_components, type3_gauge_votes
from .core import DIRECTIONS, GridSpec, PuzzleError, Solution
from .metrics import NamValues, PairwiseTable, nam_values, neighbor_values
from .placement import PLACERS
from .spectral import recover_orientations
from .vdd import penalize_far_pairs, vdd_distances

log = logging.getLogger(__name__)

REMOVAL_FACTOR = 1.5
W_REFILL_GOOD = 0.6
W_REFILL_FAIR = 0.3


def err_metric(solution: Solution, table: PairwiseTable) -> float:
    """Sum over patches of the MGC against each placed neighbor (each grid edge counts twice)."""
    return float(np.nansum(neighbor_values(solution, table)))


def solve_type3(patches, grid: GridSpec, table: PairwiseTable, seed: int = 0) -> Solution:
    """Recover orientations of patches sitting in their own cells.

    The spectral step fixes orientations up to a global turn; the turn is then
    chosen by majority vote of the unambiguous edge pairings, whose side of
    the grid is known.
    """
    n = grid.n
    placement = np.array([grid.cell(i) for i in range(n)], dtype=int).reshape(n, 2)
    if n == 1:
        return Solution(grid, placement, np.zeros(1, dtype=int), 0.0)
    g = build_type3_graph(patches, grid, table)
    rec = recover_orientations(g, "top12", seed=seed)
    votes = np.zeros(4, dtype=int)
    for patch, q in type3_gauge_votes(grid, table):
        votes[(q - rec.orientation[patch]) % 4] += 1
    shift = int(np.argmax(votes))
    orient = (rec.orientation + shift) % 4
    sol = Solution(grid, placement, orient, 0.0, rec.degenerate)
    return Solution(grid, placement, orient, err_metric(sol, table), rec.degenerate)


def _grid_edges_of(solution: Solution):
    """Solution grid edges as ``(patch_a, patch_b, direction of b from a)``."""
    board = solution.cell_to_patch()
    return [(int(board.flat[a]), int(board.flat[b]), d) for a, b, d in solution.grid.neighbor_edges()]


@dataclass
class UpdateReport:
    graph: ConnectionGraph
    removed_edges: int
    refilled_locations: int
    empty_locations: list = field(default_factory=list)


def update_graph(
    solution: Solution, table: PairwiseTable, med_factor: float = REMOVAL_FACTOR, seed: int = 0
) -> UpdateReport:
    """Rebuild a connection graph from a solution, dropping edges around suspicious patches.

    A patch is suspicious when its all-sides NAM and at least one three-side
    NAM exceed ``med_factor`` times the median of their own kind; each such
    three-side variant removes the edges on its three sides. Locations whose
    edges are all gone are refilled, when at least two grid neighbors are
    occupied by non-empty locations, with the best oriented patch of the
    whole set.
    """
    grid = solution.grid
    n = grid.n
    orient = solution.orientation
    board = solution.cell_to_patch()
    nam = nam_values(solution, table)
    med_all = float(np.median(nam.all))

    removed = set()
    high_all = nam.all > med_factor * med_all
    for variant in NamValues.VARIANTS:
        vals = getattr(nam, variant)
        hit = high_all & (vals > med_factor * float(np.median(vals)))
        for i in np.flatnonzero(hit):
            r, c = solution.placement[i]
            for d in NamValues.VARIANT_SIDES[variant]:
                dr, dc = DIRECTIONS[d]
                if grid.contains(r + dr, c + dc):
                    removed.add(frozenset((grid.index(r, c), grid.index(r + dr, c + dc))))

    incident = {cell: [] for cell in range(n)}
    for a, b, _ in grid.neighbor_edges():
        incident[a].append(frozenset((a, b)))
        incident[b].append(frozenset((a, b)))
    empty = {cell for cell, es in incident.items() if es and all(e in removed for e in es)}

    g = ConnectionGraph(n)
    for a, b, _ in grid.neighbor_edges():
        if frozenset((a, b)) in removed:
            continue
        pa, pb = int(board.flat[a]), int(board.flat[b])
        g.add(pa, pb, 1.0, (orient[pb] - orient[pa]) % 4)

    refilled = 0
    for cell in sorted(empty):
        r, c = grid.cell(cell)
        snb = []
        for d, (dr, dc) in enumerate(DIRECTIONS):
            if grid.contains(r + dr, c + dc) and grid.index(r + dr, c + dc) not in empty:
                snb.append((d, int(board[r + dr, c + dc])))
        if len(snb) < 2:
            continue
        # avg[x, q]: mean MGC of patch x turned by q against the neighbor patches
        avg = np.zeros((n, 4))
        for d, j in snb:
            for q in range(4):
                avg[:, q] += table.edges[:, (d - q) % 4, j, (d + 2 - orient[j]) % 4]
        avg /= len(snb)
        best = avg.min()
        if not np.isfinite(best) or best >= 2 * med_all:
            continue
        x, q = (int(v) for v in np.argwhere(avg == best)[0])
        w = W_REFILL_GOOD if best < med_all else W_REFILL_FAIR
        for _, j in snb:
            if j != x and not g.has(x, j):
                g.add(x, j, w, (orient[j] - q) % 4)
        refilled += 1

    g = connect_components(g, table, seed)
    return UpdateReport(g, len(removed), refilled, sorted(empty))


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    solution: Solution
    err: float
    removed_edges: int
    refilled_locations: int
    variant: str = "standard"

    def summary(self) -> dict:
        return {
            "iteration": self.iteration,
            "variant": self.variant,
            "err": self.err,
            "removed_edges": self.removed_edges,
            "refilled_locations": self.refilled_locations,
        }


def _place(grid, table, orient, seed, placer) -> Solution:
    result = PLACERS[placer](grid, table, orient, seed=seed, allow_transpose=True)
    sol = Solution(grid, result.placement, result.orientation, 0.0)
    return Solution(grid, result.placement, result.orientation, err_metric(sol, table))


def _run_type2(patches, grid, table, iterations, initial_mode, seed, placer, vdd, trace, label):
    g = build_type2_graph(patches, table, seed)
    place_table = table
    if vdd:
        place_table = penalize_far_pairs(table, vdd_distances(g, seed=seed))
    rec = recover_orientations(g, initial_mode, seed=seed)
    sol = _place(grid, place_table, rec.orientation, seed, placer)
    sol = Solution(grid, sol.placement, sol.orientation, err_metric(sol, table), rec.degenerate)
    records = [IterationRecord(0, sol, sol.err_value, 0, 0, label)]
    for it in range(1, iterations + 1):
        upd = update_graph(sol, table, seed=seed)
        rec = recover_orientations(upd.graph, "top12", seed=seed)
        sol = _place(grid, place_table, rec.orientation, seed, placer)
        sol = Solution(grid, sol.placement, sol.orientation, err_metric(sol, table), rec.degenerate)
        records.append(IterationRecord(it, sol, sol.err_value, upd.removed_edges, upd.refilled_locations, label))
        log.info("%s iteration %d: Err %.4f, removed %d", label, it, sol.err_value, upd.removed_edges)
    if trace is not None:
        trace.extend(records)
    # first minimum wins, so iteration order breaks ties
    return min(records, key=lambda rec_: rec_.err).solution


VARIANTS = ("standard", "top34_init")


def solve_type2(
    patches,
    grid: GridSpec,
    table: PairwiseTable,
    iterations: int = 5,
    variant: str = "standard",
    seed: int = 0,
    placer: str = "greedy",
    vdd: bool = False,
    trace: list | None = None,
) -> Solution:
    """Alternate orientation recovery, placement and graph updates; keep the lowest Err.

    ``variant="top34_init"`` also runs the loop starting from the third and
    fourth eigenvectors and returns whichever run reaches the smaller Err.
    ``vdd`` penalizes far pairs in the table used for placement only.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    n = grid.n
    if len(patches) != n or table.n != n:
        raise PuzzleError("patch count does not match the grid")
    if n == 1:
        return Solution(grid, np.zeros((1, 2), dtype=int), np.zeros(1, dtype=int), 0.0)
    best = _run_type2(patches, grid, table, iterations, "top12", seed, placer, vdd, trace, "standard")
    if variant == "top34_init" and n >= 2:
        alt = _run_type2(patches, grid, table, iterations, "top34", seed, placer, vdd, trace, "top34_init")
        if alt.err_value < best.err_value:
            best = alt
    return best


def solve_type1(patches, grid: GridSpec, table: PairwiseTable, seed: int = 0, placer: str = "greedy") -> Solution:
    """Placement only; every patch keeps the orientation it was given."""
    result = PLACERS[placer](grid, table, np.zeros(grid.n, dtype=int), seed=seed)
    sol = Solution(grid, result.placement, result.orientation, 0.0)
    return Solution(grid, result.placement, result.orientation, err_metric(sol, table))
