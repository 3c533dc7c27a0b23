"""Location solvers: place oriented patches on the grid.

The greedy solver grows a single connected cluster. At every step it places
the (cell, patch) pair with the smallest mean MGC against the already placed
neighbors of that cell. The cluster lives on an unbounded canvas but its
bounding box may never outgrow the puzzle frame, so the final cluster fills
the frame exactly and no trimming stage is needed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import DIRECTIONS, GridSpec, PuzzleError, rng_for
from .metrics import PairwiseTable


class SizeMismatch(PuzzleError):
    pass


class TooLarge(PuzzleError):
    pass


@dataclass
class PlacementState:
    occupied: dict = field(default_factory=dict)  # cell -> patch id
    frontier: set = field(default_factory=set)
    pool: set = field(default_factory=set)
    box: tuple | None = None  # (min_row, max_row, min_col, max_col)

    def box_after(self, cell) -> tuple[int, int]:
        r, c = cell
        if self.box is None:
            return 1, 1
        r0, r1, c0, c1 = self.box
        return max(r1, r) - min(r0, r) + 1, max(c1, c) - min(c0, c) + 1

    def place(self, cell, patch: int) -> None:
        self.occupied[cell] = patch
        self.pool.discard(patch)
        self.frontier.discard(cell)
        r, c = cell
        self.box = (r, r, c, c) if self.box is None else (
            min(self.box[0], r), max(self.box[1], r), min(self.box[2], c), max(self.box[3], c))
        for dr, dc in DIRECTIONS:
            nb = (r + dr, c + dc)
            if nb not in self.occupied:
                self.frontier.add(nb)


@dataclass(frozen=True)
class Placement:
    placement: np.ndarray  # (n, 2) cell per patch
    orientation: np.ndarray  # (n,) orientations after any global frame turn


def _fits(shape: tuple[int, int], frames) -> bool:
    return any(shape[0] <= h and shape[1] <= w for h, w in frames)


def solve_type1(
    grid: GridSpec,
    table: PairwiseTable,
    orientations,
    seed: int = 0,
    allow_transpose: bool = False,
) -> Placement:
    """Greedy best-first placement of patches rotated by ``orientations``.

    With ``allow_transpose`` the cluster may also grow into a ``cols x rows``
    frame; the finished board is then turned a quarter turn to fit the grid
    (which also turns every patch). This matters when orientations are only
    known up to a global rotation.
    """
    n = grid.n
    if table.n != n:
        raise SizeMismatch(f"{table.n} patches for a {grid.rows}x{grid.cols} grid")
    orient = np.asarray(orientations, dtype=int) % 4
    if len(orient) != n:
        raise SizeMismatch("one orientation per patch is required")
    if n == 1:
        return Placement(np.zeros((1, 2), dtype=int), orient.copy())
    rng = rng_for(seed, "placement")
    pair = table.oriented(orient)  # pair[d, a, b]: b in direction d of a
    idx = np.arange(n)
    pair[:, idx, idx] = np.inf

    frames = [(grid.rows, grid.cols)]
    if allow_transpose and grid.rows != grid.cols:
        frames.append((grid.cols, grid.rows))

    best_partner = pair.min(axis=2).sum(axis=0)
    starts = np.flatnonzero(best_partner == best_partner.min())
    state = PlacementState(pool=set(range(n)))
    total: dict = {}
    count: dict = {}
    available = np.ones(n, dtype=bool)

    best_of: dict = {}  # cell -> (min score, patches reaching it), valid for the current pool

    def put(cell, patch):
        state.place(cell, patch)
        available[patch] = False
        total.pop(cell, None)
        count.pop(cell, None)
        best_of.pop(cell, None)
        r, c = cell
        for d, (dr, dc) in enumerate(DIRECTIONS):
            nb = (r + dr, c + dc)
            if nb in state.occupied:
                continue
            # a patch in direction d of the new one
            if nb not in total:
                total[nb] = np.zeros(n)
                count[nb] = 0
            total[nb] += pair[d, patch]
            count[nb] += 1
            best_of.pop(nb, None)
        for other, (_, members) in list(best_of.items()):
            if patch in members:
                del best_of[other]

    def cell_best(cell):
        if cell not in best_of:
            scores = np.where(available, total[cell] / count[cell], np.inf)
            m = scores.min()
            best_of[cell] = (m, tuple(int(p) for p in np.flatnonzero(scores == m)))
        return best_of[cell]

    put((0, 0), int(starts[rng.integers(len(starts))]))
    while state.pool:
        best = np.inf
        cands = []
        for cell in sorted(state.frontier):
            if not _fits(state.box_after(cell), frames):
                continue
            m, members = cell_best(cell)
            if m < best:
                best = m
                cands = [(cell, p) for p in members]
            elif m == best:
                cands.extend((cell, p) for p in members)
        if not cands or not np.isfinite(best):
            # only possible when every remaining score is inf; fall back to any legal slot
            cell = next(c for c in sorted(state.frontier) if _fits(state.box_after(c), frames))
            cands = [(cell, p) for p in sorted(state.pool)]
        cell, patch = cands[int(rng.integers(len(cands)))] if len(cands) > 1 else cands[0]
        put(cell, patch)

    r0, r1, c0, c1 = state.box
    place = np.zeros((n, 2), dtype=int)
    for (r, c), p in state.occupied.items():
        place[p] = (r - r0, c - c0)
    h = r1 - r0 + 1
    if h == grid.rows:
        return Placement(place, orient.copy())
    # grown sideways: turn the whole board a quarter turn counter-clockwise
    w = c1 - c0 + 1
    turned = np.stack([w - 1 - place[:, 1], place[:, 0]], axis=1)
    return Placement(turned, (orient + 1) % 4)


PLACERS = {"greedy": solve_type1}


def qap_oracle(grid: GridSpec, w_est: np.ndarray, w_true: np.ndarray, chunk: int = 40320) -> np.ndarray:
    """Exhaustive minimizer of ``sum (W_est[i, j] - W_true[p[i], p[j]])^2`` over permutations ``p``.

    Test-only brute force for ``n <= 9``; ties resolve to the first permutation
    in lexicographic order.
    """
    n = grid.n
    if n > 9:
        raise TooLarge(f"brute force over {n}! permutations is not supported")
    w_est = np.asarray(w_est, dtype=float)
    w_true = np.asarray(w_true, dtype=float)
    best_val, best_perm = np.inf, None
    perms = itertools.permutations(range(n))
    while True:
        batch = np.array(list(itertools.islice(perms, chunk)), dtype=int)
        if len(batch) == 0:
            break
        moved = w_true[batch[:, :, None], batch[:, None, :]]
        obj = ((moved - w_est[None]) ** 2).sum(axis=(1, 2))
        k = int(np.argmin(obj))
        if obj[k] < best_val:
            best_val, best_perm = obj[k], batch[k].copy()
    return best_perm


def qap_objective(w_est: np.ndarray, w_true: np.ndarray, perm) -> float:
    perm = np.asarray(perm)
    return float(((np.asarray(w_est) - np.asarray(w_true)[np.ix_(perm, perm)]) ** 2).sum())
