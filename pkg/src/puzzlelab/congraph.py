"""Connection graphs: vertices are patches, edges carry a weight and a Z4 connection.

``R[i, j]`` is the rotation that, applied to patch ``j``, makes it line up with
patch ``i`` as given. If the patches were scrambled by turns ``t_i`` and
``t_j`` then the exact connection is ``t_i - t_j``. ``R[j, i] = R[i, j]^T``.

Type-2 graphs are built in five stages: best-match edges per side, pruning,
a two-step-neighborhood (Jaccard) reweighting, connectivity repair, and
a pass that adds diagonal edges from consistent 4-loops.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .core import Z4, GridSpec, PuzzleError, rng_for
from .metrics import PairwiseTable

log = logging.getLogger(__name__)

W_MUTUAL = 1.0
W_ONE_WAY = 0.01
W_BRIDGE = W_ONE_WAY / 2
JACCARD_BLEND = 0.8


class InconsistentRotation(PuzzleError):
    pass


@dataclass
class ConnectionGraph:
    """Undirected weighted graph with a 2x2 connection per edge.

    Edges are keyed by ``(i, j)`` with ``i < j``; ``rot[(i, j)]`` holds
    ``R[i, j]``. Only edges with positive weight are stored.
    """

    n: int
    weight: dict = field(default_factory=dict)
    rot: dict = field(default_factory=dict)

    def copy(self) -> "ConnectionGraph":
        return ConnectionGraph(self.n, dict(self.weight), {k: v.copy() for k, v in self.rot.items()})

    def add(self, i: int, j: int, w: float, r) -> None:
        """Insert or overwrite edge ``{i, j}`` with ``R[i, j] = r`` (int or matrix)."""
        if i == j:
            raise PuzzleError("self-loops are not allowed")
        m = Z4[int(r) % 4].copy() if np.ndim(r) == 0 else np.asarray(r, dtype=float)
        if i > j:
            i, j, m = j, i, m.T
        if w <= 0:
            self.remove(i, j)
            return
        self.weight[(i, j)] = float(w)
        self.rot[(i, j)] = m

    def remove(self, i: int, j: int) -> None:
        key = (min(i, j), max(i, j))
        self.weight.pop(key, None)
        self.rot.pop(key, None)

    def has(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.weight

    def w(self, i: int, j: int) -> float:
        return self.weight.get((min(i, j), max(i, j)), 0.0)

    def set_w(self, i: int, j: int, w: float) -> None:
        key = (min(i, j), max(i, j))
        if w <= 0:
            self.remove(*key)
        else:
            self.weight[key] = float(w)

    def R(self, i: int, j: int) -> np.ndarray:
        if i < j:
            return self.rot[(i, j)]
        return self.rot[(j, i)].T

    def q(self, i: int, j: int) -> int | None:
        """``R[i, j]`` as quarter turns, or None when it is an averaged block."""
        m = self.R(i, j)
        for q in range(4):
            if np.array_equal(m, Z4[q]):
                return q
        return None

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.weight)

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric weight matrix ``W``."""
        if not self.weight:
            return sparse.csr_matrix((self.n, self.n))
        ij = np.array(self.edges)
        w = np.array([self.weight[e] for e in self.edges])
        rows = np.concatenate([ij[:, 0], ij[:, 1]])
        cols = np.concatenate([ij[:, 1], ij[:, 0]])
        return sparse.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(self.n, self.n))

    def neighbor_sets(self) -> list[set]:
        out = [set() for _ in range(self.n)]
        for i, j in self.weight:
            out[i].add(j)
            out[j].add(i)
        return out

    def components(self) -> tuple[int, np.ndarray]:
        return connected_components(self.adjacency(), directed=False)

    def is_connected(self) -> bool:
        return self.n <= 1 or self.components()[0] == 1

    def to_json(self) -> str:
        items = []
        for i, j in self.edges:
            q = self.q(i, j)
            items.append(
                {"i": i, "j": j, "w": self.weight[(i, j)],
                 "q_or_matrix": q if q is not None else self.R(i, j).tolist()}
            )
        return json.dumps({"n": self.n, "edges": items}, sort_keys=True)


def true_graph(grid: GridSpec, turns) -> ConnectionGraph:
    """Exact grid graph for patches scrambled by ``turns`` (``t_i``), cell ``i`` = patch ``i``."""
    t = np.asarray(turns, dtype=int)
    g = ConnectionGraph(grid.n)
    for a, b, _ in grid.neighbor_edges():
        g.add(a, b, 1.0, (t[a] - t[b]) % 4)
    return g


def true_graph_for(truth) -> ConnectionGraph:
    """Exact grid graph between the patches described by a ground truth."""
    board = truth.cell_to_patch()
    turns = -truth.orientation
    g = ConnectionGraph(truth.n)
    for a, b, _ in truth.grid.neighbor_edges():
        pa, pb = board.flat[a], board.flat[b]
        g.add(pa, pb, 1.0, (turns[pa] - turns[pb]) % 4)
    return g


# -- type 3 -----------------------------------------------------------------

def build_type3_graph(patches, grid: GridSpec, table: PairwiseTable) -> ConnectionGraph:
    """Grid-neighbor graph with the best of the 16 edge pairings per neighbor pair.

    Patch ``i`` sits in cell ``i``. When several pairings reach the minimum
    with different rotations, the edge gets weight 1/2 and the average of
    the competing rotation matrices.
    """
    if len(patches) != grid.n or table.n != grid.n:
        raise PuzzleError("patch count does not match the grid")
    g = ConnectionGraph(grid.n)
    for a, b, _ in grid.neighbor_edges():
        block = table.edges[a, :, b, :]
        ka, kb = np.nonzero(block == block.min())
        qs = sorted({int(q) for q in (ka + 2 - kb) % 4})
        if len(qs) == 1:
            g.add(a, b, 1.0, qs[0])
        else:
            g.add(a, b, 0.5, Z4[qs].mean(axis=0))
    return g


def type3_gauge_votes(grid: GridSpec, table: PairwiseTable) -> list[tuple[int, int]]:
    """Absolute orientation hints ``(patch, orientation)`` from unambiguous edge pairings.

    If edge ``ka`` of patch ``a`` faces the known direction ``d`` then patch
    ``a`` needs orientation ``d - ka`` to become upright.
    """
    votes = []
    for a, b, d in grid.neighbor_edges():
        block = table.edges[a, :, b, :]
        ka, kb = np.nonzero(block == block.min())
        if len(ka) == 1:
            votes.append((a, (d - int(ka[0])) % 4))
            votes.append((b, (d + 2 - int(kb[0])) % 4))
    return votes


# -- type 2 -----------------------------------------------------------------

@dataclass(frozen=True)
class DirectedMatch:
    """Best match ``j`` of vertex ``i`` on ``side`` (in ``i``'s own frame) with rotation ``q`` of ``j``."""

    i: int
    j: int
    side: int
    q: int
    value: float


def initial_directed_edges(table: PairwiseTable) -> list[DirectedMatch]:
    """All argmins per vertex and side over every other patch and rotation (ties kept)."""
    n = table.n
    out = []
    for i in range(n):
        for d in range(4):
            # vals[j, kj]: MGC of edge d of i against edge kj of j
            vals = table.edges[i, d, :, :]
            best = vals.min()
            for j, kj in zip(*np.nonzero(vals == best)):
                if j == i:
                    continue
                out.append(DirectedMatch(i, int(j), d, int((d + 2 - kj) % 4), float(best)))
    return out


@dataclass
class _Candidate:
    q: int  # R[i, j] for the ordered key (i, j), i < j
    side_i: int
    side_j: int
    value: float


def _as_candidate(m: DirectedMatch) -> tuple[tuple[int, int], _Candidate]:
    # j sits on side m.side of i; i sits on side (m.side + 2 - q) of j
    side_j = (m.side + 2 - m.q) % 4
    if m.i < m.j:
        return (m.i, m.j), _Candidate(m.q, m.side, side_j, m.value)
    return (m.j, m.i), _Candidate((-m.q) % 4, side_j, m.side, m.value)


def symmetrize_and_prune(matches: list[DirectedMatch], table: PairwiseTable) -> tuple[ConnectionGraph, dict]:
    """Undirected ``W_init`` graph with per-side pruning.

    Returns the graph and the side of each endpoint per edge:
    ``sides[(i, j)] = (side of j as seen from i, side of i as seen from j)``.
    """
    n = table.n
    by_dir: dict = {}
    for m in matches:
        key, cand = _as_candidate(m)
        direction = m.i < m.j
        slot = by_dir.setdefault(key, {})
        prev = slot.get(direction)
        # several tied matches between the same ordered pair: keep the first smallest
        if prev is None or cand.value < prev.value:
            slot[direction] = cand

    chosen: dict = {}
    weight: dict = {}
    for key, slot in by_dir.items():
        cands = list(slot.values())
        if len(cands) == 2 and (cands[0].q, cands[0].side_i) != (cands[1].q, cands[1].side_i):
            log.debug("rotation conflict on edge %s, keeping the smaller MGC", key)
        chosen[key] = min(cands, key=lambda c: c.value)
        weight[key] = W_MUTUAL if len(cands) == 2 else W_ONE_WAY

    # per vertex and side, at most one neighbor survives
    incident: dict = {}
    for (i, j), c in chosen.items():
        incident.setdefault((i, c.side_i), []).append(((i, j), c.value))
        incident.setdefault((j, c.side_j), []).append(((i, j), c.value))
    removed = set()
    for items in incident.values():
        if len(items) < 2:
            continue
        best = min(v for _, v in items)
        winners = [k for k, v in items if v == best]
        keep = winners[0] if len(winners) == 1 else None
        removed.update(k for k, _ in items if k != keep)

    g = ConnectionGraph(n)
    sides = {}
    for key, c in sorted(chosen.items()):
        if key in removed:
            continue
        g.add(key[0], key[1], weight[key], c.q)
        sides[key] = (c.side_i, c.side_j)
    return g, sides


def two_step_neighbors(nbrs: list[set], i: int) -> set:
    """Vertices at most two steps away from ``i``, excluding ``i``."""
    out = set(nbrs[i])
    for k in nbrs[i]:
        out |= nbrs[k]
    out.discard(i)
    return out


def jaccard_index(nbrs: list[set], i: int, j: int) -> int:
    """Common vertices within two steps of ``i`` and ``j`` once edge ``{i, j}`` is removed."""
    cut = _without(nbrs, i, j)
    ni = two_step_neighbors(cut, i)
    nj = two_step_neighbors(cut, j)
    return len(ni & nj)


def _without(nbrs: list[set], i: int, j: int) -> list[set]:
    if j not in nbrs[i]:
        return nbrs
    out = list(nbrs)
    out[i] = nbrs[i] - {j}
    out[j] = nbrs[j] - {i}
    return out


def jaccard_refine(g: ConnectionGraph) -> ConnectionGraph:
    """``W_nb = 0.2 W_init + 0.8 W_Jaccard`` where ``W_Jaccard`` zeroes edges with no common two-step neighbor."""
    nbrs = g.neighbor_sets()
    out = g.copy()
    for i, j in g.edges:
        w = g.weight[(i, j)]
        w_jac = w if jaccard_index(nbrs, i, j) > 0 else 0.0
        out.weight[(i, j)] = (1 - JACCARD_BLEND) * w + JACCARD_BLEND * w_jac
    return out


def connect_components(g: ConnectionGraph, table: PairwiseTable, seed: int = 0) -> ConnectionGraph:
    """Join every smaller component to the largest one by its best-matching pair."""
    out = g.copy()
    rng = rng_for(seed, "congraph")
    pair_min = None
    while True:
        k, labels = out.components()
        if k <= 1:
            return out
        if pair_min is None:
            pair_min = table.edges.min(axis=(1, 3))
        sizes = np.bincount(labels)
        big = int(np.argmax(sizes))  # first largest label; labels are ordered by lowest vertex
        inside = np.flatnonzero(labels == big)
        outside = np.flatnonzero(labels != big)
        sub = pair_min[np.ix_(outside, inside)]
        best = sub.min()
        cands = []
        for a, b in zip(*np.nonzero(sub == best)):
            i, j = int(outside[a]), int(inside[b])
            ki, kj = np.nonzero(table.edges[i, :, j, :] == best)
            for q in sorted({int(x) for x in (ki + 2 - kj) % 4}):
                cands.append((i, j, q))
        i, j, q = cands[int(rng.integers(len(cands)))]
        out.add(i, j, W_BRIDGE, q)


def four_loop_refine(g: ConnectionGraph) -> ConnectionGraph:
    """Add diagonal edges closing consistent 4-loops and reweight the loop sides.

    All decisions come from the input graph. An edge on at least one
    consistent loop, and on no more inconsistent than consistent ones, gets
    weight 1; an edge on more inconsistent loops has its weight divided by 3;
    every other edge is scaled by 2/3.
    """
    n = g.n
    adj = (g.adjacency() > 0).astype(np.int64)
    common = (adj @ adj).tocoo()
    nbrs = g.neighbor_sets()
    consistent = {}
    inconsistent = {}
    diagonals = []
    for i, j, c in zip(common.row, common.col, common.data):
        if i >= j or c != 2 or g.has(i, j):
            continue
        n1, n2 = sorted(nbrs[i] & nbrs[j])
        via1 = g.R(i, n1) @ g.R(n1, j)
        via2 = g.R(i, n2) @ g.R(n2, j)
        sides = [(min(a, b), max(a, b)) for a, b in ((i, n1), (i, n2), (j, n1), (j, n2))]
        if np.array_equal(via1, via2) or np.allclose(via1, via2):
            diagonals.append((int(i), int(j), via1))
            for e in sides:
                consistent[e] = consistent.get(e, 0) + 1
        else:
            for e in sides:
                inconsistent[e] = inconsistent.get(e, 0) + 1
    out = ConnectionGraph(n)
    for e in g.edges:
        c, m = consistent.get(e, 0), inconsistent.get(e, 0)
        w = g.weight[e]
        if c > 0 and c >= m:
            w = 1.0
        elif m > c:
            w = w / 3
        else:
            w = w * 2 / 3
        out.add(e[0], e[1], w, g.rot[e])
    for i, j, r in diagonals:
        out.add(i, j, 1.0, r)
    return out


def build_type2_graph(patches, table: PairwiseTable, seed: int = 0) -> ConnectionGraph:
    """The full five-stage construction for shifted and rotated patches."""
    if table.n != len(patches):
        raise PuzzleError("table does not match the patch count")
    g, _ = symmetrize_and_prune(initial_directed_edges(table), table)
    g = jaccard_refine(g)
    g = connect_components(g, table, seed)
    return four_loop_refine(g)
