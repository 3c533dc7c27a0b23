"""Mahalanobis Gradient Compatibility (MGC) and neighbor-averaged metrics.

Every patch has four edges, numbered like the directions: 0 right, 1 top,
2 left, 3 bottom. Each edge is read counter-clockwise around its own patch,
so two abutting edges are traversed in opposite orders. Rotating a patch by
``q`` quarter turns moves edge ``k`` to edge ``k + q`` with identical pixel
rows, which is what makes the table below rotation-equivariant bit for bit.

The directed distance from edge ``e`` (own) to edge ``f`` (other) is::

    D(e -> f) = sum_t (y_t - mu_e)^T inv(Sigma_e) (y_t - mu_e),
    y_t = b_f[s-1-t] - b_e[t]

where ``b`` are the boundary pixel rows, ``mu_e`` the mean outward gradient
of ``e`` and ``Sigma_e`` its gradient covariance regularised with nine fixed
rows. The sum is expanded into integer moment sums, which are exact in
float64, so the result does not depend on the summation order of the rows.
The symmetric MGC of two abutting edges is ``D(e -> f) + D(f -> e)``.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .core import PuzzleError, Solution

# Side names -> direction of the second patch as seen from the first.
SIDES = ("lr", "rl", "tb", "bt")
SIDE_DIRECTION = {"lr": 0, "bt": 1, "rl": 2, "tb": 3}

_REG_ROWS = np.array(
    [
        (0, 0, 0), (1, 1, 1), (-1, -1, -1),
        (0, 0, 1), (0, 1, 0), (1, 0, 0),
        (-1, 0, 0), (0, -1, 0), (0, 0, -1),
    ],
    dtype=np.int64,
)
_REG_GRAM = _REG_ROWS.T @ _REG_ROWS

_DET_FLOOR = 1e-12
_MAGIC = b"MGCT"
_VERSION = 1


class SingularCovariance(PuzzleError):
    pass


def _direction(side) -> int:
    if isinstance(side, str):
        return SIDE_DIRECTION[side]
    return int(side) % 4


def patch_edges(patches: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boundary rows and the rows just inside them, shape ``(n, 4, s, 3)`` each."""
    p = np.asarray(patches).astype(np.int64)
    if p.ndim == 3:
        p = p[None]
    if p.shape[1] < 2 or p.shape[1] != p.shape[2]:
        raise PuzzleError(f"patches must be square with side >= 2, got {p.shape[1:3]}")
    boundary, inner = [], []
    for k in range(4):
        # edge k of a patch is the right edge of the patch turned back by k
        turned = np.rot90(p, -k, axes=(1, 2))
        boundary.append(turned[:, ::-1, -1, :])
        inner.append(turned[:, ::-1, -2, :])
    return np.stack(boundary, axis=1), np.stack(inner, axis=1)


def _inv3(cov: np.ndarray) -> np.ndarray:
    """Closed-form inverse of a stack of symmetric 3x3 matrices."""
    a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 0, 2]
    d, e, f = cov[:, 1, 1], cov[:, 1, 2], cov[:, 2, 2]
    c00 = d * f - e * e
    c01 = c * e - b * f
    c02 = b * e - c * d
    c11 = a * f - c * c
    c12 = b * c - a * e
    c22 = a * d - b * b
    det = a * c00 + b * c01 + c * c02
    adj = np.stack(
        [
            np.stack([c00, c01, c02], -1),
            np.stack([c01, c11, c12], -1),
            np.stack([c02, c12, c22], -1),
        ],
        axis=1,
    )
    return adj / det[:, None, None], det


@dataclass(frozen=True)
class EdgeStats:
    """Per-edge quantities needed by the directed distance (flattened edges)."""

    s: int
    boundary: np.ndarray  # (E, s, 3) float64, integer valued
    inv_cov: np.ndarray  # (E, 3, 3)
    inv_cov_mu: np.ndarray  # (E, 3)
    gram: np.ndarray  # (E, 3, 3) sum_t b_t b_t^T
    total: np.ndarray  # (E, 3) sum_t b_t
    const: np.ndarray  # (E,) terms depending only on the own edge

    @classmethod
    def from_patches(cls, patches: np.ndarray) -> "EdgeStats":
        boundary, inner = patch_edges(patches)
        n, _, s, _ = boundary.shape
        b = boundary.reshape(n * 4, s, 3)
        g = b - inner.reshape(n * 4, s, 3)
        g_sum = g.sum(axis=1)
        g_gram = np.einsum("etk,etl->ekl", g, g) + _REG_GRAM
        # the nine regularisation rows sum to zero, so g_sum is also the sum over s+9 rows
        cov = (g_gram - g_sum[:, :, None] * g_sum[:, None, :] / (s + 9)) / (s + 8)
        inv, det = _inv3(cov)
        low = np.abs(det) < _DET_FLOOR
        if low.any():
            inv_low, det_low = _inv3(cov[low] + 1e-6 * np.eye(3))
            if (np.abs(det_low) < _DET_FLOOR).any():
                raise SingularCovariance("gradient covariance is singular after regularisation")
            inv[low] = inv_low
        mu = g_sum / s
        inv_mu = np.einsum("ekl,el->ek", inv, mu)
        bf = b.astype(float)
        gram = np.einsum("etk,etl->ekl", b, b).astype(float)
        total = b.sum(axis=1).astype(float)
        const = (
            _frob(inv, gram)
            + 2.0 * _dot3(inv_mu, total)
            + s * _dot3(inv_mu, mu)
        )
        return cls(s, bf, inv, inv_mu, gram, total, const)

    def subset(self, idx) -> "EdgeStats":
        return EdgeStats(
            self.s, self.boundary[idx], self.inv_cov[idx], self.inv_cov_mu[idx],
            self.gram[idx], self.total[idx], self.const[idx],
        )


def _frob(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # fixed summation order, so identical inputs give identical bits
    acc = a[..., 0, 0] * b[..., 0, 0]
    for k in range(3):
        for l in range(3):
            if k or l:
                acc = acc + a[..., k, l] * b[..., k, l]
    return acc


def _dot3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def directed_distances(own: EdgeStats, other: EdgeStats) -> np.ndarray:
    """Matrix of ``D(e -> f)`` for every own edge ``e`` and other edge ``f``."""
    # cross[e, l, f, k] = sum_t b_f[s-1-t, k] * b_e[t, l]; exact for integer data
    cross = np.tensordot(own.boundary, other.boundary[:, ::-1, :], axes=([1], [1]))
    inv = own.inv_cov
    acc_cross = None
    acc_gram = None
    for k in range(3):
        for l in range(3):
            a = inv[:, k, l][:, None]
            term_c = a * cross[:, l, :, k]
            term_g = a * other.gram[None, :, k, l]
            acc_cross = term_c if acc_cross is None else acc_cross + term_c
            acc_gram = term_g if acc_gram is None else acc_gram + term_g
    lin = (
        own.inv_cov_mu[:, 0][:, None] * other.total[None, :, 0]
        + own.inv_cov_mu[:, 1][:, None] * other.total[None, :, 1]
        + own.inv_cov_mu[:, 2][:, None] * other.total[None, :, 2]
    )
    out = own.const[:, None] + acc_gram - 2.0 * acc_cross - 2.0 * lin
    # a sum of positive definite forms; cancellation may leave tiny negatives
    return np.maximum(out, 0.0)


def _edge_mgc(p_i: np.ndarray, k_i: int, p_j: np.ndarray, k_j: int) -> float:
    stats = EdgeStats.from_patches(np.stack([p_i, p_j]))
    e, f = stats.subset([k_i]), stats.subset([4 + k_j])
    return float(directed_distances(e, f)[0, 0] + directed_distances(f, e)[0, 0])


def mgc_side(p_i: np.ndarray, p_j: np.ndarray, side) -> float:
    """MGC of ``p_j`` placed on ``side`` of ``p_i`` (``lr``: i left, j right)."""
    d = _direction(side)
    return _edge_mgc(p_i, d, p_j, (d + 2) % 4)


def mgc_lr(left: np.ndarray, right: np.ndarray) -> float:
    return mgc_side(left, right, "lr")


@dataclass(frozen=True, eq=False)
class PairwiseTable:
    """All 16 MGC values for every pair of patches.

    ``edges[i, ki, j, kj]`` is the MGC of edge ``ki`` of patch ``i`` against
    edge ``kj`` of patch ``j``; entries with ``i == j`` are ``inf``. The array
    is symmetric under ``(i, ki) <-> (j, kj)``.
    """

    edges: np.ndarray  # (n, 4, n, 4) float32
    s: int

    @property
    def n(self) -> int:
        return self.edges.shape[0]

    @property
    def entry_count(self) -> int:
        return comb(self.n, 2) * 16

    def value(self, i: int, j: int, q: int, side) -> float:
        """``mgc_side(P_i, rotate_patch(P_j, q), side)``."""
        d = _direction(side)
        return float(self.edges[i, d, j, (d + 2 - q) % 4])

    def oriented_value(self, i: int, qi: int, j: int, qj: int, d: int) -> float:
        """MGC of rotated ``j`` in direction ``d`` of rotated ``i``."""
        return float(self.edges[i, (d - qi) % 4, j, (d + 2 - qj) % 4])

    def pair_block(self, i: int, j: int) -> np.ndarray:
        """The 16 values of a pair as a ``(rotation of j, side)`` array."""
        out = np.empty((4, 4), dtype=np.float32)
        for q in range(4):
            for c, side in enumerate(SIDES):
                out[q, c] = self.value(i, j, q, side)
        return out

    def oriented(self, orientations) -> np.ndarray:
        """``out[d, a, b]``: MGC of patch ``b`` placed in direction ``d`` of ``a``.

        Both patches are first rotated by their entry in ``orientations``.
        """
        o = np.asarray(orientations, dtype=int) % 4
        n = self.n
        a_idx = np.arange(n)
        out = np.empty((4, n, n))
        for d in range(4):
            ka = (d - o) % 4
            kb = (d + 2 - o) % 4
            out[d] = self.edges[a_idx[:, None], ka[:, None], a_idx[None, :], kb[None, :]]
        return out

    def scaled(self, factors: np.ndarray) -> "PairwiseTable":
        """Multiply all 16 values of pair ``(i, j)`` by ``factors[i, j]``."""
        f = np.asarray(factors, dtype=np.float32)
        return PairwiseTable(self.edges * f[:, None, :, None], self.s)

    def dump(self, path) -> None:
        n = self.n
        iu, ju = np.triu_indices(n, 1)
        payload = np.empty((len(iu), 4, 4), dtype="<f4")
        for q in range(4):
            for c, side in enumerate(SIDES):
                d = SIDE_DIRECTION[side]
                payload[:, q, c] = self.edges[iu, d, ju, (d + 2 - q) % 4]
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<III", _VERSION, n, self.s))
            fh.write(payload.tobytes())

    @classmethod
    def load(cls, path) -> "PairwiseTable":
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise PuzzleError(f"{path}: not an MGC table")
        version, n, s = struct.unpack("<III", raw[4:16])
        if version != _VERSION:
            raise PuzzleError(f"{path}: unsupported table version {version}")
        if len(raw) != 16 + comb(n, 2) * 16 * 4:
            raise PuzzleError(f"{path}: table size does not match its header")
        payload = np.frombuffer(raw[16:], dtype="<f4").reshape(-1, 4, 4)
        edges = np.full((n, 4, n, 4), np.inf, dtype=np.float32)
        iu, ju = np.triu_indices(n, 1)
        for q in range(4):
            for c, side in enumerate(SIDES):
                d = SIDE_DIRECTION[side]
                kj = (d + 2 - q) % 4
                edges[iu, d, ju, kj] = payload[:, q, c]
                edges[ju, kj, iu, d] = payload[:, q, c]
        return cls(edges, s)


def build_pairwise_table(patches: np.ndarray, threads: int = 1, block: int = 256) -> PairwiseTable:
    """Compute the MGC table for all patch pairs.

    Work is split into blocks of edges; with ``threads > 1`` the blocks run on
    a thread pool (numpy releases the GIL inside the heavy kernels).
    """
    patches = np.asarray(patches)
    n = len(patches)
    if n < 2:
        raise PuzzleError("need at least two patches")
    stats = EdgeStats.from_patches(patches)
    n_edges = 4 * n
    directed = np.empty((n_edges, n_edges))

    def run(start: int) -> None:
        stop = min(start + block, n_edges)
        directed[start:stop] = directed_distances(stats.subset(slice(start, stop)), stats)

    starts = range(0, n_edges, block)
    with threadpool_limits(limits=1):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run, starts))
        else:
            for start in starts:
                run(start)
    sym = directed + directed.T
    edges = sym.reshape(n, 4, n, 4).astype(np.float32)
    idx = np.arange(n)
    edges[idx, :, idx, :] = np.inf
    return PairwiseTable(edges, patches.shape[1])


@dataclass(frozen=True)
class NamValues:
    all: np.ndarray
    ltr: np.ndarray
    trb: np.ndarray
    blt: np.ndarray
    lbr: np.ndarray

    VARIANTS = ("ltr", "trb", "blt", "lbr")
    # directions (0 right, 1 top, 2 left, 3 bottom) averaged by each variant
    VARIANT_SIDES = {"ltr": (2, 1, 0), "trb": (1, 0, 3), "blt": (3, 2, 1), "lbr": (2, 3, 0)}


def neighbor_values(solution: Solution, table: PairwiseTable) -> np.ndarray:
    """``(n, 4)`` MGC of each placed patch against its neighbor per direction (nan if none)."""
    grid = solution.grid
    board = solution.cell_to_patch()
    oriented = table.oriented(solution.orientation)
    out = np.full((grid.n, 4), np.nan)
    for i, (r, c) in enumerate(solution.placement):
        for d, (dr, dc) in enumerate(((0, 1), (-1, 0), (0, -1), (1, 0))):
            if grid.contains(r + dr, c + dc):
                out[i, d] = oriented[d, i, board[r + dr, c + dc]]
    return out


def _mean_present(vals: np.ndarray) -> np.ndarray:
    count = np.sum(~np.isnan(vals), axis=1)
    total = np.nansum(vals, axis=1)
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def nam_values(solution: Solution, table: PairwiseTable) -> NamValues:
    """Neighbor-averaged metrics; boundary patches average over the sides they have."""
    vals = neighbor_values(solution, table)
    parts = {v: _mean_present(vals[:, list(sides)]) for v, sides in NamValues.VARIANT_SIDES.items()}
    return NamValues(all=_mean_present(vals), **parts)


def perfect_metric_margin(table: PairwiseTable, truth) -> float:
    """Gap between the smallest non-neighbor distance and the largest neighbor one.

    Neighbors are scored at their true relative placement; a non-neighbor
    pair is scored by the best of its 16 placements. A positive margin means
    a separating threshold exists on this image.
    """
    grid = truth.grid
    n = table.n
    true_vals = []
    adjacent = np.zeros((n, n), dtype=bool)
    board = truth.cell_to_patch()
    for a_cell, b_cell, d in grid.neighbor_edges():
        a, b = board.flat[a_cell], board.flat[b_cell]
        adjacent[a, b] = adjacent[b, a] = True
        true_vals.append(
            table.oriented_value(a, truth.orientation[a], b, truth.orientation[b], d)
        )
    best = table.edges.min(axis=(1, 3)).astype(float)
    mask = ~adjacent & ~np.eye(n, dtype=bool)
    if not true_vals or not mask.any():
        return float("inf")
    return float(best[mask].min() - max(true_vals))
