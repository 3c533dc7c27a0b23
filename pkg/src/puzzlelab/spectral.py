"""Graph connection Laplacian and Z4 synchronization by its top eigenvectors.

The connection adjacency ``S`` has 2x2 blocks ``W(i, j) R[i, j]`` and the
degree ``D_ii = sum_j W(i, j)``. Eigenvectors of ``C = D^-1 S`` are obtained
from the symmetric ``C_sym = D^-1/2 S D^-1/2`` by left scaling with
``D^-1/2``. On an exact graph the top two eigenvectors of ``C`` stack the
blocks ``M(t_i) V`` for a common 2x2 ``V``, so projecting each block onto Z4
after removing ``V`` returns the rotations up to one global element.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .congraph import ConnectionGraph
from .core import Z4, PuzzleError, rng_for

log = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-9


class ZeroDegree(PuzzleError):
    pass


class NoConvergence(PuzzleError):
    pass


class DegenerateBlock(PuzzleError):
    def __init__(self, vertex: int):
        super().__init__(f"eigenvector block of vertex {vertex} is numerically zero")
        self.vertex = vertex


@dataclass(frozen=True)
class Gcl:
    S: sparse.csr_matrix
    degree: np.ndarray  # (n,)
    C_sym: sparse.csr_matrix

    @property
    def n(self) -> int:
        return len(self.degree)


def assemble_gcl(g: ConnectionGraph) -> Gcl:
    n = g.n
    rows, cols, vals = [], [], []
    degree = np.zeros(n)
    for (i, j), w in g.weight.items():
        block = w * g.rot[(i, j)]
        for a in range(2):
            for b in range(2):
                rows += [2 * i + a, 2 * j + b]
                cols += [2 * j + b, 2 * i + a]
                vals += [block[a, b], block[a, b]]
        degree[i] += w
        degree[j] += w
    if n > 1 and (degree <= 0).any():
        raise ZeroDegree(f"vertices with zero degree: {np.flatnonzero(degree <= 0).tolist()}")
    S = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))
    S.sum_duplicates()
    scale = np.repeat(1.0 / np.sqrt(np.where(degree > 0, degree, 1.0)), 2)
    C_sym = sparse.diags(scale) @ S @ sparse.diags(scale)
    C_sym = (C_sym + C_sym.T) * 0.5  # exact symmetry against rounding in the products
    return Gcl(S, degree, C_sym.tocsr())


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray  # (k,) descending
    eigenvectors: np.ndarray  # (N, k)
    iterations: int
    residual: float


def _orthonormalize(block: np.ndarray, basis: np.ndarray | None, rng) -> np.ndarray:
    """Orthonormal columns spanning ``block`` minus its component in ``basis``.

    Columns that vanish (invariant subspace reached) are replaced by random
    directions so the Krylov space keeps growing.
    """
    out = block.copy()
    for _ in range(2):
        if basis is not None and basis.shape[1]:
            out -= basis @ (basis.T @ out)
        q, r = np.linalg.qr(out)
        out = q
    small = np.abs(np.diag(r)) < 1e-10 * max(1.0, np.abs(block).max())
    if small.any():
        fresh = rng.standard_normal((block.shape[0], int(small.sum())))
        stacked = out[:, ~small]
        combined = basis if stacked.shape[1] == 0 else (
            stacked if basis is None else np.hstack([basis, stacked]))
        for _ in range(2):
            if combined is not None and combined.shape[1]:
                fresh -= combined @ (combined.T @ fresh)
            fresh, _ = np.linalg.qr(fresh)
        out = np.hstack([stacked, fresh])
    return out


def top_eigenvectors(
    m, k: int, tol: float = 1e-8, seed: int = 0, max_iter: int = 10000, block: int | None = None
) -> SpectralResult:
    """The ``k`` algebraically largest eigenpairs of a symmetric operator.

    Thick-restarted block Krylov iteration with full reorthogonalization and
    Rayleigh-Ritz extraction. Each cycle grows the basis block by block, then
    keeps the leading half of the Ritz vectors and continues from their
    residuals. ``iterations`` counts block products.
    """
    N = m.shape[0]
    if k < 1 or k > N:
        raise ValueError(f"k must be in [1, {N}], got {k}")
    rng = rng_for(seed, "spectral")
    p = min(N, block or k + 2)
    max_basis = min(N, max(10 * p, 60))
    keep = min(max(2 * p, max_basis // 2), max_basis - p) if max_basis < N else 0
    v = _orthonormalize(rng.standard_normal((N, p)), None, rng)
    av = m @ v
    iterations = 1
    nxt = av
    while True:
        while v.shape[1] < max_basis:
            room = min(p, max_basis - v.shape[1])
            new = _orthonormalize(nxt[:, :room], v, rng)
            a_new = m @ new
            iterations += 1
            v = np.hstack([v, new])
            av = np.hstack([av, a_new])
            nxt = a_new
        t = v.T @ av
        theta, y = np.linalg.eigh((t + t.T) * 0.5)
        order = np.argsort(theta)[::-1]
        theta, y = theta[order], y[:, order]
        ritz = v @ y
        a_ritz = av @ y
        res = a_ritz[:, :p] - ritz[:, :p] * theta[:p]
        worst = float(np.linalg.norm(res[:, :k], axis=0).max())
        if worst <= tol or v.shape[1] >= N:
            return SpectralResult(theta[:k].copy(), ritz[:, :k], iterations, worst)
        if iterations >= max_iter:
            raise NoConvergence(f"residual {worst:.3e} after {iterations} block products")
        v, av = ritz[:, :keep], a_ritz[:, :keep]
        # Ritz residuals are orthogonal to the kept basis and extend the Krylov space
        nxt = res


@dataclass(frozen=True)
class Recovery:
    """Orientations (rotation to make each patch upright) up to one global turn."""

    orientation: np.ndarray
    degenerate: tuple[int, ...]
    eigenvalues: np.ndarray


def _polar(b: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(b)
    return u @ vt


def project_blocks_to_z4(U: np.ndarray, strict: bool = False) -> tuple[np.ndarray, tuple[int, ...]]:
    """Project each 2x2 block of a ``2n x 2`` array onto Z4 after fixing the gauge.

    Returns ``r`` with block ``i`` close to ``as_matrix(r[i])`` and block 0
    (the first non-degenerate one) mapped to the identity, plus the ids of
    numerically zero blocks (assigned 0). With ``strict`` a zero block raises
    :class:`DegenerateBlock`.
    """
    U = np.asarray(U, dtype=float)
    n = U.shape[0] // 2
    blocks = U.reshape(n, 2, 2).copy()
    norms = np.linalg.norm(blocks, axis=(1, 2))
    degenerate = tuple(int(i) for i in np.flatnonzero(norms < DEGENERATE_NORM))
    if degenerate and strict:
        raise DegenerateBlock(degenerate[0])
    for i in degenerate:
        log.warning("degenerate eigenvector block at vertex %d, using identity", i)
    live = [i for i in range(n) if i not in set(degenerate)]
    if not live:
        return np.zeros(n, dtype=int), degenerate
    ref = live[0]
    q = _polar(blocks[ref])
    if np.linalg.det(q) < 0:
        blocks[:, :, 1] *= -1
        q = _polar(blocks[ref])
    blocks = blocks @ q.T
    # scores[i, q] = <B_i, Z4[q]>; argmax picks the smallest q among ties
    scores = np.einsum("iab,qab->iq", blocks, Z4)
    r = np.argmax(scores, axis=1)
    r[list(degenerate)] = 0
    return r.astype(int), degenerate


MODES = ("top12", "top34", "on_S")


def recover_orientations(
    g: ConnectionGraph, mode: str = "top12", seed: int = 0, tol: float = 1e-8
) -> Recovery:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if g.n == 1:
        return Recovery(np.zeros(1, dtype=int), (), np.ones(1))
    gcl = assemble_gcl(g)
    if mode == "on_S":
        res = top_eigenvectors(gcl.S, 2, tol=tol, seed=seed)
        U = res.eigenvectors
        vals = res.eigenvalues
    else:
        k = 2 if mode == "top12" else 4
        res = top_eigenvectors(gcl.C_sym, min(k, 2 * g.n), tol=tol, seed=seed)
        U = np.repeat(1.0 / np.sqrt(gcl.degree), 2)[:, None] * res.eigenvectors
        U = U[:, :2] if mode == "top12" else U[:, 2:4]
        vals = res.eigenvalues
    U = U / np.linalg.norm(U, axis=0)
    r, degenerate = project_blocks_to_z4(U)
    # blocks carry the scramble turns t_i; the upright orientation is -t_i
    return Recovery((-r) % 4, degenerate, vals)
