"""Vector diffusion distances on a connection graph and the MGC penalty they drive.

With eigenpairs ``(mu_l, v_l)`` of ``C`` the map of vertex ``i`` is the
``k x k`` matrix ``(mu_l mu_r)^t <v_l[i], v_r[i]>`` where ``v_l[i]`` is the
2-vector block of vertex ``i``. The distance is the Frobenius norm of the
difference of two maps. Using all ``2n`` eigenpairs gives the exact
definition; fewer is a truncation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .congraph import ConnectionGraph
from .metrics import PairwiseTable
from .spectral import assemble_gcl, top_eigenvectors


@dataclass(frozen=True)
class DiffusionEmbedding:
    t: float
    gram: np.ndarray  # (n, n) pairwise diffusion distances


def _power(x: np.ndarray, t: float) -> np.ndarray:
    # real powers of negative products keep their sign
    return np.sign(x) * np.abs(x) ** t


def vdd_distances(
    g: ConnectionGraph, t: float = 1.0, k: int | None = None, seed: int = 0, dense: bool = False
) -> DiffusionEmbedding:
    """Pairwise vector diffusion distances from the top ``k`` eigenpairs of ``C``.

    ``k`` defaults to ``min(2n, 30)``. ``dense`` uses a full symmetric
    eigendecomposition instead of the iterative solver.
    """
    n = g.n
    k = min(2 * n, 30) if k is None else k
    if n == 1:
        return DiffusionEmbedding(t, np.zeros((1, 1)))
    gcl = assemble_gcl(g)
    if dense:
        vals, vecs = np.linalg.eigh(gcl.C_sym.toarray())
        order = np.argsort(vals)[::-1][:k]
        vals, vecs = vals[order], vecs[:, order]
    else:
        res = top_eigenvectors(gcl.C_sym, k, seed=seed)
        vals, vecs = res.eigenvalues, res.eigenvectors
    v = np.repeat(1.0 / np.sqrt(gcl.degree), 2)[:, None] * vecs
    blocks = v.reshape(n, 2, k)
    gram = np.einsum("ial,iar->ilr", blocks, blocks)
    factor = _power(np.outer(vals, vals), t)
    emb = (gram * factor[None]).reshape(n, k * k)
    dist = cdist(emb, emb)
    np.fill_diagonal(dist, 0.0)
    dist = 0.5 * (dist + dist.T)
    return DiffusionEmbedding(t, dist)


def penalize_far_pairs(
    table: PairwiseTable, emb: DiffusionEmbedding, quantile: float = 0.9, alpha: float = 2.0
) -> PairwiseTable:
    """Scale by ``alpha`` the MGC of each patch against its farthest ``1 - quantile`` of patches.

    A pair is penalized if either endpoint selects the other, so the table
    stays symmetric.
    """
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie strictly between 0 and 1")
    n = table.n
    d = emb.gram
    mark = np.zeros((n, n), dtype=bool)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        count = max(1, int(np.ceil((1 - quantile) * len(others) - 1e-9)))
        # stable sort: equal distances keep the lower patch id first among the far ones
        order = others[np.argsort(-d[i, others], kind="stable")]
        mark[i, order[:count]] = True
    mark |= mark.T
    return table.scaled(np.where(mark, alpha, 1.0))
