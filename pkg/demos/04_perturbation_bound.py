"""Corrupt a few edges of a true 6x6 connection graph and compare the top
eigenspace movement with the sin-theta bound.

Run: python demos/04_perturbation_bound.py
"""

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import minimum_spanning_tree

from puzzlelab.congraph import ConnectionGraph
from puzzlelab.core import GridSpec
from puzzlelab.spectral import assemble_gcl


def top_two(m):
    vals, vecs = np.linalg.eigh(m)
    return vals[::-1], vecs[:, ::-1][:, :2]


grid = GridSpec(6, 6)
rng = np.random.default_rng(0)
edges = [(a, b) for a, b, _ in grid.neighbor_edges()]
ij = np.array(edges)
tree = minimum_spanning_tree(sparse.csr_matrix((rng.uniform(1, 2, len(edges)), (ij[:, 0], ij[:, 1])),
                                               shape=(grid.n, grid.n)))
kept = {(min(a, b), max(a, b)) for a, b in zip(*tree.nonzero())}
spare = [e for e in edges if e not in kept]

for p in (0.02, 0.05, 0.1, 0.3):
    turns = rng.integers(0, 4, grid.n)
    bad = {spare[k] for k in rng.choice(len(spare), max(1, round(p * len(spare))), replace=False)}
    ref, est = ConnectionGraph(grid.n), ConnectionGraph(grid.n)
    for a, b in edges:
        q = (turns[a] - turns[b]) % 4
        if (a, b) in bad:
            est.add(a, b, 0.02 * rng.uniform(0.1, 1), (q + rng.integers(1, 4)) % 4)
        else:
            ref.add(a, b, 1.0, q)
            est.add(a, b, 1.0, q)
    c_ref = assemble_gcl(ref).C_sym.toarray()
    c_est = assemble_gcl(est).C_sym.toarray()
    vals, v_ref = top_two(c_ref)
    _, v_est = top_two(c_est)
    delta = np.linalg.norm(c_ref - c_est, 2)
    cos = np.linalg.svd(v_ref.T @ v_est, compute_uv=False).min()
    gap = vals[1] - abs(vals[2]) - delta
    bound = delta / gap if gap > 0 else np.inf
    print(f"p={p:.2f}: {len(bad):2d} bad edges, ||sin theta|| = {np.sqrt(max(0, 1 - cos**2)):.4f}, bound {bound:.4f}")
