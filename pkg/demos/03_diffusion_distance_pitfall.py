"""Drop one edge from a grid graph and compare diffusion distances.

The two endpoints of the missing edge end up farther apart than the center is
from the diagonal vertices next to its lost neighbor.

Run: python demos/03_diffusion_distance_pitfall.py
"""

import numpy as np

from puzzlelab.congraph import true_graph
from puzzlelab.core import GridSpec
from puzzlelab.vdd import vdd_distances

for side in (3, 5, 7):
    grid = GridSpec(side, side)
    g = true_graph(grid, np.zeros(grid.n, int))
    r = c = side // 2
    i, j = grid.index(r, c), grid.index(r, c + 1)
    g.remove(i, j)
    d = vdd_distances(g).gram
    up, down = grid.index(r - 1, c + 1), grid.index(r + 1, c + 1)
    print(f"{side}x{side}: d(i, j) = {d[i, j]:.4f}   d(i, k_up) = {d[i, up]:.4f}   d(i, k_down) = {d[i, down]:.4f}")
