"""Patches stay in their cells but are turned at random; recover every turn.

Run: python demos/01_rotated_only.py
"""

import numpy as np

from puzzlelab.core import assemble, scramble, slice_image
from puzzlelab.evaluation import evaluate
from puzzlelab.metrics import build_pairwise_table
from puzzlelab.solver import solve_type3
from puzzlelab.synthetic import smooth_image

image = smooth_image(6 * 28, 8 * 28, seed=11)
patches, grid, truth = slice_image(image, 28)
turned, scrambled_truth = scramble(patches, truth, 3, seed=4)
print(f"{grid.rows}x{grid.cols} grid, {grid.n} patches")
print("scramble turns of the first row:", (-scrambled_truth.orientation[: grid.cols]) % 4)

table = build_pairwise_table(turned)
solution = solve_type3(turned, grid, table)
report = evaluate(solution, scrambled_truth)
print("recovered orientations of the first row:", solution.orientation[: grid.cols])
print(f"direct {report.direct:.1f}%, neighbor {report.neighbor:.1f}%, perfect {bool(report.perfect)}")

rebuilt = assemble(turned, solution)
print("reconstruction equals the original image:", np.array_equal(rebuilt, image))
