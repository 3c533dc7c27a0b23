"""Full puzzle: patches are shuffled and turned. Follow Err across the update rounds.

Run: python demos/02_shifted_and_rotated.py
"""

from puzzlelab.core import scramble, slice_image
from puzzlelab.evaluation import evaluate
from puzzlelab.metrics import build_pairwise_table
from puzzlelab.solver import solve_type2
from puzzlelab.synthetic import smooth_image

image = smooth_image(8 * 28, 8 * 28, seed=2, texture=6.0)
patches, grid, truth = slice_image(image, 28)
mixed, mixed_truth = scramble(patches, truth, 2, seed=9)
table = build_pairwise_table(mixed)

trace = []
solution = solve_type2(mixed, grid, table, iterations=5, variant="top34_init", trace=trace)
for rec in trace:
    score = evaluate(rec.solution, mixed_truth)
    print(f"{rec.variant:>10} round {rec.iteration}: Err {rec.err:10.2f}  removed {rec.removed_edges:3d}  "
          f"refilled {rec.refilled_locations:2d}  direct {score.direct:5.1f}%")

best = evaluate(solution, mixed_truth)
print(f"kept Err {solution.err_value:.2f}: direct {best.direct:.1f}%, neighbor {best.neighbor:.1f}%, "
      f"largest component {best.largest_component:.1f}%")
