"""Square jigsaw puzzle solving by spectral synchronization of patch rotations."""

from .core import (
    DimensionError,
    GridSpec,
    GroundTruth,
    MismatchedInputs,
    PuzzleError,
    Solution,
    as_matrix,
    assemble,
    rotate_patch,
    scramble,
    slice_image,
)
from .congraph import ConnectionGraph, build_type2_graph, build_type3_graph
from .evaluation import EvalReport, aggregate, evaluate
from .metrics import PairwiseTable, build_pairwise_table, mgc_lr, mgc_side, nam_values
from .solver import err_metric, solve_type2, solve_type3, update_graph
from .spectral import assemble_gcl, recover_orientations, top_eigenvectors

__version__ = "0.1.0"
