"""Puzzle domain types, the Z4 rotation group and deterministic scrambling.

Conventions used throughout the package:

* A puzzle is a stack of patches, ``patches[i]`` being an ``s x s x 3`` uint8
  block. Patch ids are row-major indices into that stack.
* Grid cells are ``(row, col)`` with ``(0, 0)`` the top-left cell.
* Rotations are integers ``q`` in ``{0, 1, 2, 3}`` (quarter turns). Pixel
  rotation is counter-clockwise, and ``q = 1`` corresponds to the matrix
  ``[[0, -1], [1, 0]]``.
* An *orientation* stored in a :class:`GroundTruth` or :class:`Solution` is
  the rotation that must be applied to the patch as given to make it upright
  in the assembled image.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np


class PuzzleError(Exception):
    """Base class for all errors raised by puzzlelab."""


class DimensionError(PuzzleError):
    pass


class MismatchedInputs(PuzzleError):
    pass


# The four elements of Z4 as 2x2 matrices, indexed by quarter turns.
Z4 = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, -1], [1, 0]],
        [[-1, 0], [0, -1]],
        [[0, 1], [-1, 0]],
    ],
    dtype=float,
)

# Unit offsets (drow, dcol) of the four directions, indexed CCW from "right".
# Direction 0 = right, 1 = up, 2 = left, 3 = down.
DIRECTIONS = ((0, 1), (-1, 0), (0, -1), (1, 0))


def as_matrix(q: int) -> np.ndarray:
    return Z4[q % 4].copy()


def compose(a: int, b: int) -> int:
    return (a + b) % 4


def inverse(q: int) -> int:
    return (-q) % 4


def from_matrix(m: np.ndarray, atol: float = 1e-9) -> int:
    """Return ``q`` with ``as_matrix(q) == m``; raise ValueError otherwise."""
    for q in range(4):
        if np.allclose(Z4[q], m, atol=atol):
            return q
    raise ValueError(f"not a Z4 matrix: {m!r}")


def rotate_patch(patch: np.ndarray, q: int) -> np.ndarray:
    """Rotate a patch counter-clockwise by ``q`` quarter turns."""
    return np.rot90(patch, q % 4, axes=(0, 1))


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DimensionError(f"grid must be positive, got {self.rows}x{self.cols}")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    def cell(self, index: int) -> tuple[int, int]:
        return divmod(index, self.cols)

    def index(self, row: int, col: int) -> int:
        return row * self.cols + col

    def contains(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols

    def neighbor_edges(self) -> list[tuple[int, int, int]]:
        """Grid adjacencies as ``(a, b, d)`` with cell ``b`` in direction ``d`` of ``a``.

        Only right (0) and down (3) links are listed, so each edge appears once.
        """
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                a = self.index(r, c)
                if c + 1 < self.cols:
                    out.append((a, a + 1, 0))
                if r + 1 < self.rows:
                    out.append((a, a + self.cols, 3))
        return out


def _check_assignment(placement: np.ndarray, orientation: np.ndarray, grid: GridSpec):
    if placement.shape != (grid.n, 2) or orientation.shape != (grid.n,):
        raise MismatchedInputs(
            f"expected {grid.n} placements/orientations, got {placement.shape} / {orientation.shape}"
        )
    flat = placement[:, 0] * grid.cols + placement[:, 1]
    inside = (placement >= 0).all() and (placement[:, 0] < grid.rows).all() and (placement[:, 1] < grid.cols).all()
    if not inside or len(np.unique(flat)) != grid.n:
        raise MismatchedInputs("placement is not a bijection onto the grid cells")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Where each given patch belongs and how to turn it upright."""

    grid: GridSpec
    placement: np.ndarray  # (n, 2) int, row/col per patch id
    orientation: np.ndarray  # (n,) int quarter turns

    def __post_init__(self):
        object.__setattr__(self, "placement", np.asarray(self.placement, dtype=int).reshape(-1, 2))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=int) % 4)
        _check_assignment(self.placement, self.orientation, self.grid)

    @property
    def n(self) -> int:
        return self.grid.n

    def cell_to_patch(self) -> np.ndarray:
        """Inverse placement: ``(rows, cols)`` array of patch ids."""
        board = np.empty((self.grid.rows, self.grid.cols), dtype=int)
        board[self.placement[:, 0], self.placement[:, 1]] = np.arange(self.n)
        return board

    @classmethod
    def identity(cls, grid: GridSpec) -> "GroundTruth":
        cells = np.array([grid.cell(i) for i in range(grid.n)], dtype=int).reshape(-1, 2)
        return cls(grid, cells, np.zeros(grid.n, dtype=int))


@dataclass(frozen=True, eq=False)
class Solution(GroundTruth):
    """A solver's answer; same layout as :class:`GroundTruth` plus its Err value."""

    err_value: float = 0.0
    degenerate: tuple[int, ...] = field(default=())

    @classmethod
    def from_truth(cls, truth: GroundTruth, err_value: float = 0.0) -> "Solution":
        return cls(truth.grid, truth.placement.copy(), truth.orientation.copy(), err_value)


def slice_image(image: np.ndarray, s: int) -> tuple[np.ndarray, GridSpec, GroundTruth]:
    """Cut an ``H x W x 3`` image into row-major ``s x s`` patches."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"expected an H x W x 3 image, got shape {image.shape}")
    if s < 2:
        raise DimensionError("patch side must be at least 2")
    h, w = image.shape[:2]
    if h % s or w % s:
        raise DimensionError(f"image {h}x{w} is not divisible into {s}x{s} patches")
    grid = GridSpec(h // s, w // s)
    patches = (
        image.reshape(grid.rows, s, grid.cols, s, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(grid.n, s, s, 3)
        .copy()
    )
    return patches, grid, GroundTruth.identity(grid)


def assemble(patches: np.ndarray, assignment: GroundTruth) -> np.ndarray:
    """Render patches into an image according to a truth or solution."""
    grid = assignment.grid
    s = patches.shape[1]
    out = np.zeros((grid.rows * s, grid.cols * s, 3), dtype=patches.dtype)
    for i, ((r, c), q) in enumerate(zip(assignment.placement, assignment.orientation)):
        out[r * s:(r + 1) * s, c * s:(c + 1) * s] = rotate_patch(patches[i], q)
    return out


def tile(patches: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Lay patches out row-major without rotating them (the scrambled view)."""
    return assemble(patches, GroundTruth.identity(grid))


# Named random streams, one per subsystem, so changing how one stage consumes
# randomness never perturbs another.
_STREAMS = ("scramble", "congraph", "spectral", "placement", "solver", "synthetic")


def rng_for(seed: int, stream: str) -> np.random.Generator:
    """PCG64 generator for ``stream`` derived from the user seed."""
    if stream not in _STREAMS:
        raise ValueError(f"unknown random stream {stream!r}")
    key = zlib.crc32(stream.encode())
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**63 - 1), key])))


def scramble(
    patches: np.ndarray, truth: GroundTruth, puzzle_type: int, seed: int
) -> tuple[np.ndarray, GroundTruth]:
    """Shuffle and/or rotate patches (types 1, 2, 3) and return the new truth.

    Scrambled patch ``k`` is ``rotate_patch(patches[perm[k]], turns[k])``.
    """
    if puzzle_type not in (1, 2, 3):
        raise ValueError(f"puzzle type must be 1, 2 or 3, got {puzzle_type}")
    n = len(patches)
    rng = rng_for(seed, "scramble")
    perm = np.arange(n) if puzzle_type == 3 else rng.permutation(n)
    turns = np.zeros(n, dtype=int) if puzzle_type == 1 else rng.integers(0, 4, size=n)
    out = np.stack([rotate_patch(patches[p], t) for p, t in zip(perm, turns)])
    new_truth = GroundTruth(
        truth.grid,
        truth.placement[perm],
        (truth.orientation[perm] - turns) % 4,
    )
    return out, new_truth
