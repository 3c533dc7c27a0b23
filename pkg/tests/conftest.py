import numpy as np
import pytest

from puzzlelab.core import slice_image
from puzzlelab.metrics import build_pairwise_table
from puzzlelab.synthetic import smooth_image


def make_puzzle(rows, cols, s=8, seed=0, **kw):
    """Patches, grid and identity truth cut from a seeded smooth image."""
    img = smooth_image(rows * s, cols * s, seed=seed, **kw)
    patches, grid, truth = slice_image(img, s)
    return img, patches, grid, truth


def equal_up_to_turn(a, b) -> bool:
    """True when two orientation vectors differ by one common quarter turn."""
    diff = (np.asarray(a) - np.asarray(b)) % 4
    return bool((diff == diff[0]).all())


def matches_some_turn(image, target) -> bool:
    return any(
        np.rot90(image, q).shape == target.shape and np.array_equal(np.rot90(image, q), target)
        for q in range(4)
    )


@pytest.fixture(scope="session")
def gradient_3x4():
    img, patches, grid, truth = make_puzzle(3, 4, s=8, seed=3)
    return img, patches, grid, truth, build_pairwise_table(patches)


def random_patches(rng, n, s=4):
    return rng.integers(0, 256, size=(n, s, s, 3), dtype=np.uint8)
