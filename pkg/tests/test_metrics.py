import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import desk_mgc
import mgc_cases
from conftest import make_puzzle, random_patches
from puzzlelab.core import GridSpec, GroundTruth, PuzzleError, Solution, rotate_patch, scramble, slice_image
from puzzlelab.metrics import (
    SIDES,
    PairwiseTable,
    build_pairwise_table,
    mgc_lr,
    mgc_side,
    nam_values,
    neighbor_values,
    perfect_metric_margin,
)

patch4 = arrays(np.uint8, (4, 4, 3))


class TestDeskReference:
    @pytest.mark.parametrize("k", range(len(mgc_cases.PAIRS)))
    def test_hand_set_pairs(self, k):
        a, b = mgc_cases.patches()[k]
        lr, tb = mgc_cases.FROZEN[k]
        assert abs(desk_mgc.mgc_lr(a, b) - lr) <= 1e-9
        assert abs(desk_mgc.mgc_tb(a, b) - tb) <= 1e-9
        assert abs(mgc_lr(a, b) - lr) <= 1e-9
        assert abs(mgc_side(a, b, "tb") - tb) <= 1e-9

    def test_random_larger_patches(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = random_patches(rng, 2, s=5)
            assert mgc_lr(a, b) == pytest.approx(desk_mgc.mgc_lr(a, b), rel=1e-10, abs=1e-9)
            assert mgc_side(a, b, "tb") == pytest.approx(desk_mgc.mgc_tb(a, b), rel=1e-10, abs=1e-9)


class TestIdentities:
    def test_uniform_patches_score_zero(self):
        u = np.full((6, 6, 3), 77, np.uint8)
        for side in SIDES:
            assert mgc_side(u, u, side) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(patch4, patch4)
    def test_mirror(self, a, b):
        assert mgc_side(a, b, "rl") == mgc_side(b, a, "lr")
        assert mgc_side(a, b, "bt") == mgc_side(b, a, "tb")

    @settings(max_examples=25, deadline=None)
    @given(patch4, patch4)
    def test_equivariance_over_all_placements(self, a, b):
        # turning the whole two-patch configuration by g keeps every value
        for q in range(4):
            for d in range(4):
                ref = mgc_side(a, rotate_patch(b, q), d)
                for g in range(1, 4):
                    moved = mgc_side(rotate_patch(a, g), rotate_patch(b, q + g), d + g)
                    assert moved == ref

    def test_top_bottom_is_turned_left_right(self):
        rng = np.random.default_rng(1)
        a, b = random_patches(rng, 2)
        assert mgc_side(a, b, "tb") == mgc_lr(rotate_patch(a, 1), rotate_patch(b, 1))

    @settings(max_examples=50, deadline=None)
    @given(patch4, patch4, st.sampled_from(SIDES))
    def test_nonnegative(self, a, b, side):
        v = mgc_side(a, b, side)
        assert np.isfinite(v) and v >= 0

    def test_too_small(self):
        with pytest.raises(PuzzleError):
            mgc_lr(np.zeros((1, 1, 3), np.uint8), np.zeros((1, 1, 3), np.uint8))


def linear_gradient_patches(rows=4, cols=4, s=4):
    y, x = np.mgrid[0:rows * s, 0:cols * s]
    img = np.stack([3 * x + 5 * y, 2 * x + 7 * y + 10, 200 + x - 2 * y], axis=-1).astype(np.uint8)
    return slice_image(img, s)


def test_gradient_neighbors_beat_every_other_patch():
    patches, grid, _ = linear_gradient_patches()
    for i in range(grid.n):
        r, c = grid.cell(i)
        if c + 1 == grid.cols:
            continue
        j = grid.index(r, c + 1)
        mine = mgc_lr(patches[i], patches[j])
        others = [mgc_lr(patches[i], patches[k]) for k in range(grid.n) if k not in (i, j)]
        assert mine < min(others)


class TestTable:
    def test_matches_direct_calls(self):
        rng = np.random.default_rng(2)
        p = random_patches(rng, 5)
        t = build_pairwise_table(p)
        for i in range(5):
            for j in range(5):
                if i == j:
                    assert np.isinf(t.pair_block(i, j)).all()
                    continue
                for q in range(4):
                    for side in SIDES:
                        ref = mgc_side(p[i], rotate_patch(p[j], q), side)
                        assert t.value(i, j, q, side) == pytest.approx(ref, rel=1e-6)

    def test_two_patches_sixteen_values_each_way(self):
        rng = np.random.default_rng(3)
        p = random_patches(rng, 2)
        t = build_pairwise_table(p)
        assert t.entry_count == 16
        for i, j in ((0, 1), (1, 0)):
            block = t.pair_block(i, j)
            assert block.shape == (4, 4) and np.isfinite(block).all()
        # mirror inside the table: j on the right of i equals i on the left of j
        assert t.value(0, 1, 0, "lr") == t.value(1, 0, 0, "rl")
        assert t.value(0, 1, 0, "tb") == t.value(1, 0, 0, "bt")

    def test_entry_count_and_symmetry(self):
        rng = np.random.default_rng(4)
        t = build_pairwise_table(random_patches(rng, 7))
        assert t.entry_count == 21 * 16
        e = t.edges
        assert np.array_equal(e, e.transpose(2, 3, 0, 1))
        off = ~np.eye(7, dtype=bool)
        assert (e[off[:, None, :, None].repeat(4, 1).repeat(4, 3)] >= 0).all()

    def test_threads_and_blocks_do_not_change_bits(self):
        rng = np.random.default_rng(5)
        p = random_patches(rng, 30, s=6)
        ref = build_pairwise_table(p).edges
        assert np.array_equal(build_pairwise_table(p, threads=3, block=7).edges, ref)

    def test_dump_load_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        t = build_pairwise_table(random_patches(rng, 6, s=5))
        path = tmp_path / "t.mgc"
        t.dump(path)
        raw = path.read_bytes()
        assert raw[:4] == b"MGCT"
        assert struct.unpack("<III", raw[4:16]) == (1, 6, 5)
        assert len(raw) == 16 + 15 * 16 * 4
        back = PairwiseTable.load(path)
        assert back.s == 5 and np.array_equal(back.edges, t.edges)

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(PuzzleError):
            PairwiseTable.load(path)
        rng = np.random.default_rng(7)
        build_pairwise_table(random_patches(rng, 4)).dump(path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(PuzzleError):
            PairwiseTable.load(path)

    def test_oriented_view(self):
        rng = np.random.default_rng(8)
        t = build_pairwise_table(random_patches(rng, 4))
        o = [1, 3, 0, 2]
        view = t.oriented(o)
        for d in range(4):
            for a in range(4):
                for b in range(4):
                    if a != b:
                        assert view[d, a, b] == t.oriented_value(a, o[a], b, o[b], d)

    def test_scaled(self):
        rng = np.random.default_rng(9)
        t = build_pairwise_table(random_patches(rng, 3))
        f = np.ones((3, 3))
        f[0, 2] = f[2, 0] = 2
        s = t.scaled(f)
        assert np.allclose(s.pair_block(0, 2), 2 * t.pair_block(0, 2))
        assert np.array_equal(s.pair_block(0, 1), t.pair_block(0, 1))

    def test_needs_two_patches(self):
        with pytest.raises(PuzzleError):
            build_pairwise_table(np.zeros((1, 4, 4, 3), np.uint8))


class TestNam:
    def test_single_neighbor(self):
        _, patches, grid, truth = make_puzzle(1, 2, s=6, seed=1)
        t = build_pairwise_table(patches)
        nam = nam_values(Solution.from_truth(truth), t)
        v = mgc_lr(patches[0], patches[1])
        assert nam.all[0] == pytest.approx(v, rel=1e-6)
        assert nam.all[1] == pytest.approx(v, rel=1e-6)

    def test_corner_and_interior(self):
        _, patches, grid, truth = make_puzzle(3, 3, s=6, seed=2)
        t = build_pairwise_table(patches)
        nam = nam_values(Solution.from_truth(truth), t)
        corner = (mgc_side(patches[0], patches[1], "lr") + mgc_side(patches[0], patches[3], "tb")) / 2
        assert nam.all[0] == pytest.approx(corner, rel=1e-6)
        right = mgc_side(patches[4], patches[5], "lr")
        top = mgc_side(patches[4], patches[1], "bt")
        left = mgc_side(patches[4], patches[3], "rl")
        bottom = mgc_side(patches[4], patches[7], "tb")
        assert nam.all[4] == pytest.approx((right + top + left + bottom) / 4, rel=1e-6)
        assert nam.ltr[4] == pytest.approx((left + top + right) / 3, rel=1e-6)
        assert nam.trb[4] == pytest.approx((top + right + bottom) / 3, rel=1e-6)
        assert nam.blt[4] == pytest.approx((bottom + left + top) / 3, rel=1e-6)
        assert nam.lbr[4] == pytest.approx((left + bottom + right) / 3, rel=1e-6)
        for v in (nam.all, nam.ltr, nam.trb, nam.blt, nam.lbr):
            assert (v >= 0).all()

    def test_rotated_patches_read_through_orientation(self):
        _, patches, grid, truth = make_puzzle(2, 3, s=6, seed=3)
        shuffled, t2 = scramble(patches, truth, 2, seed=4)
        a = neighbor_values(Solution.from_truth(truth), build_pairwise_table(patches))
        b = neighbor_values(Solution.from_truth(t2), build_pairwise_table(shuffled))
        # same physical layout, so each cell sees the same neighbors and values
        board = t2.cell_to_patch()
        for cell in range(grid.n):
            assert np.allclose(a[cell], b[board.flat[cell]], rtol=1e-6, equal_nan=True)

    def test_swap_raises_nam(self):
        _, patches, grid, truth = make_puzzle(3, 3, s=6, seed=4)
        t = build_pairwise_table(patches)
        good = nam_values(Solution.from_truth(truth), t)
        place = truth.placement.copy()
        place[[4, 8]] = place[[8, 4]]
        bad = nam_values(Solution(grid, place, truth.orientation), t)
        assert bad.all[4] > good.all[4] and bad.all[8] > good.all[8]


def test_perfect_metric_margin():
    _, patches, grid, truth = make_puzzle(4, 5, s=8, seed=5)
    shuffled, t2 = scramble(patches, truth, 2, seed=5)
    assert perfect_metric_margin(build_pairwise_table(shuffled), t2) > 0
    flat = np.full((4 * 4, 4, 4, 3), 90, np.uint8)
    assert perfect_metric_margin(build_pairwise_table(flat), GroundTruth.identity(GridSpec(4, 4))) <= 0
