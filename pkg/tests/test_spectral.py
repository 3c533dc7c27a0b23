import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import equal_up_to_turn, make_puzzle
from puzzlelab.congraph import ConnectionGraph, true_graph, true_graph_for
from puzzlelab.core import Z4, GridSpec, scramble
from puzzlelab.spectral import (
    DegenerateBlock,
    NoConvergence,
    ZeroDegree,
    assemble_gcl,
    project_blocks_to_z4,
    recover_orientations,
    top_eigenvectors,
)


def random_connection_graph(rng, n, density=0.3):
    g = ConnectionGraph(n)
    for i in range(n - 1):
        g.add(i, i + 1, rng.uniform(0.1, 1), int(rng.integers(4)))
    for i in range(n):
        for j in range(i + 2, n):
            if rng.random() < density:
                g.add(i, j, rng.uniform(0.01, 1), int(rng.integers(4)))
    return g


class TestAssemble:
    def test_two_vertices(self):
        g = ConnectionGraph(2)
        g.add(0, 1, 1.0, 0)
        gcl = assemble_gcl(g)
        expected = np.block([[np.zeros((2, 2)), np.eye(2)], [np.eye(2), np.zeros((2, 2))]])
        assert np.array_equal(gcl.S.toarray(), expected)
        assert np.array_equal(gcl.degree, [1, 1])
        assert np.linalg.eigvalsh(gcl.C_sym.toarray()).max() == pytest.approx(1.0)

    def test_blocks_and_degree(self):
        g = ConnectionGraph(3)
        g.add(0, 1, 0.5, 1)
        g.add(1, 2, 2.0, 3)
        S = assemble_gcl(g).S.toarray()
        assert np.array_equal(S[0:2, 2:4], 0.5 * Z4[1])
        assert np.array_equal(S[2:4, 0:2], 0.5 * Z4[3])
        assert np.array_equal(S[2:4, 4:6], 2.0 * Z4[3])
        assert np.array_equal(assemble_gcl(g).degree, [0.5, 2.5, 2.0])

    def test_true_three_by_three_top_eigenvalue(self):
        rng = np.random.default_rng(0)
        g = true_graph(GridSpec(3, 3), rng.integers(0, 4, 9))
        vals = np.sort(np.linalg.eigvalsh(assemble_gcl(g).C_sym.toarray()))[::-1]
        assert vals[0] == pytest.approx(1.0, abs=1e-12)
        assert vals[1] == pytest.approx(1.0, abs=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        c = assemble_gcl(random_connection_graph(rng, 15)).C_sym
        assert (abs(c - c.T)).max() == 0

    def test_zero_degree(self):
        g = ConnectionGraph(3)
        g.add(0, 1, 1.0, 0)
        with pytest.raises(ZeroDegree):
            assemble_gcl(g)


def dense_top(m, k):
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(vals)[::-1][:k]
    return vals[order], vecs[:, order]


def assert_matches_dense(m, k, seed=0):
    dense = m.toarray() if hasattr(m, "toarray") else m
    ref_vals, ref_vecs = dense_top(dense, k + 1)
    res = top_eigenvectors(m, k, tol=1e-10, seed=seed)
    assert np.allclose(res.eigenvalues, ref_vals[:k], atol=1e-8, rtol=0)
    assert np.all(np.diff(res.eigenvalues) <= 1e-12)
    v = res.eigenvectors
    assert np.allclose(v.T @ v, np.eye(k), atol=1e-8)
    assert np.linalg.norm(dense @ v - v * res.eigenvalues, axis=0).max() <= 1e-8
    full = np.concatenate([ref_vals, [-np.inf]]) if len(ref_vals) == k else ref_vals
    for c in range(k):
        gap = np.min(np.abs(np.delete(full, c) - full[c]))
        if gap > 1e-2:
            sign = np.sign(ref_vecs[:, c] @ v[:, c])
            assert np.allclose(sign * v[:, c], ref_vecs[:, c], atol=1e-8)


class TestEigensolver:
    def test_true_graph_top_pair(self):
        rng = np.random.default_rng(2)
        g = true_graph(GridSpec(6, 7), rng.integers(0, 4, 42))
        res = top_eigenvectors(assemble_gcl(g).C_sym, 2)
        assert np.allclose(res.eigenvalues, 1.0, atol=1e-8)

    def test_ten_block_random_symmetric(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((20, 20))
        a = (a + a.T) / 2
        for k in (1, 2, 4):
            assert_matches_dense(a, k)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 50), st.integers(0, 2**16), st.integers(1, 6))
    def test_gcl_matrices_match_dense(self, n, seed, k):
        rng = np.random.default_rng(seed)
        if n == 1:
            m = np.diag(rng.standard_normal(2))
        else:
            m = assemble_gcl(random_connection_graph(rng, n, density=rng.uniform(0.05, 0.5))).C_sym
        assert_matches_dense(m, min(k, 2 * n), seed=seed)

    def test_large_restarted_problem(self):
        rng = np.random.default_rng(4)
        g = random_connection_graph(rng, 300, density=0.01)
        assert_matches_dense(assemble_gcl(g).C_sym, 4)

    def test_no_convergence(self):
        rng = np.random.default_rng(5)
        g = random_connection_graph(rng, 200, density=0.02)
        with pytest.raises(NoConvergence):
            top_eigenvectors(assemble_gcl(g).C_sym, 2, tol=1e-14, max_iter=2)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            top_eigenvectors(np.eye(3), 4)


class TestProjection:
    def test_exact_blocks_project_to_themselves(self):
        r = np.array([0, 1, 3, 2, 2, 1])
        U = Z4[r].reshape(-1, 2)
        out, degenerate = project_blocks_to_z4(U)
        assert np.array_equal(out, r) and degenerate == ()

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=8), st.integers(0, 2**16))
    def test_noise_below_margin(self, turns, seed):
        # Z4 elements sit at Frobenius distance 2 or 2*sqrt(2); 0.2 keeps every block well inside its cell
        rng = np.random.default_rng(seed)
        r = np.array([0] + turns)
        noise = rng.standard_normal((len(r), 2, 2))
        noise *= rng.uniform(0, 0.199, size=(len(r), 1, 1)) / np.linalg.norm(noise, axis=(1, 2), keepdims=True)
        out, _ = project_blocks_to_z4((Z4[r] + noise).reshape(-1, 2))
        assert np.array_equal(out, r)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=2, max_size=8), st.floats(0, 2 * np.pi), st.booleans(),
           st.integers(0, 2**16))
    def test_common_orthogonal_factor_is_ignored(self, turns, angle, reflect, seed):
        rng = np.random.default_rng(seed)
        blocks = Z4[turns] + 0.1 * rng.standard_normal((len(turns), 2, 2))
        c, s = np.cos(angle), np.sin(angle)
        o = np.array([[c, -s], [s, c]])
        if reflect:
            o = o @ np.diag([1.0, -1.0])
        a, _ = project_blocks_to_z4(blocks.reshape(-1, 2))
        b, _ = project_blocks_to_z4((blocks @ o).reshape(-1, 2))
        assert np.array_equal(a, b)

    def test_degenerate_block(self):
        U = np.vstack([Z4[0], np.zeros((2, 2)), Z4[1]])
        out, degenerate = project_blocks_to_z4(U)
        assert degenerate == (1,) and list(out) == [0, 0, 1]
        with pytest.raises(DegenerateBlock):
            project_blocks_to_z4(U, strict=True)


class TestRecover:
    def test_type3_scramble_true_graph(self):
        _, patches, grid, truth = make_puzzle(4, 5, s=6, seed=1)
        _, t3 = scramble(patches, truth, 3, seed=1)
        rec = recover_orientations(true_graph_for(t3))
        assert equal_up_to_turn(rec.orientation, t3.orientation)

    def test_single_vertex(self):
        rec = recover_orientations(ConnectionGraph(1))
        assert list(rec.orientation) == [0]

    @pytest.mark.parametrize("rows,cols", [(r, c) for r in range(1, 9) for c in range(1, 9) if r * c > 1])
    def test_exact_on_every_grid_up_to_8x8(self, rows, cols):
        rng = np.random.default_rng(rows * 10 + cols)
        grid = GridSpec(rows, cols)
        for _ in range(3):
            turns = rng.integers(0, 4, grid.n)
            rec = recover_orientations(true_graph(grid, turns), seed=int(rng.integers(100)))
            assert equal_up_to_turn(rec.orientation, -turns)

    @pytest.mark.parametrize("seed", range(5))
    def test_top12_and_connection_matrix_agree(self, seed):
        rng = np.random.default_rng(seed)
        g = true_graph(GridSpec(5, 6), rng.integers(0, 4, 30))
        a = recover_orientations(g, "top12", seed=seed).orientation
        b = recover_orientations(g, "on_S", seed=seed).orientation
        assert np.array_equal(a, b)

    def test_global_turn_of_truth_changes_nothing_relative(self):
        rng = np.random.default_rng(6)
        grid = GridSpec(4, 4)
        turns = rng.integers(0, 4, 16)
        base = recover_orientations(true_graph(grid, turns)).orientation
        for g in range(1, 4):
            other = recover_orientations(true_graph(grid, turns + g)).orientation
            assert np.array_equal((base[:, None] - base[None]) % 4, (other[:, None] - other[None]) % 4)

    def test_top34_mode_runs(self):
        rng = np.random.default_rng(7)
        g = true_graph(GridSpec(3, 4), rng.integers(0, 4, 12))
        rec = recover_orientations(g, "top34")
        assert rec.orientation.shape == (12,)
        assert rec.eigenvalues[0] >= rec.eigenvalues[3]

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            recover_orientations(ConnectionGraph(2), "top56")
