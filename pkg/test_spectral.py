import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence

sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from two_truths.core.graph import Graph  # noqa: E402
from two_truths.core.sbm import SbmParams, sample_sbm  # noqa: E402
from two_truths.core.spectral import (  # noqa: E402
    EmbeddingMethod,
    SolverOptions,
    ase_embed,
    embed,
    laplacian_matrix,
    laplacian_operator,
    lse_embed,
    spectrum,
    top_eigenpairs,
)
from two_truths.errors import ConvergenceError, IsolatedVertexError  # noqa: E402

LANCZOS = SolverOptions(dense_threshold=0)


def _planted_symmetric(rng, n, top):
    """Random orthogonal basis with the given leading eigenvalues and a bulk in [-1, 1]"""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    values = np.concatenate([top, rng.uniform(-1.0, 1.0, n - len(top))])
    return (q * values) @ q.T


def _reference_pairs(matrix, m):
    values, vectors = np.linalg.eigh(matrix)
    order = np.argsort(-np.abs(values), kind="stable")[:m]
    values, vectors = values[order], vectors[:, order]
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(m)])
    return values, vectors * signs


def _cycle(n):
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


class EigensolverTests(unittest.TestCase):
    def test_lanczos_matches_dense_decomposition(self):
        rng = np.random.default_rng(2024)
        top = np.array([10.0, -8.0, 6.0, -4.5])
        for trial in range(100):
            n = int(rng.integers(20, 129))
            matrix = _planted_symmetric(rng, n, top)
            with self.subTest(trial=trial, n=n):
                slice_, vectors = top_eigenpairs(matrix, 4, LANCZOS)
                expected_values, expected_vectors = _reference_pairs(matrix, 4)
                self.assertEqual(slice_.solver, "lanczos")
                np.testing.assert_allclose(slice_.eigenvalues, expected_values, atol=1e-8)
                np.testing.assert_allclose(vectors, expected_vectors, atol=1e-6)

    def test_dense_path_for_small_problems(self):
        matrix = _planted_symmetric(np.random.default_rng(1), 30, np.array([5.0, 3.0]))
        slice_, _ = top_eigenpairs(matrix, 2)
        self.assertEqual(slice_.solver, "dense")
        np.testing.assert_allclose(slice_.eigenvalues, [5.0, 3.0], atol=1e-10)

    def test_equal_magnitude_puts_positive_first(self):
        matrix = np.diag([1.0, -3.0, 3.0, 0.5])
        slice_, vectors = top_eigenpairs(matrix, 2)
        np.testing.assert_allclose(slice_.eigenvalues, [3.0, -3.0], atol=1e-12)
        np.testing.assert_allclose(vectors[:, 0], [0, 0, 1, 0])

    def test_sign_convention(self):
        matrix = _planted_symmetric(np.random.default_rng(5), 40, np.array([7.0, -6.0, 2.0]))
        _, vectors = top_eigenpairs(matrix, 3)
        for column in vectors.T:
            self.assertGreater(column[np.argmax(np.abs(column))], 0)

    def test_low_rank_matrix_is_reconstructed(self):
        rng = np.random.default_rng(17)
        basis, _ = np.linalg.qr(rng.standard_normal((50, 3)))
        matrix = (basis * [6.0, -2.5, 1.5]) @ basis.T
        slice_, vectors = top_eigenpairs(matrix, 3, LANCZOS)
        np.testing.assert_allclose((vectors * slice_.eigenvalues) @ vectors.T, matrix, atol=1e-8)

    def test_path_of_three_laplacian_spectrum(self):
        graph = Graph.from_edges(3, [(0, 1), (1, 2)])
        np.testing.assert_allclose(spectrum(graph, "LSE", 3).eigenvalues, [1.0, -1.0, 0.0], atol=1e-12)

    def test_rejects_bad_m(self):
        with self.assertRaises(ValueError):
            top_eigenpairs(np.eye(3), 0)
        with self.assertRaises(ValueError):
            top_eigenpairs(np.eye(3), 4)

    def test_convergence_failure_after_retry(self):
        matrix = _planted_symmetric(np.random.default_rng(9), 60, np.array([4.0, 3.0]))
        failure = ArpackNoConvergence("no convergence", np.zeros(0), np.zeros((60, 0)))
        with mock.patch("two_truths.core.spectral.eigsh", side_effect=failure) as patched:
            with self.assertRaises(ConvergenceError):
                top_eigenpairs(matrix, 2, LANCZOS)
        self.assertEqual(patched.call_count, 2)


class EmbeddingTests(unittest.TestCase):
    def test_ase_of_two_cliques(self):
        cliques = [(i, j) for block in (range(5), range(5, 10)) for i in block for j in block if i < j]
        graph = Graph.from_edges(10, cliques)
        embedding = ase_embed(graph, 2)
        np.testing.assert_allclose(embedding.eigenvalues, [4.0, 4.0], atol=1e-10)
        expected = np.zeros((10, 10))
        expected[:5, :5] = expected[5:, 5:] = 4.0 / 5.0
        np.testing.assert_allclose(embedding.X @ embedding.X.T, expected, atol=1e-10)

    def test_lse_of_even_cycle(self):
        graph = _cycle(6)
        embedding = lse_embed(graph, 2)
        np.testing.assert_allclose(embedding.eigenvalues, [1.0, -1.0], atol=1e-10)
        np.testing.assert_allclose(np.abs(embedding.X), np.full((6, 2), 1 / np.sqrt(6)), atol=1e-10)

    def test_complete_graph_first_column(self):
        for m in (4, 7, 12):
            graph = Graph.from_edges(m, [(i, j) for i in range(m) for j in range(i + 1, m)])
            embedding = ase_embed(graph, 1)
            with self.subTest(m=m):
                self.assertAlmostEqual(embedding.eigenvalues[0], m - 1.0, places=10)
                np.testing.assert_allclose(embedding.X[:, 0], np.sqrt(m - 1.0) / np.sqrt(m), atol=1e-10)

    def test_lse_leading_vector_follows_degrees(self):
        graph = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)])
        embedding = lse_embed(graph, 1)
        deg = graph.adjacency.sum(axis=1).A1
        self.assertAlmostEqual(embedding.eigenvalues[0], 1.0, places=10)
        np.testing.assert_allclose(embedding.X[:, 0], np.sqrt(deg / deg.sum()), atol=1e-10)

    def test_vertex_permutation_moves_rows(self):
        graph, _ = sample_sbm(SbmParams(pi=[0.5, 0.5], B=[[0.4, 0.05], [0.05, 0.25]]), 120, seed=19)
        order = np.random.default_rng(3).permutation(graph.n)
        inverse = np.argsort(order)
        permuted = Graph.from_edges(graph.n, inverse[graph.edges])
        for method in ("ASE", "LSE"):
            if method == "LSE" and np.any(graph.adjacency.sum(axis=1) == 0):
                continue
            with self.subTest(method=method):
                base = embed(graph, 2, method)
                moved = embed(permuted, 2, method)
                np.testing.assert_allclose(moved.eigenvalues, base.eigenvalues, atol=1e-8)
                np.testing.assert_allclose(moved.X @ moved.X.T, (base.X @ base.X.T)[np.ix_(order, order)], atol=1e-8)

    def test_lse_rejects_isolated_vertices(self):
        graph = Graph.from_edges(4, [(0, 1), (1, 2)])
        with self.assertRaises(IsolatedVertexError):
            lse_embed(graph, 1)

    def test_edgeless_graph_embeds_at_origin(self):
        embedding = ase_embed(Graph.from_edges(5, []), 2)
        np.testing.assert_array_equal(embedding.X, np.zeros((5, 2)))
        np.testing.assert_array_equal(spectrum(Graph.from_edges(5, []), "ASE", 3).eigenvalues, np.zeros(3))

    def test_dimension_bounds(self):
        graph = _cycle(5)
        with self.assertRaises(ValueError):
            embed(graph, 0, EmbeddingMethod.ASE)
        with self.assertRaises(ValueError):
            embed(graph, 6, "ASE")

    def test_laplacian_operator_matches_matrix(self):
        graph, _ = sample_sbm(SbmParams(pi=[0.5, 0.5], B=[[0.3, 0.05], [0.05, 0.3]]), 80, seed=4)
        graph = Graph.from_edges(graph.n, np.vstack([graph.edges, [[i, i + 1] for i in range(79)]]))
        x = np.random.default_rng(0).standard_normal(80)
        np.testing.assert_allclose(laplacian_operator(graph).matvec(x), laplacian_matrix(graph) @ x, atol=1e-12)

    def test_lanczos_and_dense_embeddings_agree(self):
        params = SbmParams(pi=[0.5, 0.5], B=[[0.4, 0.02], [0.02, 0.3]])
        graph, _ = sample_sbm(params, 300, seed=12)
        for method in ("ASE", "LSE"):
            with self.subTest(method=method):
                dense = embed(graph, 2, method, SolverOptions(dense_threshold=1000))
                sparse_ = embed(graph, 2, method, LANCZOS)
                np.testing.assert_allclose(sparse_.eigenvalues, dense.eigenvalues, atol=1e-8)
                np.testing.assert_allclose(sparse_.X, dense.X, atol=1e-6)

    def test_lse_spectrum_is_bounded_by_one(self):
        graph = _cycle(12)
        magnitudes = spectrum(graph, "LSE", 5).magnitudes
        self.assertAlmostEqual(magnitudes[0], 1.0, places=10)
        self.assertTrue(np.all(magnitudes <= 1.0 + 1e-10))

    def test_to_csv(self):
        tmpdir = tempfile.mkdtemp(prefix="two_truths_embed_")
        try:
            path = Path(tmpdir) / "embedding.csv"
            ase_embed(_cycle(6), 2).to_csv(path)
            lines = path.read_text(encoding="utf-8").splitlines()
            self.assertTrue(lines[0].startswith("# method=ASE eigenvalues="))
            self.assertEqual(lines[1], "x1,x2")
            self.assertEqual(len(lines), 8)
        finally:
            shutil.rmtree(tmpdir, ignore_errors=True)


if __name__ == '__main__':
    unittest.main()
