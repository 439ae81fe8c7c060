import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from two_truths.core.graph import (  # noqa: E402
    EdgeListFormat,
    Graph,
    VertexLabels,
    average_graphs,
    binarize,
    degrees,
    density,
    induced_subgraph_by_labels,
    largest_connected_component,
    load_edge_list,
    load_labels,
    save_edge_list,
    save_labels,
)
from two_truths.errors import GraphFormatError, LabelError  # noqa: E402


class EdgeListTests(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp(prefix="two_truths_graph_")

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def _write(self, name, text):
        path = Path(self.tmpdir) / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_simple_path(self):
        graph = load_edge_list(self._write("path.txt", "0 1\n1 2\n"))
        self.assertEqual(graph.n, 3)
        self.assertEqual(graph.edges.tolist(), [[0, 1], [1, 2]])

    def test_duplicates_and_loops_are_dropped_with_warning(self):
        path = self._write("dups.txt", "0 1\n1 0\n2 2\n")
        with self.assertLogs("two_truths.graph", level="WARNING") as captured:
            graph, report = load_edge_list(path, return_report=True)
        self.assertEqual(graph.n, 3)
        self.assertEqual(graph.edges.tolist(), [[0, 1]])
        self.assertEqual(report.duplicates, 1)
        self.assertEqual(report.self_loops, 1)
        self.assertTrue(any("1 duplicate" in line for line in captured.output))

    def test_empty_file(self):
        graph = load_edge_list(self._write("empty.txt", ""))
        self.assertEqual(graph.n, 0)
        self.assertEqual(graph.n_edges, 0)

    def test_comma_separated_with_header_and_weights(self):
        path = self._write("csv.txt", "# n=5\n0,1,0.5\n3,4,2\n")
        graph = load_edge_list(path)
        self.assertEqual(graph.n, 5)
        self.assertEqual(graph.n_edges, 2)

    def test_weighted_threshold(self):
        path = self._write("weighted.txt", "0 1 0.2\n1 2 0.9\n2 3 0\n")
        graph = load_edge_list(path, EdgeListFormat(weighted=True, threshold=0.5))
        self.assertEqual(graph.edges.tolist(), [[1, 2]])

    def test_malformed_line_reports_line_number(self):
        path = self._write("bad.txt", "0 1\n1 2 3 4\n")
        with self.assertRaises(GraphFormatError) as ctx:
            load_edge_list(path)
        self.assertEqual(ctx.exception.line_number, 2)

    def test_non_integer_id_rejected(self):
        with self.assertRaises(GraphFormatError):
            load_edge_list(self._write("names.txt", "a b\n"))

    def test_id_overflow_rejected(self):
        with self.assertRaises(GraphFormatError):
            load_edge_list(self._write("huge.txt", f"0 {2**40}\n"))

    def test_compact_ids(self):
        path = self._write("names.txt", "alice bob\nbob carol\n")
        graph, report = load_edge_list(path, EdgeListFormat(compact_ids=True), return_report=True)
        self.assertEqual(graph.n, 3)
        self.assertEqual(report.vertex_map, {"alice": 0, "bob": 1, "carol": 2})

    def test_header_smaller_than_ids_rejected(self):
        with self.assertRaises(GraphFormatError):
            load_edge_list(self._write("short.txt", "# n=2\n0 5\n"))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_edge_list(Path(self.tmpdir) / "missing.txt")

    def test_save_and_reload_keeps_isolated_vertices(self):
        graph = Graph.from_edges(6, [(0, 1), (2, 3)])
        path = Path(self.tmpdir) / "out.edges"
        save_edge_list(graph, path)
        again = load_edge_list(path)
        self.assertEqual(again.n, 6)
        self.assertEqual(again.edges.tolist(), graph.edges.tolist())


class LabelTests(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp(prefix="two_truths_labels_")

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def _write(self, text):
        path = Path(self.tmpdir) / "labels.csv"
        path.write_text(text, encoding="utf-8")
        return path

    def test_id_label_pairs_with_header(self):
        labels = load_labels(self._write("vertex_id,label\n1,b\n0,a\n2,a\n"), 3)
        self.assertEqual(labels.values, ("a", "b", "a"))
        self.assertEqual(labels.alphabet, ("a", "b"))

    def test_bare_labels(self):
        labels = load_labels(self._write("LG\nRW\nLG\n"), 3)
        self.assertEqual(labels.values, ("LG", "RW", "LG"))

    def test_count_mismatch(self):
        with self.assertRaises(LabelError):
            load_labels(self._write("a\nb\n"), 3)

    def test_duplicate_id(self):
        with self.assertRaises(LabelError):
            load_labels(self._write("0,a\n0,b\n"), 2)

    def test_save_round_trip(self):
        labels = VertexLabels.from_values(["x", "y", "x"])
        path = Path(self.tmpdir) / "saved.csv"
        save_labels(labels, path)
        self.assertEqual(load_labels(path, 3).values, labels.values)

    def test_merge_map(self):
        labels = VertexLabels.from_values(["LG", "LW", "RG", "RW"], alphabet=["LG", "LW", "RG", "RW"])
        merged = labels.merge({"LG": "L", "LW": "L", "RG": "R", "RW": "R"})
        self.assertEqual(merged.values, ("L", "L", "R", "R"))
        self.assertEqual(merged.alphabet, ("L", "R"))

    def test_merge_map_must_cover_alphabet(self):
        labels = VertexLabels.from_values(["a", "b"])
        with self.assertRaises(LabelError):
            labels.merge({"a": "x"})


class StructureTests(unittest.TestCase):
    def test_lcc_of_two_triangles_and_isolated_vertex(self):
        graph = Graph.from_edges(7, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (5, 6)])
        labels = VertexLabels.from_values(list("aaabbbb"))
        sub, sub_labels, index_map = largest_connected_component(graph, labels)
        self.assertEqual(sub.n, 4)
        self.assertEqual(sub_labels.values, ("b", "b", "b", "b"))
        self.assertEqual(index_map.tolist(), [-1, -1, -1, 0, 1, 2, 3])

    def test_lcc_tie_goes_to_smallest_vertex(self):
        graph = Graph.from_edges(4, [(2, 3), (0, 1)])
        sub, _, index_map = largest_connected_component(graph)
        self.assertEqual(sub.n, 2)
        self.assertEqual(index_map.tolist(), [0, 1, -1, -1])

    def test_lcc_of_empty_graph(self):
        sub, _, index_map = largest_connected_component(Graph.from_edges(0, []))
        self.assertEqual(sub.n, 0)
        self.assertEqual(len(index_map), 0)

    def test_lcc_of_edgeless_graph_is_single_vertex(self):
        sub, _, _ = largest_connected_component(Graph.from_edges(3, []))
        self.assertEqual(sub.n, 1)

    def test_lcc_is_idempotent(self):
        rng = np.random.default_rng(13)
        pairs = rng.integers(0, 60, size=(50, 2))
        graph = Graph.from_edges(60, pairs.tolist())
        labels = VertexLabels.from_values([str(i % 3) for i in range(60)])
        once, once_labels, _ = largest_connected_component(graph, labels)
        twice, twice_labels, index_map = largest_connected_component(once, once_labels)
        self.assertEqual(twice.n, once.n)
        np.testing.assert_array_equal(twice.edges, once.edges)
        self.assertEqual(twice_labels.values, once_labels.values)
        self.assertEqual(index_map.tolist(), list(range(once.n)))

    def test_induced_subgraph_by_labels(self):
        graph = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        labels = VertexLabels.from_values(["L", "L", "R", "R"])
        sub, sub_labels, _ = induced_subgraph_by_labels(graph, labels, ["L"])
        self.assertEqual(sub.n, 2)
        self.assertEqual(sub.n_edges, 1)
        with self.assertRaises(LabelError):
            induced_subgraph_by_labels(graph, labels, ["Q"])

    def test_adjacency_is_symmetric_hollow_binary(self):
        graph = Graph.from_edges(4, [(0, 1), (1, 0), (2, 2), (1, 3), (3, 1)])
        dense = graph.adjacency.toarray()
        np.testing.assert_array_equal(dense, dense.T)
        self.assertTrue(np.all(np.diag(dense) == 0))
        self.assertEqual(set(np.unique(dense)), {0, 1})
        self.assertEqual(degrees(graph).tolist(), [1, 2, 0, 1])
        self.assertAlmostEqual(density(graph), 2 / 6)

    def test_neighbors(self):
        graph = Graph.from_edges(4, [(0, 1), (0, 3)])
        self.assertEqual(sorted(graph.neighbors(0).tolist()), [1, 3])

    def test_average_and_binarize(self):
        g1 = Graph.from_edges(3, [(0, 1), (1, 2)])
        g2 = Graph.from_edges(3, [(0, 1)])
        composite = average_graphs([g1, g2])
        self.assertAlmostEqual(composite.weights[0, 1], 1.0)
        self.assertAlmostEqual(composite.weights[1, 2], 0.5)
        self.assertEqual(binarize(composite, 0.5).edges.tolist(), [[0, 1]])
        self.assertEqual(binarize(composite).n_edges, 2)

    def test_average_rejects_mismatched_sizes(self):
        with self.assertRaises(ValueError):
            average_graphs([Graph.from_edges(2, []), Graph.from_edges(3, [])])
        with self.assertRaises(ValueError):
            average_graphs([])


if __name__ == '__main__':
    unittest.main()
