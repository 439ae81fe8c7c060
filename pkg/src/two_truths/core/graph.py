"""Graph representation, edge-list/label ingestion and structural preprocessing"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from two_truths.errors import GraphFormatError, LabelError
from two_truths.utils.logger import get_logger

LOGGER = get_logger("two_truths.graph")

MAX_VERTEX_ID = 2**31 - 2
_HEADER_PATTERN = re.compile(r"^#\s*n\s*=\s*(\d+)\s*$")


# ==========================================================
# TYPES
# ==========================================================
@dataclass(frozen=True)
class Graph:
    """Simple undirected graph stored as a symmetric, hollow, binary CSR matrix"""

    n: int
    adjacency: sparse.csr_matrix = field(repr=False)

    def __post_init__(self):
        if self.adjacency.shape != (self.n, self.n):
            raise ValueError(f"adjacency shape {self.adjacency.shape} does not match n={self.n}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]]) -> "Graph":
        """
        Build a graph from vertex pairs; loops are dropped and duplicates merged

        Args:
            n: Vertex count
            edges: Iterable of (i, j) pairs with 0 <= i, j < n

        Returns:
            Graph: The simple graph on those pairs
        """
        pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls._from_pair_array(n, pairs)

    @classmethod
    def _from_pair_array(cls, n: int, pairs: np.ndarray) -> "Graph":
        if len(pairs) and (pairs.min() < 0 or pairs.max() >= n):
            raise GraphFormatError(f"vertex id out of range for n={n}")
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        upper = sparse.coo_matrix((np.ones(len(lo), dtype=np.int8), (lo, hi)), shape=(n, n)).tocsr()
        upper.data[:] = 1
        return cls(n=n, adjacency=_symmetrize(upper))

    @classmethod
    def from_adjacency(cls, matrix) -> "Graph":
        """Build a graph from any square 0/1 matrix; only the upper triangle is read"""
        upper = sparse.triu(sparse.csr_matrix(matrix), k=1).tocsr()
        upper.eliminate_zeros()
        upper.data = np.ones_like(upper.data, dtype=np.int8)
        return cls(n=upper.shape[0], adjacency=_symmetrize(upper.astype(np.int8)))

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.nnz // 2)

    @property
    def edges(self) -> np.ndarray:
        """Edges as an (m, 2) array with i < j, lexicographically sorted"""
        upper = sparse.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return np.column_stack((upper.row[order], upper.col[order])).astype(np.int64)

    def neighbors(self, vertex: int) -> np.ndarray:
        start, stop = self.adjacency.indptr[vertex], self.adjacency.indptr[vertex + 1]
        return self.adjacency.indices[start:stop]

    def as_float(self) -> sparse.csr_matrix:
        """Adjacency as a float64 CSR matrix for linear algebra"""
        return self.adjacency.astype(np.float64)


@dataclass(frozen=True)
class VertexLabels:
    """One categorical label per vertex from a declared alphabet"""

    values: Tuple[str, ...]
    alphabet: Tuple[str, ...]

    def __post_init__(self):
        if not self.alphabet:
            raise LabelError("label alphabet must be nonempty")
        unknown = set(self.values) - set(self.alphabet)
        if unknown:
            raise LabelError(f"labels outside the alphabet: {sorted(unknown)}")

    @classmethod
    def from_values(cls, values: Sequence, alphabet: Optional[Sequence[str]] = None) -> "VertexLabels":
        values = tuple(str(v) for v in values)
        if alphabet is None:
            alphabet = sorted(set(values))
        return cls(values=values, alphabet=tuple(str(a) for a in alphabet))

    def __len__(self) -> int:
        return len(self.values)

    def codes(self) -> np.ndarray:
        """Integer code per vertex, indexing ``alphabet``"""
        lookup = {label: code for code, label in enumerate(self.alphabet)}
        return np.fromiter((lookup[v] for v in self.values), dtype=np.int64, count=len(self.values))

    def merge(self, mapping: Mapping[str, str]) -> "VertexLabels":
        """
        Derive a coarser labeling via a fine -> coarse merge map

        Args:
            mapping: Must cover every label of the alphabet

        Returns:
            VertexLabels: Coarse labels; coarse alphabet ordered by first appearance in the alphabet
        """
        missing = [label for label in self.alphabet if label not in mapping]
        if missing:
            raise LabelError(f"merge map does not cover labels {missing}")
        coarse_alphabet: List[str] = []
        for label in self.alphabet:
            coarse = str(mapping[label])
            if coarse not in coarse_alphabet:
                coarse_alphabet.append(coarse)
        return VertexLabels(
            values=tuple(str(mapping[v]) for v in self.values),
            alphabet=tuple(coarse_alphabet),
        )

    def take(self, vertices: np.ndarray) -> "VertexLabels":
        return VertexLabels(values=tuple(self.values[i] for i in vertices), alphabet=self.alphabet)


@dataclass(frozen=True)
class WeightedGraph:
    """Symmetric hollow adjacency with nonnegative real weights"""

    n: int
    weights: sparse.csr_matrix = field(repr=False)

    def __post_init__(self):
        if self.weights.nnz and self.weights.data.min() < 0:
            raise ValueError("weights must be nonnegative")


@dataclass(frozen=True)
class EdgeListFormat:
    """How an edge-list file is read"""

    delimiter: Optional[str] = None  # None = whitespace or comma
    weighted: bool = False
    threshold: float = 0.0  # weighted files keep edges with weight > threshold
    compact_ids: bool = False


@dataclass
class EdgeListReport:
    """Counts of repairs applied while loading"""

    lines: int = 0
    duplicates: int = 0
    self_loops: int = 0
    vertex_map: Dict[str, int] = field(default_factory=dict)


def _symmetrize(upper: sparse.csr_matrix) -> sparse.csr_matrix:
    full = (upper + upper.T).tocsr()
    full.sort_indices()
    return full


# ==========================================================
# LOADING
# ==========================================================
def _split_line(line: str, delimiter: Optional[str]) -> List[str]:
    if delimiter:
        return [token.strip() for token in line.split(delimiter) if token.strip()]
    return [token for token in re.split(r"[,\s]+", line.strip()) if token]


def load_edge_list(path, fmt: EdgeListFormat = EdgeListFormat(), *, return_report: bool = False):
    """
    Load a simple undirected graph from an edge-list text file

    Lines are "i j" or "i,j" with an optional third weight column (thresholded when fmt.weighted);
    "#" lines are comments, "# n=<count>" fixes the vertex count.

    Args:
        path: Path to the edge list
        fmt: Parsing options
        return_report: Also return the EdgeListReport

    Returns:
        Graph, or (Graph, EdgeListReport) when return_report is set
    """
    path = Path(path)
    report = EdgeListReport()
    declared_n: Optional[int] = None
    raw_pairs: List[Tuple[str, str]] = []

    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                header = _HEADER_PATTERN.match(stripped)
                if header:
                    declared_n = int(header.group(1))
                continue
            tokens = _split_line(stripped, fmt.delimiter)
            if len(tokens) not in (2, 3):
                raise GraphFormatError(
                    f"expected 2 or 3 columns, got {len(tokens)}", line_number=line_number, path=str(path)
                )
            if len(tokens) == 3 and fmt.weighted:
                try:
                    weight = float(tokens[2])
                except ValueError:
                    raise GraphFormatError("weight is not a number", line_number=line_number, path=str(path))
                if weight <= fmt.threshold:
                    continue
            raw_pairs.append((tokens[0], tokens[1]))
            report.lines += 1
            if not fmt.compact_ids:
                for token in tokens[:2]:
                    if not token.isdigit():
                        raise GraphFormatError(
                            f"vertex id {token!r} is not a nonnegative integer",
                            line_number=line_number,
                            path=str(path),
                        )
                    if int(token) > MAX_VERTEX_ID:
                        raise GraphFormatError(
                            f"vertex id {token} overflows the supported range",
                            line_number=line_number,
                            path=str(path),
                        )

    if fmt.compact_ids:
        external = sorted({v for pair in raw_pairs for v in pair}, key=_natural_key)
        report.vertex_map = {ext: idx for idx, ext in enumerate(external)}
        pairs = np.array([(report.vertex_map[a], report.vertex_map[b]) for a, b in raw_pairs], dtype=np.int64)
    else:
        pairs = np.array([(int(a), int(b)) for a, b in raw_pairs], dtype=np.int64)
    pairs = pairs.reshape(-1, 2)

    n = int(pairs.max()) + 1 if len(pairs) else 0
    if declared_n is not None:
        if declared_n < n:
            raise GraphFormatError(f"header declares n={declared_n} but vertex id {n - 1} appears", path=str(path))
        n = declared_n

    loops = pairs[:, 0] == pairs[:, 1]
    report.self_loops = int(loops.sum())
    kept = pairs[~loops]
    canonical = np.sort(kept, axis=1)
    unique = np.unique(canonical, axis=0) if len(canonical) else canonical
    report.duplicates = int(len(canonical) - len(unique))

    if report.duplicates or report.self_loops:
        LOGGER.warning(
            "%s: dropped %d duplicate edge(s) and %d self-loop(s)", path, report.duplicates, report.self_loops
        )

    graph = Graph._from_pair_array(n, unique)
    LOGGER.info("Loaded %s: n=%d, |E|=%d", path, graph.n, graph.n_edges)
    return (graph, report) if return_report else graph


def _natural_key(token: str):
    return (0, int(token), "") if token.isdigit() else (1, 0, token)


def load_labels(path, n: int, alphabet: Optional[Sequence[str]] = None) -> VertexLabels:
    """
    Load per-vertex labels, either "vertex_id,label" lines or bare labels in vertex order

    Args:
        path: Label file
        n: Expected vertex count
        alphabet: Optional declared alphabet (defaults to the sorted observed labels)

    Returns:
        VertexLabels: Labels for all n vertices
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.strip() for line in handle if line.strip() and not line.strip().startswith("#")]
    if lines and lines[0].lower().replace(" ", "") == "vertex_id,label":
        lines = lines[1:]

    if len(lines) != n:
        raise LabelError(f"{path}: count mismatch, expected {n} labels, found {len(lines)}")

    if lines and all("," in line for line in lines):
        values: List[Optional[str]] = [None] * n
        for line_number, line in enumerate(lines, start=1):
            raw_id, label = (part.strip() for part in line.split(",", 1))
            if not raw_id.isdigit():
                raise LabelError(f"{path}:{line_number}: bad vertex id {raw_id!r}")
            vertex = int(raw_id)
            if vertex >= n:
                raise LabelError(f"{path}:{line_number}: vertex id {vertex} outside 0..{n - 1}")
            if values[vertex] is not None:
                raise LabelError(f"{path}:{line_number}: duplicate vertex id {vertex}")
            values[vertex] = label
        missing = [i for i, v in enumerate(values) if v is None]
        if missing:
            raise LabelError(f"{path}: missing vertex ids {missing[:10]}")
        return VertexLabels.from_values(values, alphabet)

    return VertexLabels.from_values(lines, alphabet)


def save_edge_list(graph: Graph, path) -> None:
    """Write "i j" lines with a "# n=<count>" header so isolated vertices survive"""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# n={graph.n}\n")
        for i, j in graph.edges:
            handle.write(f"{i} {j}\n")


def save_labels(labels: VertexLabels, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("vertex_id,label\n")
        for vertex, label in enumerate(labels.values):
            handle.write(f"{vertex},{label}\n")


# ==========================================================
# STRUCTURE
# ==========================================================
def induced_subgraph(g: Graph, vertices: np.ndarray) -> Tuple[Graph, np.ndarray]:
    """
    Subgraph on ``vertices`` (kept in increasing original order)

    Returns:
        (Graph, index_map): index_map[old] = new id, or -1 when the vertex was dropped
    """
    vertices = np.sort(np.asarray(vertices, dtype=np.int64))
    index_map = np.full(g.n, -1, dtype=np.int64)
    index_map[vertices] = np.arange(len(vertices))
    sub = g.adjacency[vertices][:, vertices].tocsr()
    sub.sort_indices()
    return Graph(n=len(vertices), adjacency=sub), index_map


def largest_connected_component(
    g: Graph, labels: Optional[VertexLabels] = None
) -> Tuple[Graph, Optional[VertexLabels], np.ndarray]:
    """
    Induced subgraph on the largest connected component

    Ties between equally large components go to the one holding the smallest vertex id.

    Returns:
        (Graph, VertexLabels or None, index_map)
    """
    if g.n == 0:
        return g, labels, np.zeros(0, dtype=np.int64)

    n_components, component = connected_components(g.adjacency, directed=False)
    sizes = np.bincount(component, minlength=n_components)
    first_vertex = np.full(n_components, g.n, dtype=np.int64)
    np.minimum.at(first_vertex, component, np.arange(g.n))
    order = np.lexsort((first_vertex, -sizes))
    winner = order[0]
    vertices = np.flatnonzero(component == winner)

    sub, index_map = induced_subgraph(g, vertices)
    if n_components > 1:
        LOGGER.info("LCC keeps %d of %d vertices (%d components)", sub.n, g.n, n_components)
    return sub, (labels.take(vertices) if labels is not None else None), index_map


def induced_subgraph_by_labels(
    g: Graph, labels: VertexLabels, keep: Iterable[str]
) -> Tuple[Graph, VertexLabels, np.ndarray]:
    """Subgraph on the vertices whose label is in ``keep``"""
    keep = set(keep)
    unknown = keep - set(labels.alphabet)
    if unknown:
        raise LabelError(f"unknown label(s): {sorted(unknown)}")
    vertices = np.array([i for i, label in enumerate(labels.values) if label in keep], dtype=np.int64)
    sub, index_map = induced_subgraph(g, vertices)
    return sub, labels.take(vertices), index_map


def average_graphs(gs: Sequence[Graph]) -> WeightedGraph:
    """Composite graph whose weights are the fraction of graphs containing each pair"""
    if not gs:
        raise ValueError("cannot average an empty list of graphs")
    n = gs[0].n
    if any(g.n != n for g in gs):
        raise ValueError(f"graphs disagree on vertex count: {sorted({g.n for g in gs})}")
    total = sparse.csr_matrix((n, n), dtype=np.float64)
    for g in gs:
        total = total + g.as_float()
    return WeightedGraph(n=n, weights=(total / len(gs)).tocsr())


def binarize(w: WeightedGraph, threshold: float = 0.0) -> Graph:
    """Keep pairs whose weight is strictly above ``threshold``"""
    kept = w.weights.copy().tocsr()
    kept.data = (kept.data > threshold).astype(np.int8)
    kept.eliminate_zeros()
    return Graph.from_adjacency(kept)


def degrees(g: Graph) -> np.ndarray:
    return np.diff(g.adjacency.indptr).astype(np.int64)


def density(g: Graph) -> float:
    """|E| / C(n, 2)"""
    if g.n < 2:
        raise ValueError("density needs at least 2 vertices")
    return g.n_edges / (g.n * (g.n - 1) / 2)
