"""
Spectral graph clustering engine: GMM o {LSE, ASE}

Embeds a graph (LSE on its largest connected component), picks the embedding
dimension by profile likelihood and the number of clusters by BIC unless they
are fixed, then assigns every vertex to its most responsible mixture component.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from two_truths.core import gmm
from two_truths.core.evaluation import AriResult, Partition, ari, ari_between_methods
from two_truths.core.graph import Graph, VertexLabels, largest_connected_component
from two_truths.core.model_selection import ElbowReport, KSelectionReport, select_d, select_k_bic
from two_truths.core.spectral import Embedding, EmbeddingMethod, SolverOptions, embed
from two_truths.utils.logger import get_logger


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    """One run of the pipeline; ``vertices`` are the input ids that were clustered"""

    method: EmbeddingMethod
    vertices: np.ndarray
    embedding: Embedding = field(repr=False)
    model: gmm.GmmModel = field(repr=False)
    assignment: np.ndarray = field(repr=False)
    elbow: Optional[ElbowReport] = None
    k_selection: Optional[KSelectionReport] = None

    @property
    def d(self) -> int:
        return self.embedding.d

    @property
    def K(self) -> int:
        return self.model.K

    def partition(self) -> Partition:
        return Partition(self.assignment)

    def summary(self) -> Dict:
        return {
            "method": self.method.value,
            "n": int(len(self.vertices)),
            "d": self.d,
            "K": self.K,
            "d_selected": self.elbow is not None,
            "K_selected": self.k_selection is not None,
            "log_likelihood": self.model.log_likelihood,
            "converged": self.model.converged,
        }


class SpectralClusterer:
    """Runs GMM o {LSE, ASE} on graphs and keeps running statistics"""

    def __init__(
        self,
        solver: SolverOptions = SolverOptions(),
        gmm_options: gmm.GmmOptions = gmm.GmmOptions(),
        k_max: int = 10,
        elbow_index: int = 1,
        max_scree: int = 100,
        seed: int = 0,
        n_jobs: int = 1,
    ):
        self.logger = get_logger("two_truths.pipeline")
        self.solver = solver
        self.gmm_options = gmm_options
        self.k_max = k_max
        self.elbow_index = elbow_index
        self.max_scree = max_scree
        self.seed = seed
        self.n_jobs = n_jobs

        self.stats = {
            "runs": 0,
            "lse_runs": 0,
            "ase_runs": 0,
            "lcc_trimmed": 0,
            "vertices_dropped": 0,
            "auto_d": 0,
            "auto_k": 0,
            "seconds": 0.0,
        }

    # ------------------------------------------------------
    # Single graph
    # ------------------------------------------------------
    def prepare(self, g: Graph, method) -> tuple[Graph, np.ndarray]:
        """LSE needs a connected graph: reduce to the LCC with a notice"""
        method = EmbeddingMethod(method)
        if method is EmbeddingMethod.ASE:
            return g, np.arange(g.n, dtype=np.int64)
        sub, _, index_map = largest_connected_component(g)
        vertices = np.flatnonzero(index_map >= 0) if len(index_map) else np.arange(g.n, dtype=np.int64)
        if sub.n < g.n:
            self.logger.info("LSE runs on the LCC: %d of %d vertices kept", sub.n, g.n)
            self.stats["lcc_trimmed"] += 1
            self.stats["vertices_dropped"] += g.n - sub.n
        return sub, vertices

    def cluster(self, g: Graph, method, d: Optional[int] = None, K: Optional[int] = None) -> ClusteringResult:
        """
        Cluster the vertices of one graph

        Args:
            g: Input graph
            method: "ASE" or "LSE"
            d: Embedding dimension, or None for the profile-likelihood choice
            K: Cluster count, or None for the BIC choice over 1..k_max

        Returns:
            ClusteringResult: Embedding, mixture, hard assignment and selection reports
        """
        method = EmbeddingMethod(method)
        started = time.perf_counter()
        graph, vertices = self.prepare(g, method)

        elbow = None
        if d is None:
            elbow = select_d(graph, method, self.solver, self.elbow_index, self.max_scree)
            d = elbow.chosen_d
            self.stats["auto_d"] += 1
        embedding = embed(graph, d, method, self.solver)

        k_selection = None
        if K is None:
            k_range = range(1, min(self.k_max, graph.n) + 1)
            k_selection = select_k_bic(embedding.X, k_range, self.seed, self.gmm_options, self.n_jobs)
            model = k_selection.models[k_selection.chosen_k]
            self.stats["auto_k"] += 1
        else:
            model = gmm.fit(embedding.X, K, seed=self.seed, opts=self.gmm_options)
        assignment = gmm.hard_assign(model, embedding.X)

        self.stats["runs"] += 1
        self.stats["lse_runs" if method is EmbeddingMethod.LSE else "ase_runs"] += 1
        self.stats["seconds"] += time.perf_counter() - started
        self.logger.info("GMM o %s: n=%d d=%d K=%d", method.value, graph.n, d, model.K)
        return ClusteringResult(
            method=method,
            vertices=vertices,
            embedding=embedding,
            model=model,
            assignment=assignment,
            elbow=elbow,
            k_selection=k_selection,
        )

    def cluster_all(self, g: Graph, methods: Sequence = ("LSE", "ASE"), d: Optional[int] = None,
                    K: Optional[int] = None) -> Dict[str, ClusteringResult]:
        return {EmbeddingMethod(m).value: self.cluster(g, m, d, K) for m in methods}

    # ------------------------------------------------------
    # Scoring
    # ------------------------------------------------------
    @staticmethod
    def score(result: ClusteringResult, truths: Mapping[str, VertexLabels]) -> Dict[str, AriResult]:
        """ARI of the clustering against each truth, on the clustered vertices"""
        return {
            name: ari(result.assignment, labels.take(result.vertices))
            for name, labels in truths.items()
        }

    @staticmethod
    def compare(first: ClusteringResult, second: ClusteringResult, n_perm: int = 1000, seed: int = 0) -> AriResult:
        """ARI between two clusterings on the vertices both of them kept"""
        common, i, j = np.intersect1d(first.vertices, second.vertices, assume_unique=True, return_indices=True)
        if len(common) < len(first.vertices) or len(common) < len(second.vertices):
            get_logger("two_truths.pipeline").info("Comparing clusterings on %d shared vertices", len(common))
        return ari_between_methods(first.assignment[i], second.assignment[j], n_perm=n_perm, seed=seed)

    # ------------------------------------------------------
    # Stats
    # ------------------------------------------------------
    def get_stats(self) -> Dict:
        runs = max(1, self.stats["runs"])
        return {**self.stats, "mean_seconds": self.stats["seconds"] / runs}

    def reset_stats(self) -> None:
        for key in self.stats:
            self.stats[key] = 0.0 if key == "seconds" else 0
