"""Partition agreement: adjusted Rand index, permutation tests and method comparisons"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.special import comb
from sklearn.metrics.cluster import contingency_matrix

from two_truths.core.graph import VertexLabels
from two_truths.utils.logger import get_logger

LOGGER = get_logger("two_truths.evaluation")

MIN_PERMUTATIONS = 100


@dataclass(frozen=True, eq=False)
class Partition:
    """Cluster id per vertex, relabeled to 0..K-1 in order of first appearance"""

    assignment: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.assignment).reshape(-1)
        _, first, inverse = np.unique(values, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first)] = np.arange(len(first))
        object.__setattr__(self, "assignment", rank[inverse].reshape(-1))

    @classmethod
    def from_labels(cls, labels: VertexLabels) -> "Partition":
        return cls(labels.codes())

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def n_clusters(self) -> int:
        return int(self.assignment.max()) + 1 if self.n else 0

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and np.array_equal(self.assignment, other.assignment)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AriResult:
    ari: float
    contingency: np.ndarray
    p_value: Optional[float] = None
    n_perm: int = 0

    def to_dict(self) -> Dict:
        data = {"ari": self.ari, "contingency": self.contingency.tolist()}
        if self.p_value is not None:
            data.update(p_value=self.p_value, n_perm=self.n_perm)
        return data


def _as_partition(p) -> Partition:
    if isinstance(p, Partition):
        return p
    if isinstance(p, VertexLabels):
        return Partition.from_labels(p)
    return Partition(p)


def _ari_from_table(table: np.ndarray, identical: bool) -> float:
    n = int(table.sum())
    index = float(comb(table, 2).sum())
    rows = float(comb(table.sum(axis=1), 2).sum())
    cols = float(comb(table.sum(axis=0), 2).sum())
    total = float(comb(n, 2))
    expected = rows * cols / total if total > 0 else 0.0
    denominator = 0.5 * (rows + cols) - expected
    if denominator == 0:
        # single-cluster or all-singleton partitions on both sides
        return 1.0 if identical else 0.0
    return (index - expected) / denominator


def ari(p1, p2) -> AriResult:
    """
    Adjusted Rand index from the contingency table

    Accepts Partition, VertexLabels or any sequence of cluster ids. ARI is
    invariant to relabeling and symmetric in its arguments.
    """
    a, b = _as_partition(p1), _as_partition(p2)
    if a.n != b.n:
        raise ValueError(f"partitions cover different vertex counts: {a.n} vs {b.n}")
    if a.n < 2:
        raise ValueError(f"ARI needs at least 2 items, got {a.n}")
    table = contingency_matrix(a.assignment, b.assignment)
    return AriResult(ari=_ari_from_table(table, a == b), contingency=table)


def permutation_test_ari(p1, p2, n_perm: int = 1000, seed: int = 0) -> AriResult:
    """
    ARI with a one-sided permutation p-value (1 + #{ARI_perm >= ARI_obs}) / (n_perm + 1)

    The second partition's labels are shuffled across vertices. A constant
    partition gets p = 1.
    """
    if n_perm < MIN_PERMUTATIONS:
        raise ValueError(f"n_perm must be >= {MIN_PERMUTATIONS}, got {n_perm}")
    a, b = _as_partition(p1), _as_partition(p2)
    observed = ari(a, b)
    if a.n_clusters == 1 or b.n_clusters == 1:
        return AriResult(ari=observed.ari, contingency=observed.contingency, p_value=1.0, n_perm=n_perm)

    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perm):
        shuffled = rng.permutation(b.assignment)
        table = contingency_matrix(a.assignment, shuffled)
        if _ari_from_table(table, False) >= observed.ari:
            hits += 1
    p_value = (1 + hits) / (n_perm + 1)
    return AriResult(ari=observed.ari, contingency=observed.contingency, p_value=p_value, n_perm=n_perm)


def delta_ari(clusters, truth_1, truth_2) -> float:
    """ARI(clusters, truth_1) - ARI(clusters, truth_2)"""
    return ari(clusters, truth_1).ari - ari(clusters, truth_2).ari


def ari_between_methods(clusters_ase, clusters_lse, n_perm: int = 1000, seed: int = 0) -> AriResult:
    """Agreement of the ASE and LSE clusterings of one graph, with a permutation p-value"""
    result = permutation_test_ari(clusters_ase, clusters_lse, n_perm=n_perm, seed=seed)
    LOGGER.info("ARI(ASE, LSE) = %.4f (p = %.4g)", result.ari, result.p_value)
    return result


def quadrant(delta_ase: float, delta_lse: float) -> str:
    """Which truth each method's clustering leans toward, e.g. 'ASE:GW/LSE:LR'"""
    def lean(delta: float) -> str:
        return "LR" if delta > 0 else ("GW" if delta < 0 else "tie")

    return f"ASE:{lean(delta_ase)}/LSE:{lean(delta_lse)}"


def contingency_to_csv(result: AriResult, path, row_names: Optional[Sequence[str]] = None,
                       col_names: Optional[Sequence[str]] = None) -> None:
    table = result.contingency
    rows = list(row_names) if row_names is not None else [str(i) for i in range(table.shape[0])]
    cols = list(col_names) if col_names is not None else [str(j) for j in range(table.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([""] + cols)
        for name, row in zip(rows, table.tolist()):
            writer.writerow([name] + row)
