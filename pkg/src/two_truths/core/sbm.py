"""Stochastic block model: parameters, sampling, a-priori projection and structure classification"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from two_truths.core.graph import Graph, VertexLabels
from two_truths.errors import DegenerateBlockError, SbmParamsError
from two_truths.utils.logger import get_logger

LOGGER = get_logger("two_truths.sbm")

PI_TOLERANCE = 1e-12
DEFAULT_RATIO_THRESHOLD = 2.0


# ==========================================================
# TYPES
# ==========================================================
@dataclass(frozen=True, eq=False)
class SbmParams:
    """Block membership probabilities ``pi`` and symmetric connectivity matrix ``B``"""

    pi: np.ndarray
    B: np.ndarray
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64).reshape(-1)
        B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "B", B)
        if not self.names:
            object.__setattr__(self, "names", tuple(str(k) for k in range(len(pi))))
        else:
            object.__setattr__(self, "names", tuple(str(name) for name in self.names))
        self.validate()

    def validate(self) -> None:
        K = len(self.pi)
        if K == 0:
            raise SbmParamsError("pi must have at least one block")
        if self.B.shape != (K, K):
            raise SbmParamsError(f"B has shape {self.B.shape}, expected ({K}, {K})")
        if len(self.names) != K or len(set(self.names)) != K:
            raise SbmParamsError("block names must be unique, one per block")
        if not np.all(np.isfinite(self.pi)) or np.any(self.pi < 0):
            raise SbmParamsError("pi entries must be nonnegative")
        if abs(self.pi.sum() - 1.0) > PI_TOLERANCE:
            raise SbmParamsError(f"pi sums to {self.pi.sum():.15g}, not 1")
        if not np.allclose(self.B, self.B.T, rtol=0, atol=1e-15):
            raise SbmParamsError("B must be symmetric")
        if not np.all(np.isfinite(self.B)) or np.any(self.B < 0) or np.any(self.B > 1):
            raise SbmParamsError("B entries must lie in [0, 1]")

    @property
    def K(self) -> int:
        return len(self.pi)

    def abc(self) -> Tuple[float, float, float]:
        """(a, b, c) for the 2-block case B = [a, b; b, c]"""
        if self.K != 2:
            raise SbmParamsError(f"expected a 2-block model, got K={self.K}")
        return float(self.B[0, 0]), float(self.B[0, 1]), float(self.B[1, 1])

    def expected_edge_probability(self) -> float:
        return float(self.pi @ self.B @ self.pi)

    def permuted(self, order: Sequence[int]) -> "SbmParams":
        order = list(order)
        return SbmParams(pi=self.pi[order], B=self.B[np.ix_(order, order)], names=[self.names[k] for k in order])

    def scaled(self, factor: float) -> "SbmParams":
        return SbmParams(pi=self.pi, B=self.B * factor, names=self.names)

    def to_dict(self) -> Dict:
        return {"pi": self.pi.tolist(), "B": self.B.tolist(), "names": list(self.names)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SbmParams":
        try:
            return cls(pi=data["pi"], B=data["B"], names=tuple(data.get("names", ())))
        except KeyError as exc:
            raise SbmParamsError(f"SBM JSON is missing key {exc}") from None


@dataclass(frozen=True)
class SbmFixture:
    """SBM parameters plus named merge maps (e.g. LR and GW for the two-truths model)"""

    params: SbmParams
    merge_maps: Dict[str, Dict[str, str]] = field(default_factory=dict)
    description: str = ""

    def truth(self, labels: VertexLabels, map_name: str) -> VertexLabels:
        return labels.merge(self.merge_maps[map_name])


class StructureKind(str, enum.Enum):
    AFFINITY = "affinity"
    CORE_PERIPHERY = "core_periphery"
    OTHER = "other"


@dataclass(frozen=True)
class StructureClass:
    """Structure label plus the margins of its witnessing inequalities"""

    kind: StructureKind
    affinity_margin: float  # min(a,c) - t*b
    core_periphery_margin: float  # min(max(a,c) - t*b, max(a,c) - t*min(a,c))
    ratio_threshold: float


@dataclass(frozen=True)
class EdaPoint:
    x: float
    y: float
    below_sqrt_x: bool
    structure: Optional[StructureKind] = None


# ==========================================================
# SERIALIZATION
# ==========================================================
def load_params(path) -> SbmParams:
    with open(path, "r", encoding="utf-8") as handle:
        return SbmParams.from_dict(json.load(handle))


def save_params(params: SbmParams, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(params.to_dict(), handle, indent=2)
        handle.write("\n")


def fixture_from_dict(data: Mapping) -> SbmFixture:
    return SbmFixture(
        params=SbmParams.from_dict(data),
        merge_maps={name: dict(mapping) for name, mapping in data.get("merge_maps", {}).items()},
        description=data.get("description", ""),
    )


def load_fixture(name_or_path) -> SbmFixture:
    """
    Load a packaged fixture by name (e.g. "two_truths_4block") or any JSON path

    Returns:
        SbmFixture: Parameters and merge maps
    """
    candidate = Path(str(name_or_path))
    if candidate.suffix == ".json" and candidate.exists():
        text = candidate.read_text(encoding="utf-8")
    else:
        text = resources.files("two_truths.fixtures").joinpath(f"{name_or_path}.json").read_text(encoding="utf-8")
    return fixture_from_dict(json.loads(text))


# ==========================================================
# SAMPLING AND PROJECTION
# ==========================================================
def _bernoulli_cells(rng: np.random.Generator, rows: int, cols: int, p: float) -> Tuple[np.ndarray, np.ndarray]:
    """Positions of independent Bernoulli(p) successes in a rows x cols grid, drawn row by row"""
    if rows == 0 or cols == 0 or p <= 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if p >= 1:
        return np.repeat(np.arange(rows, dtype=np.int64), cols), np.tile(np.arange(cols, dtype=np.int64), rows)
    counts = rng.binomial(cols, p, size=rows)
    hit_cols = [np.sort(rng.choice(cols, size=k, replace=False)) for k in counts if k]
    if not hit_cols:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    hit_rows = np.repeat(np.arange(rows, dtype=np.int64), counts)
    return hit_rows, np.concatenate(hit_cols).astype(np.int64)


def sample_sbm(params: SbmParams, n: int, seed=None) -> Tuple[Graph, VertexLabels]:
    """
    Draw a graph from the SBM; block memberships are i.i.d. from pi

    Args:
        params: SBM parameters
        n: Vertex count (>= 1)
        seed: Seed or numpy Generator; equal seeds give equal graphs

    Returns:
        (Graph, VertexLabels): The sample and its true block labels (block names)
    """
    if n < 1:
        raise SbmParamsError(f"n must be >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    blocks = rng.choice(params.K, size=n, p=params.pi)
    members = [np.flatnonzero(blocks == k) for k in range(params.K)]

    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    for k in range(params.K):
        for l in range(k, params.K):
            p = params.B[k, l]
            r, c = _bernoulli_cells(rng, len(members[k]), len(members[l]), p)
            i, j = members[k][r], members[l][c]
            if k == l:
                upper = i < j
                i, j = i[upper], j[upper]
            rows.append(i)
            cols.append(j)

    pairs = np.column_stack((np.concatenate(rows), np.concatenate(cols))) if rows else np.zeros((0, 2), np.int64)
    graph = Graph._from_pair_array(n, pairs.astype(np.int64))
    labels = VertexLabels(values=tuple(params.names[b] for b in blocks), alphabet=params.names)
    LOGGER.debug("Sampled SBM K=%d n=%d |E|=%d", params.K, n, graph.n_edges)
    return graph, labels


def fit_block_model(g: Graph, labels: VertexLabels) -> SbmParams:
    """
    A-priori projection: empirical block densities given known memberships

    Raises:
        DegenerateBlockError: A block is empty or has fewer than 2 vertices
    """
    if len(labels) != g.n:
        raise DegenerateBlockError(f"{len(labels)} labels for {g.n} vertices")
    codes = labels.codes()
    K = len(labels.alphabet)
    sizes = np.bincount(codes, minlength=K).astype(np.float64)
    small = [labels.alphabet[k] for k in range(K) if sizes[k] < 2]
    if small:
        raise DegenerateBlockError(f"block(s) {small} have fewer than 2 vertices; B_kk is undefined")

    counts = np.zeros((K, K), dtype=np.float64)
    edges = g.edges
    if len(edges):
        bi, bj = codes[edges[:, 0]], codes[edges[:, 1]]
        np.add.at(counts, (bi, bj), 1.0)
        np.add.at(counts, (bj, bi), 1.0)
        counts[np.diag_indices(K)] /= 2.0

    pairs = np.outer(sizes, sizes)
    pairs[np.diag_indices(K)] = sizes * (sizes - 1) / 2.0
    B = counts / pairs
    return SbmParams(pi=sizes / sizes.sum(), B=(B + B.T) / 2.0, names=labels.alphabet)


def _validate_partition(groups: Sequence[Sequence[int]], K: int) -> List[List[int]]:
    groups = [list(group) for group in groups]
    if any(len(group) == 0 for group in groups):
        raise SbmParamsError("merge groups must be nonempty")
    flat = sorted(k for group in groups for k in group)
    if flat != list(range(K)):
        raise SbmParamsError(f"merge groups {groups} do not partition blocks 0..{K - 1}")
    return groups


def collapse_blocks(
    params: SbmParams, merge: Sequence[Sequence[int]], names: Optional[Sequence[str]] = None
) -> SbmParams:
    """
    Merge blocks into groups with pi-weighted averaging of B

    Args:
        params: K-block parameters
        merge: Partition of block indices into groups
        names: Optional names for the merged blocks

    Returns:
        SbmParams: The collapsed model
    """
    groups = _validate_partition(merge, params.K)
    indicator = np.zeros((params.K, len(groups)))
    for u, group in enumerate(groups):
        indicator[group, u] = 1.0
    pi_merged = params.pi @ indicator
    if np.any(pi_merged <= 0):
        raise SbmParamsError("a merged group has zero membership probability")
    mass = indicator.T @ (np.outer(params.pi, params.pi) * params.B) @ indicator
    B_merged = mass / np.outer(pi_merged, pi_merged)
    B_merged = np.clip((B_merged + B_merged.T) / 2.0, 0.0, 1.0)
    if names is None:
        names = ["+".join(params.names[k] for k in group) for group in groups]
    return SbmParams(pi=pi_merged / pi_merged.sum(), B=B_merged, names=names)


def collapse_by_map(params: SbmParams, mapping: Mapping[str, str]) -> SbmParams:
    """Collapse using a fine -> coarse name map; group order follows first appearance"""
    coarse_names: List[str] = []
    for name in params.names:
        if name not in mapping:
            raise SbmParamsError(f"merge map does not cover block {name!r}")
        if mapping[name] not in coarse_names:
            coarse_names.append(mapping[name])
    groups = [[k for k, name in enumerate(params.names) if mapping[name] == coarse] for coarse in coarse_names]
    return collapse_blocks(params, groups, names=coarse_names)


# ==========================================================
# STRUCTURE
# ==========================================================
def classify_structure(params: SbmParams, ratio_threshold: float = DEFAULT_RATIO_THRESHOLD) -> StructureClass:
    """
    Affinity iff min(a,c) >= t*b; otherwise core-periphery iff
    max(a,c) >= t*b and max(a,c) >= t*min(a,c); otherwise other.
    """
    a, b, c = params.abc()
    high, low = max(a, c), min(a, c)
    if high <= 0:
        raise SbmParamsError("classification needs max(a, c) > 0")
    t = ratio_threshold
    affinity_margin = low - t * b
    core_margin = min(high - t * b, high - t * low)
    if affinity_margin >= 0:
        kind = StructureKind.AFFINITY
    elif core_margin >= 0:
        kind = StructureKind.CORE_PERIPHERY
    else:
        kind = StructureKind.OTHER
    return StructureClass(
        kind=kind, affinity_margin=affinity_margin, core_periphery_margin=core_margin, ratio_threshold=t
    )


def eda_point(params: SbmParams, ratio_threshold: float = DEFAULT_RATIO_THRESHOLD) -> EdaPoint:
    """(min(a,c)/max(a,c), b/max(a,c)) and whether it lies below the y = sqrt(x) curve"""
    a, b, c = params.abc()
    high = max(a, c)
    if high <= 0:
        raise SbmParamsError("EDA point needs max(a, c) > 0")
    x = min(a, c) / high
    y = b / high
    return EdaPoint(
        x=x,
        y=y,
        below_sqrt_x=bool(y < np.sqrt(x)),
        structure=classify_structure(params, ratio_threshold).kind,
    )


def two_block_from_eda(x: float, y: float, scale: float) -> SbmParams:
    """B = [scale, y*scale; y*scale, x*scale] with equal block sizes"""
    a, b, c = scale, y * scale, x * scale
    return SbmParams(pi=[0.5, 0.5], B=[[a, b], [b, c]])
