"""
Batch and Monte Carlo harness

- run_two_truths_experiment: repeated samples from a 4-block fixture, clustered by
  GMM o LSE and GMM o ASE with d = K = 2, scored against each merged truth
- chernoff_map: Chernoff ratio over a grid of the (x, y) EDA plane
- model_selection_scatter / project_batch: per-graph rows for a manifest of graphs
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from two_truths.core.chernoff import chernoff_ratio
from two_truths.core.evaluation import quadrant
from two_truths.core.graph import (
    EdgeListFormat,
    VertexLabels,
    average_graphs,
    binarize,
    load_edge_list,
    load_labels,
)
from two_truths.core.sbm import SbmFixture, eda_point, fit_block_model, sample_sbm, two_block_from_eda
from two_truths.core.spectral import SolverOptions
from two_truths.errors import SbmParamsError, TwoTruthsError
from two_truths.pipeline import SpectralClusterer
from two_truths.utils.file_utils import ManifestItem, applicable_merge_maps
from two_truths.utils.logger import get_logger

LOGGER = get_logger("two_truths.experiments")

# errors a single trial or batch item may raise without stopping the run
RECOVERABLE = (TwoTruthsError, linalg.LinAlgError, ValueError, OSError)


def derive_seeds(seed: int, count: int) -> List[int]:
    """Independent per-item seeds; item i gets the same seed whatever the worker layout"""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def _run_parallel(func: Callable, jobs: Sequence, n_jobs: int) -> List:
    if n_jobs == 1 or len(jobs) <= 1:
        return [func(*job) for job in jobs]
    return Parallel(n_jobs=n_jobs)(delayed(func)(*job) for job in jobs)


# ==========================================================
# TWO-TRUTHS MONTE CARLO
# ==========================================================
@dataclass
class MethodOutcome:
    d: int
    K: int
    ari: Dict[str, float]
    four_block_ari: Optional[float] = None

    def to_dict(self) -> Dict:
        data = {"d": self.d, "K": self.K, "ari": dict(sorted(self.ari.items()))}
        if self.four_block_ari is not None:
            data["four_block_ari"] = self.four_block_ari
        return data


@dataclass
class TrialRecord:
    trial: int
    seed: int
    outcomes: Dict[str, MethodOutcome] = field(default_factory=dict)
    wall_time: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self, include_timing: bool = False) -> Dict:
        data = {
            "trial": self.trial,
            "seed": self.seed,
            "outcomes": {m: o.to_dict() for m, o in sorted(self.outcomes.items())},
            "error": self.error,
        }
        if include_timing:
            data["wall_time"] = self.wall_time
        return data


@dataclass
class ExperimentReport:
    fixture: str
    n: int
    trials: int
    seed: int
    truths: Sequence[str]
    records: List[TrialRecord]
    ari_threshold: float = 0.95
    max_failure_fraction: float = 0.10

    @property
    def failures(self) -> List[TrialRecord]:
        return [r for r in self.records if not r.ok]

    @property
    def failed(self) -> bool:
        return len(self.failures) > self.max_failure_fraction * self.trials

    def success_rates(self) -> Dict[str, Dict[str, float]]:
        """Fraction of completed trials with ARI above the threshold, per method and truth"""
        completed = [r for r in self.records if r.ok]
        rates: Dict[str, Dict[str, float]] = {}
        for method in ("LSE", "ASE"):
            rates[method] = {}
            for truth in self.truths:
                hits = sum(1 for r in completed if r.outcomes[method].ari[truth] > self.ari_threshold)
                rates[method][truth] = hits / len(completed) if completed else float("nan")
        return rates

    def delta_rows(self) -> List[List]:
        """trial, seed, x = dARI(LSE), y = dARI(ASE), quadrant for two truths"""
        first, second = self.truths[0], self.truths[1]
        rows = []
        for r in self.records:
            if not r.ok:
                continue
            x = r.outcomes["LSE"].ari[first] - r.outcomes["LSE"].ari[second]
            y = r.outcomes["ASE"].ari[first] - r.outcomes["ASE"].ari[second]
            rows.append([r.trial, r.seed, x, y, quadrant(y, x)])
        return rows

    def to_dict(self, include_timing: bool = False) -> Dict:
        return {
            "fixture": self.fixture,
            "n": self.n,
            "trials": self.trials,
            "seed": self.seed,
            "truths": list(self.truths),
            "ari_threshold": self.ari_threshold,
            "success_rates": self.success_rates(),
            "failed_trials": len(self.failures),
            "records": [r.to_dict(include_timing) for r in self.records],
        }


def _run_trial(
    fixture: SbmFixture, n: int, trial: int, seed: int, clusterer: SpectralClusterer, four_block_check: bool
) -> TrialRecord:
    started = time.perf_counter()
    record = TrialRecord(trial=trial, seed=seed)
    try:
        graph, labels = sample_sbm(fixture.params, n, seed)
        truths: Dict[str, VertexLabels] = {name: labels.merge(m) for name, m in fixture.merge_maps.items()}
        for method in ("LSE", "ASE"):
            result = clusterer.cluster(graph, method, d=2, K=2)
            scores = {name: value.ari for name, value in clusterer.score(result, truths).items()}
            outcome = MethodOutcome(d=result.d, K=result.K, ari=scores)
            if four_block_check:
                full = clusterer.cluster(graph, method, d=fixture.params.K, K=fixture.params.K)
                outcome.four_block_ari = clusterer.score(full, {"blocks": labels})["blocks"].ari
            record.outcomes[method] = outcome
    except RECOVERABLE as exc:
        record.error = f"{type(exc).__name__}: {exc}"
        record.outcomes = {}
        LOGGER.warning("Trial %d (seed %d) failed: %s", trial, seed, record.error)
    record.wall_time = time.perf_counter() - started
    return record


def run_two_truths_experiment(
    fixture: SbmFixture,
    n: int = 4000,
    trials: int = 50,
    seed: int = 0,
    fixture_name: str = "",
    solver: SolverOptions = SolverOptions(),
    clusterer: Optional[SpectralClusterer] = None,
    four_block_check: bool = False,
    n_jobs: int = 1,
    ari_threshold: float = 0.95,
    max_failure_fraction: float = 0.10,
) -> ExperimentReport:
    """
    Monte Carlo check of the two-truths phenomenon

    Each trial samples a graph with its own derived seed, so the report does not
    depend on n_jobs. Trial failures are recorded; the report is marked failed
    when more than max_failure_fraction of the trials error.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if len(fixture.merge_maps) < 2:
        raise SbmParamsError("the two-truths experiment needs a fixture with two merge maps")
    clusterer = clusterer or SpectralClusterer(solver=solver, seed=seed)
    seeds = derive_seeds(seed, trials)
    LOGGER.info("Two-truths experiment: %d trials at n=%d (%d worker(s))", trials, n, n_jobs)

    jobs = [(fixture, n, t, s, clusterer, four_block_check) for t, s in enumerate(seeds)]
    records = _run_parallel(_run_trial, jobs, n_jobs)
    report = ExperimentReport(
        fixture=fixture_name,
        n=n,
        trials=trials,
        seed=seed,
        truths=list(fixture.merge_maps),
        records=list(records),
        ari_threshold=ari_threshold,
        max_failure_fraction=max_failure_fraction,
    )
    for method, rates in report.success_rates().items():
        LOGGER.info("%s success rates: %s", method, ", ".join(f"{k}={v:.2f}" for k, v in rates.items()))
    if report.failures:
        LOGGER.warning("%d of %d trial(s) failed", len(report.failures), trials)
    return report


# ==========================================================
# CHERNOFF MAP
# ==========================================================
@dataclass
class MapPoint:
    x: float
    y: float
    rho: float = float("nan")
    rho_ase: float = float("nan")
    rho_lse: float = float("nan")
    status: str = "ok"

    @property
    def log_rho_sign(self) -> int:
        if self.status != "ok" or not np.isfinite(self.rho) or self.rho <= 0:
            return 0
        return int(np.sign(np.log(self.rho)))

    def row(self) -> List:
        return [self.x, self.y, self.rho, self.rho_ase, self.rho_lse, self.log_rho_sign, self.status]


MAP_HEADER = ["x", "y", "rho", "rho_ase", "rho_lse", "sign_log_rho", "status"]


def _map_point(x: float, y: float, scale: float, n_big: int, seed: int, solver: SolverOptions) -> MapPoint:
    point = MapPoint(x=float(x), y=float(y))
    try:
        params = two_block_from_eda(x, y, scale)
    except SbmParamsError:
        point.status = "out_of_range"
        return point
    if np.allclose(params.B, params.B[0, 0]):
        point.status = "no_signal"
        return point
    try:
        ratio = chernoff_ratio(params, n_big=n_big, seed=seed, solver=solver)
    except RECOVERABLE as exc:
        LOGGER.warning("Chernoff map point (%.3f, %.3f) failed: %s", x, y, exc)
        point.status = "failed"
        return point
    point.rho, point.rho_ase, point.rho_lse = ratio.rho, ratio.ase.value, ratio.lse.value
    return point


def grid_axis(bounds: Sequence[float], resolution: int) -> np.ndarray:
    low, high = float(bounds[0]), float(bounds[1])
    if resolution < 1 or high < low:
        raise ValueError(f"invalid grid axis {bounds} with resolution {resolution}")
    return np.linspace(low, high, resolution) if resolution > 1 else np.array([low])


def chernoff_map(
    x_values: Sequence[float],
    y_values: Sequence[float],
    scale: float = 0.4,
    n_big: int = 4000,
    seed: int = 0,
    solver: SolverOptions = SolverOptions(),
    n_jobs: int = 1,
) -> List[MapPoint]:
    """
    rho over the EDA plane: B = [scale, y*scale; y*scale, x*scale], pi = (1/2, 1/2)

    Points with B outside [0, 1] are flagged out_of_range; x = y = 1 has no block
    signal and is flagged no_signal.
    """
    if not 0 < scale <= 1:
        raise ValueError(f"scale must lie in (0, 1], got {scale}")
    for x in x_values:
        if not 0 < x <= 1:
            raise ValueError(f"x must lie in (0, 1], got {x}")
    for y in y_values:
        if y <= 0:
            raise ValueError(f"y must be positive, got {y}")
    jobs = [(x, y, scale, n_big, seed, solver) for x in x_values for y in y_values]
    points = _run_parallel(_map_point, jobs, n_jobs)
    skipped = sum(1 for p in points if p.status != "ok")
    if skipped:
        LOGGER.warning("Chernoff map: %d of %d grid point(s) flagged", skipped, len(points))
    return list(points)


def sqrt_curve(x_values: Sequence[float]) -> List[List[float]]:
    return [[float(x), float(np.sqrt(x))] for x in x_values]


# ==========================================================
# BATCHES OVER GRAPH FILES
# ==========================================================
@dataclass
class BatchFailure:
    graph_id: str
    stage: str
    error: str

    def to_dict(self) -> Dict:
        return {"graph_id": self.graph_id, "stage": self.stage, "error": self.error}


SCATTER_HEADER_PREFIX = ["graph_id", "method", "d_hat", "K_hat"]


def _load_item(item: ManifestItem, fmt: EdgeListFormat):
    graph = load_edge_list(item.graph_path, fmt)
    labels = load_labels(item.label_path, graph.n) if item.label_path is not None else None
    return graph, labels


def _scatter_item(item: ManifestItem, fmt: EdgeListFormat, clusterer: SpectralClusterer,
                  merge_maps: Mapping[str, Mapping[str, str]], methods: Sequence[str]):
    rows, failures = [], []
    try:
        graph, labels = _load_item(item, fmt)
    except RECOVERABLE as exc:
        failures.append(BatchFailure(item.graph_id, "load", f"{type(exc).__name__}: {exc}"))
        return [[item.graph_id, m, "", "", *[""] * len(merge_maps), "failed"] for m in methods], failures

    truths = {}
    if labels is not None:
        truths = {name: labels.merge(m) for name, m in applicable_merge_maps(merge_maps, labels.alphabet).items()}
    for method in methods:
        try:
            result = clusterer.cluster(graph, method)
            scores = clusterer.score(result, truths)
            aris = [scores[name].ari if name in scores else "" for name in merge_maps]
            rows.append([item.graph_id, method, result.d, result.K, *aris, "ok"])
        except RECOVERABLE as exc:
            failures.append(BatchFailure(item.graph_id, method, f"{type(exc).__name__}: {exc}"))
            rows.append([item.graph_id, method, "", "", *[""] * len(merge_maps), "failed"])
    return rows, failures


def model_selection_scatter(
    items: Sequence[ManifestItem],
    clusterer: SpectralClusterer,
    merge_maps: Mapping[str, Mapping[str, str]],
    methods: Sequence[str] = ("LSE", "ASE"),
    fmt: EdgeListFormat = EdgeListFormat(),
    n_jobs: int = 1,
):
    """
    One row per (graph, method): graph_id, method, d_hat, K_hat, ARI per merge map, status

    Returns:
        (header, rows, failures)
    """
    header = SCATTER_HEADER_PREFIX + [f"ARI_{name}" for name in merge_maps] + ["status"]
    jobs = [(item, fmt, clusterer, merge_maps, methods) for item in items]
    results = _run_parallel(_scatter_item, jobs, n_jobs)
    rows = [row for item_rows, _ in results for row in item_rows]
    failures = [f for _, item_failures in results for f in item_failures]
    LOGGER.info("Scatter: %d row(s), %d failure(s)", len(rows), len(failures))
    return header, rows, failures


def quadrant_summary(rows: Sequence[Sequence], header: Sequence[str], truths=("LR", "GW")) -> Dict:
    """Per-graph delta ARIs from scatter rows and counts per sign quadrant"""
    first, second = (header.index(f"ARI_{t}") for t in truths)
    by_graph: Dict[str, Dict[str, float]] = {}
    for row in rows:
        if row[-1] != "ok" or row[first] == "" or row[second] == "":
            continue
        by_graph.setdefault(row[0], {})[row[1]] = row[first] - row[second]
    points = []
    counts: Dict[str, int] = {}
    for graph_id, deltas in by_graph.items():
        if "LSE" not in deltas or "ASE" not in deltas:
            continue
        label = quadrant(deltas["ASE"], deltas["LSE"])
        counts[label] = counts.get(label, 0) + 1
        points.append({"graph_id": graph_id, "x": deltas["LSE"], "y": deltas["ASE"], "quadrant": label})
    return {"points": points, "quadrant_counts": dict(sorted(counts.items())),
            "two_truths_quadrant": "ASE:GW/LSE:LR"}


PROJECT_HEADER = ["graph_id", "merge", "K", "names", "pi", "a", "b", "c", "x", "y", "below_sqrt_x", "structure"]


def project_labels(graph, labels: VertexLabels, merge_maps: Mapping[str, Mapping[str, str]],
                   ratio_threshold: float = 2.0):
    """
    A-priori projections for every merge map covering the labels (identity when none does)

    Returns:
        list of (merge name, SbmParams, EdaPoint or None)
    """
    maps = applicable_merge_maps(merge_maps, labels.alphabet)
    targets = {name: labels.merge(m) for name, m in maps.items()} if maps else {"identity": labels}
    projections = []
    for name, merged in targets.items():
        params = fit_block_model(graph, merged)
        point = eda_point(params, ratio_threshold) if params.K == 2 else None
        projections.append((name, params, point))
    return projections


def projection_row(graph_id: str, name: str, params, point) -> List:
    abc = params.abc() if params.K == 2 else ("", "", "")
    eda = [point.x, point.y, point.below_sqrt_x, point.structure.value] if point is not None else ["", "", "", ""]
    return [graph_id, name, params.K, ";".join(params.names), ";".join(repr(float(p)) for p in params.pi), *abc, *eda]


def _project_item(item: ManifestItem, fmt: EdgeListFormat, merge_maps, ratio_threshold):
    try:
        graph, labels = _load_item(item, fmt)
        if labels is None:
            raise SbmParamsError(f"graph {item.graph_id} has no label file")
        projections = project_labels(graph, labels, merge_maps, ratio_threshold)
    except RECOVERABLE as exc:
        return [], [], [BatchFailure(item.graph_id, "project", f"{type(exc).__name__}: {exc}")]
    rows = [projection_row(item.graph_id, name, params, point) for name, params, point in projections]
    params_out = [(item.graph_id, name, params) for name, params, _ in projections]
    return rows, params_out, []


def project_batch(items: Sequence[ManifestItem], merge_maps, ratio_threshold: float = 2.0,
                  fmt: EdgeListFormat = EdgeListFormat(), n_jobs: int = 1):
    """
    Returns:
        (rows, [(graph_id, merge name, SbmParams)], failures)
    """
    jobs = [(item, fmt, merge_maps, ratio_threshold) for item in items]
    results = _run_parallel(_project_item, jobs, n_jobs)
    rows = [row for item_rows, _, _ in results for row in item_rows]
    params = [p for _, item_params, _ in results for p in item_params]
    failures = [f for _, _, item_failures in results for f in item_failures]
    return rows, params, failures


def composite_projection(items: Sequence[ManifestItem], merge_maps, threshold: float = 0.0,
                         ratio_threshold: float = 2.0, fmt: EdgeListFormat = EdgeListFormat(),
                         graph_id: str = "composite"):
    """
    Average the manifest graphs, keep edges whose mean weight exceeds ``threshold``
    and project the composite onto the fine labels and every applicable merge map

    Labels come from the first item that has them; all graphs must share n.

    Returns:
        (rows, [(graph_id, merge name, SbmParams)], composite Graph)
    """
    if not items:
        raise ValueError("composite projection needs at least one manifest item")
    loaded = [_load_item(item, fmt) for item in items]
    labels = next((item_labels for _, item_labels in loaded if item_labels is not None), None)
    if labels is None:
        raise SbmParamsError("no manifest item has a label file")
    composite = binarize(average_graphs([graph for graph, _ in loaded]), threshold)
    LOGGER.info("Composite of %d graph(s): n=%d |E|=%d at threshold %g", len(loaded), composite.n,
                composite.n_edges, threshold)

    fine = fit_block_model(composite, labels)
    projections = [("blocks", fine, eda_point(fine, ratio_threshold) if fine.K == 2 else None)]
    projections += [p for p in project_labels(composite, labels, merge_maps, ratio_threshold) if p[0] != "identity"]
    rows = [projection_row(graph_id, name, params, point) for name, params, point in projections]
    return rows, [(graph_id, name, params) for name, params, _ in projections], composite
