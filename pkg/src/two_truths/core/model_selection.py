"""Embedding dimension by profile likelihood, number of clusters by BIC"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from two_truths.core import gmm
from two_truths.core.graph import Graph
from two_truths.core.spectral import SolverOptions, spectrum
from two_truths.errors import DegenerateScreeError, GmmFitError
from two_truths.utils.logger import get_logger

LOGGER = get_logger("two_truths.model_selection")

MAX_SCREE_VALUES = 100


@dataclass(frozen=True, eq=False)
class ElbowReport:
    scree: np.ndarray
    profile_ll: np.ndarray  # profile_ll[d - 1] is the split after the d-th value
    chosen_d: int
    elbow_index: int = 1
    elbows: Sequence[int] = ()

    def to_dict(self) -> Dict:
        return {
            "scree": self.scree.tolist(),
            "profile_ll": [v if np.isfinite(v) else str(v) for v in self.profile_ll.tolist()],
            "chosen_d": self.chosen_d,
            "elbow_index": self.elbow_index,
            "elbows": list(self.elbows),
        }


@dataclass(frozen=True, eq=False)
class KSelectionReport:
    k_values: Sequence[int]
    bic: Dict[int, float]
    chosen_k: int
    models: Dict[int, gmm.GmmModel] = field(repr=False, default_factory=dict)
    excluded: Sequence[int] = ()

    def to_dict(self) -> Dict:
        return {
            "k_values": list(self.k_values),
            "bic": {str(k): v for k, v in self.bic.items()},
            "chosen_k": self.chosen_k,
            "excluded": list(self.excluded),
        }


# ==========================================================
# EMBEDDING DIMENSION
# ==========================================================
def _profile_curve(values: np.ndarray) -> np.ndarray:
    """Two-group equal-variance Gaussian profile log-likelihood for every split"""
    m = len(values)
    curve = np.empty(m - 1)
    for d in range(1, m):
        head, tail = values[:d], values[d:]
        mu_head, mu_tail = head.mean(), tail.mean()
        pooled = (np.sum((head - mu_head) ** 2) + np.sum((tail - mu_tail) ** 2)) / m
        if pooled <= 0:
            curve[d - 1] = np.inf
            continue
        scale = np.sqrt(pooled)
        curve[d - 1] = norm.logpdf(head, mu_head, scale).sum() + norm.logpdf(tail, mu_tail, scale).sum()
    return curve


def profile_likelihood_d(scree, elbow_index: int = 1) -> ElbowReport:
    """
    Choose the embedding dimension from a scree of eigenvalue magnitudes

    For elbow_index e > 1 the search is repeated on the tail past the previous
    elbow and the cumulative index is returned.

    Args:
        scree: Nonincreasing, nonnegative values (length >= 3)
        elbow_index: Which elbow to return (1 = first)

    Returns:
        ElbowReport: The first-level curve and the requested elbow
    """
    values = np.asarray(scree, dtype=np.float64).reshape(-1)
    if elbow_index < 1:
        raise ValueError(f"elbow_index must be >= 1, got {elbow_index}")
    if len(values) < 3:
        raise DegenerateScreeError(f"scree needs at least 3 values, got {len(values)}")
    if np.any(values < 0) or np.any(np.diff(values) > 0):
        raise ValueError("scree must be nonnegative and nonincreasing")
    if np.all(values == values[0]):
        raise DegenerateScreeError("all scree values are identical")

    elbows: List[int] = []
    first_curve: Optional[np.ndarray] = None
    offset = 0
    tail = values
    while len(elbows) < elbow_index:
        if len(tail) < 3 or np.all(tail == tail[0]):
            raise DegenerateScreeError(
                f"scree tail past elbow {len(elbows)} is too short or flat to find elbow {len(elbows) + 1}"
            )
        curve = _profile_curve(tail)
        if first_curve is None:
            first_curve = curve
        split = int(np.argmax(curve)) + 1
        offset += split
        elbows.append(offset)
        tail = tail[split:]

    return ElbowReport(
        scree=values, profile_ll=first_curve, chosen_d=elbows[-1], elbow_index=elbow_index, elbows=tuple(elbows)
    )


def graph_scree(g: Graph, method, opts: SolverOptions = SolverOptions(), max_values: int = MAX_SCREE_VALUES):
    """Eigenvalue magnitudes scanned for d-hat: the top min(max_values, n-1)"""
    m = min(max_values, g.n - 1)
    if m < 3:
        raise DegenerateScreeError(f"graph with n={g.n} is too small for dimension selection")
    magnitudes = np.sort(spectrum(g, method, m, opts).magnitudes)[::-1]
    return magnitudes


def select_d(g: Graph, method, opts: SolverOptions = SolverOptions(), elbow_index: int = 1,
             max_values: int = MAX_SCREE_VALUES) -> ElbowReport:
    report = profile_likelihood_d(graph_scree(g, method, opts, max_values), elbow_index)
    LOGGER.info("%s: d-hat = %d (elbow %d)", getattr(method, "value", method), report.chosen_d, elbow_index)
    return report


# ==========================================================
# NUMBER OF CLUSTERS
# ==========================================================
def _fit_one(X, K, seed, gmm_opts):
    try:
        return K, gmm.fit(X, K, seed=seed, opts=gmm_opts)
    except GmmFitError as exc:
        LOGGER.warning("K=%d: fit failed (%s)", K, exc)
        return K, None


def select_k_bic(
    X, k_range: Sequence[int], seed: int = 0, gmm_opts: gmm.GmmOptions = gmm.GmmOptions(), n_jobs: int = 1
) -> KSelectionReport:
    """
    Fit a mixture for every K and keep the BIC maximizer

    Non-converged fits are excluded with a warning.

    Args:
        X: n x d data
        k_range: Candidate component counts (duplicates are ignored)
        seed: Base seed shared by every K
        gmm_opts: EM options
        n_jobs: Parallel fits

    Returns:
        KSelectionReport: BIC per converged K and the argmax (smallest K on ties)
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    k_values = sorted(set(int(k) for k in k_range))
    if not k_values:
        raise ValueError("k_range is empty")
    if X.shape[0] < 2:
        raise GmmFitError("cannot select K from fewer than 2 points")
    if k_values[0] < 1 or k_values[-1] > X.shape[0]:
        raise ValueError(f"k_range must lie within [1, {X.shape[0]}]")

    if n_jobs == 1:
        fits = [_fit_one(X, K, seed, gmm_opts) for K in k_values]
    else:
        fits = Parallel(n_jobs=n_jobs)(delayed(_fit_one)(X, K, seed, gmm_opts) for K in k_values)

    scores: Dict[int, float] = {}
    models: Dict[int, gmm.GmmModel] = {}
    excluded: List[int] = []
    for K, model in fits:
        if model is None:
            excluded.append(K)
            continue
        if not model.converged:
            LOGGER.warning("K=%d: EM did not converge in %d iterations; excluded", K, model.iterations)
            excluded.append(K)
            continue
        models[K] = model
        scores[K] = gmm.bic(model, X)

    if not scores:
        raise GmmFitError(f"no candidate K in {k_values} produced a converged fit")
    chosen = max(sorted(scores), key=lambda k: scores[k])
    LOGGER.info("K-hat = %d (BIC %.2f)", chosen, scores[chosen])
    return KSelectionReport(k_values=k_values, bic=scores, chosen_k=chosen, models=models, excluded=excluded)
