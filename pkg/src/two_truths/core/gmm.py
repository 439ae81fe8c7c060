"""Gaussian mixture models with full covariances, fitted by EM"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from two_truths.errors import DimensionMismatchError, GmmFitError
from two_truths.utils.logger import get_logger

LOGGER = get_logger("two_truths.gmm")

# a component whose total responsibility drops below this is treated as collapsed
COLLAPSE_MASS = 1e-8


@dataclass(frozen=True)
class GmmOptions:
    """EM settings; reg_floor None means 1e-6 times the mean per-feature variance of X"""

    max_iter: int = 500
    ll_tol: float = 1e-8
    reg_floor: Optional[float] = None
    n_init: int = 5
    n_jobs: int = 1


@dataclass(frozen=True, eq=False)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float = float("nan")
    converged: bool = False
    iterations: int = 0
    reg_floor: float = 0.0
    ll_history: Sequence[float] = field(default=(), repr=False)

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> Dict:
        return {
            "K": self.K,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "iterations": self.iterations,
            "reg_floor": self.reg_floor,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GmmModel":
        return cls(
            weights=np.asarray(data["weights"], dtype=np.float64),
            means=np.asarray(data["means"], dtype=np.float64),
            covariances=np.asarray(data["covariances"], dtype=np.float64),
            log_likelihood=float(data.get("log_likelihood", float("nan"))),
            converged=bool(data.get("converged", False)),
            iterations=int(data.get("iterations", 0)),
            reg_floor=float(data.get("reg_floor", 0.0)),
        )


class _ComponentCollapse(Exception):
    pass


# ==========================================================
# DENSITIES
# ==========================================================
def _as_data(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def gaussian_log_pdf(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """log N(x; mean, cov) per row, via a Cholesky factor"""
    chol = linalg.cholesky(cov, lower=True)
    z = linalg.solve_triangular(chol, (X - mean).T, lower=True)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    d = X.shape[1]
    return -0.5 * (d * np.log(2.0 * np.pi) + log_det + np.sum(z * z, axis=0))


def _weighted_log_prob(model_weights, means, covariances, X) -> np.ndarray:
    columns = [gaussian_log_pdf(X, means[k], covariances[k]) for k in range(len(model_weights))]
    with np.errstate(divide="ignore"):
        return np.column_stack(columns) + np.log(model_weights)


def _check_dimension(model: GmmModel, X: np.ndarray) -> None:
    if X.shape[1] != model.d:
        raise DimensionMismatchError(f"model has dimension {model.d}, data has {X.shape[1]}")


def log_likelihood(model: GmmModel, X) -> float:
    """sum_i log sum_k w_k phi(x_i; mu_k, Sigma_k), with log-sum-exp"""
    X = _as_data(X)
    _check_dimension(model, X)
    return float(np.sum(logsumexp(_weighted_log_prob(model.weights, model.means, model.covariances, X), axis=1)))


def n_parameters(K: int, d: int) -> int:
    """Free parameters of a full-covariance mixture: (K-1) + K*d + K*d(d+1)/2"""
    return (K - 1) + K * d + K * d * (d + 1) // 2


def bic(model: GmmModel, X) -> float:
    """2 * logLik - dim(theta) * ln n; larger is better"""
    X = _as_data(X)
    return 2.0 * log_likelihood(model, X) - n_parameters(model.K, model.d) * np.log(X.shape[0])


def responsibilities(model: GmmModel, X) -> np.ndarray:
    X = _as_data(X)
    _check_dimension(model, X)
    log_prob = _weighted_log_prob(model.weights, model.means, model.covariances, X)
    return np.exp(log_prob - logsumexp(log_prob, axis=1, keepdims=True))


def hard_assign(model: GmmModel, X) -> np.ndarray:
    """argmax_k posterior responsibility; ties go to the lowest component index"""
    X = _as_data(X)
    _check_dimension(model, X)
    log_prob = _weighted_log_prob(model.weights, model.means, model.covariances, X)
    return np.argmax(log_prob, axis=1).astype(np.int64)


# ==========================================================
# EM
# ==========================================================
def _regularize(cov: np.ndarray, floor: float) -> np.ndarray:
    cov = (cov + cov.T) / 2.0
    smallest = float(linalg.eigvalsh(cov)[0])
    if smallest < floor:
        cov = cov + (floor + max(0.0, -smallest)) * np.eye(cov.shape[0])
    return cov


def _m_step(X: np.ndarray, resp: np.ndarray, floor: float):
    mass = resp.sum(axis=0)
    if np.any(mass < COLLAPSE_MASS * X.shape[0]):
        raise _ComponentCollapse()
    weights = mass / mass.sum()
    means = (resp.T @ X) / mass[:, None]
    covariances = np.empty((resp.shape[1], X.shape[1], X.shape[1]))
    for k in range(resp.shape[1]):
        centered = X - means[k]
        covariances[k] = _regularize((resp[:, k, None] * centered).T @ centered / mass[k], floor)
    return weights, means, covariances


def _initial_responsibilities(X: np.ndarray, K: int, seed: int) -> np.ndarray:
    """k-means++ seeding, then hard assignment to the nearest seed"""
    centers, _ = kmeans_plusplus(X, n_clusters=K, random_state=seed)
    distances = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((X.shape[0], K))
    resp[np.arange(X.shape[0]), np.argmin(distances, axis=1)] = 1.0
    return resp


def _run_em(X: np.ndarray, K: int, seed: int, opts: GmmOptions, floor: float) -> Optional[GmmModel]:
    try:
        weights, means, covariances = _m_step(X, _initial_responsibilities(X, K, seed), floor)
        history: List[float] = []
        converged = False
        iterations = 0
        for iterations in range(1, opts.max_iter + 1):
            log_prob = _weighted_log_prob(weights, means, covariances, X)
            row_norm = logsumexp(log_prob, axis=1, keepdims=True)
            ll = float(row_norm.sum())
            if history:
                previous = history[-1]
                if (ll - previous) <= opts.ll_tol * abs(previous):
                    history.append(ll)
                    converged = True
                    break
            history.append(ll)
            weights, means, covariances = _m_step(X, np.exp(log_prob - row_norm), floor)
        else:
            history.append(float(np.sum(logsumexp(_weighted_log_prob(weights, means, covariances, X), axis=1))))
    except (_ComponentCollapse, linalg.LinAlgError):
        LOGGER.debug("EM restart with seed %d collapsed (K=%d)", seed, K)
        return None

    return GmmModel(
        weights=weights,
        means=means,
        covariances=covariances,
        log_likelihood=history[-1],
        converged=converged,
        iterations=iterations,
        reg_floor=floor,
        ll_history=tuple(history),
    )


def default_reg_floor(X: np.ndarray) -> float:
    spread = float(np.mean(np.var(X, axis=0))) if X.shape[0] > 1 else 0.0
    return 1e-6 * spread if spread > 0 else 1e-6


def fit(X, K: int, seed: int = 0, opts: GmmOptions = GmmOptions()) -> GmmModel:
    """
    Fit a K-component full-covariance mixture by EM

    Each of the n_init restarts starts from its own k-means++ seeding; the restart
    with the best final log-likelihood wins. A restart in which a component loses
    all responsibility is discarded.

    Args:
        X: n x d data
        K: Number of components (1 <= K <= n)
        seed: Base seed; restart seeds are derived from it
        opts: EM options

    Returns:
        GmmModel: The best restart

    Raises:
        GmmFitError: K > n, too few points, or every restart collapsed
    """
    X = _as_data(X)
    n = X.shape[0]
    if K < 1 or K > n:
        raise GmmFitError(f"cannot fit K={K} components to n={n} points")
    if n < 2:
        raise GmmFitError("at least 2 points are needed to estimate a covariance")
    if not np.all(np.isfinite(X)):
        raise GmmFitError("data contains non-finite values")

    floor = opts.reg_floor if opts.reg_floor is not None else default_reg_floor(X)
    restart_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(opts.n_init)]

    if opts.n_jobs == 1:
        runs = [_run_em(X, K, s, opts, floor) for s in restart_seeds]
    else:
        runs = Parallel(n_jobs=opts.n_jobs)(delayed(_run_em)(X, K, s, opts, floor) for s in restart_seeds)

    models = [model for model in runs if model is not None]
    if not models:
        raise GmmFitError(f"all {opts.n_init} EM restarts collapsed for K={K}")
    # first restart wins ties, keeping results independent of worker scheduling
    best = max(range(len(models)), key=lambda i: (models[i].log_likelihood, -i))
    model = models[best]
    LOGGER.debug(
        "GMM K=%d d=%d logLik=%.4f converged=%s iterations=%d",
        K, X.shape[1], model.log_likelihood, model.converged, model.iterations,
    )
    return model
