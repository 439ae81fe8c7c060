"""Chernoff information, Chernoff ratio, mixture KL and the four-component grouping analysis"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from two_truths.core.gmm import gaussian_log_pdf
from two_truths.core.graph import largest_connected_component
from two_truths.core.sbm import SbmParams, sample_sbm
from two_truths.core.spectral import EmbeddingMethod, SolverOptions, embed
from two_truths.errors import DegenerateGaussianError, SbmParamsError
from two_truths.utils.logger import get_logger

LOGGER = get_logger("two_truths.chernoff")

GRID_POINTS = 101
COVARIANCE_FLOOR = 1e-12
DEFAULT_N_BIG = 4000
DEFAULT_KL_SAMPLES = 200_000
KL_CHUNK = 50_000
LOG_DENSITY_FLOOR = float(np.log(np.finfo(np.float64).tiny))


# ==========================================================
# TYPES
# ==========================================================
@dataclass(frozen=True, eq=False)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (len(mean), len(mean)):
            raise DegenerateGaussianError(f"covariance shape {cov.shape} does not match mean of length {len(mean)}")
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-14):
            raise DegenerateGaussianError("covariance is not symmetric")
        cov = (cov + cov.T) / 2.0
        if linalg.eigvalsh(cov)[0] <= 0:
            raise DegenerateGaussianError("covariance is not positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def d(self) -> int:
        return len(self.mean)

    def to_dict(self) -> Dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: np.ndarray
    components: Tuple[Gaussian, ...]

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if len(weights) != len(self.components) or len(weights) == 0:
            raise ValueError("one weight per component is required")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("mixture weights must be nonnegative with positive sum")
        dims = {c.d for c in self.components}
        if len(dims) != 1:
            raise ValueError(f"components disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "weights", weights / weights.sum())
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def d(self) -> int:
        return self.components[0].d

    def log_pdf(self, X: np.ndarray) -> np.ndarray:
        columns = np.column_stack([gaussian_log_pdf(X, c.mean, c.cov) for c in self.components])
        with np.errstate(divide="ignore"):
            return logsumexp(columns + np.log(self.weights), axis=1)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        counts = rng.multinomial(size, self.weights)
        draws = [rng.multivariate_normal(c.mean, c.cov, size=k) for c, k in zip(self.components, counts) if k]
        return np.vstack(draws) if draws else np.zeros((0, self.d))


@dataclass(frozen=True, eq=False)
class ChernoffResult:
    value: float
    t_star: float
    h_curve: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)

    def to_dict(self) -> Dict:
        data = {"value": self.value, "t_star": self.t_star}
        if self.h_curve is not None:
            data["h_curve"] = {"t": self.h_curve[0].tolist(), "h": self.h_curve[1].tolist()}
        return data


@dataclass(frozen=True, eq=False)
class LimitGaussians:
    """
    Per-block Gaussians of an embedded large sample

    Covariances are sample covariances of the embedding rows multiplied by
    scale_factor (the sqrt(n)-scaled limit); per_vertex() undoes the scaling.
    """

    method: EmbeddingMethod
    gaussians: Tuple[Gaussian, ...]
    weights: np.ndarray
    names: Tuple[str, ...]
    scale_factor: float
    n_big: int

    def to_dict(self) -> Dict:
        return {
            "method": self.method.value,
            "names": list(self.names),
            "weights": self.weights.tolist(),
            "scale_factor": self.scale_factor,
            "n_big": self.n_big,
            "gaussians": [g.to_dict() for g in self.gaussians],
        }

    def per_vertex(self) -> Tuple[Gaussian, ...]:
        """Gaussians of single embedded rows, the scale on which Chernoff and KL are computed"""
        return tuple(Gaussian(mean=g.mean, cov=g.cov / self.scale_factor) for g in self.gaussians)


@dataclass(frozen=True)
class ChernoffRatio:
    rho: float
    ase: ChernoffResult
    lse: ChernoffResult

    def to_dict(self) -> Dict:
        return {"rho": self.rho, "rho_ase": self.ase.value, "rho_lse": self.lse.value,
                "t_star_ase": self.ase.t_star, "t_star_lse": self.lse.t_star}


@dataclass(frozen=True)
class KlEstimate:
    value: float
    stderr: float
    n_samples: int
    floored: int = 0


@dataclass(frozen=True)
class GroupingEntry:
    side_a: Tuple[str, ...]
    side_b: Tuple[str, ...]
    kl_ab: KlEstimate
    kl_ba: KlEstimate

    @property
    def score(self) -> float:
        return 0.5 * (self.kl_ab.value + self.kl_ba.value)

    @property
    def stderr(self) -> float:
        return 0.5 * float(np.hypot(self.kl_ab.stderr, self.kl_ba.stderr))

    def label(self) -> str:
        return "{" + ",".join(self.side_a) + "|" + ",".join(self.side_b) + "}"


@dataclass(frozen=True)
class GroupingReport:
    method: str
    entries: Tuple[GroupingEntry, ...]  # ranked, best first
    score: str = "symmetrized_kl"

    @property
    def best(self) -> GroupingEntry:
        return self.entries[0]

    def to_dict(self) -> Dict:
        return {
            "method": self.method,
            "score": self.score,
            "best": self.best.label(),
            "groupings": [
                {
                    "grouping": e.label(),
                    "side_a": list(e.side_a),
                    "side_b": list(e.side_b),
                    "kl_ab": e.kl_ab.value,
                    "kl_ba": e.kl_ba.value,
                    "score": e.score,
                    "stderr": e.stderr,
                }
                for e in self.entries
            ],
        }


# ==========================================================
# CHERNOFF INFORMATION
# ==========================================================
def _log_det(cov: np.ndarray) -> float:
    chol = linalg.cholesky(cov, lower=True)
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def h_t(t: float, f1: Gaussian, f2: Gaussian) -> float:
    """
    t(1-t)/2 (mu1-mu2)' Sigma_t^{-1} (mu1-mu2) + 1/2 log(|Sigma_t| / (|Sigma1|^t |Sigma2|^{1-t}))
    with Sigma_t = t Sigma1 + (1-t) Sigma2
    """
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie in (0, 1), got {t}")
    if f1.d != f2.d:
        raise DegenerateGaussianError(f"dimension mismatch: {f1.d} vs {f2.d}")
    sigma_t = t * f1.cov + (1.0 - t) * f2.cov
    delta = f1.mean - f2.mean
    try:
        factor = linalg.cho_factor(sigma_t, lower=True)
    except linalg.LinAlgError:
        raise DegenerateGaussianError(f"Sigma_t is numerically singular at t={t}") from None
    quad = float(delta @ linalg.cho_solve(factor, delta))
    log_det_t = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    log_ratio = log_det_t - t * _log_det(f1.cov) - (1.0 - t) * _log_det(f2.cov)
    return 0.5 * t * (1.0 - t) * quad + 0.5 * log_ratio


def chernoff_information(f1: Gaussian, f2: Gaussian, opt_tol: float = 1e-8, keep_curve: bool = False) -> ChernoffResult:
    """
    sup over t in (0,1) of h(t): a 101-point grid locates the peak, bounded
    Brent/golden search refines it to ``opt_tol`` in t
    """
    grid = np.arange(1, GRID_POINTS + 1) / (GRID_POINTS + 1)
    values = np.array([h_t(t, f1, f2) for t in grid])
    if not np.all(np.isfinite(values)):
        raise DegenerateGaussianError("h(t) is not finite on the search grid")

    peak = int(np.argmax(values))
    lower = grid[peak - 1] if peak > 0 else grid[0] / 2.0
    upper = grid[peak + 1] if peak < len(grid) - 1 else (1.0 + grid[-1]) / 2.0
    result = minimize_scalar(lambda t: -h_t(t, f1, f2), bounds=(lower, upper), method="bounded",
                             options={"xatol": opt_tol})

    t_star, value = float(result.x), float(-result.fun)
    if values[peak] > value:
        t_star, value = float(grid[peak]), float(values[peak])
    return ChernoffResult(value=max(value, 0.0), t_star=t_star, h_curve=(grid, values) if keep_curve else None)


# ==========================================================
# EMPIRICAL LIMIT PARAMETERS
# ==========================================================
def empirical_limit_params(
    params: SbmParams,
    method,
    n_big: int = DEFAULT_N_BIG,
    d: int = 2,
    seed: int = 0,
    solver: SolverOptions = SolverOptions(),
) -> LimitGaussians:
    """
    Estimate the large-sample per-block Gaussians of an embedding

    One graph of n_big vertices is sampled and embedded; each block's rows give
    a sample mean and a sample covariance multiplied by n_big. Column signs are
    oriented so the first block's mean is nonnegative.
    """
    method = EmbeddingMethod(method)
    if np.any(params.pi * n_big < 50 * d):
        raise ValueError(f"n_big={n_big} gives an expected block size below 50*d={50 * d}")

    graph, labels = sample_sbm(params, n_big, seed)
    if method is EmbeddingMethod.LSE:
        graph, labels, _ = largest_connected_component(graph, labels)
        if graph.n < n_big:
            LOGGER.info("LSE limit estimate drops %d vertices outside the LCC", n_big - graph.n)
    X = embed(graph, d, method, solver).X
    codes = labels.codes()

    blocks = [X[codes == k] for k in range(params.K)]
    sizes = [len(rows) for rows in blocks]
    if min(sizes) <= d:
        raise DegenerateGaussianError(f"sampled block sizes {sizes} are too small for d={d}")

    signs = np.where(blocks[0].mean(axis=0) < 0, -1.0, 1.0)
    gaussians = []
    for rows in blocks:
        rows = rows * signs
        cov = np.atleast_2d(np.cov(rows, rowvar=False)) * n_big
        if linalg.eigvalsh(cov)[0] < COVARIANCE_FLOOR:
            raise DegenerateGaussianError("a block covariance is singular after the 1e-12 floor")
        gaussians.append(Gaussian(mean=rows.mean(axis=0), cov=cov))
    return LimitGaussians(
        method=method,
        gaussians=tuple(gaussians),
        weights=params.pi.copy(),
        names=params.names,
        scale_factor=float(n_big),
        n_big=n_big,
    )


def _canonical_order(params: SbmParams) -> List[int]:
    """Block order independent of how the caller numbered the blocks"""
    keys = [(params.pi[k], params.B[k, k], params.B[k].sum()) for k in range(params.K)]
    return sorted(range(params.K), key=lambda k: keys[k], reverse=True)


def chernoff_ratio(
    params: SbmParams, n_big: int = DEFAULT_N_BIG, seed: int = 0, solver: SolverOptions = SolverOptions()
) -> ChernoffRatio:
    """
    rho = rho_A / rho_L from d=2 empirical limit Gaussians of a 2-block SBM;
    rho > 1 favors ASE, rho < 1 favors LSE
    """
    if params.K != 2:
        raise SbmParamsError(f"Chernoff ratio needs a 2-block model, got K={params.K}")
    if np.allclose(params.B, params.B[0, 0]):
        raise SbmParamsError("B has no block signal (all entries equal)")
    canonical = params.permuted(_canonical_order(params))

    results = {}
    for method in (EmbeddingMethod.ASE, EmbeddingMethod.LSE):
        limit = empirical_limit_params(canonical, method, n_big=n_big, d=2, seed=seed, solver=solver)
        first, second = limit.per_vertex()
        results[method] = chernoff_information(first, second)
    ase, lse = results[EmbeddingMethod.ASE], results[EmbeddingMethod.LSE]
    if lse.value <= 0:
        raise DegenerateGaussianError("LSE Chernoff information is zero; ratio undefined")
    rho = ase.value / lse.value
    LOGGER.debug("rho_A=%.5g rho_L=%.5g rho=%.4f", ase.value, lse.value, rho)
    return ChernoffRatio(rho=rho, ase=ase, lse=lse)


# ==========================================================
# MIXTURE KL AND GROUPINGS
# ==========================================================
def gaussian_kl(p: Gaussian, q: Gaussian) -> float:
    """Closed-form KL(p || q) between two Gaussians"""
    factor = linalg.cho_factor(q.cov, lower=True)
    delta = q.mean - p.mean
    trace = float(np.trace(linalg.cho_solve(factor, p.cov)))
    quad = float(delta @ linalg.cho_solve(factor, delta))
    return 0.5 * (trace + quad - p.d + _log_det(q.cov) - _log_det(p.cov))


def _kl_chunk(p: GaussianMixture, q: GaussianMixture, size: int, seed_seq) -> Tuple[np.ndarray, int]:
    rng = np.random.default_rng(seed_seq)
    X = p.sample(size, rng)
    log_q = q.log_pdf(X)
    floored = int(np.sum(log_q < LOG_DENSITY_FLOOR))
    return p.log_pdf(X) - np.maximum(log_q, LOG_DENSITY_FLOOR), floored


def mixture_kl(
    p: GaussianMixture, q: GaussianMixture, n_samples: int = DEFAULT_KL_SAMPLES, seed: int = 0, n_jobs: int = 1
) -> KlEstimate:
    """
    Monte Carlo KL(p || q) = E_p[log p(x) - log q(x)] with its standard error

    Samples are drawn in fixed-size chunks with seeds derived from ``seed``, so
    the estimate does not depend on n_jobs.
    """
    if p.d != q.d:
        raise ValueError(f"mixtures differ in dimension: {p.d} vs {q.d}")
    if n_samples < 10_000:
        raise ValueError(f"n_samples must be >= 10000, got {n_samples}")
    sizes = [KL_CHUNK] * (n_samples // KL_CHUNK)
    if n_samples % KL_CHUNK:
        sizes.append(n_samples % KL_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    if n_jobs == 1:
        chunks = [_kl_chunk(p, q, size, s) for size, s in zip(sizes, seeds)]
    else:
        chunks = Parallel(n_jobs=n_jobs)(delayed(_kl_chunk)(p, q, size, s) for size, s in zip(sizes, seeds))

    diffs = np.concatenate([c[0] for c in chunks])
    floored = sum(c[1] for c in chunks)
    if floored:
        LOGGER.warning("mixture_kl: %d sample(s) hit the log-density floor of q", floored)
    return KlEstimate(
        value=float(diffs.mean()),
        stderr=float(diffs.std(ddof=1) / np.sqrt(len(diffs))),
        n_samples=len(diffs),
        floored=floored,
    )


def bipartitions(count: int) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """Unordered splits of range(count) into two nonempty groups; side_a holds item 0"""
    items = list(range(count))
    splits = []
    for size in range(1, count):
        for rest in combinations(items[1:], size - 1):
            side_a = (0,) + rest
            side_b = tuple(i for i in items if i not in side_a)
            if side_b:
                splits.append((side_a, side_b))
    return splits


def _sub_mixture(components: Sequence[Gaussian], weights: np.ndarray, group: Sequence[int]) -> GaussianMixture:
    return GaussianMixture(weights=weights[list(group)], components=tuple(components[i] for i in group))


def two_truths_grouping(
    components: Sequence[Gaussian],
    weights,
    method: str = "",
    names: Optional[Sequence[str]] = None,
    n_samples: int = DEFAULT_KL_SAMPLES,
    seed: int = 0,
    n_jobs: int = 1,
) -> GroupingReport:
    """
    Rank the 7 two-cluster groupings of 4 Gaussians by symmetrized mixture KL
    between the weight-renormalized sides
    """
    weights = np.asarray(weights, dtype=np.float64)
    if len(components) != 4 or len(weights) != 4:
        raise ValueError("grouping analysis needs exactly 4 components and 4 weights")
    if np.any(weights <= 0):
        raise ValueError("component weights must be positive")
    names = tuple(names) if names is not None else tuple(str(i + 1) for i in range(4))

    splits = bipartitions(4)
    seeds = np.random.SeedSequence(seed).spawn(len(splits))
    entries = []
    for (side_a, side_b), split_seed in zip(splits, seeds):
        p = _sub_mixture(components, weights, side_a)
        q = _sub_mixture(components, weights, side_b)
        forward_seed, backward_seed = (int(s.generate_state(1)[0]) for s in split_seed.spawn(2))
        entries.append(
            GroupingEntry(
                side_a=tuple(names[i] for i in side_a),
                side_b=tuple(names[i] for i in side_b),
                kl_ab=mixture_kl(p, q, n_samples, forward_seed, n_jobs),
                kl_ba=mixture_kl(q, p, n_samples, backward_seed, n_jobs),
            )
        )
    ranked = tuple(sorted(entries, key=lambda e: e.score, reverse=True))
    LOGGER.info("%s grouping: best %s (score %.4g)", method or "mixture", ranked[0].label(), ranked[0].score)
    return GroupingReport(method=str(method), entries=ranked)


def limit_grouping(limit: LimitGaussians, n_samples: int = DEFAULT_KL_SAMPLES, seed: int = 0,
                   n_jobs: int = 1) -> GroupingReport:
    return two_truths_grouping(limit.per_vertex(), limit.weights, limit.method.value, limit.names,
                               n_samples=n_samples, seed=seed, n_jobs=n_jobs)
