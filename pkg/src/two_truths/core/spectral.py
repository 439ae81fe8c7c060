"""Sparse symmetric eigendecomposition and the ASE / LSE spectral embeddings"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, aslinearoperator, eigsh

from two_truths.core.graph import Graph, degrees
from two_truths.errors import ConvergenceError, IsolatedVertexError
from two_truths.utils.logger import get_logger

LOGGER = get_logger("two_truths.spectral")


class EmbeddingMethod(str, enum.Enum):
    ASE = "ASE"
    LSE = "LSE"


@dataclass(frozen=True)
class SolverOptions:
    """
    Iterative eigensolver settings

    max_iter defaults to 20*m restarts and ncv to max(2m+10, 20); problems with
    n <= dense_threshold are solved densely.
    """

    tol: float = 1e-8
    max_iter: Optional[int] = None
    ncv: Optional[int] = None
    dense_threshold: int = 256
    seed: int = 0


@dataclass(frozen=True)
class SpectrumSlice:
    """Top-m eigenvalues by magnitude (signed) with solver residuals"""

    eigenvalues: np.ndarray
    residuals: np.ndarray
    solver: str  # "lanczos" or "dense"

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.eigenvalues)


@dataclass(frozen=True, eq=False)
class Embedding:
    """Rows of X = U_d |S_d|^{1/2}, one per vertex"""

    X: np.ndarray
    eigenvalues: np.ndarray
    method: EmbeddingMethod
    vectors: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def to_csv(self, path) -> None:
        """Header comment with method and eigenvalues, then a column header and n rows"""
        header = f"# method={self.method.value} eigenvalues=" + ";".join(f"{v:.17g}" for v in self.eigenvalues)
        columns = ",".join(f"x{j + 1}" for j in range(self.d))
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(header + "\n")
            handle.write(columns + "\n")
            np.savetxt(handle, self.X, delimiter=",", fmt="%.17g")


# ==========================================================
# EIGENSOLVER
# ==========================================================
def _order_by_magnitude(values: np.ndarray, tol: float) -> np.ndarray:
    """Descending |lambda|; equal magnitudes (to tolerance) put the positive value first"""
    if len(values) == 0:
        return np.zeros(0, dtype=np.int64)
    scale = max(tol, 1e-12) * max(1.0, float(np.max(np.abs(values)))) * 10.0
    quantized = np.round(np.abs(values) / scale)
    return np.lexsort((np.arange(len(values)), -values, -quantized))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry (first on ties) is positive"""
    if vectors.size == 0:
        return vectors
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _residuals(op: LinearOperator, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    if vectors.size == 0:
        return np.zeros(0)
    applied = op.matmat(vectors)
    return np.linalg.norm(applied - vectors * values, axis=0)


def _dense_matrix(op) -> np.ndarray:
    if sparse.issparse(op):
        return op.toarray()
    if isinstance(op, np.ndarray):
        return op
    return aslinearoperator(op).matmat(np.eye(op.shape[0]))


def top_eigenpairs(op, m: int, opts: SolverOptions = SolverOptions()) -> Tuple[SpectrumSlice, np.ndarray]:
    """
    Top-m eigenpairs by magnitude of a symmetric operator

    Uses implicitly restarted Lanczos (ARPACK) through matvecs only, or a dense
    decomposition when n <= opts.dense_threshold.

    Args:
        op: Symmetric dense array, sparse matrix or LinearOperator of size n
        m: Number of pairs (1 <= m <= n)
        opts: Solver options

    Returns:
        (SpectrumSlice, vectors): vectors is n x m with unit, sign-fixed columns

    Raises:
        ValueError: m outside [1, n]
        ConvergenceError: Lanczos did not reach tol * max(1, |lambda|)
    """
    n = op.shape[0]
    if m < 1 or m > n:
        raise ValueError(f"requested {m} eigenpairs from an operator of size {n}")
    linear = aslinearoperator(op)

    if n <= opts.dense_threshold or m >= n - 1:
        values, vectors = linalg.eigh(_dense_matrix(op))
        solver = "dense"
    else:
        values, vectors = _lanczos(linear, n, m, opts)
        solver = "lanczos"

    order = _order_by_magnitude(values, opts.tol)[:m]
    values, vectors = values[order], _fix_signs(vectors[:, order])
    residuals = _residuals(linear, values, vectors)

    bound = opts.tol * np.maximum(1.0, np.abs(values))
    if solver == "lanczos" and np.any(residuals > bound):
        raise ConvergenceError(
            f"eigenpair residuals above tolerance: max {residuals.max():.3e}", residuals=residuals
        )
    LOGGER.debug("top_eigenpairs(%s) n=%d m=%d max residual %.2e", solver, n, m, residuals.max())
    return SpectrumSlice(eigenvalues=values, residuals=residuals, solver=solver), vectors


def _lanczos(linear: LinearOperator, n: int, m: int, opts: SolverOptions) -> Tuple[np.ndarray, np.ndarray]:
    max_iter = opts.max_iter or 20 * m
    ncv = min(n, opts.ncv or max(2 * m + 10, 20))
    v0 = np.random.default_rng(opts.seed).standard_normal(n)
    # ARPACK's stopping rule is relative to |lambda|; tighten so the absolute bound also holds
    arpack_tol = opts.tol / 10.0

    for attempt in range(2):
        try:
            return eigsh(linear, k=m, which="LM", tol=arpack_tol, maxiter=max_iter, ncv=ncv, v0=v0)
        except ArpackNoConvergence as exc:
            if attempt == 1:
                residuals = _residuals(linear, exc.eigenvalues, exc.eigenvectors)
                raise ConvergenceError(
                    f"Lanczos did not converge: {len(exc.eigenvalues)} of {m} pairs after {max_iter} restarts",
                    residuals=residuals,
                ) from None
            LOGGER.warning("Lanczos stalled after %d restarts; retrying with a larger subspace", max_iter)
            max_iter *= 10
            ncv = min(n, 2 * ncv)
    raise AssertionError("unreachable")


# ==========================================================
# EMBEDDINGS
# ==========================================================
def laplacian_operator(g: Graph) -> LinearOperator:
    """D^{-1/2} A D^{-1/2} as a matvec that rescales by degree"""
    deg = degrees(g).astype(np.float64)
    if np.any(deg == 0):
        isolated = np.flatnonzero(deg == 0)
        raise IsolatedVertexError(
            f"{len(isolated)} isolated vertex/vertices (e.g. {isolated[:5].tolist()}); "
            "extract the largest connected component first"
        )
    scale = 1.0 / np.sqrt(deg)
    A = g.as_float()

    def matmat(x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return scale * (A @ (scale * x))
        return scale[:, None] * (A @ (scale[:, None] * x))

    return LinearOperator((g.n, g.n), matvec=matmat, matmat=matmat, rmatvec=matmat, dtype=np.float64)


def laplacian_matrix(g: Graph) -> sparse.csr_matrix:
    """Materialized D^{-1/2} A D^{-1/2}; small graphs and tests only"""
    deg = degrees(g).astype(np.float64)
    if np.any(deg == 0):
        raise IsolatedVertexError("graph has isolated vertices")
    scale = sparse.diags(1.0 / np.sqrt(deg))
    return (scale @ g.as_float() @ scale).tocsr()


def _operator_for(g: Graph, method: EmbeddingMethod):
    method = EmbeddingMethod(method)
    if method is EmbeddingMethod.LSE:
        if g.n <= 256:
            return laplacian_matrix(g)
        return laplacian_operator(g)
    return g.as_float()


def spectrum(g: Graph, method, m: int, opts: SolverOptions = SolverOptions()) -> SpectrumSlice:
    """Top-m eigenvalues of A (ASE) or L(A) (LSE), for scree analysis"""
    if g.n_edges == 0:
        return SpectrumSlice(eigenvalues=np.zeros(m), residuals=np.zeros(m), solver="dense")
    slice_, _ = top_eigenpairs(_operator_for(g, method), m, opts)
    return slice_


def embed(g: Graph, d: int, method, opts: SolverOptions = SolverOptions()) -> Embedding:
    """X = U_d |S_d|^{1/2} from the top-d-by-magnitude eigenpairs of A or L(A)"""
    method = EmbeddingMethod(method)
    if g.n == 0:
        raise ValueError("cannot embed an empty graph")
    if d < 1 or d > g.n:
        raise ValueError(f"embedding dimension {d} outside [1, {g.n}]")
    op = _operator_for(g, method)

    if g.n_edges == 0:
        vectors = np.eye(g.n)[:, :d]
        values = np.zeros(d)
    else:
        slice_, vectors = top_eigenpairs(op, d, opts)
        values = slice_.eigenvalues

    X = vectors * np.sqrt(np.abs(values))
    LOGGER.debug("%s embedding n=%d d=%d eigenvalues=%s", method.value, g.n, d, np.round(values, 4))
    return Embedding(X=X, eigenvalues=values, method=method, vectors=vectors)


def ase_embed(g: Graph, d: int, opts: SolverOptions = SolverOptions()) -> Embedding:
    return embed(g, d, EmbeddingMethod.ASE, opts)


def lse_embed(g: Graph, d: int, opts: SolverOptions = SolverOptions()) -> Embedding:
    return embed(g, d, EmbeddingMethod.LSE, opts)

