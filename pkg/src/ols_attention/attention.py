"""Single-layer linear transformer and its least-squares parameter configuration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError
from .matrix import (
    RANK_TOL,
    as_column,
    as_matrix,
    empirical_covariance,
    max_abs,
    rel_frobenius,
    whitening_factor,
)
from .ols import ols_fit


@dataclass(frozen=True)
class TransformerParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_ffn: np.ndarray
    w_p: np.ndarray

    def __post_init__(self):
        k = np.shape(self.w_q)[0] if np.ndim(self.w_q) == 2 else -1
        for name in ("w_q", "w_k", "w_v", "w_ffn"):
            w = as_matrix(getattr(self, name), name)
            if w.shape != (k, k):
                raise ShapeError(f"{name} must be {k}x{k}, got {w.shape}")
            object.__setattr__(self, name, w)
        w_p = as_matrix(self.w_p, "w_p")
        if w_p.shape != (k, 1):
            raise ShapeError(f"w_p must be {k}x1, got {w_p.shape}")
        object.__setattr__(self, "w_p", w_p)

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]


@dataclass(frozen=True)
class OlsConfiguration:
    params: TransformerParams
    coordinate_vector: np.ndarray
    whitening: np.ndarray


@dataclass(frozen=True)
class EquivalenceReport:
    n: int
    k: int
    max_abs_diff: float
    rel_frobenius_diff: float
    whitening_residual: float


def forward(params: TransformerParams, x, debug_scores: bool = False) -> np.ndarray:
    """``(1/n) (X W_Q)(X W_K)^T (X W_V) W_FFN W_P`` as an ``n x 1`` column.

    The key/value product is contracted first, so the cost is O(n k^2) and the
    ``n x n`` score matrix is never formed. With ``debug_scores`` the score
    matrix is materialized as well and both association orders must agree.
    """
    x = as_matrix(x, "design matrix")
    n, k = x.shape
    if k != params.dim:
        raise ShapeError(f"design has {k} columns but parameters have dimension {params.dim}")
    q = x @ params.w_q
    kv = (x @ params.w_k).T @ (x @ params.w_v)
    out = (q @ kv / n) @ params.w_ffn @ params.w_p
    if debug_scores:
        scores = q @ (x @ params.w_k).T
        naive = (scores @ (x @ params.w_v) / n) @ params.w_ffn @ params.w_p
        gap = max_abs(naive - out)
        if gap > 1e-10 * max(max_abs(out), 1.0):
            raise NumericalError(f"score-matrix order disagrees with key-value order by {gap:.3e}")
    return out


def ols_params_from_whitening(x, y, whitening) -> OlsConfiguration:
    """Configuration with ``W_Q = W_K = W_V = L``, ``W_FFN = I`` and ``W_P = (1/n) L^T X^T Y``."""
    x = as_matrix(x, "design matrix")
    y = as_column(y, "response")
    whitening = as_matrix(whitening, "whitening")
    n, k = x.shape
    p = whitening.T @ (x.T @ y) / n
    params = TransformerParams(whitening, whitening, whitening, np.eye(k), p)
    return OlsConfiguration(params=params, coordinate_vector=params.w_p, whitening=params.w_q)


def construct_ols_params(x, y, rank_tol: float = RANK_TOL) -> OlsConfiguration:
    x = as_matrix(x, "design matrix")
    whitening = whitening_factor(empirical_covariance(x), rank_tol).whitening
    return ols_params_from_whitening(x, y, whitening)


def whitening_residual(x, whitening) -> float:
    """``max |(1/n) L^T X^T X L - I|``."""
    xl = np.asarray(x) @ whitening
    return max_abs(xl.T @ xl / xl.shape[0] - np.eye(xl.shape[1]))


def equivalence_report(x, y, rank_tol: float = RANK_TOL, debug_scores: bool = False) -> EquivalenceReport:
    x = as_matrix(x, "design matrix")
    config = construct_ols_params(x, y, rank_tol)
    out = forward(config.params, x, debug_scores=debug_scores)
    fitted = ols_fit(x, y, rank_tol).fitted
    return EquivalenceReport(
        n=x.shape[0],
        k=x.shape[1],
        max_abs_diff=max_abs(out - fitted),
        rel_frobenius_diff=rel_frobenius(out, fitted),
        whitening_residual=whitening_residual(x, config.whitening),
    )
