"""Closed-form least squares, two ways.

``ols_fit`` solves the normal equations by Cholesky and never touches the
spectral factor, so it can serve as the reference for everything built on
``L``. ``hat_projection`` takes the spectral route instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, RankDeficient, ShapeError
from .matrix import RANK_TOL, as_column, as_matrix, empirical_covariance, solve_spd, whitening_factor


@dataclass(frozen=True)
class OlsFit:
    beta: np.ndarray
    fitted: np.ndarray
    residual_norm: float


def _check_xy(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = as_matrix(x, "design matrix")
    y = as_column(y, "response")
    if y.shape[0] != x.shape[0]:
        raise ShapeError(f"design {x.shape} and response {y.shape} disagree on n")
    return x, y


def ols_fit(x, y, rank_tol: float = RANK_TOL) -> OlsFit:
    x, y = _check_xy(x, y)
    gram = x.T @ x
    gram = 0.5 * (gram + gram.T)
    try:
        beta = solve_spd(gram, x.T @ y, rank_tol=rank_tol)
    except RankDeficient:
        raise
    except NumericalError as exc:
        raise RankDeficient(f"normal equations are singular: {exc}") from exc
    fitted = x @ beta
    return OlsFit(beta=beta, fitted=fitted, residual_norm=float(np.linalg.norm(y - fitted)))


def hat_projection(x, y, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Fitted values ``(1/n) (XL)(XL)^T Y`` through the whitening factor."""
    x, y = _check_xy(x, y)
    n = x.shape[0]
    whitening = whitening_factor(empirical_covariance(x), rank_tol).whitening
    xl = x @ whitening
    return xl @ (xl.T @ y) / n
