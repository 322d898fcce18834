"""Dense matrix helpers: covariance, Jacobi eigendecomposition, whitening, SPD solves.

Matrices are plain float64 ``numpy`` arrays of ndim 2. Response vectors are
``n x 1`` columns; 1-D input is accepted and promoted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, NumericalError, RankDeficient, ShapeError

#: eigenvalue ratio below which a covariance is treated as singular
RANK_TOL = 1e-8
#: Jacobi stops when max off-diagonal <= JACOBI_TOL * max diagonal
JACOBI_TOL = 1e-12
MAX_SWEEPS = 100


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.array(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_column(a, name: str = "vector") -> np.ndarray:
    v = np.array(a, dtype=np.float64)
    if v.ndim == 1:
        v = v.reshape(-1, 1)
    v = as_matrix(v, name)
    if v.shape[1] != 1:
        raise ShapeError(f"{name} must have one column, got shape {v.shape}")
    return v


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def rel_frobenius(a: np.ndarray, reference: np.ndarray) -> float:
    """``||a - reference||_F / ||reference||_F`` (absolute when the reference is zero)."""
    diff = float(np.linalg.norm(a - reference))
    scale = float(np.linalg.norm(reference))
    return diff / scale if scale > 0.0 else diff


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def empirical_covariance(x) -> np.ndarray:
    """Second-moment matrix ``(1/n) X^T X``, exactly symmetric."""
    x = as_matrix(x, "design matrix")
    m = (x.T @ x) / x.shape[0]
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class SpectralFactor:
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    whitening: np.ndarray | None = None


def _fix_signs(v: np.ndarray) -> np.ndarray:
    # largest-magnitude component of each column made positive; argmax picks the first tie
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.where(v[idx, np.arange(v.shape[1])] < 0.0, -1.0, 1.0)
    return v * signs


def symmetric_eigendecompose(m, tol: float = JACOBI_TOL, max_sweeps: int = MAX_SWEEPS) -> SpectralFactor:
    """Eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Returns a :class:`SpectralFactor` without whitening; eigenvalues are sorted
    in descending order and each eigenvector's largest component is positive.
    """
    a = as_matrix(m)
    k = a.shape[0]
    if a.shape[1] != k:
        raise ShapeError(f"eigendecomposition needs a square matrix, got {a.shape}")
    scale = max_abs(a)
    if max_abs(a - a.T) > 1e-10 * max(scale, 1.0):
        raise ValueError("matrix is not symmetric")
    # scalar loops on nested lists beat per-rotation numpy slicing for k <= 64
    a = (0.5 * (a + a.T)).tolist()
    v = np.eye(k).tolist()
    rng_k = range(k)

    polished = False
    for sweep in range(max_sweeps + 1):
        off = max((abs(a[p][q]) for p in rng_k for q in range(p + 1, k)), default=0.0)
        if off <= tol * max(abs(a[i][i]) for i in rng_k):
            # one extra sweep takes the residual far below tol at quadratic convergence
            if polished or off == 0.0:
                break
            polished = True
        if sweep == max_sweeps:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps", residual=off)
        # early sweeps only touch large elements
        threshold = 0.2 * sum(abs(a[p][q]) for p in rng_k for q in range(p + 1, k)) / k**2 if sweep < 3 else 0.0
        for p in range(k - 1):
            ap = a[p]
            for q in range(p + 1, k):
                apq = ap[q]
                if abs(apq) <= threshold:
                    continue
                aq = a[q]
                app, aqq = ap[p], aq[q]
                if sweep > 3 and abs(apq) * 1e18 < min(abs(app), abs(aqq)):
                    ap[q] = aq[p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for r in rng_k:
                    arp, arq = ap[r], aq[r]
                    ap[r] = c * arp - s * arq
                    aq[r] = s * arp + c * arq
                for r in rng_k:
                    ar = a[r]
                    ar[p] = ap[r]
                    ar[q] = aq[r]
                ap[p] = app - t * apq
                aq[q] = aqq + t * apq
                ap[q] = aq[p] = 0.0
                for vr in v:
                    vp, vq = vr[p], vr[q]
                    vr[p] = c * vp - s * vq
                    vr[q] = s * vp + c * vq

    a = np.array(a)
    v = np.array(v)
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return SpectralFactor(eigenvectors=_fix_signs(v[:, order]), eigenvalues=lam[order])


def whitening_factor(cov, rank_tol: float = RANK_TOL) -> SpectralFactor:
    """Spectral factor of an SPD covariance with ``L = V diag(lambda)^(-1/2)``.

    ``L L^T`` is the inverse of ``cov``, and for ``cov = (1/n) X^T X`` the
    whitened design ``XL`` has identity second moments.

    Raises:
        RankDeficient: if ``lambda_min <= rank_tol * lambda_max``.
    """
    spec = symmetric_eigendecompose(cov)
    lam = spec.eigenvalues
    if lam[0] <= 0.0:
        raise RankDeficient("covariance has no positive eigenvalue", ratio=0.0)
    ratio = float(lam[-1] / lam[0])
    if ratio <= rank_tol:
        raise RankDeficient(
            f"design is not of full column rank: lambda_min/lambda_max = {ratio:.3e} <= {rank_tol:.1e}",
            ratio=ratio,
        )
    whitening = spec.eigenvectors / np.sqrt(lam)
    return SpectralFactor(spec.eigenvectors, lam, whitening)


def ldl_factor(a, rank_tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Square-root-free Cholesky ``A = L D L^T`` with unit lower ``L``.

    ``rank_tol`` additionally rejects pivots below ``rank_tol * max(diag(A))``
    as :class:`RankDeficient`.
    """
    a = as_matrix(a)
    k = a.shape[0]
    if a.shape[1] != k:
        raise ShapeError(f"factorization needs a square matrix, got {a.shape}")
    low = np.eye(k)
    d = np.zeros(k)
    top = float(np.max(np.diag(a)))
    for j in range(k):
        ld = low[j, :j] * d[:j]
        d[j] = a[j, j] - ld @ low[j, :j]
        if not d[j] > 0.0:
            raise NumericalError(f"matrix is not positive definite (pivot {j} = {d[j]:.3e})")
        if rank_tol is not None and d[j] <= rank_tol * top:
            raise RankDeficient(f"pivot {j} = {d[j]:.3e} is negligible relative to {top:.3e}", ratio=d[j] / top)
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ ld) / d[j]
    return low, d


def solve_spd(a, b, rank_tol: float | None = None) -> np.ndarray:
    """Solve ``A x = B`` for SPD ``A`` through an LDL^T Cholesky factorization."""
    a = as_matrix(a)
    b = as_matrix(b, "right-hand side")
    if a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
        raise ShapeError(f"cannot solve {a.shape} system with right-hand side {b.shape}")
    low, d = ldl_factor(a, rank_tol)
    k = a.shape[0]
    y = b.copy()
    for i in range(1, k):
        y[i] -= low[i, :i] @ y[:i]
    y /= d[:, None]
    for i in range(k - 2, -1, -1):
        y[i] -= low[i + 1:, i] @ y[i + 1:]
    return y
