"""Context prediction with fixed training statistics and its distortion under shift.

The trained whitening factor is slow memory: ``L L^T`` equals the inverse
training covariance. The context moment ``(1/m) Z^T Y_z`` is fast memory,
recomputed for every context. A noise-free context with ``Y_z = Z beta``
yields ``Z (Sigma_x^-1 Sigma_z) beta``, which is exact only when the two
covariances match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import construct_ols_params
from .errors import RankDeficient, ShapeError
from .matrix import (
    RANK_TOL,
    as_column,
    as_matrix,
    empirical_covariance,
    rel_frobenius,
    solve_spd,
    whitening_factor,
)
from .ols import ols_fit
from .rng import Rng

SHIFT_KINDS = ("scale", "rotate", "anisotropic")


@dataclass(frozen=True)
class ContextTask:
    z: np.ndarray
    y_z: np.ndarray
    beta_true: np.ndarray

    @classmethod
    def noise_free(cls, z, beta_true) -> "ContextTask":
        z = as_matrix(z, "context design")
        beta_true = as_column(beta_true, "beta")
        return cls(z=z, y_z=z @ beta_true, beta_true=beta_true)

    @property
    def m(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class ShiftSpec:
    """Linear map applied to context rows.

    ``scale(c)`` multiplies every entry by ``c`` (so the covariance scales by
    ``c**2``), ``rotate(angle)`` turns the first two coordinates, and
    ``anisotropic(factors)`` stretches each coordinate separately.
    """

    kind: str
    param: float | tuple[float, ...] | np.ndarray

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise ValueError(f"unknown shift kind {self.kind!r}; expected one of {SHIFT_KINDS}")

    @classmethod
    def scale(cls, c: float) -> "ShiftSpec":
        if not c > 0:
            raise ValueError(f"scale factor must be positive, got {c}")
        return cls("scale", float(c))

    @classmethod
    def rotate(cls, angle_or_matrix) -> "ShiftSpec":
        return cls("rotate", angle_or_matrix if np.ndim(angle_or_matrix) else float(angle_or_matrix))

    @classmethod
    def anisotropic(cls, factors) -> "ShiftSpec":
        return cls("anisotropic", tuple(float(f) for f in np.ravel(factors)))

    def matrix(self, k: int) -> np.ndarray:
        if self.kind == "scale":
            return self.param * np.eye(k)
        if self.kind == "rotate":
            if np.ndim(self.param):
                q = as_matrix(self.param, "rotation")
                if q.shape != (k, k) or np.max(np.abs(q.T @ q - np.eye(k))) > 1e-10:
                    raise ValueError(f"rotation must be a {k}x{k} orthogonal matrix")
                return q
            q = np.eye(k)
            if k >= 2:
                c, s = math.cos(self.param), math.sin(self.param)
                q[:2, :2] = [[c, -s], [s, c]]
            return q
        factors = np.atleast_1d(np.asarray(self.param, dtype=np.float64))
        if factors.size == 1:
            factors = np.concatenate([factors, np.ones(k - 1)])
        if factors.shape != (k,):
            raise ShapeError(f"anisotropic shift needs {k} factors, got {factors.size}")
        return np.diag(factors)


@dataclass(frozen=True)
class ShiftReport:
    sigma_x: np.ndarray
    sigma_z: np.ndarray
    distortion: np.ndarray
    predicted: np.ndarray
    ideal: np.ndarray
    relative_error: float

    def distortion_distance(self) -> float:
        """Frobenius distance of the distortion matrix from the identity."""
        return float(np.linalg.norm(self.distortion - np.eye(self.distortion.shape[0])))

    def to_dict(self) -> dict:
        return {
            "sigma_x": self.sigma_x.tolist(),
            "sigma_z": self.sigma_z.tolist(),
            "distortion": self.distortion.tolist(),
            "predicted": self.predicted[:, 0].tolist(),
            "ideal": self.ideal[:, 0].tolist(),
            "relative_error": self.relative_error,
        }


def context_predict(l, task: ContextTask) -> np.ndarray:
    """``(1/m) Z L L^T Z^T Y_z`` grouped as ``Z @ (slow @ fast)``."""
    l = as_matrix(l, "whitening")
    k = task.z.shape[1]
    if l.shape[0] != k:
        raise ShapeError(f"whitening is {l.shape} but context has {k} columns")
    slow = l @ l.T
    fast = task.z.T @ task.y_z / task.m
    return task.z @ (slow @ fast)


def _check_rank(cov: np.ndarray, name: str, rank_tol: float) -> None:
    try:
        whitening_factor(cov, rank_tol)
    except RankDeficient as exc:
        raise RankDeficient(f"{name}: {exc}", ratio=exc.ratio) from exc


def distortion_matrix(x, z, rank_tol: float = RANK_TOL) -> np.ndarray:
    """``Sigma_x^-1 Sigma_z`` by an SPD solve."""
    sigma_x = empirical_covariance(x)
    sigma_z = empirical_covariance(z)
    if sigma_x.shape != sigma_z.shape:
        raise ShapeError(f"training covariance {sigma_x.shape} and context covariance {sigma_z.shape} differ")
    _check_rank(sigma_x, "training design", rank_tol)
    _check_rank(sigma_z, "context design", rank_tol)
    return solve_spd(sigma_x, sigma_z)


def matched_samples(x, m: int, rng: Rng) -> np.ndarray:
    """Fresh Gaussian rows whose empirical covariance equals that of ``x``.

    The draws are whitened exactly and recoloured with ``Sigma_x^(1/2)``, so
    any shift applied afterwards has a known effect on the covariance.
    """
    x = as_matrix(x, "design matrix")
    k = x.shape[1]
    if m < k:
        raise ValueError(f"need m >= k = {k} context samples, got {m}")
    g = rng.normal((m, k))
    g_white = g @ whitening_factor(empirical_covariance(g)).whitening
    spec = whitening_factor(empirical_covariance(x))
    return g_white @ (np.sqrt(spec.eigenvalues)[:, None] * spec.eigenvectors.T)


def shift_experiment(x, y, shift_spec: ShiftSpec, seed: int, m: int | None = None,
                     beta_true=None, noise_var: float = 0.0, reuse_design: bool = False) -> ShiftReport:
    """Train on ``(x, y)``, predict on a shifted context, and measure the damage.

    Context rows are fresh samples with the training covariance (or ``x``
    itself when ``reuse_design``), mapped through the shift. ``beta_true``
    defaults to the OLS coefficients of the training set. ``noise_var`` adds
    Gaussian noise to the context responses; the distortion law assumes none.
    """
    x = as_matrix(x, "design matrix")
    n, k = x.shape
    m = n if m is None else m
    rng = Rng(seed)
    config = construct_ols_params(x, y)
    beta = ols_fit(x, y).beta if beta_true is None else as_column(beta_true, "beta")
    base = x if reuse_design else matched_samples(x, m, rng)
    z = base @ shift_spec.matrix(k)
    task = ContextTask.noise_free(z, beta)
    if noise_var > 0:
        task = ContextTask(z, task.y_z + rng.normal(task.y_z.shape, scale=math.sqrt(noise_var)), beta)
    predicted = context_predict(config.whitening, task)
    ideal = z @ beta
    return ShiftReport(
        sigma_x=empirical_covariance(x),
        sigma_z=empirical_covariance(z),
        distortion=distortion_matrix(x, z),
        predicted=predicted,
        ideal=ideal,
        relative_error=rel_frobenius(predicted, ideal),
    )
