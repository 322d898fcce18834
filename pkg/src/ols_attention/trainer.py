"""Gradient training of the scalar-parameter least-squares transformer.

With ``W_Q = W_K = W_V = L`` and ``W_P = (1/n) L X^T Y`` on a one-column
design, the forward pass collapses to ``L^4 s c / n^2 * X`` where
``s = X^T X`` and ``c = X^T Y``. Training ``L`` by Adam should drive it to
``L* = (s/n)^(-1/2)``, at which point the model output is the OLS fit.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .attention import TransformerParams, forward
from .errors import TrainingDiverged
from .matrix import as_column, as_matrix
from .ols import ols_fit
from .rng import Rng

DIVERGENCE_LIMIT = 1e6
FLAT_POINT = 1e-6
FLAT_PATIENCE = 100


def generate_task(n: int, slope: float = 2.0, noise_var: float = 1e-4, seed: int = 0,
                  x_dist: str = "uniform") -> tuple[np.ndarray, np.ndarray]:
    """``y = slope * x + eps`` with ``eps ~ N(0, noise_var)``.

    ``x`` is uniform on [-1, 1] by default or standard Gaussian with
    ``x_dist="gaussian"``.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 samples, got {n}")
    if noise_var < 0:
        raise ValueError(f"noise variance must be non-negative, got {noise_var}")
    rng = Rng(seed)
    if x_dist == "uniform":
        x = rng.uniform(-1.0, 1.0, (n, 1))
    elif x_dist == "gaussian":
        x = rng.normal((n, 1))
    else:
        raise ValueError(f"unknown x distribution {x_dist!r}")
    noise = rng.normal((n, 1), scale=math.sqrt(noise_var))
    return x, slope * x + noise


@dataclass(frozen=True)
class ScalarModel:
    l: float
    x: np.ndarray
    y: np.ndarray
    s: float
    c: float

    @classmethod
    def from_data(cls, x, y, l: float) -> "ScalarModel":
        x = as_matrix(x, "design matrix")
        y = as_column(y, "response")
        if x.shape[1] != 1 or y.shape[0] != x.shape[0]:
            raise ValueError(f"scalar model needs an n x 1 design and matching response, got {x.shape}, {y.shape}")
        s = float(x[:, 0] @ x[:, 0])
        if not s > 0.0:
            raise ValueError("design is identically zero")
        return cls(l=float(l), x=x, y=y, s=s, c=float(x[:, 0] @ y[:, 0]))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def l_star(self) -> float:
        return (self.s / self.n) ** -0.5

    def with_l(self, l: float) -> "ScalarModel":
        return dataclasses.replace(self, l=float(l))

    def gain(self, l: float | None = None) -> float:
        """Effective slope ``L^4 s c / n^2``."""
        l = self.l if l is None else l
        l2 = l * l
        return l2 * l2 * self.s * self.c / self.n**2

    def predict(self) -> np.ndarray:
        return self.gain() * self.x


def loss_and_grad(model: ScalarModel) -> tuple[float, float]:
    """Training MSE and its exact derivative with respect to ``L``."""
    n = model.n
    resid = model.predict() - model.y
    dpred = (4.0 * model.l**3 * model.s * model.c / n**2) * model.x
    mse = float(resid[:, 0] @ resid[:, 0]) / n
    grad = 2.0 / n * float(resid[:, 0] @ dpred[:, 0])
    return mse, grad


@dataclass(frozen=True)
class AdamState:
    step: int = 0
    m: float | np.ndarray = 0.0
    v: float | np.ndarray = 0.0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(state: AdamState, grad, param):
    """One bias-corrected Adam update; works on floats and numpy arrays alike."""
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    param = param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return dataclasses.replace(state, step=t, m=m, v=v), param


@dataclass(frozen=True)
class TrainConfig:
    n: int = 500
    slope: float = 2.0
    noise_var: float = 1e-4
    l0: float = 0.5
    epochs: int = 5000
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    x_dist: str = "uniform"
    record_every: int = 1


class TrainingRecord(NamedTuple):
    epoch: int
    mse: float
    rel_dist_to_ols: float
    l_value: float


@dataclass
class TrainingTrace:
    records: list[TrainingRecord]
    l_star: float
    seed: int
    config: TrainConfig = field(default_factory=TrainConfig)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def final(self) -> TrainingRecord:
        return self.records[-1]

    def l_error(self) -> np.ndarray:
        """``|L - L*| / L*`` per recorded epoch."""
        return np.abs(self.column("l_value") - self.l_star) / self.l_star

    def first_crossing(self, values: np.ndarray, threshold: float) -> int | None:
        """First recorded epoch whose value is below ``threshold``."""
        hits = np.flatnonzero(values < threshold)
        return self.records[hits[0]].epoch if hits.size else None


def train(config: TrainConfig) -> TrainingTrace:
    """Full-batch Adam on ``L`` from ``config.l0``.

    Every record is evaluated at the post-update parameter, so epoch 1 already
    reflects one optimizer step.

    Raises:
        TrainingDiverged: if ``|L|`` exceeds 1e6 or the loss stops being finite.
    """
    if config.epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {config.epochs}")
    if config.record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {config.record_every}")
    x, y = generate_task(config.n, config.slope, config.noise_var, config.seed, config.x_dist)
    model = ScalarModel.from_data(x, y, config.l0)
    ols_fitted = ols_fit(x, y).fitted
    ols_norm = float(np.linalg.norm(ols_fitted))
    state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    records = []
    flat_epochs = 0
    _, grad = loss_and_grad(model)
    for epoch in range(1, config.epochs + 1):
        state, l = adam_step(state, grad, model.l)
        l = float(l)
        model = model.with_l(l)
        mse, grad = loss_and_grad(model)
        if not (math.isfinite(mse) and abs(l) <= DIVERGENCE_LIMIT):
            raise TrainingDiverged(f"training diverged at epoch {epoch}: L = {l!r}, mse = {mse!r}")
        flat_epochs = flat_epochs + 1 if abs(l) < FLAT_POINT else 0
        if flat_epochs == FLAT_PATIENCE:
            warnings.warn(f"L has stayed within {FLAT_POINT} of the flat point 0 for {FLAT_PATIENCE} epochs",
                          RuntimeWarning, stacklevel=2)
        if epoch % config.record_every == 0 or epoch == config.epochs:
            rel = float(np.linalg.norm(model.predict() - ols_fitted)) / ols_norm
            records.append(TrainingRecord(epoch, mse, rel, l))
    return TrainingTrace(records=records, l_star=model.l_star, seed=config.seed, config=config)


def _flatten(params: TransformerParams) -> np.ndarray:
    return np.concatenate([params.w_q.ravel(), params.w_k.ravel(), params.w_v.ravel(),
                           params.w_ffn.ravel(), params.w_p.ravel()])


def _unflatten(theta: np.ndarray, k: int) -> TransformerParams:
    sq = k * k
    mats = [theta[i * sq:(i + 1) * sq].reshape(k, k) for i in range(4)]
    return TransformerParams(*mats, theta[4 * sq:].reshape(k, 1))


def train_full(x, y, params0: TransformerParams, epochs: int = 1000, lr: float = 0.01,
               h: float = 1e-6) -> tuple[TransformerParams, list[float]]:
    """Adam over all five weight matrices with central finite-difference gradients.

    Unconstrained counterpart of :func:`train`; limited to ``k <= 4`` because
    each epoch costs ``2 (4k^2 + k)`` forward passes.
    """
    x = as_matrix(x, "design matrix")
    y = as_column(y, "response")
    k = x.shape[1]
    if k > 4:
        raise ValueError(f"finite-difference training supports k <= 4, got k = {k}")
    n = x.shape[0]

    def loss(theta: np.ndarray) -> float:
        r = forward(_unflatten(theta, k), x) - y
        return float(r[:, 0] @ r[:, 0]) / n

    theta = _flatten(params0)
    state = AdamState(m=np.zeros_like(theta), v=np.zeros_like(theta), lr=lr)
    losses = []
    for epoch in range(epochs):
        grad = np.empty_like(theta)
        for i in range(theta.size):
            bump = np.zeros_like(theta)
            bump[i] = h
            grad[i] = (loss(theta + bump) - loss(theta - bump)) / (2.0 * h)
        state, theta = adam_step(state, grad, theta)
        value = loss(theta)
        if not math.isfinite(value) or np.max(np.abs(theta)) > DIVERGENCE_LIMIT:
            raise TrainingDiverged(f"full training diverged at epoch {epoch + 1}")
        losses.append(value)
    return _unflatten(theta, k), losses
