"""Ordinary least squares realised as a single-layer linear transformer."""

from .attention import (
    EquivalenceReport,
    OlsConfiguration,
    TransformerParams,
    construct_ols_params,
    equivalence_report,
    forward,
    ols_params_from_whitening,
)
from .errors import ConvergenceError, NumericalError, RankDeficient, ShapeError, TrainingDiverged
from .matrix import (
    SpectralFactor,
    empirical_covariance,
    matmul,
    solve_spd,
    symmetric_eigendecompose,
    whitening_factor,
)
from .ols import OlsFit, hat_projection, ols_fit
from .rng import Rng
from .shift import ContextTask, ShiftReport, ShiftSpec, context_predict, distortion_matrix, shift_experiment
from .trainer import (
    AdamState,
    ScalarModel,
    TrainConfig,
    TrainingTrace,
    adam_step,
    generate_task,
    loss_and_grad,
    train,
    train_full,
)

__version__ = "0.1.0"
