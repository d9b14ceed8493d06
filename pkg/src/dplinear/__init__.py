"""Differentially private training of linear heads on fixed feature matrices.

Four trainers (clipped-gradient Adam/SGD, per-class Newton, sufficient-
statistics least squares, and covariance-preconditioned gradient descent)
share exact zCDP accounting, keyed replayable Gaussian noise, and a common
dataset/report toolkit. An HTTP service and a thin-client CLI wrap the
library.
"""

__version__ = "0.1.0"

from .accountant import (
    Ledger,
    MechanismCost,
    PrivacyBudget,
    calibrate_sigma,
    epsilon_from_rho,
    rho_from_epsilon_delta,
)
from .datasets import FeatureDataset, SyntheticSpec, generate_synthetic, load_csv, load_dataset
from .losses import LossSpec, batch_objective, loss, loss_curv, loss_grad
from .sanitize import ClipConfig, NoiseKey, clip_l2, gaussian_noise, sanitize_sum
from .solvers import (
    SolverConfig,
    TrainReport,
    WeightMatrix,
    evaluate_top1,
    train,
    train_dp_fc,
    train_dp_first_order,
    train_dp_ls,
    train_dp_newton,
)

__all__ = [
    "__version__",
    "Ledger",
    "MechanismCost",
    "PrivacyBudget",
    "calibrate_sigma",
    "epsilon_from_rho",
    "rho_from_epsilon_delta",
    "FeatureDataset",
    "SyntheticSpec",
    "generate_synthetic",
    "load_csv",
    "load_dataset",
    "LossSpec",
    "batch_objective",
    "loss",
    "loss_curv",
    "loss_grad",
    "ClipConfig",
    "NoiseKey",
    "clip_l2",
    "gaussian_noise",
    "sanitize_sum",
    "SolverConfig",
    "TrainReport",
    "WeightMatrix",
    "evaluate_top1",
    "train",
    "train_dp_fc",
    "train_dp_first_order",
    "train_dp_ls",
    "train_dp_newton",
]
