"""Per-class convex losses with certified first/second derivative bounds.

Every solver works on scalar logits z = <theta_j, x_i> against labels
y in [0, 1]. All functions are vectorized and pure.

Conventions: the batch objective is normalized by the number of examples n,
while the sufficient statistics consumed by the least-squares solver are raw
(unnormalized) sums; each solver documents which form it uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LOGISTIC = "logistic"
SQUARED = "squared"
WEIGHTED_QUADRATIC = "weighted_quadratic"

LOSS_KINDS = (LOGISTIC, SQUARED, WEIGHTED_QUADRATIC)


@dataclass(frozen=True)
class LossSpec:
    """Loss selection plus its certified derivative bounds.

    curvature_bound is the certified upper bound on |l''|: 1/4 for logistic,
    1 for squared. The first-derivative bound is 1 for logistic everywhere;
    for squared loss it is enforced by clamping where a solver requires it.
    """

    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.kind == WEIGHTED_QUADRATIC:
            if self.alpha is None or self.alpha < 0 or not math.isfinite(self.alpha):
                raise ValueError("weighted_quadratic requires finite alpha >= 0")
        elif self.alpha is not None:
            raise ValueError(f"alpha is only meaningful for weighted_quadratic, got kind={self.kind!r}")

    @property
    def derivative_bound(self) -> float:
        return 1.0

    @property
    def curvature_bound(self) -> float:
        if self.kind == LOGISTIC:
            return 0.25
        if self.kind == SQUARED:
            return 1.0
        return 1.0 + float(self.alpha)


def _check_labels(spec: LossSpec, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0.0) or np.any(y > 1.0):
        raise ValueError("labels must lie in [0, 1]")
    if spec.kind == WEIGHTED_QUADRATIC and not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("weighted_quadratic requires binary labels in {0, 1}")
    return y


def loss(spec: LossSpec, z, y):
    """Pointwise loss value.

    logistic uses the overflow-safe form max(z,0) - z*y + log1p(exp(-|z|));
    squared is (z-y)^2 / 2; weighted_quadratic is (y*(z-y)^2 + alpha*z^2) / 2.
    """
    z = np.asarray(z, dtype=np.float64)
    y = _check_labels(spec, y)
    if spec.kind == LOGISTIC:
        return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    if spec.kind == SQUARED:
        return 0.5 * (z - y) ** 2
    return 0.5 * (y * (z - y) ** 2 + spec.alpha * z ** 2)


def loss_grad(spec: LossSpec, z, y):
    """First derivative with respect to the logit."""
    z = np.asarray(z, dtype=np.float64)
    y = _check_labels(spec, y)
    if spec.kind == LOGISTIC:
        return expit(z) - y
    if spec.kind == SQUARED:
        return z - y
    return y * (z - y) + spec.alpha * z


def loss_curv(spec: LossSpec, z, y):
    """Second derivative with respect to the logit.

    The logistic curvature is computed as sigma(z) * sigma(-z), which stays
    accurate in both tails.
    """
    z = np.asarray(z, dtype=np.float64)
    y = _check_labels(spec, y)
    if spec.kind == LOGISTIC:
        return expit(z) * expit(-z)
    if spec.kind == SQUARED:
        return np.ones_like(z)
    return y + spec.alpha * np.ones_like(z)


def batch_objective(spec: LossSpec, theta: np.ndarray, dataset, bias: np.ndarray | None = None) -> float:
    """Mean loss over the dataset: (1/n) sum_i sum_j l(<theta_j, x_i>, y_ij).

    Args:
        theta: (m, d) weight matrix.
        dataset: FeatureDataset with (n, d) features and n x m labels.
        bias: Optional per-class offsets added to the logits.
    """
    theta = np.asarray(theta, dtype=np.float64)
    x = dataset.features
    if theta.ndim != 2 or theta.shape != (dataset.num_classes, x.shape[1]):
        raise ValueError(
            f"theta shape {theta.shape} does not match (m={dataset.num_classes}, d={x.shape[1]})"
        )
    z = x @ theta.T
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (dataset.num_classes,):
            raise ValueError(f"bias shape {bias.shape} does not match m={dataset.num_classes}")
        z = z + bias[None, :]
    y = dataset.label_matrix()
    return float(np.sum(loss(spec, z, y)) / dataset.num_examples)
