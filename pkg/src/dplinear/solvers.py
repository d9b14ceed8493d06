"""The four private trainers plus top-1 evaluation.

Each trainer consumes a FeatureDataset, a SolverConfig (clip norms, noise
multiplier, hyperparameters, seed) and a Ledger, and returns the learned
WeightMatrix plus a TrainReport. All noise goes through keyed sanitize_sum
calls so a run's zCDP total is auditable:

    first_order        T releases           -> T / (2 sigma^2)
    newton             2*m*T releases       -> T / sigma^2
    least_squares      1 + 2*m releases     -> 3 / (2 sigma^2)
    feature_covariance 1 + T releases       -> (T+1) / (2 sigma^2)

Setting ``clip=None`` turns every sanitization step off (clipping included)
and records zero-cost ledger entries; it is only legal with sigma == 0.
A finite clip with sigma == 0 clips but adds no noise.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .accountant import (
    FEATURE_COVARIANCE,
    FIRST_ORDER,
    LEAST_SQUARES,
    METHODS,
    NEWTON,
    Ledger,
    epsilon_from_rho,
)
from .datasets import FeatureDataset
from .linalg import LuSolver, SingularMatrixError, gram_matrix, solve_linear, symmetrize
from .losses import LOGISTIC, SQUARED, WEIGHTED_QUADRATIC, LossSpec, loss, loss_curv, loss_grad
from .sanitize import ClipConfig, NoiseKey, clip_rows, sanitize_sum


class SolverError(RuntimeError):
    """Numerical failure inside a training run."""


@dataclass(frozen=True)
class SolverConfig:
    """Everything one training run needs besides the data.

    ``ridge`` is the lambda of the method: Hessian damping for newton
    (added to the summed Hessian before normalization, i.e. an effective
    ridge of lambda/n), system regularizer for least_squares, covariance
    damping for feature_covariance, and decoupled weight decay on the
    sanitized mean gradient for first_order.

    ``fit_bias=None`` resolves to True for logistic first_order /
    feature_covariance runs (bias initialized to -10) and False elsewhere.
    For newton / least_squares / feature_covariance the bias is an appended
    constant feature and counts toward feature clipping.
    """

    method: str
    iterations: int = 1
    learning_rate: float = 1.0
    ridge: float = 0.0
    alpha: float = 0.0
    clip: ClipConfig | None = None
    sigma: float = 0.0
    seed: int = 0
    loss: str = LOGISTIC
    fit_bias: bool | None = None
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    average_iterates: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method != LEAST_SQUARES:
            if self.iterations < 1:
                raise ValueError(f"iterations must be >= 1, got {self.iterations}")
            if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
                raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.ridge < 0 or self.alpha < 0:
            raise ValueError("ridge and alpha must be nonnegative")
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.clip is None and self.sigma > 0:
            raise ValueError("sigma > 0 requires clip norms (clip=None disables sanitization)")
        if self.clip is not None:
            needs_feature = self.method in (NEWTON, LEAST_SQUARES, FEATURE_COVARIANCE)
            needs_gradient = self.method in (FIRST_ORDER, FEATURE_COVARIANCE)
            if needs_feature and self.clip.feature_clip is None:
                raise ValueError(f"{self.method} requires clip.feature_clip")
            if needs_gradient and self.clip.gradient_clip is None:
                raise ValueError(f"{self.method} requires clip.gradient_clip")
        if self.method in (FIRST_ORDER, NEWTON, FEATURE_COVARIANCE):
            if self.loss not in (LOGISTIC, SQUARED):
                raise ValueError(
                    f"{self.method} supports logistic or squared loss, got {self.loss!r}"
                )
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    def loss_spec(self) -> LossSpec:
        if self.method == LEAST_SQUARES:
            return LossSpec(WEIGHTED_QUADRATIC, alpha=self.alpha)
        return LossSpec(self.loss)

    def resolve_fit_bias(self) -> bool:
        if self.fit_bias is not None:
            return self.fit_bias
        return self.method in (FIRST_ORDER, FEATURE_COVARIANCE) and self.loss == LOGISTIC


@dataclass
class WeightMatrix:
    """Learned parameters: (m, d) weights and optional per-class bias."""

    theta: np.ndarray
    bias: np.ndarray | None = None

    def scores(self, features: np.ndarray) -> np.ndarray:
        z = np.asarray(features, dtype=np.float64) @ self.theta.T
        if self.bias is not None:
            z = z + self.bias[None, :]
        return z


@dataclass
class TrainReport:
    """Run record: per-iteration objectives, weights, privacy spent, provenance."""

    method: str
    objectives: list[float]
    weights: WeightMatrix
    rho_spent: float
    seed: int
    wall_time_s: float
    config: dict
    num_examples: int
    num_features: int
    num_classes: int
    delta: float | None = None
    epsilon_spent: float | None = None
    sigma: float = 0.0
    train_accuracy: float | None = None
    test_accuracy: float | None = None
    rng_scheme: str = "philox-keyed-inverse-cdf"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objectives": [float(v) for v in self.objectives],
            "theta": self.weights.theta.tolist(),
            "bias": None if self.weights.bias is None else self.weights.bias.tolist(),
            "rho_spent": self.rho_spent,
            "delta": self.delta,
            "epsilon_spent": self.epsilon_spent,
            "sigma": self.sigma,
            "seed": self.seed,
            "rng_scheme": self.rng_scheme,
            "wall_time_s": self.wall_time_s,
            "config": self.config,
            "num_examples": self.num_examples,
            "num_features": self.num_features,
            "num_classes": self.num_classes,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
        }


# ---------------------------------------------------------------------------
# Released statistics (pure, auditable; solvers call these, tests audit them)
# ---------------------------------------------------------------------------

def clipped_gradient_sum(
    features: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    spec: LossSpec,
    clip_norm: float | None,
) -> np.ndarray:
    """Sum over examples of the per-example (m, d) gradient, jointly clipped.

    The per-example gradient of sum_j l(<w_j, x>, y_j) is the rank-1 matrix
    dl x^T, so its Frobenius norm is ||dl|| * ||x|| and clipping reduces to a
    per-row rescale; the full n x m x d tensor is never materialized.
    """
    dl = loss_grad(spec, features @ weights.T, labels)
    if clip_norm is not None:
        norms = np.linalg.norm(dl, axis=1) * np.linalg.norm(features, axis=1)
        scale = np.ones_like(norms)
        over = norms > clip_norm
        scale[over] = clip_norm / norms[over]
        dl = dl * scale[:, None]
    return dl.T @ features


def newton_class_statistics(
    features: np.ndarray,
    labels_col: np.ndarray,
    weights_col: np.ndarray,
    spec: LossSpec,
    ridge: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Summed per-class gradient and Hessian on (pre-clipped) features.

    Returns (g, H) with g = sum_i l'(z_i, y_i) x_i and
    H = sum_i l''(z_i, y_i) x_i x_i^T + ridge * I. The squared-loss first
    derivative is clamped to [-1, 1] so the certified sensitivity bound
    holds; the logistic derivative is already within it.
    """
    z = features @ weights_col
    lp = loss_grad(spec, z, labels_col)
    if spec.kind == SQUARED:
        lp = np.clip(lp, -1.0, 1.0)
    lpp = loss_curv(spec, z, labels_col)
    g = features.T @ lp
    h = gram_matrix(features, lpp)
    h[np.diag_indices_from(h)] += ridge
    return g, h


def ls_statistics(
    features: np.ndarray, label_matrix: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Least-squares sufficient statistics on (pre-clipped) features.

    Returns (G, A, b): the full gram G = sum_i x_i x_i^T, per-class positive
    grams A[j] = sum_{i: y_ij=1} x_i x_i^T, and per-class positive sums
    b[j] = sum_{i: y_ij=1} x_i. All raw (unnormalized) sums.
    """
    n, d = features.shape
    m = label_matrix.shape[1]
    g = features.T @ features
    a = np.zeros((m, d, d), dtype=np.float64)
    b = np.zeros((m, d), dtype=np.float64)
    for j in range(m):
        mask = label_matrix[:, j] > 0
        if np.any(mask):
            xj = features[mask]
            a[j] = xj.T @ xj
            b[j] = xj.sum(axis=0)
    return g, a, b


# ---------------------------------------------------------------------------
# Internal helpers
# ---------------------------------------------------------------------------

def _released_mean(raw_sum, sensitivity, multiplier, n, key, ledger, label,
                   rho_weight=1.0, active=True):
    """sanitize_sum when sanitizing, raw/n with a zero-cost entry otherwise."""
    if active:
        return sanitize_sum(raw_sum, sensitivity, multiplier, n, key, ledger,
                            label, rho_weight)
    ledger.charge(f"{label} (non-private)", 0.0)
    return np.asarray(raw_sum, dtype=np.float64) / n


def _augmented_features(dataset: FeatureDataset, fit_bias: bool) -> np.ndarray:
    if not fit_bias:
        return dataset.features
    ones = np.ones((dataset.num_examples, 1), dtype=np.float64)
    return np.hstack([dataset.features, ones])


def _init_weights(m: int, cols: int, fit_bias: bool, loss_kind: str) -> np.ndarray:
    w = np.zeros((m, cols), dtype=np.float64)
    if fit_bias and loss_kind == LOGISTIC:
        w[:, -1] = -10.0
    return w


def _objective(spec: LossSpec, x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(loss(spec, x @ w.T, y)) / x.shape[0])


def _split_weights(w: np.ndarray, d: int, fit_bias: bool) -> WeightMatrix:
    if fit_bias:
        return WeightMatrix(theta=w[:, :d].copy(), bias=w[:, d].copy())
    return WeightMatrix(theta=w.copy(), bias=None)


def _make_report(method, objectives, weights, ledger, config, dataset, t0) -> TrainReport:
    return TrainReport(
        method=method,
        objectives=objectives,
        weights=weights,
        rho_spent=ledger.total_rho,
        seed=config.seed,
        wall_time_s=time.perf_counter() - t0,
        config=asdict(config),
        num_examples=dataset.num_examples,
        num_features=dataset.num_features,
        num_classes=dataset.num_classes,
        sigma=config.sigma,
    )


# ---------------------------------------------------------------------------
# Trainers
# ---------------------------------------------------------------------------

def train_dp_first_order(
    dataset: FeatureDataset, config: SolverConfig, ledger: Ledger
) -> tuple[WeightMatrix, TrainReport]:
    """Clipped-gradient first-order training (Adam by default, plain SGD option).

    Per iteration: per-example full (m, d) gradients are clipped jointly
    across classes to gradient_clip, summed, noised with std sigma * C_g,
    averaged, and fed to the optimizer. Weight decay (``ridge``) is applied
    to the sanitized mean gradient and never touches the bias column.
    Returns the final iterate; ``average_iterates`` switches to the running
    mean of the iterates.
    """
    t0 = time.perf_counter()
    spec = config.loss_spec()
    fit_bias = config.resolve_fit_bias()
    x = _augmented_features(dataset, fit_bias)
    y = dataset.label_matrix()
    n, cols = x.shape
    m = dataset.num_classes
    c_g = config.clip.gradient_clip if config.clip is not None else None

    w = _init_weights(m, cols, fit_bias, spec.kind)
    decay_mask = np.ones(cols)
    if fit_bias:
        decay_mask[-1] = 0.0
    adam_m = np.zeros_like(w)
    adam_v = np.zeros_like(w)
    w_sum = np.zeros_like(w)
    objectives: list[float] = []

    for t in range(1, config.iterations + 1):
        grad_sum = clipped_gradient_sum(x, y, w, spec, c_g)
        g = _released_mean(
            grad_sum, c_g, config.sigma, n,
            NoiseKey(config.seed, t, 0, "gradient"), ledger, f"gradient[t={t}]",
            active=config.clip is not None,
        )
        if not np.all(np.isfinite(g)):
            raise SolverError(f"non-finite gradient at iteration {t}")
        if config.ridge:
            g = g + config.ridge * (w * decay_mask)
        if config.optimizer == "adam":
            adam_m = config.adam_beta1 * adam_m + (1 - config.adam_beta1) * g
            adam_v = config.adam_beta2 * adam_v + (1 - config.adam_beta2) * g * g
            m_hat = adam_m / (1 - config.adam_beta1 ** t)
            v_hat = adam_v / (1 - config.adam_beta2 ** t)
            w = w - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        else:
            w = w - config.learning_rate * g
        w_sum += w
        objectives.append(_objective(spec, x, y, w))

    final = w_sum / config.iterations if config.average_iterates else w
    weights = _split_weights(final, dataset.num_features, fit_bias)
    return weights, _make_report(FIRST_ORDER, objectives, weights, ledger, config, dataset, t0)


def train_dp_newton(
    dataset: FeatureDataset, config: SolverConfig, ledger: Ledger
) -> tuple[WeightMatrix, TrainReport]:
    """Per-class Newton steps on noised gradient/Hessian summaries.

    Features are clipped once to feature_clip; each iteration releases, per
    class, the summed gradient (noise std sigma*C*sqrt(m)/n on the mean) and
    the summed Hessian (std sigma*beta_H*C^2*sqrt(m)/n), so each release
    costs 1/(2 m sigma^2) and the run totals T/sigma^2. The noised Hessian is
    symmetrized before the pivoted solve.
    """
    t0 = time.perf_counter()
    spec = config.loss_spec()
    fit_bias = config.resolve_fit_bias()
    x = _augmented_features(dataset, fit_bias)
    c = config.clip.feature_clip if config.clip is not None else None
    if c is not None:
        x = clip_rows(x, c)
    y = dataset.label_matrix()
    n, cols = x.shape
    m = dataset.num_classes
    beta_h = spec.curvature_bound
    multiplier = config.sigma * math.sqrt(m)

    w = _init_weights(m, cols, fit_bias, spec.kind)
    objectives: list[float] = []

    for t in range(1, config.iterations + 1):
        for j in range(m):
            g_raw, h_raw = newton_class_statistics(x, y[:, j], w[j], spec, config.ridge)
            g_mean = _released_mean(
                g_raw, c, multiplier, n,
                NoiseKey(config.seed, t, j, "gradient"), ledger,
                f"gradient[t={t},j={j}]", active=config.clip is not None,
            )
            h_mean = _released_mean(
                h_raw, None if c is None else beta_h * c * c, multiplier, n,
                NoiseKey(config.seed, t, j, "hessian"), ledger,
                f"hessian[t={t},j={j}]", active=config.clip is not None,
            )
            try:
                step = solve_linear(symmetrize(h_mean), g_mean)
            except SingularMatrixError as exc:
                raise SolverError(
                    f"newton system singular at iteration {t}, class {j}: {exc}; "
                    "consider a larger ridge"
                ) from exc
            w[j] = w[j] - config.learning_rate * step
        objectives.append(_objective(spec, x, y, w))

    weights = _split_weights(w, dataset.num_features, fit_bias)
    return weights, _make_report(NEWTON, objectives, weights, ledger, config, dataset, t0)


def train_dp_ls(
    dataset: FeatureDataset, config: SolverConfig, ledger: Ledger
) -> tuple[WeightMatrix, TrainReport]:
    """Single-shot sufficient-statistics least squares.

    Releases the full gram once (noise std sigma*C^2) and, per class, the
    positive-example gram (std sigma*sqrt(k)*C^2) and sum (std
    sigma*sqrt(k)*C), then solves [A_j + alpha*G + lambda*I] theta_j = b_j.
    The three joint releases cost 1/(2 sigma^2) each — 3/(2 sigma^2) total
    regardless of the class count — so each per-class entry carries a 1/m
    share. A class with no positives yields pure-noise statistics and a
    ridge-damped noise solution, which is permitted.
    """
    t0 = time.perf_counter()
    spec = config.loss_spec()
    fit_bias = config.resolve_fit_bias()
    x = _augmented_features(dataset, fit_bias)
    c = config.clip.feature_clip if config.clip is not None else None
    if c is not None:
        x = clip_rows(x, c)
    y = dataset.label_matrix()
    m = dataset.num_classes
    cols = x.shape[1]
    sqrt_k = math.sqrt(max(dataset.max_positives, 1))
    active = config.clip is not None

    g_sum, a_sum, b_sum = ls_statistics(x, y)
    g_rel = _released_mean(
        g_sum, None if c is None else c * c, config.sigma, 1,
        NoiseKey(config.seed, 0, 0, "gram"), ledger, "gram", active=active,
    )

    theta = np.zeros((m, cols), dtype=np.float64)
    for j in range(m):
        a_rel = _released_mean(
            a_sum[j], None if c is None else sqrt_k * c * c, config.sigma, 1,
            NoiseKey(config.seed, 0, j, "class_gram"), ledger,
            f"class_gram[j={j}]", rho_weight=1.0 / m, active=active,
        )
        b_rel = _released_mean(
            b_sum[j], None if c is None else sqrt_k * c, config.sigma, 1,
            NoiseKey(config.seed, 0, j, "class_rhs"), ledger,
            f"class_rhs[j={j}]", rho_weight=1.0 / m, active=active,
        )
        system = symmetrize(a_rel + config.alpha * g_rel)
        system[np.diag_indices_from(system)] += config.ridge
        try:
            theta[j] = solve_linear(system, b_rel)
        except SingularMatrixError as exc:
            raise SolverError(
                f"least-squares system singular for class {j}: {exc}; "
                "consider a larger ridge"
            ) from exc

    weights = _split_weights(theta, dataset.num_features, fit_bias)
    objectives = [_objective(spec, x, y, theta)]
    return weights, _make_report(LEAST_SQUARES, objectives, weights, ledger, config, dataset, t0)


def train_dp_fc(
    dataset: FeatureDataset, config: SolverConfig, ledger: Ledger
) -> tuple[WeightMatrix, TrainReport]:
    """Gradient descent preconditioned by the sanitized feature covariance.

    The covariance of feature_clip-clipped features is released once (noise
    std sigma*C_G^2/n on the mean), damped with lambda*I, and factored once;
    every iteration then releases one jointly-clipped gradient mean (std
    sigma*C_g/n) and updates theta <- theta - eta * g * G^{-1}, i.e. the
    preconditioner acts on the feature dimension. Costs (T+1)/(2 sigma^2).
    Gradients are computed on the raw (unclipped) features; only the
    covariance half sees clipped features.
    """
    t0 = time.perf_counter()
    spec = config.loss_spec()
    fit_bias = config.resolve_fit_bias()
    x = _augmented_features(dataset, fit_bias)
    y = dataset.label_matrix()
    n, cols = x.shape
    m = dataset.num_classes
    c_big = config.clip.feature_clip if config.clip is not None else None
    c_g = config.clip.gradient_clip if config.clip is not None else None
    active = config.clip is not None

    x_cov = clip_rows(x, c_big) if c_big is not None else x
    g_rel = _released_mean(
        gram_matrix(x_cov), None if c_big is None else c_big * c_big, config.sigma, n,
        NoiseKey(config.seed, 0, 0, "gram"), ledger, "gram", active=active,
    )
    g_rel[np.diag_indices_from(g_rel)] += config.ridge
    try:
        precond = LuSolver(symmetrize(g_rel))
    except SingularMatrixError as exc:
        raise SolverError(
            f"covariance preconditioner singular: {exc}; use a larger ridge"
        ) from exc

    w = _init_weights(m, cols, fit_bias, spec.kind)
    objectives: list[float] = []

    for t in range(1, config.iterations + 1):
        grad_sum = clipped_gradient_sum(x, y, w, spec, c_g)
        g = _released_mean(
            grad_sum, c_g, config.sigma, n,
            NoiseKey(config.seed, t, 0, "gradient"), ledger, f"gradient[t={t}]",
            active=active,
        )
        if not np.all(np.isfinite(g)):
            raise SolverError(f"non-finite gradient at iteration {t}")
        w = w - config.learning_rate * precond.solve(g.T).T
        objectives.append(_objective(spec, x, y, w))

    weights = _split_weights(w, dataset.num_features, fit_bias)
    return weights, _make_report(FEATURE_COVARIANCE, objectives, weights, ledger, config, dataset, t0)


_TRAINERS = {
    FIRST_ORDER: train_dp_first_order,
    NEWTON: train_dp_newton,
    LEAST_SQUARES: train_dp_ls,
    FEATURE_COVARIANCE: train_dp_fc,
}


def train(
    dataset: FeatureDataset,
    config: SolverConfig,
    ledger: Ledger | None = None,
    delta: float | None = None,
) -> tuple[WeightMatrix, TrainReport]:
    """Run the configured trainer; fills epsilon_spent when delta is known."""
    if ledger is None:
        ledger = Ledger()
    weights, report = _TRAINERS[config.method](dataset, config, ledger)
    if delta is not None:
        report.delta = delta
        report.epsilon_spent = epsilon_from_rho(ledger.total_rho, delta)
    return weights, report


def evaluate_top1(weights: WeightMatrix, dataset: FeatureDataset) -> float:
    """Fraction of single-label examples whose argmax score hits the label.

    Ties break toward the smallest class index. Raises on multi-label rows.
    """
    labels = dataset.single_labels()
    if weights.theta.shape != (dataset.num_classes, dataset.num_features):
        raise ValueError(
            f"weights shape {weights.theta.shape} does not match dataset "
            f"(m={dataset.num_classes}, d={dataset.num_features})"
        )
    scores = weights.scores(dataset.features)
    preds = np.argmax(scores, axis=1)
    return float(np.mean(preds == labels))
