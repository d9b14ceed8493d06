"""Privacy primitives: L2 clipping and keyed, replayable Gaussian noise.

Randomness contract: every noise draw is addressed by a NoiseKey — the tuple
(seed, iteration, class, statistic). Each key opens an independent
counter-based Philox stream, so draws are identical across runs and
independent of the order in which per-class or per-iteration work executes.
Samples are produced by inverse-CDF transform of 53-bit midpoint uniforms,
which is bit-reproducible on identical floating-point hardware.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .accountant import Ledger

STATISTICS = ("gradient", "hessian", "gram", "class_gram", "class_rhs")
_STATISTIC_CODE = {name: i + 1 for i, name in enumerate(STATISTICS)}

# Midpoints (i + 0.5) / 2^53 are uniform on (0, 1) exclusive, so ndtri never
# sees 0 or 1.
_UNIFORM_SCALE = 0.5 ** 53


@dataclass(frozen=True)
class ClipConfig:
    """Clipping norms; methods use the subset they need.

    feature_clip bounds per-example feature norms (newton / least_squares /
    the covariance half of feature_covariance); gradient_clip bounds
    per-example gradient norms (first_order and the gradient half of
    feature_covariance).
    """

    feature_clip: float | None = None
    gradient_clip: float | None = None

    def __post_init__(self):
        for name, value in (("feature_clip", self.feature_clip),
                            ("gradient_clip", self.gradient_clip)):
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value}")


@dataclass(frozen=True)
class NoiseKey:
    """Address of one noise draw; reuse within a run is a contract violation."""

    seed: int
    iteration: int = 0
    class_index: int = 0
    statistic: str = "gradient"

    def __post_init__(self):
        if self.statistic not in _STATISTIC_CODE:
            raise ValueError(
                f"unknown statistic {self.statistic!r}; expected one of {STATISTICS}"
            )
        if self.iteration < 0 or self.class_index < 0:
            raise ValueError("iteration and class_index must be nonnegative")


def _stream(key: NoiseKey) -> np.random.Generator:
    entropy = (
        int(key.seed) & 0xFFFFFFFFFFFFFFFF,
        int(key.iteration),
        int(key.class_index),
        _STATISTIC_CODE[key.statistic],
    )
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def clip_l2(v: np.ndarray, limit: float) -> np.ndarray:
    """Rescale ``v`` to L2 (Frobenius) norm at most ``limit``.

    Returns ``v * min(1, limit / ||v||)``: unchanged below the threshold,
    direction preserved above it.
    """
    if not (limit > 0):
        raise ValueError(f"clip norm must be positive, got {limit}")
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot clip non-finite input")
    norm = float(np.sqrt(np.sum(v * v)))
    if norm <= limit:
        return v.copy()
    return v * (limit / norm)


def clip_rows(x: np.ndarray, limit: float) -> np.ndarray:
    """Clip each row of ``x`` to L2 norm at most ``limit`` (vectorized)."""
    if not (limit > 0):
        raise ValueError(f"clip norm must be positive, got {limit}")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot clip non-finite input")
    norms = np.linalg.norm(x, axis=1)
    scale = np.ones_like(norms)
    over = norms > limit
    scale[over] = limit / norms[over]
    return x * scale[:, None]


def gaussian_noise(shape, std: float, key: NoiseKey) -> np.ndarray:
    """i.i.d. N(0, std^2) tensor, identical for identical keys; zeros at std=0."""
    if std < 0:
        raise ValueError(f"noise std must be nonnegative, got {std}")
    if std == 0:
        return np.zeros(shape, dtype=np.float64)
    gen = _stream(key)
    u = (gen.integers(0, 2 ** 53, size=shape).astype(np.float64) + 0.5) * _UNIFORM_SCALE
    return ndtri(u) * std


def sanitize_sum(
    raw_sum: np.ndarray,
    sensitivity: float,
    noise_multiplier: float,
    n: int,
    key: NoiseKey,
    ledger: Ledger | None = None,
    label: str = "",
    rho_weight: float = 1.0,
) -> np.ndarray:
    """Noise a summed statistic, then average: ``(raw + N(0, (mult*sens)^2)) / n``.

    Noise is added to the sum before the division, so the released mean has
    per-coordinate std ``noise_multiplier * sensitivity / n``. Charges
    ``rho_weight / (2 * noise_multiplier^2)`` to the ledger (``rho_weight``
    carries the caller's share when a joint release is split across classes);
    a zero multiplier is the non-private limit and charges rho = 0.

    Statistics released without normalization (the least-squares sufficient
    statistics) pass ``n=1``.
    """
    if not (sensitivity > 0 and math.isfinite(sensitivity)):
        raise ValueError(f"sensitivity must be finite and positive, got {sensitivity}")
    if noise_multiplier < 0:
        raise ValueError(f"noise multiplier must be nonnegative, got {noise_multiplier}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not (0.0 <= rho_weight <= 1.0):
        raise ValueError(f"rho_weight must lie in [0, 1], got {rho_weight}")
    raw_sum = np.asarray(raw_sum, dtype=np.float64)
    noisy = raw_sum + gaussian_noise(raw_sum.shape, noise_multiplier * sensitivity, key)
    if ledger is not None:
        rho = 0.0 if noise_multiplier == 0 else rho_weight / (2.0 * noise_multiplier ** 2)
        ledger.charge(label or key.statistic, rho)
    return noisy / n
