"""Confidence-to-weight mapping and the cross-entropy losses built on it.

The weight of a pixel is an inverted Gaussian of its teacher confidence:

    psi(p) = gamma - exp(-(p - mu)^2 / (2 sigma^2)) / (sqrt(2 pi) sigma)

With the shipped constants (gamma 1.3, sigma^2 0.1, mu 0.5) confident pixels
(p near 0 or 1) weigh ~0.94 while maximally ambiguous pixels (p near 0.5)
weigh ~0.038, so ambiguous supervision is damped but never sign-flipped.
A gamma at or below the Gaussian peak density would make weights at p = mu
non-positive; that configuration is accepted but warned about.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .masks import BinaryMask, SoftMask, binarize

EPS_LOG = 1e-7


@dataclass(frozen=True)
class PwaConfig:
    gamma: float = 1.3
    sigma2: float = 0.1
    mu: float = 0.5

    def __post_init__(self):
        if self.sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")
        if self.gamma <= self.peak_density():
            warnings.warn(
                "gamma <= Gaussian peak density: weights at p = mu will be "
                "non-positive and the weighted loss may change sign",
                stacklevel=2,
            )

    def peak_density(self) -> float:
        return 1.0 / (math.sqrt(2.0 * math.pi) * math.sqrt(self.sigma2))


@dataclass(frozen=True)
class LossConfig:
    lambda_sup: float = 1.0
    lambda_unsup: float = 1.0

    def __post_init__(self):
        if self.lambda_sup < 0.0 or self.lambda_unsup < 0.0:
            raise ValueError("loss weights must be non-negative")


class WeightMap:
    """Per-pixel loss weights, row-major, same layout as the masks."""

    __slots__ = ("width", "height", "weights")

    def __init__(self, width: int, height: int, weights):
        arr = np.asarray(weights, dtype=np.float64).reshape(-1)
        if width < 1 or height < 1 or arr.size != width * height:
            raise ValueError(
                f"weights length {arr.size} != width*height = {width * height}"
            )
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "weights", arr)

    def __setattr__(self, name, value):
        raise AttributeError("WeightMap is immutable")

    @classmethod
    def uniform(cls, width: int, height: int, value: float = 1.0) -> "WeightMap":
        return cls(width, height, np.full(width * height, value, dtype=np.float64))


def psi(p: float, cfg: PwaConfig) -> float:
    """Weight for a single confidence value."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"confidence must lie in [0, 1], got {p}")
    return cfg.gamma - cfg.peak_density() * math.exp(-((p - cfg.mu) ** 2) / (2.0 * cfg.sigma2))


def weight_map(teacher: SoftMask, cfg: PwaConfig) -> WeightMap:
    """Elementwise psi over a teacher confidence mask."""
    w = cfg.gamma - cfg.peak_density() * np.exp(
        -((teacher.probs - cfg.mu) ** 2) / (2.0 * cfg.sigma2)
    )
    return WeightMap(teacher.width, teacher.height, w)


def pixel_bce(probs: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Unreduced per-pixel cross entropy.

    Only the log arguments are floored at EPS_LOG, so the loss stays finite
    at saturated predictions yet is exactly zero on perfect agreement.
    """
    y = bits.astype(np.float64)
    return -(
        y * np.log(np.maximum(probs, EPS_LOG))
        + (1.0 - y) * np.log(np.maximum(1.0 - probs, EPS_LOG))
    )


def bce(pred: SoftMask, target: BinaryMask) -> float:
    """Mean binary cross entropy with the log arguments floored at EPS_LOG."""
    if pred.width != target.width or pred.height != target.height:
        raise ValueError(
            f"prediction {pred.width}x{pred.height} vs target {target.width}x{target.height}"
        )
    return float(np.mean(pixel_bce(pred.probs, target.bits)))


def weighted_bce_map(pred: SoftMask, target: BinaryMask, weights: WeightMap) -> float:
    """Mean of weight * per-pixel BCE.  Uniform weights reduce this to bce."""
    if (
        pred.width != target.width
        or pred.height != target.height
        or pred.width != weights.width
        or pred.height != weights.height
    ):
        raise ValueError("prediction, target and weights must share dimensions")
    return float(np.mean(weights.weights * pixel_bce(pred.probs, target.bits)))


def weighted_bce(
    student: SoftMask,
    teacher: SoftMask,
    pwa: PwaConfig,
    threshold: float = 0.5,
) -> float:
    """Confidence-weighted BCE of the student against the binarized teacher.

    Weights come from the soft teacher confidences; targets are the teacher
    mask binarized at ``threshold`` so the objective stays a well-defined
    hard-label cross entropy.
    """
    if student.width != teacher.width or student.height != teacher.height:
        raise ValueError(
            f"student {student.width}x{student.height} vs teacher {teacher.width}x{teacher.height}"
        )
    return weighted_bce_map(student, binarize(teacher, threshold), weight_map(teacher, pwa))


def combined_loss(sup: float, unsup: float, cfg: LossConfig) -> float:
    """lambda_sup * sup + lambda_unsup * unsup."""
    return cfg.lambda_sup * sup + cfg.lambda_unsup * unsup
