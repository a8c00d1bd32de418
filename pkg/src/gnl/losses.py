"""Cosine distillation losses and the weighted distribution-invariant objective."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    lambda_ori: float = 1.0
    lambda_abs: float = 1.0
    lambda_lowf: float = 1.0

    def __post_init__(self):
        w = (self.lambda_ori, self.lambda_abs, self.lambda_lowf)
        if any(v < 0 for v in w) or not any(v > 0 for v in w):
            raise ConfigError(f"loss weights must be non-negative and not all zero, got {w}")

    @property
    def uses_augmentation(self) -> bool:
        return self.lambda_abs > 0 or self.lambda_lowf > 0


@dataclass(frozen=True)
class LossReport:
    l_ori: float
    l_abs: float
    l_lowf: float
    total: float


def _check_same(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def cosine_map(a, b):
    """Cosine similarity of channel vectors at every position.

    Works on (C, H, W) or (B, C, H, W) input; the channel axis is -3.
    Returns the similarity clipped to [-1, 1].
    """
    a, b = np.asarray(a), np.asarray(b)
    _check_same(a, b)
    na = np.maximum(np.sqrt(np.sum(a * a, axis=-3)), EPS)
    nb = np.maximum(np.sqrt(np.sum(b * b, axis=-3)), EPS)
    return np.clip(np.sum(a * b, axis=-3) / (na * nb), -1.0, 1.0)


def cosine_feature_loss(a, b) -> float:
    """Mean over positions of 1 - cos between channel vectors; in [0, 2]."""
    return float(np.mean(1.0 - cosine_map(a, b)))


def cosine_feature_loss_grad(a, b):
    """Loss value and gradients w.r.t. ``a`` and ``b``."""
    _check_same(a, b)
    ra = np.sqrt(np.sum(a * a, axis=-3, keepdims=True))
    rb = np.sqrt(np.sum(b * b, axis=-3, keepdims=True))
    na, nb = np.maximum(ra, EPS), np.maximum(rb, EPS)
    dot = np.sum(a * b, axis=-3, keepdims=True)
    cos = dot / (na * nb)
    n_pos = cos.size
    scale = -1.0 / n_pos
    # d cos / d a = b/(na nb) - cos * a / na^2, with the norm term dropped under the floor
    ga = b / (na * nb) - np.where(ra > EPS, cos / (na * na), 0.0) * a
    gb = a / (na * nb) - np.where(rb > EPS, cos / (nb * nb), 0.0) * b
    value = float(np.mean(1.0 - np.clip(cos, -1.0, 1.0)))
    return value, scale * ga, scale * gb


def loss_ori(pyr, rec) -> float:
    """Multi-scale teacher/student distillation loss (sum over the three scales)."""
    return sum(cosine_feature_loss(p, l) for p, l in zip(pyr[:3], rec[:3]))


def _mean_pair_loss(ref, others) -> float:
    if len(others) == 0:
        raise ConfigError("need at least one augmented feature map")
    return sum(cosine_feature_loss(ref, o) for o in others) / len(others)


def loss_abs(bn_ori, bn_augs) -> float:
    """Bottleneck consistency between an image and its augmented copies."""
    return _mean_pair_loss(bn_ori, bn_augs)


def loss_lowf(l1_ori, l1_augs) -> float:
    """Consistency of the decoder's finest reconstruction across augmented copies."""
    return _mean_pair_loss(l1_ori, l1_augs)


def total_loss(l_ori, l_abs, l_lowf, weights: LossWeights) -> LossReport:
    parts = (l_ori, l_abs, l_lowf)
    if not all(math.isfinite(v) for v in parts):
        raise NumericError(f"non-finite loss component(s): {parts}")
    total = weights.lambda_ori * l_ori + weights.lambda_abs * l_abs + weights.lambda_lowf * l_lowf
    return LossReport(float(l_ori), float(l_abs), float(l_lowf), float(total))
