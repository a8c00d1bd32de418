"""Feature distribution matching and the test-time encoding that uses it.

Matching is per sample and per channel over the flattened spatial grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .model import ModelBundle, _as_batch, _check_image, _unbatch, encode_stage

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class FdmConfig:
    method: str = "exact"
    alpha: float = 0.5
    blocks: frozenset = frozenset({1, 2})
    style_seed: int = 0
    style_repeats: int = 1

    def __post_init__(self):
        object.__setattr__(self, "blocks", frozenset(int(b) for b in self.blocks))
        if self.method not in MATCHERS:
            raise ConfigError(f"unknown FDM method {self.method!r}; choose from {sorted(MATCHERS)}")
        _check_alpha(self.alpha)
        if not self.blocks <= {1, 2, 3}:
            raise ConfigError(f"blocks must be a subset of {{1, 2, 3}}, got {sorted(self.blocks)}")
        if self.style_repeats < 1:
            raise ConfigError("style_repeats must be >= 1")

    def to_dict(self):
        return {"method": self.method, "alpha": self.alpha, "blocks": sorted(self.blocks),
                "style_seed": self.style_seed, "style_repeats": self.style_repeats}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")


def _flat(content, style):
    content, style = np.asarray(content), np.asarray(style)
    if content.shape != style.shape:
        raise ShapeError(f"content {content.shape} and style {style.shape} differ")
    if content.ndim < 3:
        raise ShapeError(f"expected (..., C, H, W) feature maps, got {content.shape}")
    lead = content.shape[:-2]
    return content.reshape(*lead, -1), style.reshape(*lead, -1)


def efdm_match(content, style, alpha: float):
    """Exact feature distribution matching by sorted-value interpolation.

    Within each channel the i-th smallest content value is replaced by
    ``(1 - alpha) * c_(i) + alpha * v_(i)`` where ``v_(i)`` is the i-th
    smallest style value. Ties are broken by position (stable sort). The
    mix is evaluated as ``c + alpha * (v - c)`` so that matching a map to
    itself returns it unchanged.
    """
    _check_alpha(alpha)
    c, v = _flat(content, style)
    if alpha == 0:
        return np.array(content, copy=True)
    order = np.argsort(c, axis=-1, kind="stable")
    c_sorted = np.take_along_axis(c, order, axis=-1)
    v_sorted = np.sort(v, axis=-1, kind="stable")
    mixed = v_sorted if alpha == 1 else c_sorted + alpha * (v_sorted - c_sorted)
    out = np.empty_like(c)
    np.put_along_axis(out, order, mixed.astype(c.dtype, copy=False), axis=-1)
    return out.reshape(np.shape(content))


def moment_match(content, style, alpha: float):
    """Mean/std interpolation toward the style statistics (AdaIN family)."""
    _check_alpha(alpha)
    c, v = _flat(content, style)
    mu_c, mu_s = c.mean(axis=-1, keepdims=True), v.mean(axis=-1, keepdims=True)
    sd_c = np.maximum(c.std(axis=-1, keepdims=True), SIGMA_FLOOR)
    sd_s = np.maximum(v.std(axis=-1, keepdims=True), SIGMA_FLOOR)
    mu = (1.0 - alpha) * mu_c + alpha * mu_s
    sd = (1.0 - alpha) * sd_c + alpha * sd_s
    out = sd * (c - mu_c) / sd_c + mu
    return out.astype(c.dtype, copy=False).reshape(np.shape(content))


MATCHERS = {"exact": efdm_match, "moment": moment_match}


def tta_encode(test_image, style_image, cfg: FdmConfig, bundle: ModelBundle):
    """Teacher encoding of ``test_image`` with its early features pulled toward ``style_image``.

    The style image runs through the plain encoder; after each block listed in
    ``cfg.blocks`` the test features are matched to the style features of the
    same block before being fed to the next block.
    """
    x, single = _as_batch(test_image)
    q, _ = _as_batch(style_image)
    _check_image(x, bundle.config)
    _check_image(q, bundle.config)
    if q.shape[0] != x.shape[0]:
        if q.shape[0] != 1:
            raise ShapeError(f"style batch {q.shape[0]} does not match test batch {x.shape[0]}")
        q = np.broadcast_to(q, x.shape)
    match = MATCHERS[cfg.method]
    feats = []
    p, s = x, q
    for stage in (1, 2, 3):
        p = encode_stage(p, bundle, stage)
        if stage in cfg.blocks:
            s = encode_stage(s, bundle, stage)
            p = match(p, s, cfg.alpha)
        elif any(b > stage for b in cfg.blocks):
            s = encode_stage(s, bundle, stage)
        feats.append(p)
    return _unbatch(single, *feats)
