"""Anomaly maps, score maps and image-level anomaly scores."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ConfigError, FormatError, ShapeError
from .fdm import FdmConfig, tta_encode
from .losses import cosine_map
from .model import ModelBundle, bottleneck_embed, decode, encode

MAP_MAGIC = b"GNLM"


@dataclass(frozen=True)
class InferenceConfig:
    tta: Optional[FdmConfig] = None
    smoothing_sigma: float = 0.0

    def __post_init__(self):
        if self.smoothing_sigma < 0:
            raise ConfigError("smoothing_sigma must be >= 0")

    def to_dict(self):
        return {"tta": None if self.tta is None else self.tta.to_dict(), "smoothing_sigma": self.smoothing_sigma}

    @classmethod
    def from_dict(cls, d):
        tta = d.get("tta")
        return cls(None if tta is None else FdmConfig.from_dict(tta), d.get("smoothing_sigma", 0.0))


def anomaly_maps(pyr, rec):
    """Per-scale maps ``1 - cos(teacher, student)``, each shaped (H_k, W_k) in [0, 2]."""
    maps = []
    for p, l in zip(pyr[:3], rec[:3]):
        if p.ndim != 3:
            raise ShapeError(f"anomaly maps take single-sample (C, H, W) features, got {p.shape}")
        maps.append(1.0 - cosine_map(p, l))
    return tuple(maps)


def _resize_axis_weights(n_in, n_out):
    # half-texel convention: source coordinate of output pixel i is (i + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_resize(a, target_hw):
    """Bilinear resize of a 2-D map (align_corners=False, edge-clamped)."""
    a = np.asarray(a, dtype=np.float64)
    h, w = target_hw
    y0, y1, fy = _resize_axis_weights(a.shape[0], h)
    x0, x1, fx = _resize_axis_weights(a.shape[1], w)
    rows = a[y0] * (1.0 - fy)[:, None] + a[y1] * fy[:, None]
    return rows[:, x0] * (1.0 - fx)[None, :] + rows[:, x1] * fx[None, :]


def score_map(maps, target_hw, smoothing_sigma: float = 0.0):
    """Sum of the upsampled per-scale maps, optionally Gaussian-smoothed."""
    target_hw = tuple(int(v) for v in target_hw)
    if len(target_hw) != 2 or min(target_hw) <= 0:
        raise ShapeError(f"invalid target size {target_hw}")
    if smoothing_sigma < 0:
        raise ConfigError(f"smoothing_sigma must be >= 0, got {smoothing_sigma}")
    s = np.zeros(target_hw)
    for m in maps:
        m = np.asarray(m)
        if m.ndim != 2:
            raise ShapeError(f"anomaly maps must be 2-D, got {m.shape}")
        s += m if m.shape == target_hw else bilinear_resize(m, target_hw)
    if smoothing_sigma > 0:
        s = ndimage.gaussian_filter(s, smoothing_sigma, mode="reflect")
    return s


def image_score(smap) -> float:
    return float(np.max(smap))


def _score_once(image, bundle, cfg, style):
    if style is None:
        p1, p2, p3 = encode(image, bundle)
    else:
        p1, p2, p3 = tta_encode(image, style, cfg.tta, bundle)
    bn = bottleneck_embed(p1, p2, p3, bundle)
    rec = decode(bn, bundle)
    smap = score_map(anomaly_maps((p1, p2, p3), rec), image.shape[-2:], cfg.smoothing_sigma)
    return image_score(smap), smap


def infer(image, bundle: ModelBundle, cfg: InferenceConfig, style_pool=None, rng=None):
    """Anomaly score and score map for one (C, H, W) image.

    With ``cfg.tta`` set, ``cfg.tta.style_repeats`` style images are drawn
    uniformly from ``style_pool`` with ``rng`` and the resulting scores and
    maps are averaged.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ShapeError(f"infer takes one (C, H, W) image, got {image.shape}")
    if cfg.tta is None:
        return _score_once(image, bundle, cfg, None)
    if style_pool is None or len(style_pool) == 0:
        raise ConfigError("test-time augmentation needs a non-empty style pool")
    if rng is None:
        rng = np.random.default_rng(cfg.tta.style_seed)
    scores, smaps = [], []
    for _ in range(cfg.tta.style_repeats):
        style = np.asarray(style_pool[int(rng.integers(len(style_pool)))])
        sc, sm = _score_once(image, bundle, cfg, style)
        scores.append(sc)
        smaps.append(sm)
    if len(scores) == 1:
        return scores[0], smaps[0]
    return float(np.mean(scores)), np.mean(smaps, axis=0)


def save_score_map(smap, path):
    """Raw map file: ``b"GNLM"``, uint32 LE height and width, then float32 LE values."""
    smap = np.asarray(smap)
    h, w = smap.shape
    Path(path).write_bytes(MAP_MAGIC + struct.pack("<II", h, w) + smap.astype("<f4").tobytes())


def load_score_map(path):
    data = Path(path).read_bytes()
    if data[:4] != MAP_MAGIC or len(data) < 12:
        raise FormatError(f"{path}: not a GNLM score map")
    h, w = struct.unpack("<II", data[4:12])
    if len(data) != 12 + 4 * h * w:
        raise FormatError(f"{path}: expected {h}x{w} floats, file size is {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w).astype(np.float32)


def save_heat_image(smap, path, vmax: float = 6.0):
    """8-bit grayscale PNG, linearly scaled from [0, vmax]."""
    from PIL import Image

    img = np.round(np.clip(np.asarray(smap) / vmax, 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(img).save(path)
