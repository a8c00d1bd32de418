"""Normality-preserving AugMix and the four-corruption shift suite.

Images are float arrays shaped (C, H, W) with values in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ShapeError

# geometric ops can move or deform object parts and so fabricate defects
GEOMETRIC_OPS = ("shear_x", "shear_y", "translate_x", "translate_y")
RETAINED_OPS = ("autocontrast", "equalize", "posterize", "rotate", "solarize")
# intensity-histogram ops that overlap brightness/contrast corruptions
PHOTOMETRIC_OPS = ("autocontrast", "equalize")

CORRUPTION_TABLES = {
    "brightness": (0.1, 0.2, 0.3, 0.4, 0.5),
    "contrast": (0.75, 0.5, 0.4, 0.3, 0.15),
    "defocus_blur": (1, 2, 3, 4, 6),
    "gaussian_noise": (0.04, 0.06, 0.08, 0.09, 0.10),
}


@dataclass(frozen=True)
class AugmentConfig:
    severity: int = 3
    width: int = 3
    depth_max: int = 3
    exclude_ops: tuple = GEOMETRIC_OPS
    exclude_photometric: bool = False
    depth: int = -1  # -1: uniform in [1, depth_max]; >= 0 forces a fixed chain length
    seed: int = 0

    def __post_init__(self):
        excl = tuple(dict.fromkeys((*GEOMETRIC_OPS, *self.exclude_ops)))
        object.__setattr__(self, "exclude_ops", excl)
        if not 1 <= self.severity <= 5:
            raise ConfigError(f"augmentation severity must be in [1, 5], got {self.severity}")
        if self.width < 1 or self.depth_max < 1:
            raise ConfigError("width and depth_max must be >= 1")
        if self.depth < -1:
            raise ConfigError("depth must be -1 or >= 0")
        unknown = set(excl) - set(GEOMETRIC_OPS) - set(RETAINED_OPS)
        if unknown:
            raise ConfigError(f"unknown ops in exclude_ops: {sorted(unknown)}")
        if not self.allowed_ops():
            raise ConfigError("every augmentation primitive is excluded")

    def allowed_ops(self) -> tuple:
        banned = set(self.exclude_ops) | (set(PHOTOMETRIC_OPS) if self.exclude_photometric else set())
        return tuple(op for op in RETAINED_OPS if op not in banned)

    def to_dict(self):
        return {"severity": self.severity, "width": self.width, "depth_max": self.depth_max,
                "exclude_ops": list(self.exclude_ops), "exclude_photometric": self.exclude_photometric,
                "depth": self.depth, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "exclude_ops" in d:
            d["exclude_ops"] = tuple(d["exclude_ops"])
        return cls(**d)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTION_TABLES:
            raise ConfigError(f"unknown corruption {self.kind!r}; choose from {sorted(CORRUPTION_TABLES)}")
        if not 1 <= self.severity <= 5:
            raise ConfigError(f"corruption severity must be in [1, 5], got {self.severity}")

    @property
    def name(self) -> str:
        return f"{self.kind}_s{self.severity}"


# ---------------------------------------------------------------- primitives

def _to_u8(image):
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def autocontrast(image):
    lo = image.min(axis=(1, 2), keepdims=True)
    hi = image.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (image - lo) / safe, image)


def equalize(image):
    """Per-channel histogram equalization on 256 levels (PIL's lookup rule)."""
    u8 = _to_u8(image)
    out = np.empty(image.shape, dtype=np.float64)
    for c in range(u8.shape[0]):
        hist = np.bincount(u8[c].ravel(), minlength=256)
        nz = hist[hist > 0]
        step = (nz.sum() - nz[-1]) // 255
        if step == 0:
            out[c] = u8[c] / 255.0
            continue
        lut = (np.concatenate([[0], np.cumsum(hist)[:-1]]) + step // 2) // step
        out[c] = np.minimum(lut, 255)[u8[c]] / 255.0
    return out


def posterize(image, bits: int):
    mask = np.uint8((0xFF << (8 - bits)) & 0xFF)
    return (_to_u8(image) & mask) / 255.0


def solarize(image, threshold: float):
    return np.where(image >= threshold, 1.0 - image, image)


def rotate(image, degrees: float):
    """Bilinear rotation about the image centre, edge pixels extended."""
    if degrees == 0:
        return np.array(image, dtype=np.float64)
    return ndimage.rotate(image.astype(np.float64), degrees, axes=(2, 1), reshape=False,
                          order=1, mode="nearest")


def apply_primitive(image, op_name: str, severity: int, rng: np.random.Generator):
    """Apply one AugMix primitive at the given severity (0-10).

    posterize keeps ``8 - severity`` bits and solarize inverts pixels above
    ``1 - severity / 10``; rotate draws an angle of up to ``3 * severity``
    degrees with random sign.
    """
    if op_name in GEOMETRIC_OPS:
        raise ConfigError(f"{op_name} is excluded: it can turn normal images into anomalies")
    if not 0 <= severity <= 10:
        raise ConfigError(f"primitive severity must be in [0, 10], got {severity}")
    image = np.asarray(image, dtype=np.float64)
    if op_name == "autocontrast":
        out = autocontrast(image)
    elif op_name == "equalize":
        out = equalize(image)
    elif op_name == "posterize":
        out = posterize(image, max(1, 8 - severity))
    elif op_name == "solarize":
        out = solarize(image, 1.0 - severity / 10.0)
    elif op_name == "rotate":
        angle = 3.0 * severity * rng.uniform(0.0, 1.0)
        out = rotate(image, angle if rng.uniform() < 0.5 else -angle)
    else:
        raise ConfigError(f"unknown augmentation primitive {op_name!r}")
    return np.clip(out, 0.0, 1.0)


def augmix_normal(image, cfg: AugmentConfig, rng: np.random.Generator):
    """AugMix with anomaly-prone geometric ops removed.

    ``cfg.width`` chains of 1..depth_max random primitives are mixed with
    Dirichlet(1, ..., 1) weights, and the mixture is blended with the
    original via a Beta(1, 1) weight.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ShapeError(f"augmix_normal takes one (C, H, W) image, got {image.shape}")
    ops = cfg.allowed_ops()
    ws = rng.dirichlet([1.0] * cfg.width)
    m = rng.beta(1.0, 1.0)
    mix = np.zeros(image.shape, dtype=np.float64)
    for i in range(cfg.width):
        aug = image.astype(np.float64)
        depth = cfg.depth if cfg.depth >= 0 else int(rng.integers(1, cfg.depth_max + 1))
        for _ in range(depth):
            aug = apply_primitive(aug, ops[rng.integers(len(ops))], cfg.severity, rng)
        mix += ws[i] * aug
    out = image + m * (mix - image)
    return np.clip(out, 0.0, 1.0).astype(image.dtype, copy=False)


# ---------------------------------------------------------------- corruptions

def adjust_brightness(image, offset: float):
    return np.clip(image + offset, 0.0, 1.0)


def adjust_contrast(image, factor: float):
    mean = image.mean(axis=(1, 2), keepdims=True)
    return np.clip((image - mean) * factor + mean, 0.0, 1.0)


def disc_kernel(radius: int):
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    k = (xx ** 2 + yy ** 2 <= r * r).astype(np.float64)
    return k / k.sum()


def defocus_blur(image, radius: int):
    k = disc_kernel(radius)
    out = np.stack([ndimage.convolve(ch, k, mode="reflect") for ch in np.asarray(image, dtype=np.float64)])
    return np.clip(out, 0.0, 1.0)


def gaussian_noise(image, sigma: float, seed: int):
    rng = np.random.default_rng(seed)
    return np.clip(image + rng.normal(0.0, sigma, size=np.shape(image)), 0.0, 1.0)


def corrupt(image, spec: CorruptionSpec):
    """Deterministic corruption of a (C, H, W) image; see ``CORRUPTION_TABLES``."""
    image = np.asarray(image)
    strength = CORRUPTION_TABLES[spec.kind][spec.severity - 1]
    x = image.astype(np.float64)
    if spec.kind == "brightness":
        out = adjust_brightness(x, strength)
    elif spec.kind == "contrast":
        out = adjust_contrast(x, strength)
    elif spec.kind == "defocus_blur":
        out = defocus_blur(x, strength)
    else:
        out = gaussian_noise(x, strength, spec.seed)
    return out.astype(image.dtype if image.dtype.kind == "f" else np.float64, copy=False)
