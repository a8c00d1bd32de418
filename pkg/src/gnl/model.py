"""Reverse-distillation network: frozen teacher encoder, bottleneck, student decoder.

The teacher is a stem (stride 4) followed by three residual blocks
(strides 1, 2, 2), giving feature maps at strides 4, 8 and 16. The
bottleneck strides the two shallow maps down to the deepest resolution,
concatenates and projects them. The decoder mirrors the encoder with
nearest x2 upsampling in front of its two upper residual blocks.

Images and feature maps are plain numpy arrays, either a single sample
``(C, H, W)`` or a batch ``(B, C, H, W)``; every public function returns
the same layout it was given.
"""
from __future__ import annotations

import dataclasses
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import layers
from .errors import ConfigError, FormatError, ShapeError

MAGIC = b"GNL1"


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 3
    block_channels: tuple[int, int, int] = (16, 32, 64)
    bottleneck_channels: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        if self.in_channels not in (1, 3):
            raise ConfigError(f"in_channels must be 1 or 3, got {self.in_channels}")
        c = self.block_channels
        if len(c) != 3 or any(v <= 0 for v in c) or not (c[0] < c[1] < c[2]):
            raise ConfigError(f"block_channels must be 3 strictly increasing positive ints, got {c}")
        if self.bottleneck_channels <= 0:
            raise ConfigError("bottleneck_channels must be positive")

    def to_dict(self):
        return {**dataclasses.asdict(self), "block_channels": list(self.block_channels)}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class FeaturePyramid(NamedTuple):
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    bn: np.ndarray


class ReconPyramid(NamedTuple):
    l1: np.ndarray
    l2: np.ndarray
    l3: np.ndarray


@dataclass
class ModelBundle:
    config: ModelConfig
    teacher: dict[str, np.ndarray]
    bottleneck: dict[str, np.ndarray]
    decoder: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def dtype(self):
        return next(iter(self.teacher.values())).dtype

    def astype(self, dtype) -> ModelBundle:
        """Copy with every parameter cast to ``dtype`` (teacher stays read-only)."""
        return ModelBundle(self.config, _frozen({k: v.astype(dtype) for k, v in self.teacher.items()}),
                           {k: v.astype(dtype) for k, v in self.bottleneck.items()},
                           {k: v.astype(dtype) for k, v in self.decoder.items()},
                           dict(self.meta))

    def with_trainable(self, bottleneck, decoder, meta=None) -> ModelBundle:
        return ModelBundle(self.config, self.teacher, bottleneck, decoder,
                           dict(self.meta) if meta is None else meta)

    def trainable(self) -> dict[str, np.ndarray]:
        return {**self.bottleneck, **self.decoder}


# ---------------------------------------------------------------- layout

def _conv_unit_shapes(name, cin, cout, k):
    return [(name + ".w", (cout, cin, k, k)), (name + ".g", (cout,)), (name + ".b", (cout,))]


def _res_block_shapes(name, cin, cout, stride):
    shapes = _conv_unit_shapes(name + ".conv1", cin, cout, 3) + _conv_unit_shapes(name + ".conv2", cout, cout, 3)
    if cin != cout or stride != 1:
        shapes += _conv_unit_shapes(name + ".proj", cin, cout, 1)
    return shapes


def teacher_layout(cfg: ModelConfig):
    c1, c2, c3 = cfg.block_channels
    return (_conv_unit_shapes("stem", cfg.in_channels, c1, 4)
            + _res_block_shapes("enc1", c1, c1, 1)
            + _res_block_shapes("enc2", c1, c2, 2)
            + _res_block_shapes("enc3", c2, c3, 2))


def bottleneck_layout(cfg: ModelConfig):
    c1, c2, c3 = cfg.block_channels
    return (_conv_unit_shapes("down1a", c1, c2, 3)
            + _conv_unit_shapes("down1b", c2, c3, 3)
            + _conv_unit_shapes("down2", c2, c3, 3)
            + _conv_unit_shapes("fuse", 3 * c3, cfg.bottleneck_channels, 1))


def decoder_layout(cfg: ModelConfig):
    c1, c2, c3 = cfg.block_channels
    return (_res_block_shapes("dec3", cfg.bottleneck_channels, c3, 1)
            + _res_block_shapes("dec2", c3, c2, 1)
            + _res_block_shapes("dec1", c2, c1, 1))


def _init_group(layout, rng, teacher):
    params = {}
    for name, shape in layout:
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
            if teacher:
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
            else:
                bound = 1.0 / np.sqrt(fan_in)
                w = rng.uniform(-bound, bound, size=shape)
        elif name.endswith(".g"):
            w = np.ones(shape)
        else:
            w = rng.normal(0.0, 0.1, size=shape) if teacher else np.zeros(shape)
        params[name] = w.astype(np.float32)
    return params


def _frozen(params):
    for v in params.values():
        v.flags.writeable = False
    return params


def init_model(config: ModelConfig) -> ModelBundle:
    """Seeded initialization: He-normal teacher, fan-in uniform trainable parts."""
    ss = np.random.SeedSequence(config.seed)
    r_t, r_b, r_d = (np.random.default_rng(s) for s in ss.spawn(3))
    return ModelBundle(config,
                       _frozen(_init_group(teacher_layout(config), r_t, teacher=True)),
                       _init_group(bottleneck_layout(config), r_b, teacher=False),
                       _init_group(decoder_layout(config), r_d, teacher=False))


# ---------------------------------------------------------------- forward

def _as_batch(x, ndim=3):
    x = np.asarray(x)
    if x.ndim == ndim:
        return x[None], True
    if x.ndim == ndim + 1:
        return x, False
    raise ShapeError(f"expected a {ndim}-d sample or {ndim + 1}-d batch, got shape {x.shape}")


def _unbatch(single, *arrays):
    return tuple(a[0] for a in arrays) if single else arrays


def _check_image(x, cfg):
    c, h, w = x.shape[1:]
    if c != cfg.in_channels:
        raise ShapeError(f"image has {c} channels, model expects {cfg.in_channels}")
    if h % 16 or w % 16 or h == 0 or w == 0:
        raise ShapeError(f"image height and width must be positive multiples of 16, got {(h, w)}")


def encode_stage(x, bundle: ModelBundle, stage: int):
    """Apply teacher block ``stage`` (1, 2 or 3) to a batch.

    Stage 1 consumes the image (stem + first block); stages 2 and 3 consume
    the previous stage's output.
    """
    t = bundle.teacher
    x = x.astype(bundle.dtype, copy=False)
    if stage == 1:
        h, _ = layers.conv_unit_forward(t, "stem", x, 4, 0)
        return layers.res_block_forward(t, "enc1", h, 1)[0]
    if stage in (2, 3):
        return layers.res_block_forward(t, f"enc{stage}", x, 2)[0]
    raise ConfigError(f"encoder stage must be 1, 2 or 3, got {stage}")


def encode(image, bundle: ModelBundle):
    """Teacher feature maps (p1, p2, p3) at strides 4, 8, 16."""
    x, single = _as_batch(image)
    _check_image(x, bundle.config)
    p1 = encode_stage(x, bundle, 1)
    p2 = encode_stage(p1, bundle, 2)
    p3 = encode_stage(p2, bundle, 3)
    return _unbatch(single, p1, p2, p3)


def _check_pyramid(p1, p2, p3, cfg):
    c1, c2, c3 = cfg.block_channels
    b, _, h3, w3 = p3.shape
    want = [(b, c1, 4 * h3, 4 * w3), (b, c2, 2 * h3, 2 * w3), (b, c3, h3, w3)]
    for k, (p, s) in enumerate(zip((p1, p2, p3), want), start=1):
        if p.shape != s:
            raise ShapeError(f"p{k} has shape {p.shape}, expected {s}")


def bottleneck_forward(p1, p2, p3, params):
    """Batched bottleneck with cache for the backward pass."""
    d1, ca = layers.conv_unit_forward(params, "down1a", p1, 2, 1)
    d1, cb = layers.conv_unit_forward(params, "down1b", d1, 2, 1)
    d2, cc = layers.conv_unit_forward(params, "down2", p2, 2, 1)
    cat = np.concatenate([d1, d2, p3], axis=1)
    bn, cf = layers.conv_unit_forward(params, "fuse", cat, 1, 0)
    return bn, (ca, cb, cc, cf, d1.shape[1], d2.shape[1])


def bottleneck_backward(dbn, cache):
    """Gradients w.r.t. bottleneck parameters (teacher features are constants)."""
    ca, cb, cc, cf, n1, n2 = cache
    grads = {}
    dcat = layers.conv_unit_backward(dbn, cf, grads)
    dd1, dd2 = dcat[:, :n1], dcat[:, n1:n1 + n2]
    layers.conv_unit_backward(layers.conv_unit_backward(dd1, cb, grads), ca, grads)
    layers.conv_unit_backward(dd2, cc, grads)
    return grads


def bottleneck_embed(p1, p2, p3, bundle: ModelBundle):
    """Fuse the three teacher maps into the one-class embedding at p3's resolution."""
    (b1, single), (b2, _), (b3, _) = _as_batch(p1), _as_batch(p2), _as_batch(p3)
    _check_pyramid(b1, b2, b3, bundle.config)
    bn, _ = bottleneck_forward(b1, b2, b3, bundle.bottleneck)
    return _unbatch(single, bn)[0]


def decoder_forward(bn, params):
    l3, c3 = layers.res_block_forward(params, "dec3", bn, 1)
    l2, c2 = layers.res_block_forward(params, "dec2", layers.upsample2_forward(l3), 1)
    l1, c1 = layers.res_block_forward(params, "dec1", layers.upsample2_forward(l2), 1)
    return ReconPyramid(l1, l2, l3), (c1, c2, c3)


def decoder_backward(dl1, dl2, dl3, cache):
    """Returns (d_bn, param grads). ``None`` upstream gradients count as zero."""
    c1, c2, c3 = cache
    grads = {}
    g = layers.res_block_backward(dl1, c1, grads)
    g = layers.upsample2_backward(g)
    if dl2 is not None:
        g = g + dl2
    g = layers.res_block_backward(g, c2, grads)
    g = layers.upsample2_backward(g)
    if dl3 is not None:
        g = g + dl3
    dbn = layers.res_block_backward(g, c3, grads)
    return dbn, grads


def decode(bn, bundle: ModelBundle) -> ReconPyramid:
    """Student reconstruction, ordered (l1, l2, l3) from finest to coarsest."""
    x, single = _as_batch(bn)
    if x.shape[1] != bundle.config.bottleneck_channels:
        raise ShapeError(f"bottleneck has {x.shape[1]} channels, expected {bundle.config.bottleneck_channels}")
    rec, _ = decoder_forward(x.astype(bundle.dtype, copy=False), bundle.decoder)
    return ReconPyramid(*_unbatch(single, *rec))


def forward(image, bundle: ModelBundle) -> tuple[FeaturePyramid, ReconPyramid]:
    p1, p2, p3 = encode(image, bundle)
    bn = bottleneck_embed(p1, p2, p3, bundle)
    return FeaturePyramid(p1, p2, p3, bn), decode(bn, bundle)


# ---------------------------------------------------------------- checkpoints

def _sections(cfg):
    return [("teacher", teacher_layout(cfg)), ("bottleneck", bottleneck_layout(cfg)),
            ("decoder", decoder_layout(cfg))]


def _header_bytes(header):
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(bundle: ModelBundle, path, run_config=None):
    """Write ``bundle`` in the GNL1 format.

    Layout: ``b"GNL1"``, uint32 LE header length, UTF-8 JSON header (model
    config, training metadata, optional run config, parameter manifest), then
    every parameter as little-endian float32 in manifest order.
    """
    header = {"config": bundle.config.to_dict(), "meta": bundle.meta,
              "params": [[sec, name, list(shape)] for sec, lay in _sections(bundle.config)
                         for name, shape in lay]}
    if run_config is not None:
        header["run_config"] = run_config
    hb = _header_bytes(header)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(hb)))
    buf.write(hb)
    for sec, lay in _sections(bundle.config):
        group = getattr(bundle, sec)
        for name, shape in lay:
            buf.write(np.ascontiguousarray(group[name], dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint(path) -> tuple[ModelBundle, dict]:
    """Load a GNL1 file, returning the bundle and the raw header."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic bytes {data[:4]!r}")
    if len(data) < 8:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
        cfg = ModelConfig.from_dict(header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: unreadable header ({exc})") from exc
    expected = [[sec, name, list(shape)] for sec, lay in _sections(cfg) for name, shape in lay]
    if header.get("params") != expected:
        raise FormatError(f"{path}: parameter manifest does not match its model config")
    offset = 8 + hlen
    groups = {"teacher": {}, "bottleneck": {}, "decoder": {}}
    for sec, name, shape in expected:
        n = int(np.prod(shape)) * 4
        if offset + n > len(data):
            raise FormatError(f"{path}: truncated parameter data at {name}")
        groups[sec][name] = np.frombuffer(data, dtype="<f4", count=n // 4, offset=offset).astype(np.float32).reshape(shape)
        offset += n
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    bundle = ModelBundle(cfg, _frozen(groups["teacher"]), groups["bottleneck"], groups["decoder"],
                         header.get("meta", {}))
    return bundle, header


def load_checkpoint(path) -> ModelBundle:
    return read_checkpoint(path)[0]


def load_teacher_weights(bundle: ModelBundle, path) -> ModelBundle:
    """Replace the teacher with the teacher section of a GNL1 file."""
    src = load_checkpoint(path)
    layout = teacher_layout(bundle.config)
    for name, shape in layout:
        if name not in src.teacher or src.teacher[name].shape != tuple(shape):
            got = src.teacher[name].shape if name in src.teacher else None
            raise FormatError(f"{path}: teacher parameter {name} has shape {got}, expected {tuple(shape)}")
    teacher = _frozen({name: src.teacher[name].astype(bundle.dtype) for name, _ in layout})
    return ModelBundle(bundle.config, teacher, bundle.bottleneck, bundle.decoder, dict(bundle.meta))
