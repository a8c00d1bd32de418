"""Image files, dataset manifests and the synthetic blob/stripe dataset.

A manifest is a CSV file with header ``path,class,split``; paths are
relative to the manifest's directory and point at 8-bit PNG or PPM images.
"""
from __future__ import annotations

import csv
import json
import zlib
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .augmentation import CorruptionSpec, corrupt
from .errors import FormatError
from .evaluation import LabeledSample, Sample

MANIFEST_COLUMNS = ("path", "class", "split")
SPLITS = ("train", "test")

SYNTH_SIZE = 32
SYNTH_MAX_LEVEL = 191  # 8-bit ceiling of generated images; leaves room for the shift
SYNTH_SHIFT_LEVEL = 64  # brightness offset of the shifted copy, in 8-bit levels


def read_image(path) -> np.ndarray:
    """(C, H, W) float32 image in [0, 1]; grayscale files give C = 1."""
    try:
        with Image.open(path) as im:
            im = im.convert("L" if im.mode in ("1", "L", "I", "I;16", "F") else "RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    arr = arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)
    return (arr.astype(np.float32) / 255.0)


def to_uint8(image) -> np.ndarray:
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, image):
    u8 = to_uint8(image)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(u8[0] if u8.shape[0] == 1 else u8.transpose(1, 2, 0)).save(path)


def read_manifest(path):
    """Manifest rows as (relative path, class, split) tuples, validated."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != MANIFEST_COLUMNS:
                raise FormatError(f"{path}: header must be {','.join(MANIFEST_COLUMNS)}")
            rows = [(r["path"], r["class"], r["split"]) for r in reader]
    except OSError as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: manifest lists no images")
    for rel, cls, split in rows:
        if not cls:
            raise FormatError(f"{path}: empty class name for {rel}")
        if split not in SPLITS:
            raise FormatError(f"{path}: split must be train or test, got {split!r}")
        if not (path.parent / rel).is_file():
            raise FormatError(f"{path}: listed file {rel} does not exist")
    return rows


def write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        w.writerows(rows)


def load_dataset(manifest_path):
    """All manifest entries as ``Sample`` objects; the sample id is the relative path."""
    root = Path(manifest_path).parent
    return [Sample(rel, read_image(root / rel), cls, split) for rel, cls, split in read_manifest(manifest_path)]


def labeled_test_set(manifest_path, normal_class, suite="id"):
    return [LabeledSample(s.sample_id, s.image, int(s.class_name != normal_class), suite)
            for s in load_dataset(manifest_path) if s.split == "test"]


def sample_seed(seed: int, sample_id: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(sample_id.encode("utf-8"))]).generate_state(1)[0])


def corrupt_samples(samples, spec: CorruptionSpec, suite=None):
    """Corrupted copies of labeled samples; noise is seeded per sample id."""
    out = []
    for s in samples:
        sp = CorruptionSpec(spec.kind, spec.severity, sample_seed(spec.seed, s.sample_id))
        out.append(LabeledSample(s.sample_id, corrupt(s.image, sp).astype(np.float32), s.label,
                                 suite or spec.name))
    return out


def corrupt_dataset(manifest_path, spec: CorruptionSpec, out_dir):
    """Write a corrupted copy of every image in a manifest, plus a new manifest."""
    src = Path(manifest_path).parent
    out_dir = Path(out_dir)
    rows = read_manifest(manifest_path)
    for rel, _, _ in rows:
        sp = CorruptionSpec(spec.kind, spec.severity, sample_seed(spec.seed, rel))
        write_image(out_dir / rel, corrupt(read_image(src / rel), sp))
    write_manifest(out_dir / "manifest.csv", rows)
    (out_dir / "corruption.json").write_text(json.dumps(
        {"kind": spec.kind, "severity": spec.severity, "seed": spec.seed, "source": str(manifest_path)},
        indent=2, sort_keys=True) + "\n")
    return out_dir / "manifest.csv"


# ---------------------------------------------------------------- synthetic data

def _background(rng, size):
    # one shared "style": near-constant grey level, fixed tint, fine texture
    tex = ndimage.gaussian_filter(rng.normal(0.0, 1.0, size=(size, size)), 1.5, mode="wrap")
    tex = 0.05 * tex / (tex.std() + 1e-12)
    tint = np.array([0.02, 0.0, -0.02])[:, None, None]
    return 0.35 + rng.uniform(-0.02, 0.02) + tint + tex[None]


def _blobs(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.zeros((size, size))
    for _ in range(2):  # blob and stripe scales are in pixels, independent of the image size
        cy, cx = rng.uniform(6, size - 6, size=2)
        sigma = rng.uniform(3.0, 4.0)
        out += 0.25 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    return out


def _stripes(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = rng.uniform(0, np.pi)
    period = rng.uniform(3.0, 5.0)
    wave = 0.5 + 0.5 * np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period)
    cy, cx = rng.uniform(8, size - 8, size=2)
    radius = rng.uniform(6.0, 9.0)
    mask = np.clip(radius - np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2), 0.0, 1.0)
    return 0.45 * wave * mask


def synth_image(rng, anomalous: bool, size=SYNTH_SIZE):
    """8-bit (3, size, size) image: blobs on texture, or a striped patch on texture."""
    img = _background(rng, size)
    img = img + (_stripes(rng, size) if anomalous else _blobs(rng, size))[None]
    u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0)
    return np.minimum(u8, SYNTH_MAX_LEVEL).astype(np.uint8)


def generate_synthetic(out_dir, seed=0, n_per_class=100, size=SYNTH_SIZE):
    """Two-class 3 x size x size dataset (default 32) plus a brightness-shifted copy of the test split.

    Writes ``manifest.csv`` (train normals, test normals and anomalies) and
    ``manifest_shift_brightness.csv`` whose images equal the test images plus
    64 grey levels (no clipping occurs: generated images stay <= 191).
    Returns the path of the main manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows, shift_rows = [], []
    plan = [("train", "normal")] + [("test", "normal"), ("test", "anomaly")]
    for split, cls in plan:
        for i in range(n_per_class):
            u8 = synth_image(rng, cls == "anomaly", size)
            rel = f"{split}/{cls}/{i:05d}.png"
            _save_u8(out_dir / rel, u8)
            rows.append((rel, cls, split))
            if split == "test":
                srel = f"shift_brightness/{rel}"
                _save_u8(out_dir / srel, u8 + np.uint8(SYNTH_SHIFT_LEVEL))
                shift_rows.append((srel, cls, split))
    write_manifest(out_dir / "manifest.csv", rows)
    write_manifest(out_dir / "manifest_shift_brightness.csv", shift_rows)
    (out_dir / "synth.json").write_text(json.dumps(
        {"seed": seed, "n_per_class": n_per_class, "size": size,
         "shift_brightness_levels": SYNTH_SHIFT_LEVEL}, indent=2, sort_keys=True) + "\n")
    return out_dir / "manifest.csv"


def _save_u8(path, u8):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(u8.transpose(1, 2, 0)).save(path)
