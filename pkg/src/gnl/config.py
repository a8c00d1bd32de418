"""Run configuration files (JSON).

Schema (all sections optional except ``data.manifest``)::

    {
      "seed": 0,                       # master seed, copied into every nested seed
      "model":  {"in_channels": 3, "block_channels": [16, 32, 64], "bottleneck_channels": 64},
      "train":  {"epochs": 20, "batch_size": 16, "learning_rate": 0.005, "adam_betas": [0.5, 0.999],
                 "adam_eps": 1e-8, "n_augments": 2,
                 "weights": {"lambda_ori": 1.0, "lambda_abs": 1.0, "lambda_lowf": 1.0},
                 "augment": {"severity": 3, "width": 3, "depth_max": 3, "exclude_photometric": false}},
      "infer":  {"tta": {"method": "exact", "alpha": 0.5, "blocks": [1, 2]}, "smoothing_sigma": 0.0},
      "benchmark_configs": {"rd4ad": {"tta": null}, "gnl": {"tta": {"alpha": 0.5}}},
      "data":   {"manifest": "data/manifest.csv", "normal_class": "normal", "style_pool": null},
      "suites": [{"name": "gaussian_noise_s3", "corruption": {"kind": "gaussian_noise", "severity": 3}},
                 {"name": "shift", "manifest": "data/manifest_shift_brightness.csv"}],
      "output_dir": "runs/example"
    }

Relative paths are resolved against the config file's directory. The seed
precedence is: command-line flag, then the ``GNL_SEED`` environment
variable, then the file's ``seed``.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .augmentation import CORRUPTION_TABLES
from .errors import ConfigError
from .fdm import FdmConfig
from .model import ModelConfig
from .scoring import InferenceConfig
from .training import TrainConfig

SEED_ENV = "GNL_SEED"


@dataclass
class RunConfig:
    manifest: Path
    normal_class: str = "normal"
    style_pool: Optional[Path] = None
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferenceConfig = field(default_factory=lambda: InferenceConfig(FdmConfig()))
    benchmark_configs: dict = field(default_factory=dict)
    suites: list = field(default_factory=list)
    output_dir: Path = Path("runs/default")
    raw: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> RunConfig:
        """Copy with ``seed`` pushed into the model, training and style-draw seeds."""
        infer = self.infer
        if infer.tta is not None:
            infer = dataclasses.replace(infer, tta=dataclasses.replace(infer.tta, style_seed=seed))
        bcfgs = {k: (dataclasses.replace(c, tta=dataclasses.replace(c.tta, style_seed=seed))
                     if c.tta is not None else c) for k, c in self.benchmark_configs.items()}
        raw = dict(self.raw, seed=seed)
        return dataclasses.replace(self, seed=seed, model=dataclasses.replace(self.model, seed=seed),
                                   train=dataclasses.replace(self.train, seed=seed),
                                   infer=infer, benchmark_configs=bcfgs, raw=raw)

    def inference_configs(self) -> dict:
        return dict(self.benchmark_configs) if self.benchmark_configs else {"default": self.infer}


def _tta(d):
    if d is None:
        return None
    d = dict(d)
    if "blocks" in d:
        d["blocks"] = frozenset(d["blocks"])
    return FdmConfig(**d)


def _infer(d):
    d = dict(d or {})
    tta = _tta(d.pop("tta")) if "tta" in d else FdmConfig()
    return InferenceConfig(tta, **d)


def _check_suite(s):
    if "name" not in s:
        raise ConfigError(f"suite declaration without a name: {s}")
    if ("corruption" in s) == ("manifest" in s):
        raise ConfigError(f"suite {s['name']!r} needs exactly one of 'corruption' or 'manifest'")
    if "corruption" in s and s["corruption"].get("kind") not in CORRUPTION_TABLES:
        raise ConfigError(f"suite {s['name']!r}: unknown corruption kind {s['corruption'].get('kind')!r}")


def parse_run_config(raw: dict, base_dir=".") -> RunConfig:
    base = Path(base_dir)
    try:
        data = raw["data"]
        manifest = base / data["manifest"]
    except (KeyError, TypeError) as exc:
        raise ConfigError("run config needs data.manifest") from exc
    try:
        model = ModelConfig.from_dict(raw.get("model", {}))
        train = TrainConfig.from_dict(raw.get("train", {}))
        infer = _infer(raw.get("infer", {}))
        bcfgs = {k: _infer(v) for k, v in raw.get("benchmark_configs", {}).items()}
    except TypeError as exc:
        raise ConfigError(f"bad run config field: {exc}") from exc
    suites = []
    for s in raw.get("suites", []):
        _check_suite(s)
        s = dict(s)
        if "manifest" in s:
            s["manifest"] = base / s["manifest"]
        suites.append(s)
    cfg = RunConfig(manifest=manifest, normal_class=data.get("normal_class", "normal"),
                    style_pool=base / data["style_pool"] if data.get("style_pool") else None,
                    model=model, train=train, infer=infer, benchmark_configs=bcfgs, suites=suites,
                    output_dir=base / raw.get("output_dir", "runs/default"), raw=raw)
    return cfg.with_seed(int(raw.get("seed", 0)))


def load_run_config(path, seed_flag=None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read run config {path}: {exc}") from exc
    cfg = parse_run_config(raw, path.parent)
    seed = resolve_seed(seed_flag, cfg.seed)
    return cfg.with_seed(seed) if seed != cfg.seed else cfg


def resolve_seed(flag, config_seed: int) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return int(config_seed)
