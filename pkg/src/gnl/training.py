"""Distribution-invariant normality training of the bottleneck and decoder."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .augmentation import AugmentConfig, augmix_normal
from .errors import ConfigError, NumericError, ShapeError
from .losses import LossReport, LossWeights, cosine_feature_loss_grad, total_loss
from .model import ModelBundle, _check_image, bottleneck_backward, bottleneck_forward, decoder_backward, \
    decoder_forward, encode

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "l_ori", "l_abs", "l_lowf", "total", "wall_time")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 0.005
    adam_betas: tuple[float, float] = (0.5, 0.999)
    adam_eps: float = 1e-8
    n_augments: int = 2
    weights: LossWeights = field(default_factory=LossWeights)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "adam_betas", tuple(float(b) for b in self.adam_betas))
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not all(0.0 <= b < 1.0 for b in self.adam_betas):
            raise ConfigError(f"adam betas must lie in [0, 1), got {self.adam_betas}")
        if self.n_augments < 1:
            raise ConfigError("n_augments must be >= 1")

    def to_dict(self):
        return {"epochs": self.epochs, "batch_size": self.batch_size, "learning_rate": self.learning_rate,
                "adam_betas": list(self.adam_betas), "adam_eps": self.adam_eps, "n_augments": self.n_augments,
                "weights": vars(self.weights).copy(), "augment": self.augment.to_dict(), "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "weights" in d:
            d["weights"] = LossWeights(**d["weights"])
        if "augment" in d:
            d["augment"] = AugmentConfig.from_dict(d["augment"])
        return cls(**d)


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def append(self, epoch, report: LossReport, wall_time):
        self.rows.append({"epoch": epoch, "l_ori": report.l_ori, "l_abs": report.l_abs,
                          "l_lowf": report.l_lowf, "total": report.total, "wall_time": wall_time})

    def totals(self):
        return [r["total"] for r in self.rows]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def adam_update(params, grads, state: AdamState, lr, betas=(0.5, 0.999), eps=1e-8):
    """One bias-corrected Adam step; returns new parameter and state objects."""
    b1, b2 = betas
    t = state.step + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {k} has shape {g.shape}, parameter has {p.shape}")
        m = b1 * state.m.get(k, np.zeros_like(p)) + (1 - b1) * g
        v = b2 * state.v.get(k, np.zeros_like(p)) + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p[k] = (p - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
        new_m[k], new_v[k] = m.astype(p.dtype, copy=False), v.astype(p.dtype, copy=False)
    return new_p, AdamState(t, new_m, new_v)


def _student_forward(x, bundle):
    p1, p2, p3 = encode(x, bundle)
    bn, c_bn = bottleneck_forward(p1, p2, p3, bundle.bottleneck)
    rec, c_dec = decoder_forward(bn, bundle.decoder)
    return (p1, p2, p3), bn, rec, c_bn, c_dec


def _add(grads, new):
    for k, g in new.items():
        grads[k] = grads[k] + g if k in grads else g


def loss_and_grads(x, augs, bundle: ModelBundle, weights: LossWeights):
    """Weighted loss on a batch and its gradient w.r.t. every trainable parameter.

    x: (B, C, H, W) original images. augs: list of N batches shaped like x
    (augs[k][i] is the k-th augmented copy of x[i]), or None/empty for the
    plain distillation objective.
    """
    pyr, bn, rec, c_bn, c_dec = _student_forward(x, bundle)
    l_ori, dl = 0.0, []
    for p, l in zip(pyr, rec):
        v, _, g = cosine_feature_loss_grad(p, l)
        l_ori += v
        dl.append(weights.lambda_ori * g)
    dbn = np.zeros_like(bn)
    grads = {}
    l_abs = l_lowf = 0.0
    if augs:
        n = len(augs)
        s_abs, s_low = weights.lambda_abs / n, weights.lambda_lowf / n
        for xa in augs:
            _, bn_a, rec_a, c_bn_a, c_dec_a = _student_forward(xa, bundle)
            v_abs, g_bn, g_bn_a = cosine_feature_loss_grad(bn, bn_a)
            v_low, g_l1, g_l1_a = cosine_feature_loss_grad(rec.l1, rec_a.l1)
            l_abs += v_abs / n
            l_lowf += v_low / n
            dbn += s_abs * g_bn
            dl[0] = dl[0] + s_low * g_l1
            dbn_a, g_dec = decoder_backward(s_low * g_l1_a, None, None, c_dec_a)
            _add(grads, g_dec)
            _add(grads, bottleneck_backward(dbn_a + s_abs * g_bn_a, c_bn_a))
    dbn_dec, g_dec = decoder_backward(dl[0], dl[1], dl[2], c_dec)
    _add(grads, g_dec)
    _add(grads, bottleneck_backward(dbn + dbn_dec, c_bn))
    report = total_loss(l_ori, l_abs, l_lowf, weights)
    return report, grads


def make_augmented(batch, cfg: TrainConfig, rng):
    """N augmented batches; draws are image-major (all N copies of image 0 first)."""
    n = cfg.n_augments
    copies = [[augmix_normal(img, cfg.augment, rng) for _ in range(n)] for img in batch]
    return [np.stack([c[k] for c in copies]) for k in range(n)]


def train_step(batch, bundle: ModelBundle, cfg: TrainConfig, opt_state: AdamState, rng, batch_index=0):
    """One optimizer step on a batch of normal images.

    Returns the updated bundle, optimizer state and the batch loss report.
    The teacher is shared, untouched, with the input bundle.
    """
    x = np.stack([np.asarray(im) for im in batch]).astype(bundle.dtype, copy=False)
    _check_image(x, bundle.config)
    augs = make_augmented(x, cfg, rng) if cfg.weights.uses_augmentation else None
    try:
        report, grads = loss_and_grads(x, augs, bundle, cfg.weights)
    except NumericError as exc:
        raise NumericError(f"batch {batch_index}: {exc}") from exc
    if not math.isfinite(report.total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise NumericError(f"batch {batch_index}: non-finite loss or gradient")
    params, state = adam_update(bundle.trainable(), grads, opt_state, cfg.learning_rate,
                                cfg.adam_betas, cfg.adam_eps)
    new = bundle.with_trainable({k: params[k] for k in bundle.bottleneck},
                                {k: params[k] for k in bundle.decoder})
    return new, state, report


def _rngs(cfg: TrainConfig):
    shuffle = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    aug = np.random.default_rng(np.random.SeedSequence([cfg.seed, cfg.augment.seed, 1]))
    return shuffle, aug


def train(dataset, cfg: TrainConfig, bundle: ModelBundle):
    """Train for ``cfg.epochs`` epochs over ``dataset`` (a sequence of normal images)."""
    if len(dataset) == 0:
        raise ConfigError("training dataset is empty")
    data = np.stack([np.asarray(im) for im in dataset]).astype(bundle.dtype, copy=False)
    _check_image(data, bundle.config)
    shuffle_rng, aug_rng = _rngs(cfg)
    state = AdamState()
    tlog = TrainLog()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(data))
        sums = np.zeros(4)
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bundle, state, rep = train_step(data[idx], bundle, cfg, state, aug_rng, batch_index=step)
            sums += len(idx) * np.array([rep.l_ori, rep.l_abs, rep.l_lowf, rep.total])
            step += 1
        mean = sums / len(data)
        report = LossReport(*(float(v) for v in mean))
        tlog.append(epoch, report, time.perf_counter() - t0)
        log.info("epoch %d: total=%.5f ori=%.5f abs=%.5f lowf=%.5f", epoch, report.total,
                 report.l_ori, report.l_abs, report.l_lowf)
    meta = dict(bundle.meta)
    meta.update(epochs=cfg.epochs, seed=cfg.seed, steps=step, train_config=cfg.to_dict())
    return bundle.with_trainable(bundle.bottleneck, bundle.decoder, meta), tlog
