"""One-vs-all evaluation, AUROC and score histograms."""
from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, UndefinedMetricError
from .scoring import InferenceConfig, infer

REPORT_COLUMNS = ("config_name", "suite", "n_normal", "n_anomaly", "auroc")
SCORE_COLUMNS = ("config_name", "suite", "sample_id", "label", "score")
HIST_COLUMNS = ("bin_left", "bin_right", "count_normal", "count_anomaly")


@dataclass
class Sample:
    """An image from a multi-class dataset."""
    sample_id: str
    image: np.ndarray
    class_name: str
    split: str


@dataclass
class LabeledSample:
    sample_id: str
    image: np.ndarray
    label: int
    suite: str = "id"

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ConfigError(f"label must be 0 or 1, got {self.label}")


@dataclass
class SuiteResult:
    config_name: str
    suite: str
    n_normal: int
    n_anomaly: int
    auroc: float
    scores: list = field(default_factory=list)  # (sample_id, label, score), sorted by id


@dataclass
class EvalReport:
    results: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0

    def auroc(self, config_name, suite):
        for r in self.results:
            if r.config_name == config_name and r.suite == suite:
                return r.auroc
        raise KeyError((config_name, suite))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for r in self.results:
                w.writerow([r.config_name, r.suite, r.n_normal, r.n_anomaly, repr(r.auroc)])

    def scores_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SCORE_COLUMNS)
            for r in self.results:
                for sid, label, score in r.scores:
                    w.writerow([r.config_name, r.suite, sid, label, repr(score)])


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(anomaly score > normal score), ties counted 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ConfigError("scores and labels must be 1-D and equally long")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != len(labels):
        raise ConfigError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one normal and one anomalous sample")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def one_vs_all_split(dataset, normal_class: str):
    """Train on the normal class's training images; test on every class's test images."""
    if not any(s.class_name == normal_class for s in dataset):
        raise ConfigError(f"class {normal_class!r} not present in dataset")
    train = [s for s in dataset if s.split == "train" and s.class_name == normal_class]
    test = [LabeledSample(s.sample_id, s.image, int(s.class_name != normal_class))
            for s in dataset if s.split == "test"]
    return train, test


def sample_rng(seed: int, sample_id: str):
    """Per-sample generator keyed by id, so scores do not depend on evaluation order."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(sample_id.encode("utf-8"))]))


def score_suite(bundle, samples, cfg: InferenceConfig, style_pool=None, seed=0):
    """Scores for each sample, as (sample_id, label, score) sorted by sample id."""
    out = []
    for s in samples:
        score, _ = infer(s.image, bundle, cfg, style_pool, sample_rng(seed, s.sample_id))
        out.append((s.sample_id, s.label, score))
    return sorted(out)


def benchmark(bundle, suites, configs, style_pool=None, seed=0) -> EvalReport:
    """AUROC of every (inference config, suite) pair.

    suites: mapping suite name -> list of LabeledSample.
    configs: mapping config name -> InferenceConfig.
    """
    report = EvalReport(config={name: c.to_dict() for name, c in configs.items()}, seed=seed)
    for cname, cfg in configs.items():
        for sname, samples in suites.items():
            scored = score_suite(bundle, samples, cfg, style_pool, seed)
            labels = [lab for _, lab, _ in scored]
            report.results.append(SuiteResult(
                cname, sname, labels.count(0), labels.count(1),
                auroc([sc for _, _, sc in scored], labels), scored))
    return report


def score_histogram(scores, labels, n_bins: int = 20):
    """Shared-edge histogram of normal and anomalous scores.

    Returns (edges, normal_counts, anomaly_counts); edges span [min, max].
    """
    if n_bins < 2:
        raise ConfigError("n_bins must be >= 2")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise ConfigError("no scores to histogram")
    lo, hi = scores.min(), scores.max()
    edges = np.linspace(lo, hi, n_bins + 1) if hi > lo else np.linspace(lo - 0.5, lo + 0.5, n_bins + 1)
    normal, _ = np.histogram(scores[labels == 0], bins=edges)
    anomaly, _ = np.histogram(scores[labels == 1], bins=edges)
    return edges, normal, anomaly


def write_histogram_csv(path, edges, normal, anomaly):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HIST_COLUMNS)
        for i in range(len(normal)):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(normal[i]), int(anomaly[i])])


def plot_histogram(path, edges, normal, anomaly, title=None):
    """Overlaid normal/anomalous score histogram as a vector graphic."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "gnl"  # stable element ids, so equal inputs give equal files
    fig, ax = plt.subplots(figsize=(5, 3.5))
    widths = np.diff(edges)
    ax.bar(edges[:-1], normal, width=widths, align="edge", alpha=0.6, label="normal")
    ax.bar(edges[:-1], anomaly, width=widths, align="edge", alpha=0.6, label="anomaly")
    ax.set_xlabel("anomaly score")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    plt.close(fig)
