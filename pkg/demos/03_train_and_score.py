"""
Train a small model and look at its scores
==========================================

Generates the synthetic dataset, trains with the distribution-invariant
losses on the default schedule (under a minute), then scores the test
split with and without test-time feature matching, before and after a
brightness shift.
"""
import sys
from pathlib import Path

import numpy as np

from gnl import data
from gnl.evaluation import benchmark, one_vs_all_split, plot_histogram, score_histogram
from gnl.fdm import FdmConfig
from gnl.model import ModelConfig, init_model, save_checkpoint
from gnl.scoring import InferenceConfig, infer, save_heat_image
from gnl.training import TrainConfig, train

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "train_and_score"
manifest = data.generate_synthetic(out / "data", seed=0, n_per_class=100, size=64)

train_set, test_set = one_vs_all_split(data.load_dataset(manifest), "normal")
shifted = data.labeled_test_set(out / "data" / "manifest_shift_brightness.csv", "normal", "shift")
normals = [s.image for s in train_set]

bundle, log = train(normals, TrainConfig(epochs=20, seed=0), init_model(ModelConfig(seed=0)))
for row in log.rows:
    print("epoch {epoch}  total {total:.4f}  (ori {l_ori:.4f}, abs {l_abs:.4f}, lowf {l_lowf:.4f})".format(**row))
save_checkpoint(bundle, out / "model.gnl")

configs = {"plain": InferenceConfig(), "tta": InferenceConfig(FdmConfig(alpha=0.5))}
report = benchmark(bundle, {"id": test_set, "shift": shifted}, configs, normals, seed=0)
for r in report.results:
    print(f"{r.config_name:>6s} {r.suite:>6s}  AUROC {r.auroc:.3f}")
report.to_csv(out / "report.csv")

# one map per class, before and after the shift
for s in (test_set[0], test_set[-1], shifted[-1]):
    score, smap = infer(s.image, bundle, configs["plain"])
    name = s.sample_id.replace("/", "_").replace(".png", "")
    save_heat_image(smap, out / f"map_{name}.png", vmax=float(smap.max()) or 1.0)
    print(f"{s.sample_id}: label {s.label}, score {score:.3f}")

scores = [sc for _, _, sc in report.results[1].scores]
labels = [lab for _, lab, _ in report.results[1].scores]
edges, normal, anomalous = score_histogram(np.array(scores), np.array(labels), 15)
plot_histogram(out / "shift_plain_hist.svg", edges, normal, anomalous, title="plain scoring, shifted test set")
print("outputs in", out)
