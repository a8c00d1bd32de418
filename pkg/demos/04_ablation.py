"""
Which part helps under a brightness shift?
==========================================

Trains the plain distillation baseline and the distribution-invariant
variant on the same seed, then scores both with and without test-time
matching. Pass a seed as the first argument (default 0); about a minute
per seed on one core.
"""
import sys
import tempfile
from pathlib import Path

from gnl import data
from gnl.evaluation import benchmark, one_vs_all_split
from gnl.fdm import FdmConfig
from gnl.losses import LossWeights
from gnl.model import ModelConfig, init_model
from gnl.scoring import InferenceConfig
from gnl.training import TrainConfig, train

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
root = Path(tempfile.mkdtemp(prefix="gnl_ablation_"))
manifest = data.generate_synthetic(root, seed=0, n_per_class=100, size=64)
train_set, test_set = one_vs_all_split(data.load_dataset(manifest), "normal")
suites = {"id": test_set,
          "shift": data.labeled_test_set(root / "manifest_shift_brightness.csv", "normal", "shift")}
normals = [s.image for s in train_set]
configs = {"plain": InferenceConfig(), "+ATTA": InferenceConfig(FdmConfig())}

print(f"seed {seed}")
print(f"{'training':>10s} {'inference':>10s} {'ID':>7s} {'shift':>7s}")
for name, weights in (("baseline", LossWeights(1, 0, 0)), ("DINL", LossWeights(1, 1, 1))):
    bundle, _ = train(normals, TrainConfig(seed=seed, weights=weights), init_model(ModelConfig(seed=seed)))
    rep = benchmark(bundle, suites, configs, normals, seed)
    for cname in configs:
        print(f"{name:>10s} {cname:>10s} {rep.auroc(cname, 'id'):7.3f} {rep.auroc(cname, 'shift'):7.3f}")
