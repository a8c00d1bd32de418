"""Reverse-distillation anomaly detection with distribution-invariant training
and feature-distribution-matching test-time augmentation."""
from .augmentation import AugmentConfig, CorruptionSpec, apply_primitive, augmix_normal, corrupt
from .errors import ConfigError, FormatError, NumericError, ShapeError, UndefinedMetricError
from .evaluation import EvalReport, LabeledSample, auroc, benchmark, one_vs_all_split, score_histogram
from .fdm import FdmConfig, efdm_match, moment_match, tta_encode
from .losses import (LossReport, LossWeights, cosine_feature_loss, loss_abs, loss_lowf, loss_ori,
                     total_loss)
from .model import (FeaturePyramid, ModelBundle, ModelConfig, ReconPyramid, bottleneck_embed, decode,
                    encode, forward, init_model, load_checkpoint, load_teacher_weights, save_checkpoint)
from .scoring import InferenceConfig, anomaly_maps, image_score, infer, score_map
from .training import AdamState, TrainConfig, TrainLog, adam_update, train, train_step

__version__ = "0.1.0"
