"""Language-aware multi-teacher knowledge distillation at desk scale."""

__version__ = "0.1.0"

from .data import (Dataset, DatasetManifest, GeneratorSpec, LabeledSample, desk_spec, generate_dataset,
                   load_jsonl, make_batches, select_split, table1_spec, write_jsonl)
from .distill import DistillConfig, MtkdDiagnostics, batch_loss, ft_loss, kd_loss, mtkd_loss
from .metrics import (ConfusionMatrix, MetricReport, bootstrap_ci, compute_metrics, confusion, evaluate,
                      render_report)
from .model import (Checkpoint, Classifier, OptimizerState, backward, forward, init_classifier, init_optimizer,
                    load_checkpoint, optimizer_step, save_checkpoint)
from .numerics import (cosine_similarity, cross_entropy, cross_entropy_grad, finite_difference_check,
                       kl_divergence, sharpen_weights, softmax_with_temperature)
