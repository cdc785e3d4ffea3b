"""Training-free expert prompt-template selection and fusion for
open-vocabulary dense segmentation."""

__version__ = "0.1.0"

from .classifiers import (
    Classifier,
    TextBank,
    build_average_classifier,
    build_expert_classifier,
    build_single_template_classifier,
)
from .errors import TensorFormatError, ValidationError
from .estimator import ExpertFusionSegmenter, TemplateExpertSelector
from .evaluation import (
    ConfusionMatrix,
    TrueExpertTable,
    accumulate_confusion,
    build_true_expert_table,
    expert_quality,
    iou_per_class,
    mean_iou,
    oracle_best_experts,
    oracle_ratio_experts,
    transfer_experts,
)
from .fusion import FallbackStats, fuse, fuse_streaming
from .inference import (
    argmax_map,
    cosine_logits,
    pixel_entropy,
    softmax_map,
    upsample_logits,
)
from .manifest import DatasetManifest, load_manifest, save_manifest
from .selection import (
    AccumulatorConfig,
    ExpertSet,
    MetricAccumulator,
    accumulate_image,
    finalize_scores,
    merge,
    select_experts,
)
from .synthetic import SynthSpec, generate, load_text_bank
from .tensorio import read_tensor, write_tensor
