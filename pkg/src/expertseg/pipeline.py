"""Dataset-level orchestration over manifests.

Everything here streams image by image: selection accumulates unsupervised
statistics, evaluation accumulates confusion matrices, and fusion evaluation
runs the streaming fusion per image. Worker parallelism uses per-shard
accumulators merged in deterministic order, so results are independent of the
thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .classifiers import (
    Classifier,
    TextBank,
    build_average_classifier,
    build_expert_classifier,
    build_single_template_classifier,
)
from .errors import ValidationError
from .evaluation import (
    ConfusionMatrix,
    TrueExpertTable,
    accumulate_confusion,
    build_true_expert_table,
    iou_per_class,
)
from .fusion import fuse_streaming
from .inference import argmax_map, cosine_logits, upsample_logits
from .manifest import DatasetManifest
from .selection import (
    AccumulatorConfig,
    ExpertSet,
    MetricAccumulator,
    accumulate_image,
    finalize_scores,
    merge,
    select_experts,
)


def subsample_items(manifest: DatasetManifest, count: int | None, seed: int | None):
    """Pick ``count`` items uniformly without replacement, reproducibly."""
    items = manifest.items
    if count is None or count >= len(items):
        return list(items)
    if count < 1:
        raise ValidationError(f"subsample count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    idx = sorted(rng.choice(len(items), size=count, replace=False))
    return [items[i] for i in idx]


def _shard(items, num_shards):
    return [items[i::num_shards] for i in range(num_shards) if items[i::num_shards]]


def select_experts_on_manifest(manifest: DatasetManifest, bank: TextBank,
                               metric: str = "entropy", top_n: int = 4,
                               logit_scale: float = 100.0, resolution: str = "grid",
                               subsample: int | None = None, seed: int | None = None,
                               threads: int = 1) -> ExpertSet:
    """Run unsupervised expert selection over (a subsample of) a manifest."""
    items = subsample_items(manifest, subsample, seed)
    if not items:
        raise ValidationError("manifest has no items to select on")
    cfg = AccumulatorConfig(metric=metric, logit_scale=logit_scale, resolution=resolution)

    def run_shard(shard):
        acc = MetricAccumulator(cfg, bank.num_templates, bank.num_classes)
        for item in shard:
            accumulate_image(acc, bank, item.load_features(), target_size=item.label_size)
        return acc

    shards = _shard(items, max(1, threads))
    if len(shards) == 1:
        total = run_shard(shards[0])
    else:
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            accs = list(pool.map(run_shard, shards))
        total = accs[0]
        for acc in accs[1:]:
            total = merge(total, acc)
    scores, mask = finalize_scores(total)
    return select_experts(scores, mask, top_n, metric,
                          logit_scale=logit_scale, resolution=resolution)


def _predict_labels(features, classifier: Classifier, resolution: str, label_size):
    logits = cosine_logits(features, classifier)
    if resolution == "label":
        logits = upsample_logits(logits, label_size, mode="bilinear")
    return argmax_map(logits)


def _gt_at_resolution(item, resolution: str):
    """Ground truth aligned to the prediction grid.

    Grid-resolution evaluation nearest-downsamples labels to the feature grid.
    """
    gt = item.load_labels()
    if resolution == "label":
        return gt
    hf, wf = item.feature_grid
    h, w = gt.shape
    yi = np.clip(((np.arange(hf) + 0.5) * (h / hf)).astype(int), 0, h - 1)
    xi = np.clip(((np.arange(wf) + 0.5) * (w / wf)).astype(int), 0, w - 1)
    return gt[yi][:, xi]


def evaluate_classifier_on_manifest(manifest: DatasetManifest, classifier: Classifier,
                                    resolution: str = "label") -> ConfusionMatrix:
    """Confusion matrix of a plain argmax classifier over all labeled items."""
    cm = ConfusionMatrix.empty(manifest.num_classes)
    labeled = [it for it in manifest.items if it.label_path is not None]
    if not labeled:
        raise ValidationError("manifest has no labeled items")
    for item in labeled:
        pred = _predict_labels(item.load_features(), classifier, resolution, item.label_size)
        accumulate_confusion(pred, _gt_at_resolution(item, resolution),
                             manifest.num_classes, manifest.ignore_index, into=cm)
    return cm


def expert_classifiers_with_fallback(bank: TextBank, expert_set: ExpertSet,
                                     fallback: Classifier,
                                     renormalize_mean: bool = True) -> list[Classifier]:
    """Per-class expert classifiers; fallback classes use the fallback directly."""
    fallback_set = set(expert_set.fallback_classes)
    lists = [e if e else [0] for e in expert_set.experts]  # placeholder, replaced below
    built = build_expert_classifier(bank, lists, renormalize_mean=renormalize_mean)
    return [fallback if k in fallback_set else built[k] for k in range(len(built))]


def evaluate_fusion_on_manifest(manifest: DatasetManifest, bank: TextBank,
                                expert_set: ExpertSet, strategy: str = "highest",
                                logit_scale: float = 100.0, resolution: str = "label",
                                renormalize_mean: bool = True):
    """Evaluate fused expert predictions. Returns (ConfusionMatrix, fallback fraction)."""
    fallback = build_average_classifier(bank, renormalize_mean=renormalize_mean)
    experts = expert_classifiers_with_fallback(bank, expert_set, fallback,
                                               renormalize_mean=renormalize_mean)
    cm = ConfusionMatrix.empty(manifest.num_classes)
    fallback_px = 0
    total_px = 0
    labeled = [it for it in manifest.items if it.label_path is not None]
    if not labeled:
        raise ValidationError("manifest has no labeled items")
    for item in labeled:
        target = item.label_size if resolution == "label" else None
        pred, stats = fuse_streaming(item.load_features(), experts, fallback,
                                     strategy=strategy, logit_scale=logit_scale,
                                     target_size=target)
        accumulate_confusion(pred, _gt_at_resolution(item, resolution),
                             manifest.num_classes, manifest.ignore_index, into=cm)
        fallback_px += stats.fallback_pixels
        total_px += stats.total_pixels
    return cm, (fallback_px / total_px if total_px else 0.0)


def true_experts_on_manifest(manifest: DatasetManifest, bank: TextBank,
                             resolution: str = "label",
                             renormalize_mean: bool = True) -> TrueExpertTable:
    """Labeled evaluation of all single-template classifiers and the baseline."""
    baseline = build_average_classifier(bank, renormalize_mean=renormalize_mean)
    cm = evaluate_classifier_on_manifest(manifest, baseline, resolution)
    iou_base, _ = iou_per_class(cm)
    per_template = np.zeros((bank.num_templates, bank.num_classes))
    for m in range(bank.num_templates):
        clf = build_single_template_classifier(bank, m)
        cm_m = evaluate_classifier_on_manifest(manifest, clf, resolution)
        per_template[m], _ = iou_per_class(cm_m)
    return build_true_expert_table(per_template, iou_base)
