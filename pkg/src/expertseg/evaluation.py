"""Confusion-matrix IoU, true-expert extraction, oracles, and expert transfer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .selection import ExpertSet


@dataclass
class ConfusionMatrix:
    """K x K counts, rows ground truth, cols prediction; ignore_index excluded."""

    counts: np.ndarray

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(counts=np.zeros((num_classes, num_classes), dtype=np.uint64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise ValidationError("confusion matrix shape mismatch")
        return ConfusionMatrix(counts=self.counts + other.counts)


def accumulate_confusion(pred: np.ndarray, gt: np.ndarray, num_classes: int,
                         ignore_index: int, into: ConfusionMatrix | None = None) -> ConfusionMatrix:
    """Add one image's pixel counts; gt pixels equal to ignore_index are skipped."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    keep = gt != ignore_index
    p = pred[keep].astype(np.int64)
    g = gt[keep].astype(np.int64)
    if p.size and (p.min() < 0 or p.max() >= num_classes):
        raise ValidationError("prediction label outside [0, K)")
    if g.size and (g.min() < 0 or g.max() >= num_classes):
        raise ValidationError("ground-truth label outside [0, K)")
    cm = into if into is not None else ConfusionMatrix.empty(num_classes)
    flat = np.bincount(g * num_classes + p, minlength=num_classes * num_classes)
    cm.counts += flat.reshape(num_classes, num_classes).astype(np.uint64)
    return cm


def iou_per_class(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-class IoU and a presence mask (union > 0). Absent classes get IoU 0."""
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    union = tp + fp + fn
    present = union > 0
    iou = np.zeros_like(tp)
    np.divide(tp, union, out=iou, where=present)
    return iou, present


def mean_iou(cm: ConfusionMatrix) -> float:
    """mIoU over classes present in ground truth or prediction (union > 0)."""
    iou, present = iou_per_class(cm)
    if not present.any():
        return 0.0
    return float(iou[present].mean())


@dataclass
class TrueExpertTable:
    """Label-based expert ground truth: per-template and baseline IoU per class."""

    iou: np.ndarray        # (M, K) per single-template classifier
    iou_baseline: np.ndarray  # (K,) for the averaged classifier
    experts: list[set[int]]   # per class: templates with strictly higher IoU

    @property
    def num_templates(self) -> int:
        return self.iou.shape[0]

    @property
    def num_classes(self) -> int:
        return self.iou.shape[1]


def build_true_expert_table(iou_per_template: np.ndarray, iou_baseline: np.ndarray) -> TrueExpertTable:
    """Derive per-class expert sets by strict IoU comparison with the baseline."""
    iou_per_template = np.asarray(iou_per_template, dtype=np.float64)
    iou_baseline = np.asarray(iou_baseline, dtype=np.float64)
    if iou_per_template.ndim != 2 or iou_per_template.shape[1] != iou_baseline.shape[0]:
        raise ValidationError("per-template IoU table shape mismatch")
    experts = [
        {int(m) for m in np.nonzero(iou_per_template[:, k] > iou_baseline[k])[0]}
        for k in range(iou_baseline.shape[0])
    ]
    return TrueExpertTable(iou=iou_per_template, iou_baseline=iou_baseline, experts=experts)


def expert_quality(estimated: ExpertSet, truth: TrueExpertTable) -> tuple[np.ndarray, float]:
    """Percentage of estimated experts that are true experts, per class and mean.

    The denominator is always N, also when fewer than N templates were valid.
    """
    if estimated.num_classes != truth.num_classes:
        raise ValidationError("class count mismatch between estimate and truth")
    n = estimated.top_n
    rho = np.array([
        100.0 * len(set(estimated.experts[k]) & truth.experts[k]) / n
        for k in range(truth.num_classes)
    ])
    return rho, float(rho.mean())


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def oracle_ratio_experts(truth: TrueExpertTable, ratio: float, top_n: int, seed: int,
                         logit_scale: float = 100.0) -> tuple[ExpertSet, list[int]]:
    """Sample per-class expert sets with a fixed ratio of true experts.

    Returns the expert set and the list of classes where the requested split
    had to be clamped to the available expert/non-expert pool sizes.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError(f"ratio must be in [0, 1], got {ratio}")
    rng = np.random.default_rng(seed)
    m_count, k_count = truth.num_templates, truth.num_classes
    experts_out, clamped = [], []
    for k in range(k_count):
        pool_true = sorted(truth.experts[k])
        pool_other = sorted(set(range(m_count)) - truth.experts[k])
        want_true = _round_half_up(ratio * top_n)
        n_true = min(want_true, len(pool_true))
        n_other = min(top_n - n_true, len(pool_other))
        if n_true != want_true or n_true + n_other != top_n:
            clamped.append(k)
        chosen = list(rng.choice(pool_true, size=n_true, replace=False)) if n_true else []
        chosen += list(rng.choice(pool_other, size=n_other, replace=False)) if n_other else []
        experts_out.append(sorted(int(m) for m in chosen))
    es = ExpertSet(
        experts=experts_out,
        scores=[[] for _ in range(k_count)],
        top_n=top_n,
        metric="entropy",
        logit_scale=logit_scale,
        resolution="grid",
        fallback_classes=[k for k, e in enumerate(experts_out) if not e],
        source=f"oracle-ratio:{ratio}:seed={seed}",
    )
    return es, clamped


def oracle_best_experts(truth: TrueExpertTable, top_n: int,
                        logit_scale: float = 100.0) -> ExpertSet:
    """Per class, the top-N templates by labeled IoU; ties to the lower index."""
    if top_n < 1:
        raise ValidationError(f"top_n must be >= 1, got {top_n}")
    experts_out, scores_out = [], []
    m_indices = np.arange(truth.num_templates)
    for k in range(truth.num_classes):
        order = m_indices[np.lexsort((m_indices, -truth.iou[:, k]))]
        chosen = order[: min(top_n, order.size)]
        experts_out.append([int(m) for m in chosen])
        scores_out.append([float(truth.iou[m, k]) for m in chosen])
    return ExpertSet(
        experts=experts_out,
        scores=scores_out,
        top_n=top_n,
        metric="entropy",
        logit_scale=logit_scale,
        resolution="grid",
        fallback_classes=[],
        source="oracle-best",
    )


def _normalize_name(name: str, aliases: dict[str, str] | None = None) -> str:
    key = name.strip().lower()
    if aliases:
        key = aliases.get(key, key)
    return key


def transfer_experts(source: ExpertSet, source_classes: list[str], target_classes: list[str],
                     aliases: dict[str, str] | None = None) -> ExpertSet:
    """Carry expert sets over to a target class list by class-name matching.

    Target classes without a source match are flagged for the averaged-classifier
    fallback, so inherited plus fallback always covers every target class.
    """
    if source.num_classes != len(source_classes):
        raise ValidationError("source expert set / class list length mismatch")
    lookup = {}
    for k, name in enumerate(source_classes):
        lookup.setdefault(_normalize_name(name, aliases), k)
    experts_out, scores_out, fallback = [], [], []
    for k, name in enumerate(target_classes):
        src = lookup.get(_normalize_name(name, aliases))
        if src is None or not source.experts[src]:
            experts_out.append([])
            scores_out.append([])
            fallback.append(k)
        else:
            experts_out.append(list(source.experts[src]))
            scores_out.append(list(source.scores[src]))
    return ExpertSet(
        experts=experts_out,
        scores=scores_out,
        top_n=source.top_n,
        metric=source.metric,
        logit_scale=source.logit_scale,
        resolution=source.resolution,
        fallback_classes=fallback,
        source=f"transfer:{source.source or 'unknown'}",
    )
