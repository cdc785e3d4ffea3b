"""Unsupervised per-(template, class) statistics and expert-template selection.

A :class:`MetricAccumulator` streams over unlabeled feature maps: for every
single-template classifier it runs dense inference and pools a per-pixel
statistic into (template, class) buckets keyed by the predicted class.
Accumulators from parallel shards merge exactly; finalized scores rank the
templates per class and the top-N become that class's estimated experts.

Supported metrics:

* ``entropy``    -- mean prediction entropy, lower is better
* ``avgprob``    -- mean probability of the predicted class, higher is better
* ``mano``       -- mean p-norm of normalized prediction vectors, higher is better
* ``iti``        -- inter-class separation over intra-class spread of predicted
                    pixel features, higher is better
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifiers import TextBank, build_single_template_classifier
from .errors import ValidationError
from .inference import (
    DEFAULT_LOGIT_SCALE,
    cosine_logits,
    pixel_entropy,
    softmax_map,
    upsample_logits,
)

METRICS = ("entropy", "avgprob", "mano", "iti")
LOWER_IS_BETTER = {"entropy": True, "avgprob": False, "mano": False, "iti": False}

DEFAULT_TOP_N = 4
MANO_P = 4


@dataclass(frozen=True)
class AccumulatorConfig:
    metric: str = "entropy"
    logit_scale: float = DEFAULT_LOGIT_SCALE
    resolution: str = "grid"  # "grid" or "label"
    mano_p: int = MANO_P
    mano_normalizer: str = "softmax"  # or "taylor"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}")
        if self.resolution not in ("grid", "label"):
            raise ValidationError(f"unknown resolution mode {self.resolution!r}")
        if self.mano_normalizer not in ("softmax", "taylor"):
            raise ValidationError(f"unknown mano normalizer {self.mano_normalizer!r}")


@dataclass
class ItiImageStats:
    """Per-image mean feature of pixels predicted as each class, per template."""

    means: np.ndarray  # (M, K, D)
    present: np.ndarray  # (M, K) bool


@dataclass
class MetricAccumulator:
    config: AccumulatorConfig
    num_templates: int
    num_classes: int
    sums: np.ndarray = None
    counts: np.ndarray = None
    iti_images: list[ItiImageStats] = field(default_factory=list)

    def __post_init__(self):
        shape = (self.num_templates, self.num_classes)
        if self.sums is None:
            self.sums = np.zeros(shape, dtype=np.float64)
        if self.counts is None:
            self.counts = np.zeros(shape, dtype=np.uint64)


def _softrun(probs: np.ndarray, scaled_logits: np.ndarray, normalizer: str) -> np.ndarray:
    if normalizer == "softmax":
        return probs
    # Taylor expansion of exp around 0, clipped nonnegative, renormalized.
    t = 1.0 + scaled_logits + 0.5 * scaled_logits**2
    t = np.maximum(t, 0.0)
    return t / t.sum(axis=-1, keepdims=True)


def accumulate_image(acc: MetricAccumulator, bank: TextBank, features: np.ndarray,
                     target_size: tuple[int, int] | None = None) -> MetricAccumulator:
    """Fold one image's statistics into ``acc`` (mutated in place and returned)."""
    if bank.num_templates != acc.num_templates or bank.num_classes != acc.num_classes:
        raise ValidationError("bank shape does not match accumulator")
    cfg = acc.config
    if cfg.resolution == "label" and target_size is None:
        raise ValidationError("label-resolution accumulation needs target_size")

    image_stats = None
    if cfg.metric == "iti":
        if cfg.resolution == "label":
            raise ValidationError("iti metric runs at feature-grid resolution only")
        image_stats = ItiImageStats(
            means=np.zeros((acc.num_templates, acc.num_classes, np.asarray(features).shape[-1])),
            present=np.zeros((acc.num_templates, acc.num_classes), dtype=bool),
        )
        acc.iti_images.append(image_stats)

    for m in range(bank.num_templates):
        clf = build_single_template_classifier(bank, m)
        logits = cosine_logits(features, clf)
        if cfg.resolution == "label":
            logits = upsample_logits(logits, target_size, mode="bilinear")
        probs = softmax_map(logits, cfg.logit_scale)
        pred = np.argmax(probs, axis=-1)

        if cfg.metric == "entropy":
            stat = pixel_entropy(probs)
        elif cfg.metric == "avgprob":
            stat = np.take_along_axis(probs, pred[..., None], axis=-1)[..., 0]
        elif cfg.metric == "mano":
            scaled = np.asarray(logits, dtype=np.float64) * cfg.logit_scale
            scaled = scaled - scaled.max(axis=-1, keepdims=True)
            s = _softrun(probs, scaled, cfg.mano_normalizer)
            stat = (np.abs(s) ** cfg.mano_p).sum(axis=-1) / bank.num_classes
        else:  # iti: counts still track predictions; stats are feature centroids
            stat = None

        flat_pred = pred.ravel()
        binc = np.bincount(flat_pred, minlength=bank.num_classes).astype(np.uint64)
        acc.counts[m] += binc
        if stat is not None:
            acc.sums[m] += np.bincount(flat_pred, weights=stat.ravel(),
                                       minlength=bank.num_classes)

        if image_stats is not None:
            feats = np.asarray(features, dtype=np.float64)
            feats = feats / np.linalg.norm(feats, axis=-1, keepdims=True)
            flat_feats = feats.reshape(-1, feats.shape[-1])
            for k in np.nonzero(binc)[0]:
                image_stats.means[m, k] = flat_feats[flat_pred == k].mean(axis=0)
                image_stats.present[m, k] = True
    return acc


def merge(a: MetricAccumulator, b: MetricAccumulator) -> MetricAccumulator:
    """Combine two shard accumulators; configs must match exactly."""
    if a.config != b.config:
        raise ValidationError("cannot merge accumulators with different configs")
    if (a.num_templates, a.num_classes) != (b.num_templates, b.num_classes):
        raise ValidationError("cannot merge accumulators with different shapes")
    return MetricAccumulator(
        config=a.config,
        num_templates=a.num_templates,
        num_classes=a.num_classes,
        sums=a.sums + b.sums,
        counts=a.counts + b.counts,
        iti_images=list(a.iti_images) + list(b.iti_images),
    )


def finalize_scores(acc: MetricAccumulator) -> tuple[np.ndarray, np.ndarray]:
    """Return (scores (M, K) f64, validity mask (M, K) bool).

    A (template, class) pair is valid only if it predicted at least one pixel.
    """
    mask = acc.counts > 0
    scores = np.zeros_like(acc.sums)
    if acc.config.metric == "iti":
        return _finalize_iti(acc, mask)
    np.divide(acc.sums, acc.counts, out=scores, where=mask, casting="unsafe")
    if acc.config.metric == "mano":
        scores = np.where(mask, scores ** (1.0 / acc.config.mano_p), 0.0)
    return scores, mask


def _finalize_iti(acc: MetricAccumulator, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m_count, k_count = acc.counts.shape
    scores = np.zeros((m_count, k_count))
    valid = np.zeros((m_count, k_count), dtype=bool)
    for m in range(m_count):
        present = np.stack([img.present[m] for img in acc.iti_images]) \
            if acc.iti_images else np.zeros((0, k_count), dtype=bool)
        means = np.stack([img.means[m] for img in acc.iti_images]) \
            if acc.iti_images else None
        centroids = {}
        for k in range(k_count):
            imgs = np.nonzero(present[:, k])[0]
            if imgs.size:
                centroids[k] = means[imgs, k].mean(axis=0)
        for k, f_bar in centroids.items():
            imgs = np.nonzero(present[:, k])[0]
            d_intra = np.mean(np.sum((means[imgs, k] - f_bar) ** 2, axis=-1))
            others = [centroids[j] for j in centroids if j != k]
            if not others:
                continue
            d_inter = np.mean([np.sum((f_bar - o) ** 2) for o in others])
            scores[m, k] = np.inf if d_intra == 0 else d_inter / d_intra
            valid[m, k] = True
    return scores, valid & mask


@dataclass(frozen=True)
class ExpertSet:
    """Per-class ordered expert template indices with provenance."""

    experts: list[list[int]]  # length K, each ordered best-first, len <= N
    scores: list[list[float]]
    top_n: int
    metric: str
    logit_scale: float
    resolution: str
    fallback_classes: list[int]
    source: str | None = None

    @property
    def num_classes(self) -> int:
        return len(self.experts)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "N": self.top_n,
            "logit_scale": self.logit_scale,
            "resolution": self.resolution,
            "fallback_classes": list(self.fallback_classes),
            "experts": {str(k): list(v) for k, v in enumerate(self.experts)},
            "scores": {str(k): list(v) for k, v in enumerate(self.scores)},
            "source": self.source,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExpertSet":
        k_count = len(doc["experts"])
        experts = [list(map(int, doc["experts"][str(k)])) for k in range(k_count)]
        scores = [list(map(float, doc.get("scores", {}).get(str(k), []))) for k in range(k_count)]
        return cls(
            experts=experts,
            scores=scores,
            top_n=int(doc["N"]),
            metric=str(doc["metric"]),
            logit_scale=float(doc["logit_scale"]),
            resolution=str(doc.get("resolution", "grid")),
            fallback_classes=list(map(int, doc.get("fallback_classes", []))),
            source=doc.get("source"),
        )

    @classmethod
    def load(cls, path) -> "ExpertSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def select_experts(scores: np.ndarray, mask: np.ndarray, top_n: int, metric: str,
                   logit_scale: float = DEFAULT_LOGIT_SCALE, resolution: str = "grid",
                   source: str | None = None) -> ExpertSet:
    """Rank valid templates per class and keep the best ``top_n``.

    Ties break toward the lower template index. Classes with no valid
    template land in ``fallback_classes``.
    """
    if top_n < 1:
        raise ValidationError(f"top_n must be >= 1, got {top_n}")
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}")
    lower = LOWER_IS_BETTER[metric]
    k_count = scores.shape[1]
    experts, per_scores, fallback = [], [], []
    for k in range(k_count):
        valid = np.nonzero(mask[:, k])[0]
        if valid.size == 0:
            experts.append([])
            per_scores.append([])
            fallback.append(k)
            continue
        key = scores[valid, k] if lower else -scores[valid, k]
        order = valid[np.lexsort((valid, key))]
        chosen = order[: min(top_n, order.size)]
        experts.append([int(m) for m in chosen])
        per_scores.append([float(scores[m, k]) for m in chosen])
    return ExpertSet(
        experts=experts,
        scores=per_scores,
        top_n=int(top_n),
        metric=metric,
        logit_scale=float(logit_scale),
        resolution=resolution,
        fallback_classes=fallback,
        source=source,
    )
