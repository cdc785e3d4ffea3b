"""Fusion of per-class expert classifier predictions into one label map.

Each of the K expert classifiers produces a full K-class soft map. A pixel's
"claimants" are the experts whose argmax at that pixel equals their own class
of expertise. Strategies:

* ``highest``     -- among claimants, the expert with the highest own-class
                     probability wins; no claimant -> fallback classifier
* ``average``     -- argmax of the claimants' summed probability vectors;
                     no claimant -> fallback
* ``default``     -- exactly one claimant wins; conflict or none -> fallback
* ``average-all`` -- argmax of the sum of all K expert probability vectors

``fuse`` materializes all K soft maps; ``fuse_streaming`` computes the same
labels holding only running per-pixel reductions. Ties always break toward
the lower class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifiers import Classifier
from .errors import ValidationError
from .inference import DEFAULT_LOGIT_SCALE, cosine_logits, softmax_map, upsample_logits

STRATEGIES = ("highest", "average", "default", "average-all")


@dataclass(frozen=True)
class FallbackStats:
    fallback_pixels: int
    total_pixels: int

    @property
    def fraction(self) -> float:
        return self.fallback_pixels / self.total_pixels if self.total_pixels else 0.0


def _expert_probs(features, classifier, logit_scale, target_size):
    logits = cosine_logits(features, classifier)
    if target_size is not None:
        logits = upsample_logits(logits, target_size, mode="bilinear")
    return softmax_map(logits, logit_scale)


def _check_args(expert_classifiers, fallback, strategy):
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown fusion strategy {strategy!r}")
    k_count = len(expert_classifiers)
    for clf in expert_classifiers:
        if clf.num_classes != k_count:
            raise ValidationError(
                f"expert classifier has {clf.num_classes} rows, expected {k_count}"
            )
    if fallback is None and strategy in ("highest", "average", "default"):
        raise ValidationError(f"strategy {strategy!r} requires a fallback classifier")
    if fallback is not None and fallback.num_classes != k_count:
        raise ValidationError("fallback classifier row count mismatch")


def fuse(features: np.ndarray, expert_classifiers: list[Classifier],
         fallback: Classifier | None, strategy: str = "highest",
         logit_scale: float = DEFAULT_LOGIT_SCALE,
         target_size: tuple[int, int] | None = None) -> tuple[np.ndarray, FallbackStats]:
    """Reference fusion holding all K expert soft maps in memory.

    Summations iterate experts in ascending class order, matching the
    streaming route bit for bit.
    """
    _check_args(expert_classifiers, fallback, strategy)
    k_count = len(expert_classifiers)
    stack = np.stack([_expert_probs(features, clf, logit_scale, target_size)
                      for clf in expert_classifiers])  # (K, H, W, K)
    fallback_probs = (_expert_probs(features, fallback, logit_scale, target_size)
                      if fallback is not None else None)
    h, w = stack.shape[1:3]
    total = h * w

    if strategy == "average-all":
        prob_sum = np.zeros((h, w, k_count))
        for probs in stack:
            prob_sum += probs
        return np.argmax(prob_sum, axis=-1), FallbackStats(0, total)

    own = stack[np.arange(k_count), ..., np.arange(k_count)]  # (K, H, W)
    claims = np.argmax(stack, axis=-1) == np.arange(k_count)[:, None, None]
    claim_count = claims.sum(axis=0)
    fallback_labels = np.argmax(fallback_probs, axis=-1)

    if strategy == "highest":
        masked = np.where(claims, own, -np.inf)
        winner = np.argmax(masked, axis=0)
        use_fallback = claim_count == 0
        labels = np.where(use_fallback, fallback_labels, winner)
    elif strategy == "average":
        prob_sum = np.zeros((h, w, k_count))
        for k in range(k_count):
            prob_sum += np.where(claims[k][..., None], stack[k], 0.0)
        use_fallback = claim_count == 0
        labels = np.where(use_fallback, fallback_labels, np.argmax(prob_sum, axis=-1))
    else:  # default
        sole = np.argmax(claims, axis=0)
        use_fallback = claim_count != 1
        labels = np.where(use_fallback, fallback_labels, sole)
    return labels, FallbackStats(int(use_fallback.sum()), total)


def fuse_streaming(features: np.ndarray, expert_classifiers: list[Classifier],
                   fallback: Classifier | None, strategy: str = "highest",
                   logit_scale: float = DEFAULT_LOGIT_SCALE,
                   target_size: tuple[int, int] | None = None) -> tuple[np.ndarray, FallbackStats]:
    """Same labels as :func:`fuse`, computing expert maps one at a time."""
    _check_args(expert_classifiers, fallback, strategy)
    fallback_probs = (_expert_probs(features, fallback, logit_scale, target_size)
                      if fallback is not None else None)
    probs_iter = (_expert_probs(features, clf, logit_scale, target_size)
                  for clf in expert_classifiers)
    return _reduce(probs_iter, len(expert_classifiers), fallback_probs, strategy)


def _reduce(probs_iter, k_count, fallback_probs, strategy):
    """Sequential per-expert reduction shared by both fusion routes.

    Iterates experts in ascending class order so summation order, argmax tie
    breaking, and strict-greater updates are identical for the materialized
    and streaming paths.
    """
    best_own = None  # highest own-class prob among claimants so far
    best_k = None
    claim_count = None
    prob_sum = None  # claimants' (average) or everyone's (average-all) prob sum

    for k, probs in enumerate(probs_iter):
        if best_own is None:
            h, w = probs.shape[:2]
            best_own = np.full((h, w), -np.inf)
            best_k = np.zeros((h, w), dtype=np.int64)
            claim_count = np.zeros((h, w), dtype=np.int64)
            if strategy in ("average", "average-all"):
                prob_sum = np.zeros((h, w, k_count))
        claims = np.argmax(probs, axis=-1) == k
        own = probs[..., k]
        if strategy == "average-all":
            prob_sum += probs
            continue
        claim_count += claims
        better = claims & (own > best_own)
        best_own = np.where(better, own, best_own)
        best_k = np.where(better, k, best_k)
        if strategy == "average":
            prob_sum += np.where(claims[..., None], probs, 0.0)

    total = int(best_own.size)
    if strategy == "average-all":
        return np.argmax(prob_sum, axis=-1), FallbackStats(0, total)

    fallback_labels = np.argmax(fallback_probs, axis=-1)
    if strategy == "highest":
        use_fallback = claim_count == 0
        labels = np.where(use_fallback, fallback_labels, best_k)
    elif strategy == "average":
        use_fallback = claim_count == 0
        labels = np.where(use_fallback, fallback_labels, np.argmax(prob_sum, axis=-1))
    else:  # default: only a unique claimant decides
        use_fallback = claim_count != 1
        labels = np.where(use_fallback, fallback_labels, best_k)
    return labels, FallbackStats(int(use_fallback.sum()), total)
