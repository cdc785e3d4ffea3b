"""Scikit-learn style estimators wrapping selection and fusion.

``X`` is a list of (Hf, Wf, D) dense feature maps (grids may differ per
image). ``TemplateExpertSelector.fit`` is unsupervised: it streams the maps
and estimates per-class expert templates. ``ExpertFusionSegmenter`` predicts
fused label maps, selecting experts during ``fit`` unless a precomputed
expert set is supplied.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .classifiers import TextBank, build_average_classifier
from .errors import ValidationError
from .fusion import fuse_streaming
from .pipeline import expert_classifiers_with_fallback
from .selection import (
    AccumulatorConfig,
    ExpertSet,
    MetricAccumulator,
    accumulate_image,
    finalize_scores,
    select_experts,
)


def check_feature_maps(X, embed_dim: int | None = None):
    """Validate a list of (Hf, Wf, D) maps with a shared embedding dim."""
    maps = []
    for i, fm in enumerate(X):
        fm = np.asarray(fm)
        if fm.ndim != 3:
            raise ValidationError(f"X[{i}] must be (Hf, Wf, D), got shape {fm.shape}")
        if embed_dim is None:
            embed_dim = fm.shape[-1]
        elif fm.shape[-1] != embed_dim:
            raise ValidationError(
                f"X[{i}] has embedding dim {fm.shape[-1]}, expected {embed_dim}"
            )
        maps.append(fm)
    if not maps:
        raise ValidationError("X must contain at least one feature map")
    return maps


class TemplateExpertSelector(BaseEstimator):
    """Unsupervised estimator of per-class expert prompt templates.

    Parameters follow scikit-learn conventions; the fitted expert set is
    exposed as ``expert_set_`` and per-pair scores as ``scores_``.
    """

    def __init__(self, text_bank=None, metric="entropy", top_n=4,
                 logit_scale=100.0, resolution="grid"):
        self.text_bank = text_bank
        self.metric = metric
        self.top_n = top_n
        self.logit_scale = logit_scale
        self.resolution = resolution

    def _bank(self) -> TextBank:
        if self.text_bank is None:
            raise ValidationError("text_bank must be provided")
        if isinstance(self.text_bank, TextBank):
            return self.text_bank
        return TextBank(embeddings=np.asarray(self.text_bank))

    def fit(self, X, y=None):
        bank = self._bank()
        maps = check_feature_maps(X, bank.embed_dim)
        if self.resolution != "grid":
            raise ValidationError("estimator API selects at feature-grid resolution")
        cfg = AccumulatorConfig(metric=self.metric, logit_scale=self.logit_scale,
                                resolution="grid")
        acc = MetricAccumulator(cfg, bank.num_templates, bank.num_classes)
        for fm in maps:
            accumulate_image(acc, bank, fm)
        scores, mask = finalize_scores(acc)
        self.scores_ = scores
        self.valid_mask_ = mask
        self.expert_set_ = select_experts(scores, mask, self.top_n, self.metric,
                                          logit_scale=self.logit_scale,
                                          resolution="grid")
        return self

    def transform(self, X=None):
        """Return the fitted expert set (the selector's learned artifact)."""
        if not hasattr(self, "expert_set_"):
            raise NotFittedError("TemplateExpertSelector is not fitted yet")
        return self.expert_set_


class ExpertFusionSegmenter(BaseEstimator):
    """Segmenter fusing per-class expert classifiers with a fallback.

    ``fit`` selects experts from unlabeled maps unless ``expert_set`` is given,
    in which case it only builds the classifiers. ``predict`` returns a list of
    (Hf, Wf) label maps.
    """

    def __init__(self, text_bank=None, expert_set=None, metric="entropy", top_n=4,
                 strategy="highest", logit_scale=100.0, renormalize_mean=True):
        self.text_bank = text_bank
        self.expert_set = expert_set
        self.metric = metric
        self.top_n = top_n
        self.strategy = strategy
        self.logit_scale = logit_scale
        self.renormalize_mean = renormalize_mean

    def fit(self, X=None, y=None):
        selector = TemplateExpertSelector(text_bank=self.text_bank, metric=self.metric,
                                          top_n=self.top_n, logit_scale=self.logit_scale)
        bank = selector._bank()
        if self.expert_set is not None:
            expert_set = self.expert_set
            if not isinstance(expert_set, ExpertSet):
                expert_set = ExpertSet.from_dict(expert_set)
        else:
            if X is None:
                raise ValidationError("fit needs feature maps when expert_set is not given")
            expert_set = selector.fit(X).expert_set_
        fallback = build_average_classifier(bank, renormalize_mean=self.renormalize_mean)
        self.expert_set_ = expert_set
        self.fallback_classifier_ = fallback
        self.expert_classifiers_ = expert_classifiers_with_fallback(
            bank, expert_set, fallback, renormalize_mean=self.renormalize_mean)
        return self

    def predict(self, X):
        if not hasattr(self, "expert_classifiers_"):
            raise NotFittedError("ExpertFusionSegmenter is not fitted yet")
        maps = check_feature_maps(X, self.fallback_classifier_.embed_dim)
        out = []
        self.fallback_fractions_ = []
        for fm in maps:
            labels, stats = fuse_streaming(fm, self.expert_classifiers_,
                                           self.fallback_classifier_,
                                           strategy=self.strategy,
                                           logit_scale=self.logit_scale)
            out.append(labels)
            self.fallback_fractions_.append(stats.fraction)
        return out
