"""Classifier construction from a bank of per-template class text embeddings.

A text bank holds one embedding per (template, class) pair. Classifiers are
K x D matrices with unit-norm rows, built either from all templates
(averaged), a single template, or a per-class subset of expert templates.

Normalization convention: normalize each embedding, average in f64 over
ascending template index, renormalize the mean (toggleable).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

MIN_NORM = 1e-8


@dataclass(frozen=True)
class TextBank:
    """M x K x D matrix of raw (unnormalized) text embeddings."""

    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 3:
            raise ValidationError(f"text bank must be (M, K, D), got shape {emb.shape}")
        norms = np.linalg.norm(emb, axis=-1)
        if np.any(norms <= MIN_NORM):
            m, k = np.argwhere(norms <= MIN_NORM)[0]
            raise ValidationError(f"zero-norm embedding at template {m}, class {k}")
        object.__setattr__(self, "embeddings", emb)

    @property
    def num_templates(self) -> int:
        return self.embeddings.shape[0]

    @property
    def num_classes(self) -> int:
        return self.embeddings.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[2]

    def normalized(self) -> np.ndarray:
        emb = self.embeddings
        return emb / np.linalg.norm(emb, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Classifier:
    """K x D matrix with unit-norm rows plus how it was built.

    ``provenance`` is ``("average",)``, ``("template", m)`` or
    ``("experts", expert_lists)``.
    """

    weights: np.ndarray
    provenance: tuple = ("average",)
    # False only for the compatibility mode that skips renormalizing averaged rows.
    unit_norm: bool = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValidationError(f"classifier weights must be (K, D), got {w.shape}")
        norms = np.linalg.norm(w, axis=-1)
        if self.unit_norm and np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValidationError("classifier rows must be unit norm")
        if np.any(norms <= MIN_NORM):
            raise ValidationError("classifier has a zero-norm row")
        object.__setattr__(self, "weights", w)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.weights.shape[1]


def _mean_rows(normalized: np.ndarray, template_indices, renormalize_mean: bool) -> np.ndarray:
    """Average normalized embeddings over the given templates for all classes.

    Indices are sorted ascending so the summation order is deterministic and
    independent of the caller's ordering.
    """
    idx = sorted(int(i) for i in template_indices)
    mean = normalized[idx].mean(axis=0)
    if not renormalize_mean:
        return mean
    norms = np.linalg.norm(mean, axis=-1)
    if np.any(norms <= MIN_NORM):
        k = int(np.argwhere(norms <= MIN_NORM)[0][0])
        raise ValidationError(f"averaged embedding for class {k} has zero norm")
    return mean / norms[:, None]


def build_average_classifier(bank: TextBank, renormalize_mean: bool = True) -> Classifier:
    """Classifier averaging all templates per class (the default baseline)."""
    weights = _mean_rows(bank.normalized(), range(bank.num_templates), renormalize_mean)
    return Classifier(weights=weights, provenance=("average",), unit_norm=renormalize_mean)


def build_single_template_classifier(bank: TextBank, m: int) -> Classifier:
    """Classifier using only template ``m`` for every class."""
    if not 0 <= m < bank.num_templates:
        raise ValidationError(f"template index {m} out of range [0, {bank.num_templates})")
    return Classifier(weights=_mean_rows(bank.normalized(), [m], True),
                      provenance=("template", int(m)))


def build_expert_classifier(bank: TextBank, expert_lists, renormalize_mean: bool = True) -> list[Classifier]:
    """One full K-row classifier per class, each averaging that class's
    expert template subset over *all* class names.

    ``expert_lists`` is a length-K sequence of nonempty template index lists.
    """
    if len(expert_lists) != bank.num_classes:
        raise ValidationError(
            f"need {bank.num_classes} expert lists, got {len(expert_lists)}"
        )
    normalized = bank.normalized()
    out = []
    for k, experts in enumerate(expert_lists):
        experts = [int(m) for m in experts]
        if not experts:
            raise ValidationError(f"class {k} has an empty expert list")
        if any(not 0 <= m < bank.num_templates for m in experts):
            raise ValidationError(f"class {k}: expert index out of range in {experts}")
        if len(set(experts)) != len(experts):
            raise ValidationError(f"class {k}: duplicate expert indices in {experts}")
        weights = _mean_rows(normalized, experts, renormalize_mean)
        out.append(Classifier(weights=weights, provenance=("experts", tuple(sorted(experts))),
                              unit_norm=renormalize_mean))
    return out
