"""Dense per-pixel classification kernels.

Feature maps are (Hf, Wf, D) arrays of raw patch embeddings; classifiers are
unit-norm (K, D) matrices. Probabilities live on the (K-1)-simplex and argmax
ties break toward the lowest class index.
"""

from __future__ import annotations

import numpy as np

from .classifiers import Classifier
from .errors import ValidationError

DEFAULT_LOGIT_SCALE = 100.0


def normalize_features(features: np.ndarray) -> np.ndarray:
    """L2-normalize a (Hf, Wf, D) feature map pixel-wise."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 3:
        raise ValidationError(f"feature map must be (Hf, Wf, D), got shape {feats.shape}")
    norms = np.linalg.norm(feats, axis=-1)
    if np.any(norms <= 1e-12):
        y, x = np.argwhere(norms <= 1e-12)[0]
        raise ValidationError(f"zero-norm feature vector at pixel ({y}, {x})")
    return feats / norms[..., None]


def cosine_logits(features: np.ndarray, classifier: Classifier) -> np.ndarray:
    """Cosine similarity of every pixel against every classifier row."""
    feats = normalize_features(features)
    if feats.shape[-1] != classifier.embed_dim:
        raise ValidationError(
            f"feature dim {feats.shape[-1]} != classifier dim {classifier.embed_dim}"
        )
    return feats @ classifier.weights.T


def softmax_map(logits: np.ndarray, logit_scale: float = DEFAULT_LOGIT_SCALE) -> np.ndarray:
    """Temperature-scaled softmax over the last axis, max-subtracted for stability."""
    if logit_scale <= 0:
        raise ValidationError(f"logit_scale must be positive, got {logit_scale}")
    z = np.asarray(logits, dtype=np.float64) * logit_scale
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_map(probs_or_logits: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over the last axis; ties go to the lowest class index."""
    return np.argmax(probs_or_logits, axis=-1)


def pixel_entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) along the last axis with the 0*log(0) = 0 convention."""
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def upsample_logits(logits: np.ndarray, target: tuple[int, int], mode: str = "bilinear") -> np.ndarray:
    """Resize an (Hf, Wf, K) map to (H, W, K).

    Bilinear uses the align-corners=false convention (pixel centers at
    (i + 0.5) / n); nearest picks the closest source cell center.
    """
    logits = np.asarray(logits)
    hf, wf = logits.shape[:2]
    h, w = target
    if h < hf or w < wf:
        raise ValidationError(f"target {target} smaller than source {(hf, wf)}")
    if (h, w) == (hf, wf):
        return logits.copy()

    def src_coords(n_dst, n_src):
        return (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5

    ys = src_coords(h, hf)
    xs = src_coords(w, wf)
    if mode == "nearest":
        yi = np.clip(np.round(ys).astype(int), 0, hf - 1)
        xi = np.clip(np.round(xs).astype(int), 0, wf - 1)
        return logits[yi][:, xi]
    if mode != "bilinear":
        raise ValidationError(f"unknown upsampling mode {mode!r}")

    y0 = np.clip(np.floor(ys).astype(int), 0, hf - 1)
    y1 = np.clip(y0 + 1, 0, hf - 1)
    wy = np.clip(ys - np.floor(ys), 0.0, 1.0)
    wy = np.where(ys < 0, 0.0, np.where(ys > hf - 1, 0.0, wy))
    x0 = np.clip(np.floor(xs).astype(int), 0, wf - 1)
    x1 = np.clip(x0 + 1, 0, wf - 1)
    wx = np.clip(xs - np.floor(xs), 0.0, 1.0)
    wx = np.where(xs < 0, 0.0, np.where(xs > wf - 1, 0.0, wx))

    top = logits[y0][:, x0] * (1 - wx)[None, :, None] + logits[y0][:, x1] * wx[None, :, None]
    bot = logits[y1][:, x0] * (1 - wx)[None, :, None] + logits[y1][:, x1] * wx[None, :, None]
    return top * (1 - wy)[:, None, None] + bot * wy[:, None, None]
