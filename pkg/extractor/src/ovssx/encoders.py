"""Text and dense-image encoders.

Two backends:

* ``hashproj`` -- a deterministic, dependency-free stand-in: text embeddings
  are hash-seeded Gaussian vectors; image patches go through a fixed random
  projection of simple patch statistics. It produces well-formed (not
  semantically meaningful) features for pipeline and format testing.
* ``clip:<model-id>`` -- a real CLIP checkpoint via ``transformers``; loaded
  lazily so the package works without torch installed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _seeded_rng(*parts: str) -> np.random.Generator:
    digest = hashlib.sha256("|".join(parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class HashProjectionEncoder:
    """Deterministic encoder keyed by model tag; no model weights needed."""

    def __init__(self, embed_dim: int = 512, patch_size: int = 16,
                 tag: str = "hashproj-v1"):
        if embed_dim < 1 or patch_size < 1:
            raise ValueError("embed_dim and patch_size must be positive")
        self.embed_dim = embed_dim
        self.patch_size = patch_size
        self.tag = tag
        # fixed projection from per-patch statistics (mean/std per channel,
        # plus normalized patch position) into the embedding space
        self._projection = _seeded_rng(tag, "projection", str(embed_dim)) \
            .standard_normal((8, embed_dim))

    def encode_text(self, prompts) -> np.ndarray:
        """(len(prompts), D) raw embeddings, one deterministic draw per string."""
        out = np.empty((len(prompts), self.embed_dim))
        for i, prompt in enumerate(prompts):
            out[i] = _seeded_rng(self.tag, "text", prompt).standard_normal(self.embed_dim)
        return out

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        """Dense (H//P, W//P, D) features from an (H, W, 3) uint8/float image."""
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 2:
            image = image[..., None].repeat(3, axis=-1)
        if image.ndim != 3 or image.shape[-1] != 3:
            raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
        p = self.patch_size
        h, w = image.shape[:2]
        gh, gw = max(1, h // p), max(1, w // p)
        feats = np.empty((gh, gw, self.embed_dim))
        for y in range(gh):
            for x in range(gw):
                patch = image[y * p:(y + 1) * p, x * p:(x + 1) * p]
                stats = np.concatenate([
                    patch.mean(axis=(0, 1)) / 255.0,
                    patch.std(axis=(0, 1)) / 255.0,
                    [(y + 0.5) / gh, (x + 0.5) / gw],
                ])
                feats[y, x] = np.tanh(stats) @ self._projection
        return feats


class ClipEncoder:
    """CLIP text/image towers through ``transformers`` (lazy import)."""

    def __init__(self, model_id: str, patch_size: int = 16):
        import torch  # noqa: F401  (fail early with a clear message)
        from transformers import CLIPModel, CLIPProcessor

        self.model = CLIPModel.from_pretrained(model_id).eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self.embed_dim = self.model.config.projection_dim
        self.patch_size = patch_size
        self.tag = f"clip:{model_id}"

    def encode_text(self, prompts) -> np.ndarray:
        import torch

        inputs = self.processor(text=list(prompts), return_tensors="pt", padding=True)
        with torch.no_grad():
            emb = self.model.get_text_features(**inputs)
        return emb.cpu().numpy().astype(np.float64)

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        import torch

        inputs = self.processor(images=image, return_tensors="pt")
        with torch.no_grad():
            out = self.model.vision_model(**inputs, output_hidden_states=False)
        tokens = self.model.visual_projection(out.last_hidden_state[0, 1:])
        n = tokens.shape[0]
        side = int(round(n ** 0.5))
        return tokens.reshape(side, side, -1).cpu().numpy().astype(np.float64)


def make_encoder(model: str, embed_dim: int = 512, patch_size: int = 16):
    if model == "hashproj":
        return HashProjectionEncoder(embed_dim=embed_dim, patch_size=patch_size)
    if model.startswith("clip:"):
        return ClipEncoder(model.split(":", 1)[1], patch_size=patch_size)
    raise ValueError(f"unknown model {model!r} (use 'hashproj' or 'clip:<model-id>')")
