"""Export text banks, dense feature maps, and label maps for the engine.

Outputs land in one directory: ``text_bank.ovst`` (shape (80, K, D)),
``<id>_feat.ovst`` / ``<id>_label.ovst`` per image, and a ``manifest.json``
tying them together in the engine's schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import make_encoder
from .templates import IMAGENET_TEMPLATES
from .tensorio import write_tensor

IMAGE_SUFFIXES = (".npy", ".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass
class ExtractorConfig:
    class_names: list[str]
    out_dir: str
    model: str = "hashproj"
    embed_dim: int = 512
    patch_size: int = 16
    image_dir: str | None = None
    label_dir: str | None = None
    short_side: int | None = None
    ignore_index: int = 255
    limit: int | None = None

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise ValueError("need at least 2 class names")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")


def _load_array(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    from PIL import Image

    return np.asarray(Image.open(path))


def _resize_nearest(arr: np.ndarray, short_side: int) -> np.ndarray:
    h, w = arr.shape[:2]
    scale = short_side / min(h, w)
    nh, nw = max(1, round(h * scale)), max(1, round(w * scale))
    yi = np.clip(((np.arange(nh) + 0.5) / scale).astype(int), 0, h - 1)
    xi = np.clip(((np.arange(nw) + 0.5) / scale).astype(int), 0, w - 1)
    return arr[yi][:, xi]


def export_text_bank(config: ExtractorConfig) -> Path:
    """Encode every (template, class) prompt into an (80, K, D) bank file."""
    encoder = make_encoder(config.model, config.embed_dim, config.patch_size)
    k = len(config.class_names)
    bank = np.empty((len(IMAGENET_TEMPLATES), k, encoder.embed_dim))
    for m, template in enumerate(IMAGENET_TEMPLATES):
        prompts = [template.format(name) for name in config.class_names]
        bank[m] = encoder.encode_text(prompts)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "text_bank.ovst"
    write_tensor(path, bank.astype(np.float32))
    fragment = {
        "class_names": list(config.class_names),
        "template_strings": list(IMAGENET_TEMPLATES),
        "ignore_index": config.ignore_index,
        "model": encoder.tag,
    }
    (out_dir / "bank_manifest.json").write_text(json.dumps(fragment, indent=2) + "\n")
    return path


def _dataset_items(config: ExtractorConfig):
    if config.image_dir is None:
        raise ValueError("image_dir is required to export features")
    image_dir = Path(config.image_dir)
    images = sorted(p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        raise FileNotFoundError(f"no images found in {image_dir}")
    if config.limit is not None:
        images = images[: config.limit]
    label_dir = Path(config.label_dir) if config.label_dir else None
    for image_path in images:
        label_path = None
        if label_dir is not None:
            matches = [label_dir / (image_path.stem + s) for s in IMAGE_SUFFIXES]
            label_path = next((p for p in matches if p.is_file()), None)
            if label_path is None:
                raise FileNotFoundError(f"no label for image {image_path.name} in {label_dir}")
        yield image_path, label_path


def export_features(config: ExtractorConfig) -> Path:
    """Write per-image feature/label tensors plus the dataset manifest."""
    encoder = make_encoder(config.model, config.embed_dim, config.patch_size)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = []
    for image_path, label_path in _dataset_items(config):
        image = _load_array(image_path)
        if config.short_side is not None:
            image = _resize_nearest(image, config.short_side)
        feats = encoder.encode_image(image)
        item_id = image_path.stem
        feat_name = f"{item_id}_feat.ovst"
        write_tensor(out_dir / feat_name, feats.astype(np.float32))
        item = {
            "id": item_id,
            "feature_path": feat_name,
            "feature_grid": [int(feats.shape[0]), int(feats.shape[1])],
        }
        if label_path is not None:
            labels = _load_array(label_path)
            if labels.ndim != 2:
                raise ValueError(f"label map {label_path.name} must be 2-D")
            if config.short_side is not None:
                labels = _resize_nearest(labels, config.short_side)
            label_name = f"{item_id}_label.ovst"
            write_tensor(out_dir / label_name, labels.astype(np.uint16))
            item["label_path"] = label_name
            item["label_size"] = [int(labels.shape[0]), int(labels.shape[1])]
        else:
            item["label_size"] = item["feature_grid"]
        items.append(item)
    manifest = {
        "class_names": list(config.class_names),
        "template_strings": list(IMAGENET_TEMPLATES),
        "ignore_index": config.ignore_index,
        "model": encoder.tag,
        "items": items,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
