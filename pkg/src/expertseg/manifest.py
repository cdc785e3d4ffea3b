"""Dataset manifests: class names, template strings, and per-image tensor paths."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .tensorio import read_tensor

DEFAULT_IGNORE_INDEX = 255


@dataclass(frozen=True)
class ManifestItem:
    id: str
    feature_path: Path
    label_path: Path | None
    feature_grid: tuple[int, int]
    label_size: tuple[int, int]

    def load_features(self):
        return read_tensor(self.feature_path)

    def load_labels(self):
        if self.label_path is None:
            raise ValidationError(f"item {self.id!r} has no label tensor")
        return read_tensor(self.label_path)


@dataclass(frozen=True)
class DatasetManifest:
    class_names: list[str]
    template_strings: list[str]
    ignore_index: int
    items: list[ManifestItem]
    embed_dim: int
    class_aliases: dict[str, str] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_templates(self) -> int:
        return len(self.template_strings)


def _pair(value, name, item_id):
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ValidationError(f"item {item_id!r}: {name} must be a [h, w] pair")
    return int(value[0]), int(value[1])


def load_manifest(path, validate_tensors: bool = True) -> DatasetManifest:
    """Load and validate a manifest JSON file.

    Relative tensor paths resolve against the manifest's directory. When
    ``validate_tensors`` is set, every referenced file is opened and its
    dims checked against the manifest entry.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise ValidationError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"manifest {path} is not valid JSON: {e}") from e

    for key in ("class_names", "template_strings", "items"):
        if key not in doc:
            raise ValidationError(f"manifest {path}: missing field {key!r}")

    class_names = [str(c) for c in doc["class_names"]]
    template_strings = [str(t) for t in doc["template_strings"]]
    if len(class_names) < 2:
        raise ValidationError(f"manifest {path}: need at least 2 classes")
    if len(template_strings) < 1:
        raise ValidationError(f"manifest {path}: need at least 1 template")
    ignore_index = int(doc.get("ignore_index", DEFAULT_IGNORE_INDEX))
    aliases = {str(k): str(v) for k, v in doc.get("class_aliases", {}).items()}

    base = path.parent
    items: list[ManifestItem] = []
    seen_ids: set[str] = set()
    embed_dim: int | None = None
    for raw in doc["items"]:
        for key in ("id", "feature_path", "feature_grid", "label_size"):
            if key not in raw:
                raise ValidationError(f"manifest {path}: item missing field {key!r}")
        item_id = str(raw["id"])
        if item_id in seen_ids:
            raise ValidationError(f"manifest {path}: duplicate item id {item_id!r}")
        seen_ids.add(item_id)
        feature_path = base / raw["feature_path"]
        label_path = base / raw["label_path"] if raw.get("label_path") else None
        item = ManifestItem(
            id=item_id,
            feature_path=feature_path,
            label_path=label_path,
            feature_grid=_pair(raw["feature_grid"], "feature_grid", item_id),
            label_size=_pair(raw["label_size"], "label_size", item_id),
        )
        if not feature_path.is_file():
            raise ValidationError(f"item {item_id!r}: missing feature file {feature_path}")
        if label_path is not None and not label_path.is_file():
            raise ValidationError(f"item {item_id!r}: missing label file {label_path}")
        if validate_tensors:
            feats = read_tensor(feature_path)
            hf, wf = item.feature_grid
            if feats.ndim != 3 or feats.shape[:2] != (hf, wf):
                raise ValidationError(
                    f"item {item_id!r}: feature tensor shape {feats.shape} "
                    f"does not match grid {(hf, wf)}"
                )
            if embed_dim is None:
                embed_dim = int(feats.shape[2])
            elif feats.shape[2] != embed_dim:
                raise ValidationError(
                    f"item {item_id!r}: embedding dim {feats.shape[2]} differs "
                    f"from dataset dim {embed_dim}"
                )
            if label_path is not None:
                labels = read_tensor(label_path)
                if labels.shape != item.label_size:
                    raise ValidationError(
                        f"item {item_id!r}: label tensor shape {labels.shape} "
                        f"does not match label_size {item.label_size}"
                    )
        items.append(item)

    return DatasetManifest(
        class_names=class_names,
        template_strings=template_strings,
        ignore_index=ignore_index,
        items=items,
        embed_dim=embed_dim if embed_dim is not None else int(doc.get("embed_dim", 0)),
        class_aliases=aliases,
    )


def save_manifest(path, class_names, template_strings, items, ignore_index=DEFAULT_IGNORE_INDEX,
                  class_aliases=None) -> None:
    """Write a manifest JSON file. ``items`` are dicts with relative paths."""
    doc = {
        "class_names": list(class_names),
        "template_strings": list(template_strings),
        "ignore_index": int(ignore_index),
        "items": list(items),
    }
    if class_aliases:
        doc["class_aliases"] = dict(class_aliases)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
