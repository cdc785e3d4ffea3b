"""Synthetic datasets with planted class prototypes and template quality.

Every class gets a unit prototype vector; text embeddings for (template m,
class k) are the prototype perturbed by a per-(m, k) corruption level, so each
class has a strict planted ordering of template quality. Pixel features are
noisy prototypes of the ground-truth class. Clean enough data lets the whole
selection / fusion / oracle stack be verified end to end in seconds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .classifiers import TextBank
from .errors import ValidationError
from .manifest import DatasetManifest, load_manifest, save_manifest
from .tensorio import write_tensor

# Corruption levels assigned, per class, to a random permutation of templates.
# The spread is wide so template quality orders strictly and visibly.
DEFAULT_SIGMA_LEVELS = (0.02, 0.08, 0.18, 0.35, 1.0, 1.6, 2.2, 3.0)


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 5
    num_templates: int = 8
    embed_dim: int = 32
    grid: tuple[int, int] = (16, 16)
    num_images: int = 20
    pixel_noise: float = 0.35
    sigma_levels: tuple[float, ...] = DEFAULT_SIGMA_LEVELS
    seed: int = 0
    class_names: tuple[str, ...] | None = None
    ignore_fraction: float = 0.02
    ignore_index: int = 255

    def resolved_class_names(self) -> list[str]:
        if self.class_names is not None:
            if len(self.class_names) != self.num_classes:
                raise ValidationError("class_names length must equal num_classes")
            return list(self.class_names)
        return [f"class_{k}" for k in range(self.num_classes)]

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        doc = json.loads(Path(path).read_text())
        if "grid" in doc:
            doc["grid"] = tuple(doc["grid"])
        if "sigma_levels" in doc:
            doc["sigma_levels"] = tuple(doc["sigma_levels"])
        if "class_names" in doc and doc["class_names"] is not None:
            doc["class_names"] = tuple(doc["class_names"])
        return cls(**doc)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _prototypes(rng: np.random.Generator, k: int, d: int, max_abs_cos: float = 0.6) -> np.ndarray:
    """Random unit prototypes with a minimum pairwise angle enforced."""
    for _ in range(200):
        protos = _unit(rng.standard_normal((k, d)))
        gram = protos @ protos.T
        np.fill_diagonal(gram, 0.0)
        if np.abs(gram).max() < max_abs_cos:
            return protos
    raise ValidationError(
        f"could not place {k} prototypes in dim {d} with pairwise |cos| < {max_abs_cos}"
    )


def _name_rng(seed: int, template: int, class_name: str) -> np.random.Generator:
    """RNG keyed by (seed, template, class name), so datasets sharing a class
    name plant the same template-quality structure for it."""
    digest = hashlib.sha256(f"{seed}|{template}|{class_name}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def planted_sigma(spec: SynthSpec) -> np.ndarray:
    """Per-(template, class) corruption levels with a strict per-class order."""
    m, k = spec.num_templates, spec.num_classes
    if len(set(spec.sigma_levels)) < len(spec.sigma_levels):
        raise ValidationError("sigma_levels must be distinct (strict planted order)")
    if max(spec.sigma_levels) <= 0:
        raise ValidationError("sigma_levels must induce a strict quality order")
    names = spec.resolved_class_names()
    levels = np.asarray(spec.sigma_levels, dtype=np.float64)
    stretched = np.interp(np.linspace(0, len(levels) - 1, m),
                          np.arange(len(levels)), levels)
    # Template quality is mostly a property of the template (a template clean
    # for one class tends to be clean for all), with a name-keyed jitter that
    # shuffles neighbors so per-class expert sets differ. Both draws are keyed
    # by (seed, template, name), so datasets sharing names share the ordering.
    shared = np.array([_name_rng(spec.seed, mm, "__template__").random() for mm in range(m)])
    base_rank = np.empty(m)
    base_rank[np.argsort(shared, kind="stable")] = np.arange(m)
    sigma = np.zeros((m, k))
    for kk, name in enumerate(names):
        jitter = np.array([_name_rng(spec.seed, mm, name).random() for mm in range(m)])
        order = np.argsort(base_rank + 0.8 * jitter, kind="stable")
        for rank, mm in enumerate(order):
            sigma[mm, kk] = stretched[rank]
    return sigma


def generate_text_bank(spec: SynthSpec, prototypes: np.ndarray, sigma: np.ndarray) -> TextBank:
    """Corrupted prompt embeddings: prototype plus a per-(template, class)
    perturbation biased toward a rival class's prototype.

    The rival bias makes heavily corrupted templates genuinely confusing, so
    the all-template average degrades and low-corruption templates become
    real per-class experts rather than just noisier copies of the mean.
    """
    names = spec.resolved_class_names()
    m, k, d = spec.num_templates, spec.num_classes, spec.embed_dim
    emb = np.zeros((m, k, d))
    for kk, name in enumerate(names):
        for mm in range(m):
            rng = _name_rng(spec.seed, mm, name + "|emb")
            rival = (kk + 1 + rng.integers(0, max(1, k - 1))) % k
            direction = _unit(prototypes[rival] + 0.7 * rng.standard_normal(d))
            emb[mm, kk] = _unit(prototypes[kk] + sigma[mm, kk] * direction)
    return TextBank(embeddings=emb)


def generate(spec: SynthSpec, out_dir) -> DatasetManifest:
    """Write a full synthetic dataset (features, labels, bank, manifest, sidecar).

    Deterministic under the spec's seed; byte-identical across runs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    names = spec.resolved_class_names()
    hf, wf = spec.grid

    prototypes = _prototypes(rng, spec.num_classes, spec.embed_dim)
    sigma = planted_sigma(spec)
    bank = generate_text_bank(spec, prototypes, sigma)
    write_tensor(out_dir / "text_bank.ovst", bank.embeddings.astype(np.float32))

    items = []
    for i in range(spec.num_images):
        labels = rng.integers(0, spec.num_classes, size=(hf, wf))
        feats = prototypes[labels] + spec.pixel_noise * rng.standard_normal(
            (hf, wf, spec.embed_dim))
        label_map = labels.astype(np.uint16)
        if spec.ignore_fraction > 0:
            ignore = rng.random((hf, wf)) < spec.ignore_fraction
            label_map = np.where(ignore, spec.ignore_index, label_map).astype(np.uint16)
        write_tensor(out_dir / f"img_{i:04d}_feat.ovst", feats.astype(np.float32))
        write_tensor(out_dir / f"img_{i:04d}_label.ovst", label_map)
        items.append({
            "id": f"img_{i:04d}",
            "feature_path": f"img_{i:04d}_feat.ovst",
            "label_path": f"img_{i:04d}_label.ovst",
            "feature_grid": [hf, wf],
            "label_size": [hf, wf],
        })

    template_strings = [f"template {m} of a {{}}." for m in range(spec.num_templates)]
    save_manifest(out_dir / "manifest.json", names, template_strings, items,
                  ignore_index=spec.ignore_index)
    sidecar = {
        "spec": {**asdict(spec), "grid": list(spec.grid),
                 "sigma_levels": list(spec.sigma_levels),
                 "class_names": list(names)},
        "sigma": sigma.tolist(),
        "ranking": {str(k): [int(m) for m in np.argsort(sigma[:, k], kind="stable")]
                    for k in range(spec.num_classes)},
    }
    (out_dir / "planted.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return load_manifest(out_dir / "manifest.json")


def load_text_bank(dataset_dir) -> TextBank:
    from .tensorio import read_tensor
    return TextBank(embeddings=read_tensor(Path(dataset_dir) / "text_bank.ovst"))
