import json

import numpy as np
import pytest

from expertseg.errors import ValidationError
from expertseg.manifest import load_manifest, save_manifest
from expertseg.tensorio import write_tensor


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.default_rng(0)
    items = []
    for i in range(3):
        write_tensor(tmp_path / f"f{i}.ovst", rng.standard_normal((4, 5, 8)).astype(np.float32))
        write_tensor(tmp_path / f"l{i}.ovst", rng.integers(0, 3, (16, 20)).astype(np.uint16))
        items.append({
            "id": f"img{i}",
            "feature_path": f"f{i}.ovst",
            "label_path": f"l{i}.ovst",
            "feature_grid": [4, 5],
            "label_size": [16, 20],
        })
    save_manifest(tmp_path / "manifest.json", ["road", "car", "sky"], ["a photo of a {}."], items)
    return tmp_path


def test_load_valid(dataset):
    m = load_manifest(dataset / "manifest.json")
    assert m.num_classes == 3
    assert m.num_templates == 1
    assert m.ignore_index == 255
    assert m.embed_dim == 8
    assert len(m.items) == 3
    feats = m.items[0].load_features()
    assert feats.shape == (4, 5, 8)


def test_duplicate_id_rejected(dataset):
    doc = json.loads((dataset / "manifest.json").read_text())
    doc["items"].append(dict(doc["items"][0]))
    (dataset / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="duplicate"):
        load_manifest(dataset / "manifest.json")


def test_wrong_label_dims_rejected(dataset):
    doc = json.loads((dataset / "manifest.json").read_text())
    doc["items"][1]["label_size"] = [7, 7]
    (dataset / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="label"):
        load_manifest(dataset / "manifest.json")


def test_dangling_feature_file(dataset):
    (dataset / "f1.ovst").unlink()
    with pytest.raises(ValidationError, match="missing feature file"):
        load_manifest(dataset / "manifest.json")


def test_missing_field(dataset):
    doc = json.loads((dataset / "manifest.json").read_text())
    del doc["class_names"]
    (dataset / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="class_names"):
        load_manifest(dataset / "manifest.json")


def test_single_class_rejected(dataset):
    doc = json.loads((dataset / "manifest.json").read_text())
    doc["class_names"] = ["road"]
    (dataset / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="2 classes"):
        load_manifest(dataset / "manifest.json")


def test_inconsistent_embed_dim(dataset):
    write_tensor(dataset / "f2.ovst",
                 np.zeros((4, 5, 9), dtype=np.float32) + 1.0)
    with pytest.raises(ValidationError, match="dim"):
        load_manifest(dataset / "manifest.json")
