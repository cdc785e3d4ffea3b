import csv
import json

import pytest

from expertseg.cli import main
from expertseg.selection import ExpertSet
from expertseg.synthetic import SynthSpec, generate


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    generate(SynthSpec(num_classes=4, num_templates=6, embed_dim=24,
                       grid=(8, 8), num_images=8, seed=2), out)
    return out


def test_select_writes_expert_set(dataset, tmp_path):
    out = tmp_path / "sel"
    rc = main(["select", "--manifest", str(dataset / "manifest.json"),
               "--out", str(out)])
    assert rc == 0
    es = ExpertSet.load(out / "experts.json")
    assert es.num_classes == 4
    assert es.metric == "entropy"
    assert all(len(e) <= 4 for e in es.experts)
    assert es.source == str(dataset / "manifest.json")


def test_select_is_deterministic(dataset, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["select", "--manifest", str(dataset / "manifest.json"),
                     "--out", str(out), "--subsample", "5", "--seed", "7"]) == 0
    assert (a / "experts.json").read_bytes() == (b / "experts.json").read_bytes()


def test_eval_baseline_and_fused(dataset, tmp_path):
    sel = tmp_path / "sel"
    assert main(["select", "--manifest", str(dataset / "manifest.json"),
                 "--out", str(sel)]) == 0
    out = tmp_path / "eval"
    rc = main(["eval", "--manifest", str(dataset / "manifest.json"),
               "--experts", str(sel / "experts.json"), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert 0.0 <= report["baseline"]["miou"] <= 1.0
    assert 0.0 <= report["fused"]["miou"] <= 1.0
    assert report["delta_miou"] == pytest.approx(
        report["fused"]["miou"] - report["baseline"]["miou"])
    assert 0.0 <= report["fused"]["fallback_fraction"] <= 1.0
    assert set(report["baseline"]["per_class_iou"]) <= {f"class_{k}" for k in range(4)}


def test_oracle_ratio_sweep(dataset, tmp_path):
    out = tmp_path / "oracle"
    rc = main(["oracle", "--manifest", str(dataset / "manifest.json"),
               "--mode", "ratio", "--rho", "0,1.0", "--num-seeds", "2",
               "--out", str(out)])
    assert rc == 0
    with open(out / "oracle_ratio.csv") as f:
        rows = list(csv.DictReader(f))
    assert [float(r["rho"]) for r in rows] == [0.0, 1.0]
    assert float(rows[1]["mean_miou"]) >= float(rows[0]["mean_miou"])


def test_oracle_best_mode(dataset, tmp_path):
    out = tmp_path / "best"
    rc = main(["oracle", "--manifest", str(dataset / "manifest.json"),
               "--mode", "best", "--topn", "1,4", "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert [r["N"] for r in report["best"]] == [1, 4]


def test_analyze_writes_scatter_and_quality(dataset, tmp_path):
    out = tmp_path / "an"
    rc = main(["analyze", "--manifest", str(dataset / "manifest.json"),
               "--out", str(out)])
    assert rc == 0
    with open(out / "scatter.csv") as f:
        rows = list(csv.DictReader(f))
    assert any(r["template"] == "baseline" for r in rows)
    assert any(r["template"] == "0" for r in rows)
    with open(out / "quality.csv") as f:
        rows = list(csv.DictReader(f))
    assert rows[-1]["class"] == "mean"
    assert 0.0 <= float(rows[-1]["quality_percent"]) <= 100.0


def test_synth_command_round_trips(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "num_classes": 3, "num_templates": 4, "embed_dim": 16,
        "grid": [6, 6], "num_images": 2, "seed": 9}))
    out = tmp_path / "synth"
    assert main(["synth", "--spec", str(spec_path), "--out", str(out)]) == 0
    assert (out / "manifest.json").is_file()
    assert (out / "text_bank.ovst").is_file()
    assert main(["select", "--manifest", str(out / "manifest.json"),
                 "--out", str(tmp_path / "sel")]) == 0


def test_validation_error_exit_code(dataset, tmp_path, capsys):
    rc = main(["select", "--manifest", str(dataset / "manifest.json"),
               "--bank", str(dataset / "nope.ovst"), "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_missing_manifest_exit_code(tmp_path):
    rc = main(["select", "--manifest", str(tmp_path / "missing.json"),
               "--out", str(tmp_path / "x")])
    assert rc in (2, 3)
