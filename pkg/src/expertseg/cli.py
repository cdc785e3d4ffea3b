"""Command-line pipeline over dataset manifests.

Subcommands:

* ``select``  -- unsupervised expert selection on a (subsampled) manifest
* ``eval``    -- baseline and/or fused evaluation on a labeled manifest
* ``oracle``  -- label-based oracle expert sets (ratio sweep or best-N)
* ``analyze`` -- score/IoU scatter and expert-quality dumps for plotting
* ``synth``   -- synthetic dataset generation

Exit codes: 0 success, 2 validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import TextBank, build_average_classifier
from .errors import ValidationError
from .evaluation import (
    expert_quality,
    iou_per_class,
    mean_iou,
    oracle_best_experts,
    oracle_ratio_experts,
)
from .manifest import load_manifest
from .pipeline import (
    evaluate_classifier_on_manifest,
    evaluate_fusion_on_manifest,
    select_experts_on_manifest,
    subsample_items,
    true_experts_on_manifest,
)
from .selection import ExpertSet, finalize_scores, AccumulatorConfig, MetricAccumulator, accumulate_image
from .synthetic import SynthSpec, generate
from .tensorio import read_tensor


def _load_bank(args, manifest_path: Path) -> TextBank:
    bank_path = Path(args.bank) if args.bank else manifest_path.parent / "text_bank.ovst"
    if not bank_path.is_file():
        raise ValidationError(f"text bank not found at {bank_path} (use --bank)")
    return TextBank(embeddings=read_tensor(bank_path))


def _write_json(out_dir: Path, name: str, doc: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def cmd_select(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    bank = _load_bank(args, manifest_path)
    expert_set = select_experts_on_manifest(
        manifest, bank, metric=args.metric, top_n=args.topn,
        logit_scale=args.logit_scale, resolution=args.resolution,
        subsample=args.subsample, seed=args.seed, threads=args.threads)
    expert_set = ExpertSet(**{**expert_set.__dict__, "source": str(manifest_path)})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    expert_set.save(out_dir / "experts.json")
    print(f"wrote {out_dir / 'experts.json'}")
    return 0


def cmd_eval(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    bank = _load_bank(args, manifest_path)
    baseline = build_average_classifier(bank)
    cm_base = evaluate_classifier_on_manifest(manifest, baseline, resolution=args.resolution)
    iou_base, present = iou_per_class(cm_base)
    report = {
        "version": __version__,
        "manifest": str(manifest_path),
        "resolution": args.resolution,
        "logit_scale": args.logit_scale,
        "baseline": {
            "miou": mean_iou(cm_base),
            "per_class_iou": {manifest.class_names[k]: float(iou_base[k])
                              for k in range(manifest.num_classes) if present[k]},
        },
    }
    if args.experts:
        expert_set = ExpertSet.load(args.experts)
        cm_fused, fallback_fraction = evaluate_fusion_on_manifest(
            manifest, bank, expert_set, strategy=args.strategy,
            logit_scale=args.logit_scale, resolution=args.resolution)
        iou_fused, present_f = iou_per_class(cm_fused)
        report["fused"] = {
            "strategy": args.strategy,
            "miou": mean_iou(cm_fused),
            "fallback_fraction": fallback_fraction,
            "per_class_iou": {manifest.class_names[k]: float(iou_fused[k])
                              for k in range(manifest.num_classes) if present_f[k]},
        }
        report["delta_miou"] = report["fused"]["miou"] - report["baseline"]["miou"]
    path = _write_json(Path(args.out), "report.json", report)
    print(f"wrote {path}")
    return 0


def cmd_oracle(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    bank = _load_bank(args, manifest_path)
    truth = true_experts_on_manifest(manifest, bank, resolution=args.resolution)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"version": __version__, "manifest": str(manifest_path), "mode": args.mode}

    if args.mode == "ratio":
        ratios = [float(r) for r in args.rho.split(",")]
        seeds = list(range(args.seed, args.seed + args.num_seeds))
        rows = []
        for rho in ratios:
            mious = []
            for seed in seeds:
                es, clamped = oracle_ratio_experts(truth, rho, args.topn, seed,
                                                   logit_scale=args.logit_scale)
                cm, _ = evaluate_fusion_on_manifest(
                    manifest, bank, es, strategy=args.strategy,
                    logit_scale=args.logit_scale, resolution=args.resolution)
                mious.append(mean_iou(cm))
            rows.append({"rho": rho, "mean_miou": float(np.mean(mious)),
                         "std_miou": float(np.std(mious)), "num_seeds": len(seeds)})
        with open(out_dir / "oracle_ratio.csv", "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["rho", "mean_miou", "std_miou", "num_seeds"])
            writer.writeheader()
            writer.writerows(rows)
        report["sweep"] = rows
    else:  # best
        results = []
        for n in [int(x) for x in str(args.topn).split(",")]:
            es = oracle_best_experts(truth, n, logit_scale=args.logit_scale)
            cm, _ = evaluate_fusion_on_manifest(
                manifest, bank, es, strategy=args.strategy,
                logit_scale=args.logit_scale, resolution=args.resolution)
            results.append({"N": n, "miou": mean_iou(cm)})
        report["best"] = results

    path = _write_json(out_dir, "report.json", report)
    print(f"wrote {path}")
    return 0


def cmd_analyze(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    bank = _load_bank(args, manifest_path)
    items = subsample_items(manifest, args.subsample, args.seed)

    cfg = AccumulatorConfig(metric=args.metric, logit_scale=args.logit_scale,
                            resolution=args.resolution if args.resolution == "grid" else "grid")
    acc = MetricAccumulator(cfg, bank.num_templates, bank.num_classes)
    for item in items:
        accumulate_image(acc, bank, item.load_features(), target_size=item.label_size)
    scores, mask = finalize_scores(acc)

    truth = true_experts_on_manifest(manifest, bank, resolution=args.resolution)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "scatter.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["template", "class", "score", "iou", "count"])
        for m in range(bank.num_templates):
            for k in range(bank.num_classes):
                if mask[m, k]:
                    writer.writerow([m, k, f"{scores[m, k]:.9g}",
                                     f"{truth.iou[m, k]:.9g}", int(acc.counts[m, k])])
        for k in range(bank.num_classes):
            writer.writerow(["baseline", k, "", f"{truth.iou_baseline[k]:.9g}", ""])

    from .selection import select_experts
    estimated = select_experts(scores, mask, args.topn, args.metric,
                               logit_scale=args.logit_scale)
    rho, rho_mean = expert_quality(estimated, truth)
    with open(out_dir / "quality.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "quality_percent"])
        for k in range(bank.num_classes):
            writer.writerow([k, f"{rho[k]:.6g}"])
        writer.writerow(["mean", f"{rho_mean:.6g}"])
    print(f"wrote {out_dir / 'scatter.csv'} and {out_dir / 'quality.csv'}")
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec.from_json(args.spec) if args.spec else SynthSpec(seed=args.seed or 0)
    generate(spec, args.out)
    print(f"wrote synthetic dataset to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expertseg",
                                     description="Expert template selection and fusion engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True):
        if manifest:
            p.add_argument("--manifest", required=True, help="dataset manifest JSON")
            p.add_argument("--bank", help="text bank tensor (default: text_bank.ovst beside manifest)")
        p.add_argument("--logit-scale", dest="logit_scale", type=float, default=100.0)
        p.add_argument("--resolution", choices=["grid", "label"], default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("select", help="estimate per-class expert templates (no labels)")
    common(p)
    p.add_argument("--metric", choices=["entropy", "avgprob", "mano", "iti"], default="entropy")
    p.add_argument("--topn", type=int, default=4)
    p.add_argument("--subsample", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_select, default_resolution="grid")

    p = sub.add_parser("eval", help="evaluate baseline and optionally fused experts")
    common(p)
    p.add_argument("--experts", help="experts.json from select/oracle")
    p.add_argument("--strategy", choices=["highest", "average", "default", "average-all"],
                   default="highest")
    p.set_defaults(func=cmd_eval, default_resolution="label")

    p = sub.add_parser("oracle", help="label-based oracle expert experiments")
    common(p)
    p.add_argument("--mode", choices=["ratio", "best"], required=True)
    p.add_argument("--rho", default="0,0.25,0.5,0.75,1.0",
                   help="comma list of true-expert ratios (ratio mode)")
    p.add_argument("--topn", default="4", help="N (best mode accepts a comma list)")
    p.add_argument("--num-seeds", dest="num_seeds", type=int, default=10)
    p.add_argument("--strategy", choices=["highest", "average", "default", "average-all"],
                   default="highest")
    p.set_defaults(func=cmd_oracle, default_resolution="label")

    p = sub.add_parser("analyze", help="dump score/IoU scatter and expert quality tables")
    common(p)
    p.add_argument("--metric", choices=["entropy", "avgprob", "mano", "iti"], default="entropy")
    p.add_argument("--topn", type=int, default=4)
    p.add_argument("--subsample", type=int, default=None)
    p.set_defaults(func=cmd_analyze, default_resolution="label")

    p = sub.add_parser("synth", help="generate a synthetic planted dataset")
    p.add_argument("--spec", help="SynthSpec JSON (defaults used when omitted)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth, default_resolution=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "resolution", None) is None:
        args.resolution = getattr(args, "default_resolution", None)
    if args.command == "oracle" and args.mode == "ratio":
        args.topn = int(str(args.topn).split(",")[0])
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
